"""Filament curves, dipole chains and charge trajectories.

All vectors are ``numpy`` arrays of shape ``(3,)`` (or ``(N, 3)`` for
collections) in simulation units.  Every container here is immutable: the
arrays are flagged read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "FilamentCurve",
    "DipoleChain",
    "ChargeTrajectory",
    "discretize_filament",
    "section_straightness",
    "chain_arc_length",
    "straight_curve",
    "circle_curve",
    "arc_curve",
    "helix_curve",
    "straight_trajectory",
    "make_flyby_trajectory",
    "make_bypass_trajectory",
    "distance_to_path",
]

STRAIGHTNESS_LIMIT = 0.01


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class FilamentCurve:
    """Piecewise-linear curve; orientation follows point order.

    For closed curves the closing segment (last -> first) is implicit and the
    first point must not be repeated at the end.
    """

    control_points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = _frozen(self.control_points)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError("control_points must have shape (M, 3)")
        if len(pts) < 2:
            raise ValidationError("a filament curve needs at least 2 control points")
        _require_finite("control_points", pts)
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
            raise ValidationError("consecutive control points must be distinct")
        if self.closed and np.array_equal(pts[0], pts[-1]):
            raise ValidationError("closed curve must not repeat its first point at the end")
        object.__setattr__(self, "control_points", pts)

    @property
    def vertices(self):
        """Polyline vertices including the explicit closing point."""
        if self.closed:
            return np.vstack([self.control_points, self.control_points[:1]])
        return self.control_points

    @property
    def length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def point_at(self, s):
        """Positions at arc-length values ``s`` (array) along the polyline."""
        verts = self.vertices
        seg = np.diff(verts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        frac = (s - cum[idx]) / seg_len[idx]
        return verts[idx] + frac[:, None] * seg[idx]


@dataclass(frozen=True)
class DipoleChain:
    """Discrete dipole line standing in for the solenoid.

    Dipole ``k`` sits at ``positions[k]`` with moment ``mu * tangents[k]``.
    ``n`` is the linear density actually realised by the discretization and
    ``sections`` is a tuple of ``(start, stop)`` index ranges.
    """

    positions: np.ndarray
    tangents: np.ndarray
    mu: float
    n: float
    sections: tuple = ()
    closed: bool = False

    def __post_init__(self):
        pos = _frozen(self.positions)
        tan = _frozen(self.tangents)
        if pos.ndim != 2 or pos.shape[1] != 3 or tan.shape != pos.shape:
            raise ValidationError("positions and tangents must both have shape (N, 3)")
        if len(pos) == 0:
            raise ValidationError("a dipole chain needs at least one dipole")
        _require_finite("positions", pos)
        _require_finite("tangents", tan)
        if np.max(np.abs(np.linalg.norm(tan, axis=1) - 1.0)) > 1e-12:
            raise ValidationError("tangents must have unit norm")
        if not (self.n > 0 and math.isfinite(self.n)):
            raise ValidationError("dipole density n must be positive")
        if not math.isfinite(self.mu):
            raise ValidationError("mu must be finite")
        sections = tuple((int(a), int(b)) for a, b in (self.sections or ((0, len(pos)),)))
        expected = 0
        for a, b in sections:
            if a != expected or b <= a:
                raise ValidationError("sections must be contiguous, nonempty and cover all dipoles")
            expected = b
        if expected != len(pos):
            raise ValidationError("sections must cover all dipoles exactly once")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "tangents", tan)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "n", float(self.n))
        object.__setattr__(self, "sections", sections)

    def __len__(self):
        return len(self.positions)

    @property
    def spacing(self):
        return 1.0 / self.n

    @property
    def moments(self):
        return self.mu * self.tangents

    def with_mu(self, mu):
        return DipoleChain(self.positions, self.tangents, mu, self.n, self.sections, self.closed)

    def with_sections(self, sections):
        return DipoleChain(self.positions, self.tangents, self.mu, self.n, sections, self.closed)

    def section_representatives(self):
        """Centroid position and mean (renormalised) tangent of each section."""
        pos, tan = [], []
        for a, b in self.sections:
            pos.append(self.positions[a:b].mean(axis=0))
            t = self.tangents[a:b].sum(axis=0)
            tan.append(t / np.linalg.norm(t))
        return np.array(pos), np.array(tan)

    def curvature_radius(self):
        """Smallest radius of curvature, from circumradii of dipole triples.

        Triples ``(k - w, k, k + w)`` with ``w = max(8, N // 128)`` (capped by the chain) are used so
        that vertex kinks of a finely sampled polyline are not read as local
        curvature; features shorter than about ``w`` spacings are smoothed.
        """
        if len(self) < 3:
            return math.inf
        w = min(max(len(self) // 128, 8), (len(self) - 1) // 2)
        p0, p1, p2 = self.positions[:-2 * w], self.positions[w:-w], self.positions[2 * w:]
        a, b = p1 - p0, p2 - p1
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        prod = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(p2 - p0, axis=1)
        kappa = float(np.max(2.0 * cross / prod))
        return math.inf if kappa < 1e-12 else 1.0 / kappa

    @classmethod
    def concatenate(cls, chains):
        """Join chains sharing ``mu`` and ``n``; one section per input chain."""
        chains = list(chains)
        mu, n = chains[0].mu, chains[0].n
        if any(c.mu != mu or c.n != n for c in chains):
            raise ValidationError("concatenated chains must share mu and n")
        sections, start = [], 0
        for c in chains:
            sections.append((start, start + len(c)))
            start += len(c)
        return cls(
            np.vstack([c.positions for c in chains]),
            np.vstack([c.tangents for c in chains]),
            mu,
            n,
            tuple(sections),
        )


def _chord_tangents(pos, closed):
    if len(pos) == 1:
        return None
    if closed:
        chords = np.roll(pos, -1, axis=0) - np.roll(pos, 1, axis=0)
    else:
        chords = np.empty_like(pos)
        chords[1:-1] = pos[2:] - pos[:-2]
        chords[0] = pos[1] - pos[0]
        chords[-1] = pos[-1] - pos[-2]
    return chords / np.linalg.norm(chords, axis=1)[:, None]


def section_straightness(positions, sections):
    """Largest chord deviation ratio over all sections.

    For each section the maximum distance of its dipoles from the chord
    joining its end dipoles is divided by the chord length.
    """
    worst = 0.0
    for a, b in sections:
        if b - a < 3:
            continue
        p = positions[a:b]
        chord = p[-1] - p[0]
        clen = np.linalg.norm(chord)
        if clen == 0.0:
            return math.inf
        dev = np.linalg.norm(np.cross(p - p[0], chord / clen), axis=1)
        worst = max(worst, float(dev.max() / clen))
    return worst


def _partition(count, parts):
    edges = np.linspace(0, count, parts + 1).round().astype(int)
    return tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))


def discretize_filament(curve, n, sections_hint=1, straightness=STRAIGHTNESS_LIMIT, mu=1.0):
    """Place dipoles along ``curve`` at linear density ``n``.

    Dipoles sit at the centres of ``N = round(n * length)`` equal arc-length
    cells, so the realised density ``N / length`` (stored as ``chain.n``)
    differs from the request by at most half a dipole over the curve.
    Tangents are normalised centred chords (one-sided at open ends).

    Sections are near-equal contiguous groups; their number starts at
    ``sections_hint`` and grows until every section deviates from a straight
    chord by less than ``straightness`` (relative).
    """
    if not (n > 0 and math.isfinite(n)):
        raise ValidationError("dipole density n must be positive")
    length = curve.length
    if not length > 0.0:
        raise ValidationError("degenerate filament curve: zero length")
    count = max(1, int(round(n * length)))
    s = (np.arange(count) + 0.5) * (length / count)
    pos = curve.point_at(s)
    tan = _chord_tangents(pos, curve.closed)
    if tan is None:
        seg = np.diff(curve.vertices, axis=0)
        tan = (seg[0] / np.linalg.norm(seg[0]))[None, :]

    parts = max(1, min(count, int(sections_hint)))
    sections = _partition(count, parts)
    while section_straightness(pos, sections) >= straightness and parts < count:
        parts = min(count, max(parts + 1, int(math.ceil(parts * 1.25))))
        sections = _partition(count, parts)
    return DipoleChain(pos, tan, mu, count / length, sections, curve.closed)


def chain_arc_length(chain):
    """Arc length represented by the chain's dipole polygon.

    Closed chains: perimeter of the dipole polygon.  Open chains: polygon
    length plus the two half cells beyond the end dipoles.
    """
    gaps = np.linalg.norm(np.diff(chain.positions, axis=0), axis=1).sum()
    if chain.closed:
        return float(gaps + np.linalg.norm(chain.positions[0] - chain.positions[-1]))
    return float(gaps + chain.spacing)


# -- curve presets ----------------------------------------------------------------------


def _frame(axis):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    helper = np.zeros(3)
    helper[np.argmin(np.abs(axis))] = 1.0
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1), axis


def straight_curve(length, center=(0.0, 0.0, 0.0), direction=(0.0, 0.0, 1.0)):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    c = np.asarray(center, dtype=float)
    return FilamentCurve(np.array([c - 0.5 * length * d, c + 0.5 * length * d]))


def circle_curve(radius, points, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0)):
    e1, e2, _ = _frame(normal)
    phi = 2.0 * np.pi * np.arange(points) / points
    pts = np.asarray(center, dtype=float) + radius * (
        np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    )
    return FilamentCurve(pts, closed=True)


def arc_curve(radius, angle, points, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), start=0.0):
    e1, e2, _ = _frame(normal)
    phi = start + angle * np.linspace(0.0, 1.0, points)
    pts = np.asarray(center, dtype=float) + radius * (
        np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    )
    return FilamentCurve(pts)


def helix_curve(radius, pitch, turns, points, center=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0)):
    """Helix of given pitch (axial advance per turn), centred on ``center``."""
    e1, e2, e3 = _frame(axis)
    phi = 2.0 * np.pi * turns * np.linspace(-0.5, 0.5, points)
    along = pitch * phi / (2.0 * np.pi)
    pts = np.asarray(center, dtype=float) + (
        radius * np.cos(phi)[:, None] * e1
        + radius * np.sin(phi)[:, None] * e2
        + along[:, None] * e3
    )
    return FilamentCurve(pts)


# -- trajectories -----------------------------------------------------------------------


@dataclass(frozen=True)
class ChargeTrajectory:
    """Time-sampled charge path with coupling ``g = e/c``.

    Between samples the charge moves in a straight line at the chord
    velocity.  Stored velocities are validated on construction: every chord
    velocity must agree with the velocity at one of its end samples, or with
    their mean, to within ``velocity_rtol`` times the peak speed.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    g: float = 1.0
    velocity_rtol: float = field(default=1e-6, compare=False)

    def __post_init__(self):
        t = _frozen(self.times)
        x = _frozen(self.positions)
        v = _frozen(self.velocities)
        if t.ndim != 1 or len(t) < 2:
            raise ValidationError("a trajectory needs at least 2 samples")
        if x.shape != (len(t), 3) or v.shape != (len(t), 3):
            raise ValidationError("positions and velocities must have shape (T, 3)")
        for name, a in (("times", t), ("positions", x), ("velocities", v)):
            _require_finite(name, a)
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("trajectory times must be strictly increasing")
        if not math.isfinite(self.g):
            raise ValidationError("coupling g must be finite")
        chord = np.diff(x, axis=0) / np.diff(t)[:, None]
        vmax = float(np.max(np.linalg.norm(v, axis=1)))
        mismatch = np.minimum.reduce(
            [
                np.linalg.norm(chord - v[:-1], axis=1),
                np.linalg.norm(chord - v[1:], axis=1),
                np.linalg.norm(chord - 0.5 * (v[:-1] + v[1:]), axis=1),
            ]
        )
        limit = self.velocity_rtol * max(vmax, 1e-300)
        if np.any(mismatch > limit):
            i = int(np.argmax(mismatch))
            raise ValidationError(
                f"velocity samples inconsistent with positions at interval {i}: "
                f"mismatch {mismatch[i]:.3e} > {limit:.3e}"
            )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "g", float(self.g))

    @property
    def span(self):
        return float(self.times[-1] - self.times[0])

    def reversed(self):
        """The same path traversed backwards in time."""
        return ChargeTrajectory(
            -self.times[::-1], self.positions[::-1], -self.velocities[::-1], self.g, self.velocity_rtol
        )

    def with_g(self, g):
        return ChargeTrajectory(self.times, self.positions, self.velocities, g, self.velocity_rtol)

    def runs(self):
        """Maximal straight constant-velocity pieces.

        Returns a list of ``(t_start, t_stop, x_start, velocity)`` tuples.
        """
        dt = np.diff(self.times)
        chord = np.diff(self.positions, axis=0) / dt[:, None]
        scale = max(float(np.max(np.linalg.norm(chord, axis=1))), 1e-300)
        out = []
        start = 0
        for i in range(1, len(chord) + 1):
            if i == len(chord) or np.linalg.norm(chord[i] - chord[start]) > 1e-12 * scale:
                t0, t1 = self.times[start], self.times[i]
                vel = (self.positions[i] - self.positions[start]) / (t1 - t0)
                out.append((float(t0), float(t1), self.positions[start], vel))
                start = i
        return out

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, j]) for j in range(3)], axis=-1)

    def velocity_at(self, t):
        """Chord velocity of the interval containing each time ``t``."""
        t = np.asarray(t, dtype=float)
        chord = np.diff(self.positions, axis=0) / np.diff(self.times)[:, None]
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(chord) - 1)
        return chord[idx]


def straight_trajectory(start, velocity, t_span, samples, g=1.0):
    """Constant-velocity path through ``start`` at ``t = t_span[0]``."""
    if samples < 2:
        raise ValidationError("samples must be >= 2")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValidationError("t_span must be increasing")
    t = np.linspace(t0, t1, samples)
    vel = np.asarray(velocity, dtype=float)
    x = np.asarray(start, dtype=float) + (t - t0)[:, None] * vel
    return ChargeTrajectory(t, x, np.tile(vel, (samples, 1)), g)


def _side_sign(side):
    if side not in ("left", "right"):
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return 1.0 if side == "left" else -1.0


def make_flyby_trajectory(impact_parameter, speed, side, t_span, samples, g=1.0):
    """Straight flyby parallel to +X at ``y = +b`` (left) or ``y = -b`` (right).

    ``t_span`` is a half-duration ``T`` or a symmetric interval ``(-T, T)``.
    """
    if not impact_parameter > 0:
        raise ValidationError("impact_parameter must be positive")
    if not speed > 0:
        raise ValidationError("speed must be positive")
    if np.ndim(t_span) == 0:
        half = float(t_span)
    else:
        lo, hi = (float(v) for v in t_span)
        if lo != -hi:
            raise ValidationError("flyby t_span must be symmetric about t = 0")
        half = hi
    if not half > 0:
        raise ValidationError("t_span must have positive duration")
    y = _side_sign(side) * impact_parameter
    t = np.linspace(-half, half, samples) if samples >= 2 else None
    if t is None:
        raise ValidationError("samples must be >= 2")
    x = np.zeros((samples, 3))
    x[:, 0] = speed * t
    x[:, 1] = y
    v = np.zeros((samples, 3))
    v[:, 0] = speed
    return ChargeTrajectory(t, x, v, g)


def make_bypass_trajectory(impact_parameter, half_length, speed, side, samples_per_leg=64, g=1.0):
    """Three-leg path from ``(-X, 0, 0)`` to ``(X, 0, 0)`` passing at ``y = -+b``.

    Both sides share their end points, so the right-minus-left phase is the
    counterclockwise loop integral around any filament crossing the z axis
    inside ``|x| < X, |y| < b``.  Sampled at constant speed, symmetric in time
    about ``t = 0``; corner samples carry the outgoing velocity.
    """
    if not (impact_parameter > 0 and half_length > 0 and speed > 0):
        raise ValidationError("impact_parameter, half_length and speed must be positive")
    if samples_per_leg < 2:
        raise ValidationError("samples_per_leg must be >= 2")
    y = _side_sign(side) * impact_parameter
    X = float(half_length)
    corners = np.array([[-X, 0.0, 0.0], [-X, y, 0.0], [X, y, 0.0], [X, 0.0, 0.0]])
    legs = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    total = legs.sum()
    t_corner = np.concatenate([[0.0], np.cumsum(legs)]) / speed - 0.5 * total / speed
    times, pos, vel = [], [], []
    for i in range(3):
        u = np.linspace(0.0, 1.0, samples_per_leg)[:-1] if i < 2 else np.linspace(0.0, 1.0, samples_per_leg)
        d = corners[i + 1] - corners[i]
        times.append(t_corner[i] + u * (t_corner[i + 1] - t_corner[i]))
        pos.append(corners[i] + u[:, None] * d)
        v = np.tile(d / legs[i] * speed, (len(u), 1))
        vel.append(v)
    return ChargeTrajectory(np.concatenate(times), np.vstack(pos), np.vstack(vel), g)


def distance_to_path(traj, points):
    """Minimum distance from each point to the trajectory polyline."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(len(points), np.inf)
    for t0, t1, x0, vel in traj.runs():
        seg = vel * (t1 - t0)
        seg2 = float(seg @ seg)
        rel = points - x0
        u = np.clip(rel @ seg / seg2, 0.0, 1.0) if seg2 > 0 else np.zeros(len(points))
        d = np.linalg.norm(rel - u[:, None] * seg, axis=1)
        best = np.minimum(best, d)
    return best
