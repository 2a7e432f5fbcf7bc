"""Two-level dipole dynamics in the field of a passing charge.

Each dipole has ``H = -eps sigma_z - mu (h . sigma)`` in a local frame whose
z axis is the filament tangent.  :func:`adiabatic_evolve` keeps only the
first-order level shifts ``-+(eps + mu h_z)``; :func:`exact_evolve` integrates
the full Hamiltonian and serves as an oracle for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .electromagnetics import DEFAULT_CUTOFF_FRACTION, particle_field
from .errors import ConvergenceError, SingularFieldError, ValidationError

__all__ = [
    "DipoleParams",
    "DipoleState",
    "AdiabaticityReport",
    "PhaseIntegral",
    "local_frame",
    "instantaneous_hamiltonian",
    "adiabatic_evolve",
    "exact_evolve",
    "field_timeseries",
    "fidelity",
    "dipole_phases",
    "single_dipole_phase",
    "chain_phase",
    "adiabaticity_report",
    "OracleComparison",
    "oracle_comparison",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

DEFAULT_PHASE_TOL = 1e-10


@dataclass(frozen=True)
class DipoleParams:
    epsilon: float
    mu: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError("epsilon must be positive")
        if not math.isfinite(self.mu):
            raise ValidationError("mu must be finite")


@dataclass(frozen=True)
class DipoleState:
    """Amplitudes on the local ``xi`` (up) and ``eta`` (down) states."""

    c1: complex
    c2: complex

    def __post_init__(self):
        object.__setattr__(self, "c1", complex(self.c1))
        object.__setattr__(self, "c2", complex(self.c2))
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > 1e-10:
            raise ValidationError(f"state not normalised: |c1|^2 + |c2|^2 = {norm!r}")

    @property
    def vector(self):
        return np.array([self.c1, self.c2])

    @property
    def norm2(self):
        return abs(self.c1) ** 2 + abs(self.c2) ** 2

    @classmethod
    def from_vector(cls, psi):
        return cls(psi[0], psi[1])


def fidelity(a, b):
    """``|<a|b>|`` for two dipole states."""
    return abs(np.vdot(a.vector, b.vector))


@dataclass(frozen=True)
class AdiabaticityReport:
    max_ratio_field: float
    ratio_rate: float
    field_threshold: float
    rate_threshold: float

    @property
    def passed(self):
        return self.max_ratio_field < self.field_threshold and self.ratio_rate < self.rate_threshold

    def as_dict(self):
        return {
            "max_ratio_field": self.max_ratio_field,
            "ratio_rate": self.ratio_rate,
            "field_threshold": self.field_threshold,
            "rate_threshold": self.rate_threshold,
            "pass": self.passed,
        }


def local_frame(tangent):
    """Right-handed ``(x', y', z')`` with ``z'`` along ``tangent``.

    ``x'`` is the normalised cross product of the coordinate axis along the
    tangent's smallest component with the tangent.
    """
    t = np.asarray(tangent, dtype=float)
    if abs(np.linalg.norm(t) - 1.0) > 1e-12:
        raise ValidationError("tangent must have unit norm")
    e = np.zeros(3)
    e[np.argmin(np.abs(t))] = 1.0
    x = np.cross(e, t)
    x /= np.linalg.norm(x)
    return x, np.cross(t, x), t


def instantaneous_hamiltonian(params, h, tangent):
    """2x2 Hamiltonian ``-eps sigma_z - mu (h . sigma)`` in the local frame."""
    x, y, z = local_frame(tangent)
    h = np.asarray(h, dtype=float)
    hx, hy, hz = h @ x, h @ y, h @ z
    return -params.epsilon * SIGMA_Z - params.mu * (hx * SIGMA_X + hy * SIGMA_Y + hz * SIGMA_Z)


def adiabatic_evolve(state, params, times, hz):
    """Adiabatic evolution with first-order level shifts.

    ``c1`` gains ``exp(+i eps T) exp(+i int mu h_z dt)`` and ``c2`` the complex
    conjugate factor; the integral is trapezoidal on the given samples.
    """
    times = np.asarray(times, dtype=float)
    hz = np.asarray(hz, dtype=float)
    if times.size == 0 or hz.shape != times.shape:
        raise ValidationError("need a nonempty h_z time series matching the sample times")
    big_t = float(times[-1] - times[0])
    shift = params.mu * float(np.trapezoid(hz, times)) if times.size > 1 else 0.0
    phase = params.epsilon * big_t + shift
    return DipoleState(state.c1 * np.exp(1j * phase), state.c2 * np.exp(-1j * phase))


def _step_unitaries(params, hloc, dt):
    # exp(-i H dt) with H = a . sigma, a = -(mu hx, mu hy, eps + mu hz).
    ax = -params.mu * hloc[:, 0]
    ay = -params.mu * hloc[:, 1]
    az = -params.epsilon - params.mu * hloc[:, 2]
    amp = np.sqrt(ax * ax + ay * ay + az * az)
    c = np.cos(amp * dt)
    s = np.sin(amp * dt) / amp
    u = np.empty((len(amp), 2, 2), dtype=complex)
    u[:, 0, 0] = c - 1j * s * az
    u[:, 1, 1] = c + 1j * s * az
    u[:, 0, 1] = -1j * s * (ax - 1j * ay)
    u[:, 1, 0] = -1j * s * (ax + 1j * ay)
    return u


def _ordered_product(u):
    # Returns u[-1] @ ... @ u[0] by pairwise reduction (order preserved).
    while len(u) > 1:
        if len(u) % 2:
            u = np.concatenate([u, np.eye(2, dtype=complex)[None]])
        u = np.einsum("nij,njk->nik", u[1::2], u[0::2])
    return u[0]


def exact_evolve(state, params, times, h, tangent, dt_max, chunk=1 << 16):
    """Integrate the full two-level Schroedinger equation.

    Every sample interval is cut into substeps no longer than ``dt_max``;
    on each the field is linearly interpolated to the substep midpoint and
    the exact 2x2 exponential of ``-i H dt`` is applied.  Requires
    ``dt_max <= 0.1 / eps``.
    """
    required = 0.1 / params.epsilon
    if not dt_max > 0 or dt_max > required:
        raise ValidationError(f"dt_max={dt_max!r} too coarse; need dt_max <= {required!r}")
    times = np.asarray(times, dtype=float)
    h = np.asarray(h, dtype=float)
    if times.size < 2 or h.shape != (times.size, 3):
        raise ValidationError("need at least 2 field samples of shape (T, 3)")
    x, y, z = local_frame(tangent)
    hloc = h @ np.stack([x, y, z], axis=1)
    dts = np.diff(times)
    counts = np.ceil(dts / dt_max).astype(np.int64)
    ends = np.cumsum(counts)
    starts = ends - counts
    total = np.eye(2, dtype=complex)
    for first in range(0, int(ends[-1]), chunk):
        j = np.arange(first, min(first + chunk, int(ends[-1])))
        iv = np.searchsorted(ends, j, side="right")
        frac = (j - starts[iv] + 0.5) / counts[iv]
        hmid = hloc[iv] + frac[:, None] * (hloc[iv + 1] - hloc[iv])
        total = _ordered_product(_step_unitaries(params, hmid, dts[iv] / counts[iv])) @ total
    return DipoleState.from_vector(total @ state.vector)


def field_timeseries(traj, position, times=None):
    """Particle field at ``position`` sampled along ``traj`` at ``times``."""
    t = traj.times if times is None else np.asarray(times, dtype=float)
    return particle_field(traj.position_at(t), traj.velocity_at(t), traj.g, position)


@dataclass(frozen=True)
class PhaseIntegral:
    """Summed dipole phase with its last two refinement totals."""

    value: float
    previous: float
    max_dipole_change: float
    nodes: int

    @property
    def certificate(self):
        return abs(self.value - self.previous)


def _run_phases(x0, vel, t0, t1, g, positions, tangents, mu, tol, cutoff, min_level, max_level):
    speed2 = float(vel @ vel)
    nd = len(positions)
    if speed2 == 0.0 or nd == 0:
        z = np.zeros(nd)
        return z, z.copy(), 0.0, 0
    speed = math.sqrt(speed2)
    rel = positions - x0
    tc = np.clip(t0 + rel @ vel / speed2, t0, t1)
    w = np.linalg.norm(positions - (x0 + (tc - t0)[:, None] * vel), axis=1)
    if np.min(w) < cutoff:
        raise SingularFieldError(f"trajectory passes within cutoff {cutoff:.3e} of a dipole")
    tau = w / speed
    ua = np.arcsinh((t0 - tc) / tau)
    ub = np.arcsinh((t1 - tc) / tau)
    width = ub - ua

    def integrand(idx, frac):
        # Blocks keep the (dipoles x nodes) work arrays near 2^21 entries.
        step = max(1, (1 << 21) // len(frac))
        if len(idx) > step:
            return np.concatenate([integrand(idx[i:i + step], frac) for i in range(0, len(idx), step)])
        u = ua[idx, None] + width[idx, None] * frac[None, :]
        t = tc[idx, None] + tau[idx, None] * np.sinh(u)
        x = x0 + (t - t0)[..., None] * vel
        h = particle_field(x, vel, g, positions[idx, None, :])
        hz = np.einsum("ijk,ik->ij", h, tangents[idx])
        return mu * hz * tau[idx, None] * np.cosh(u)

    idx = np.arange(nd)
    intervals = 1 << min_level
    frac = np.arange(intervals + 1) / intervals
    vals = integrand(idx, frac)
    nodes = vals.size
    trap = width * (vals[:, 1:-1].sum(axis=1) + 0.5 * (vals[:, 0] + vals[:, -1])) / intervals
    table = [trap]
    result = np.empty(nd)
    previous = np.empty(nd)
    max_change = 0.0
    active = idx
    level = min_level
    while True:
        level += 1
        intervals *= 2
        mids = (2 * np.arange(intervals // 2) + 1) / intervals
        new = integrand(active, mids)
        nodes += new.size
        trap = 0.5 * table[0] + width[active] * new.sum(axis=1) / intervals
        row = [trap]
        for k, prev in enumerate(table, start=1):
            row.append(row[-1] + (row[-1] - prev) / (4.0**k - 1.0))
        change = np.abs(row[-1] - table[-1])
        done = change <= tol
        if level >= max_level and not np.all(done):
            j = int(np.argmax(change))
            raise ConvergenceError(
                f"dipole phase quadrature did not converge for dipole {int(active[j])}",
                (float(table[-1][j]), float(row[-1][j])),
            )
        if level - min_level >= 2:
            finished = active[done]
            result[finished] = row[-1][done]
            previous[finished] = table[-1][done]
            if np.any(done):
                max_change = max(max_change, float(change[done].max()))
            keep = ~done
            active = active[keep]
            row = [r[keep] for r in row]
            if len(active) == 0:
                break
        table = row
    return result, previous, max_change, nodes


def dipole_phases(traj, positions, tangents, mu, tol=DEFAULT_PHASE_TOL, cutoff=None,
                  spacing=None, min_level=3, max_level=20, batch=2048, full_output=False):
    """Per-dipole adiabatic phases ``int mu h_z dt`` along ``traj``.

    The trajectory is split into straight constant-velocity runs.  On each
    run the time variable is mapped as ``t = t_c + tau sinh(u)``, where
    ``t_c`` is the (clamped) time of closest approach and ``tau`` the
    closest-approach distance over the speed, which clusters the trapezoid
    nodes around the field peak.  The grid in ``u`` is halved, with
    Richardson extrapolation of successive trapezoid sums, until two
    consecutive estimates of every dipole's phase differ by at most ``tol``.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
    if cutoff is None:
        cutoff = DEFAULT_CUTOFF_FRACTION * (spacing if spacing is not None else 1.0)
    total = np.zeros(len(positions))
    prev_total = np.zeros(len(positions))
    max_change = 0.0
    nodes = 0
    for t0, t1, x0, vel in traj.runs():
        for i in range(0, len(positions), batch):
            sl = slice(i, i + batch)
            r, p, c, k = _run_phases(
                x0, vel, t0, t1, traj.g, positions[sl], tangents[sl], mu, tol, cutoff,
                min_level, max_level,
            )
            total[sl] += r
            prev_total[sl] += p
            max_change = max(max_change, c)
            nodes += k
    if full_output:
        return total, prev_total, max_change, nodes
    return total


def single_dipole_phase(params, traj, position, tangent, tol=DEFAULT_PHASE_TOL, cutoff=None):
    """Phase ``int mu h_z dt`` of one dipole (``params.mu`` or a bare moment)."""
    mu = params.mu if isinstance(params, DipoleParams) else float(params)
    return float(dipole_phases(traj, position, tangent, mu, tol=tol, cutoff=cutoff)[0])


def chain_phase(chain, traj, tol=DEFAULT_PHASE_TOL, cutoff=None, full_output=False):
    """Sum of all dipole phases of ``chain``, reduced in dipole order."""
    phases, prev, change, nodes = dipole_phases(
        traj, chain.positions, chain.tangents, chain.mu, tol=tol, cutoff=cutoff,
        spacing=chain.spacing, full_output=True,
    )
    value = float(np.sum(phases))
    if full_output:
        return value, PhaseIntegral(value, float(np.sum(prev)), change, nodes)
    return value


def adiabaticity_report(params, traj, chain, field_threshold=1e-2, rate_threshold=1e-2):
    """Largest ``mu |h| / eps`` over dipoles and times, and ``1 / (eps tau)``.

    On each straight run ``|h|`` peaks at the clamped closest approach, so the
    maximum is evaluated there exactly.  ``tau`` is the trajectory time span.
    """
    worst = 0.0
    for t0, t1, x0, vel in traj.runs():
        speed2 = float(vel @ vel)
        if speed2 == 0.0:
            continue
        rel = chain.positions - x0
        tc = np.clip(t0 + rel @ vel / speed2, t0, t1)
        rmin = np.linalg.norm(chain.positions - (x0 + (tc - t0)[:, None] * vel), axis=1)
        perp = np.linalg.norm(np.cross(vel, rel), axis=1)
        worst = max(worst, float(np.max(abs(traj.g) * perp / rmin**3)))
    return AdiabaticityReport(
        abs(params.mu) * worst / params.epsilon,
        1.0 / (params.epsilon * traj.span),
        field_threshold,
        rate_threshold,
    )


@dataclass(frozen=True)
class OracleComparison:
    fidelity: float
    norm_error: float
    substeps: int

    @property
    def deficit(self):
        return 1.0 - self.fidelity

    def as_dict(self):
        return {
            "fidelity": self.fidelity,
            "deficit": self.deficit,
            "norm_error": self.norm_error,
            "substeps": self.substeps,
        }


def oracle_comparison(state, params, traj, position, tangent, samples=20001, dt_max=None,
                      max_substeps=50_000_000):
    """Fidelity between adiabatic and exact evolution of one dipole along ``traj``.

    The field is sampled on ``samples`` equally spaced times spanning the
    trajectory; both evolutions use the same samples.  ``dt_max`` defaults
    to ``0.1 / eps``.
    """
    dt_max = 0.1 / params.epsilon if dt_max is None else float(dt_max)
    substeps = int(math.ceil(traj.span / dt_max))
    if substeps > max_substeps:
        raise ValidationError(
            f"exact evolution would need {substeps} substeps (limit {max_substeps})"
        )
    t = np.linspace(traj.times[0], traj.times[-1], int(samples))
    tangent = np.asarray(tangent, dtype=float)
    h = field_timeseries(traj, position, t)
    ad = adiabatic_evolve(state, params, t, h @ tangent)
    ex = exact_evolve(state, params, t, h, tangent, dt_max)
    return OracleComparison(float(fidelity(ad, ex)), float(abs(ex.norm2 - 1.0)), substeps)
