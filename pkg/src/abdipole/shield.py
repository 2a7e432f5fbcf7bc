"""Superconducting shield around a dipole chain.

The shield is a thin tube of cross-section radius ``rho`` around the chain.
A passing charge induces a screening surface current; per filament element
``dl`` the current crossing the cross-section is

    j_perp dl = -(g / 4 pi) ([dl x R] . V) / R^3,

with ``R`` from the current point to the charge.  Cooper pairs carrying that
current pick up the phase ``Phi * sum(j_perp dl)`` per unit time, which
cancels the charge's own phase rate ``g A(x) . V`` as ``rho / d -> 0``.

The shield is not meshed.  The field of the charge is averaged over
``perimeter_points`` points on the circle of radius ``rho`` around each
element, which is the only place the finite cross-section enters.

:func:`shielding_feasibility` is the one function here working in SI units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import vector_potential_sum
from .electromagnetics import chain_vector_potential, line_phase, loop_phase
from .errors import AdmissibilityError, SingularFieldError, ValidationError
from .geometry import DipoleChain

__all__ = [
    "ShieldSpec",
    "make_shield_spec",
    "shield_current_element",
    "shield_phase_rate",
    "particle_phase_rate",
    "cancellation_residual",
    "shield_phase",
    "check_admissibility",
    "electron_speed_fraction",
    "shielding_feasibility",
    "feasibility_report",
    "FeasibilityReport",
]

# CODATA 2018 (SI); the first four are exact by definition.
BOLTZMANN = 1.380649e-23  # J / K
PLANCK = 6.62607015e-34  # J s
HBAR = PLANCK / (2.0 * math.pi)
SPEED_OF_LIGHT = 299792458.0  # m / s
ELECTRON_VOLT = 1.602176634e-19  # J
ELECTRON_REST_ENERGY_EV = 0.51099895000e6  # eV

GAP_FACTOR = 3.5
DISTANCE_RATIO = 20.0
CURVATURE_RATIO = 0.05
PERIMETER_POINTS = 16
FLUX_LOOP_POINTS = 64
# Flux loops closer than this many spacings see the discreteness ripple.
FLUX_LOOP_SPACINGS = 8.0


@dataclass(frozen=True)
class ShieldSpec:
    """Thin superconducting tube of radius ``rho`` around ``chain_ref``.

    ``Phi`` is the enclosed flux (loop phase divided by ``g``).  ``Tc`` is
    carried only for reporting.  ``min_distance_ratio`` and
    ``max_curvature_ratio`` set the admissibility limits ``d / rho`` and
    ``rho / K``.
    """

    rho: float
    chain_ref: DipoleChain
    Phi: float
    Tc: float | None = None
    min_distance_ratio: float = DISTANCE_RATIO
    max_curvature_ratio: float = CURVATURE_RATIO
    perimeter_points: int = PERIMETER_POINTS
    _rings: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValidationError("shield radius rho must be positive")
        if int(self.perimeter_points) < 4:
            raise ValidationError("perimeter_points must be at least 4")
        if not math.isfinite(self.Phi):
            raise ValidationError("enclosed flux Phi must be finite")
        ratio = self.rho / self.chain_ref.curvature_radius()
        if ratio > self.max_curvature_ratio:
            raise AdmissibilityError(
                f"rho/K = {ratio:.3g} exceeds {self.max_curvature_ratio}", "rho/K", ratio,
                self.max_curvature_ratio,
            )
        object.__setattr__(self, "_rings", _perimeter_chains(self))

    @property
    def element_length(self):
        """Filament length ``1 / n`` represented by one dipole."""
        return 1.0 / self.chain_ref.n


def _normal_frames(tangents):
    """Two unit vectors orthogonal to each tangent (rows)."""
    t = np.asarray(tangents, dtype=float)
    axis = np.argmin(np.abs(t), axis=1)
    e = np.zeros_like(t)
    e[np.arange(len(t)), axis] = 1.0
    e1 = np.cross(e, t)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(t, e1)
    return e1, e2


def _perimeter_chains(spec):
    chain = spec.chain_ref
    e1, e2 = _normal_frames(chain.tangents)
    rings = []
    for j in range(int(spec.perimeter_points)):
        a = 2.0 * math.pi * j / spec.perimeter_points
        offset = spec.rho * (math.cos(a) * e1 + math.sin(a) * e2)
        rings.append(
            DipoleChain(chain.positions + offset, chain.tangents, 1.0, chain.n, chain.sections,
                        chain.closed)
        )
    return rings


def make_shield_spec(chain, rho, g=1.0, Tc=None, **kwargs):
    """Build a :class:`ShieldSpec` with ``Phi`` from a loop around the chain.

    The flux loop is a regular polygon in the plane normal to the chain
    midway between its two central dipoles, of radius ``rho`` but at least
    ``FLUX_LOOP_SPACINGS`` dipole spacings.
    """
    if len(chain) < 2:
        raise ValidationError("shield needs a chain of at least two dipoles")
    m = len(chain) // 2
    centre = 0.5 * (chain.positions[m - 1] + chain.positions[m])
    normal = chain.tangents[m - 1] + chain.tangents[m]
    normal /= np.linalg.norm(normal)
    e1, e2 = _normal_frames(normal[None, :])
    a = 2.0 * math.pi * np.arange(FLUX_LOOP_POINTS) / FLUX_LOOP_POINTS
    radius = max(float(rho), FLUX_LOOP_SPACINGS * chain.spacing)
    loop = centre + radius * (np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2)
    Phi = loop_phase(chain, loop, g) / g
    return ShieldSpec(float(rho), chain, float(Phi), Tc, **kwargs)


def shield_current_element(g_charge, V, R, dl):
    """Screening current ``-(g / 4 pi) ([dl x R] . V) / |R|^3`` through element ``dl``.

    ``R`` runs from the current point to the charge.  Broadcasts over
    leading axes.
    """
    R = np.asarray(R, dtype=float)
    r = np.linalg.norm(R, axis=-1)
    if np.any(r == 0.0):
        raise SingularFieldError("current element evaluated at the charge position")
    triple = np.einsum("...i,...i->...", np.cross(np.asarray(dl, dtype=float), R),
                       np.asarray(V, dtype=float))
    out = -(g_charge / (4.0 * math.pi)) * triple / r**3
    return float(out) if np.ndim(out) == 0 else out


def check_admissibility(spec, points):
    """Raise :class:`AdmissibilityError` unless ``d / rho`` is large enough at all ``points``.

    ``d`` is the distance from each point to the nearest dipole.  Returns the
    smallest ratio.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    chain = spec.chain_ref
    _, min_r2 = vector_potential_sum(pts, chain.positions, chain.tangents)
    ratio = float(np.sqrt(np.min(min_r2))) / spec.rho
    if ratio < spec.min_distance_ratio:
        raise AdmissibilityError(
            f"d/rho = {ratio:.3g} below {spec.min_distance_ratio}", "d/rho", ratio,
            spec.min_distance_ratio,
        )
    return ratio


def _ring_potential(spec, points):
    """Perimeter-averaged ``sum_k (t_k x R_k) / R_k^3`` at ``points``."""
    acc = np.zeros((len(points), 3))
    for ring in spec._rings:
        out, _ = vector_potential_sum(points, ring.positions, ring.tangents)
        acc += out
    return acc / len(spec._rings)


def shield_phase_rate(spec, x, v, g=1.0):
    """Shield phase rate ``Phi * sum_k j_perp dl_k`` for a charge at ``x`` moving with ``v``.

    Each element is ``dl_k = t_k / n``; the field of the charge is averaged
    over the perimeter of the cross-section.  Accepts single samples or
    arrays of samples.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
    check_admissibility(spec, x)
    a = _ring_potential(spec, x)
    rate = -(g / (4.0 * math.pi)) * spec.Phi * spec.element_length * np.einsum("ij,ij->i", a, v)
    return float(rate[0]) if single else rate


def particle_phase_rate(chain, x, v, g=1.0):
    """Phase rate ``g A(x) . v`` of the passing charge."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
    return g * np.einsum("ij,ij->i", chain_vector_potential(chain, x), v)


def _samples(traj):
    # Corner samples carry the outgoing velocity; evaluate at chord midpoints too.
    mids = 0.5 * (traj.times[1:] + traj.times[:-1])
    t = np.sort(np.concatenate([traj.times, mids]))
    return traj.position_at(t), traj.velocity_at(t)


def cancellation_residual(spec, traj, full_output=False):
    """``max |rate_shield + rate_particle| / max |rate_particle|`` along ``traj``.

    Rates are sampled at the trajectory nodes and chord midpoints.  A chain
    with zero moment gives residual 0.
    """
    x, v = _samples(traj)
    shield = shield_phase_rate(spec, x, v, traj.g)
    particle = particle_phase_rate(spec.chain_ref, x, v, traj.g)
    scale = float(np.max(np.abs(particle)))
    resid = 0.0 if scale == 0.0 else float(np.max(np.abs(shield + particle))) / scale
    if full_output:
        return resid, shield, particle
    return resid


def shield_phase(spec, traj, tol=1e-9):
    """Total shield phase accumulated over ``traj``.

    Summing the current elements over the chain and integrating in time is a
    line integral of the perimeter chains' potential along the path, so this
    reuses :func:`~abdipole.electromagnetics.line_phase` once per perimeter
    point.
    """
    check_admissibility(spec, traj.positions)
    total = 0.0
    for ring in spec._rings:
        total += line_phase(ring, traj.positions, traj.g, tol=tol)
    return -spec.Phi * spec.element_length / (4.0 * math.pi) * total / len(spec._rings)


def electron_speed_fraction(kinetic_ev):
    """Exact relativistic ``beta = v / c`` of an electron with the given kinetic energy."""
    if not kinetic_ev > 0.0:
        raise ValidationError("kinetic energy must be positive")
    gamma = 1.0 + kinetic_ev / ELECTRON_REST_ENERGY_EV
    return math.sqrt(1.0 - 1.0 / gamma**2)


def shielding_feasibility(Tc, passage_length, speed_fraction_c):
    """Compare the passage rate of a charge with the superconducting gap cutoff.

    Parameters
    ----------
    Tc : float
        Critical temperature in kelvin.
    passage_length : float
        Distance travelled near the shield, metres.
    speed_fraction_c : float
        ``v / c``.

    Returns
    -------
    dict
        ``cutoff_hz = 3.5 k Tc / (2 pi hbar)``, ``tau_s = L / v``,
        ``characteristic_hz = 1 / tau`` and ``shield_effective``, true when
        ``1 / tau <= cutoff``.
    """
    if not (Tc > 0 and passage_length > 0 and 0 < speed_fraction_c < 1):
        raise ValidationError("feasibility inputs must be positive with v < c")
    cutoff = GAP_FACTOR * BOLTZMANN * Tc / (2.0 * math.pi * HBAR)
    tau = passage_length / (speed_fraction_c * SPEED_OF_LIGHT)
    return {
        "Tc_K": float(Tc),
        "passage_length_m": float(passage_length),
        "speed_fraction_c": float(speed_fraction_c),
        "cutoff_hz": cutoff,
        "tau_s": tau,
        "characteristic_hz": 1.0 / tau,
        "shield_effective": bool(1.0 / tau <= cutoff),
    }


@dataclass(frozen=True)
class FeasibilityReport:
    computed: dict
    quoted: dict | None
    kinetic_ev: float
    crossover_ev: float

    @property
    def tension(self):
        """Relative gap between the quoted and computed speeds, or ``None``."""
        if self.quoted is None:
            return None
        b0, b1 = self.computed["speed_fraction_c"], self.quoted["speed_fraction_c"]
        return abs(b1 - b0) / b0

    @property
    def verdict_agrees(self):
        return self.quoted is None or (
            self.quoted["shield_effective"] == self.computed["shield_effective"]
        )

    def as_dict(self):
        return {
            "kinetic_ev": self.kinetic_ev,
            "computed": self.computed,
            "quoted": self.quoted,
            "speed_tension": self.tension,
            "verdict_agrees": self.verdict_agrees,
            "crossover_ev": self.crossover_ev,
        }


def _crossover_ev(Tc, passage_length):
    # Kinetic energy at which 1 / tau equals the cutoff.
    cutoff = GAP_FACTOR * BOLTZMANN * Tc / (2.0 * math.pi * HBAR)
    beta = cutoff * passage_length / SPEED_OF_LIGHT
    if beta >= 1.0:
        return math.inf
    gamma = 1.0 / math.sqrt(1.0 - beta * beta)
    return (gamma - 1.0) * ELECTRON_REST_ENERGY_EV


def feasibility_report(Tc, passage_length, kinetic_ev, quoted_speed_fraction=None):
    """Feasibility for an electron of given kinetic energy, exact kinematics.

    When ``quoted_speed_fraction`` is given the verdict is also computed for
    that speed so any disagreement with the exact ``beta`` is reported.
    """
    computed = shielding_feasibility(Tc, passage_length, electron_speed_fraction(kinetic_ev))
    quoted = None
    if quoted_speed_fraction is not None:
        quoted = shielding_feasibility(Tc, passage_length, quoted_speed_fraction)
    return FeasibilityReport(computed, quoted, float(kinetic_ev), _crossover_ev(Tc, passage_length))
