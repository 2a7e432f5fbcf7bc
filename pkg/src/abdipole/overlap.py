"""Overlaps of many-dipole solenoid states after two different flybys.

A section of ``K`` dipoles, each in ``c1 xi + c2 eta``, evolves under
trajectory ``x`` into a product state whose ``xi`` amplitudes carry
``exp(+i dphi[x])`` and ``eta`` amplitudes ``exp(-i dphi[x])``.  With
``p = |c1|^2``, ``q = |c2|^2`` and ``delta = dphi[x] - dphi[y]`` the section
overlap ``<psi(x)|psi(y)>`` is

    sum_m C(K, m) p^m q^(K-m) exp(i (K - 2m) delta) = (p e^{-i delta} + q e^{i delta})^K

where ``m`` counts the dipoles in ``xi``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import ValidationError
from .spin import DEFAULT_PHASE_TOL, dipole_phases

__all__ = [
    "SectionSpec",
    "OverlapResult",
    "BinomialCheck",
    "binomial_state_check",
    "exact_section_overlap",
    "meanfield_section_overlap",
    "solenoid_overlap",
    "build_section_specs",
    "mean_moment",
    "section_discrepancy",
    "DIRECT_SUM_LIMIT",
]

DIRECT_SUM_LIMIT = 1000
PHASE_WARN_THRESHOLD = 0.1


@dataclass(frozen=True)
class SectionSpec:
    K: int
    c1: complex
    c2: complex
    representative_position: np.ndarray
    representative_tangent: np.ndarray
    delta_phi_x: float
    delta_phi_y: float
    warn_threshold: float = PHASE_WARN_THRESHOLD

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError("section dipole count K must be a positive integer")
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > 1e-10:
            raise ValidationError(f"section amplitudes not normalised: {norm!r}")
        object.__setattr__(self, "K", int(self.K))
        big = max(abs(self.delta_phi_x), abs(self.delta_phi_y))
        if big > self.warn_threshold:
            warnings.warn(
                f"per-dipole phase {big:.3g} exceeds {self.warn_threshold}; "
                "small-phase regime not satisfied",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def populations(self):
        p, q = abs(self.c1) ** 2, abs(self.c2) ** 2
        s = p + q
        return p / s, q / s

    @property
    def delta(self):
        return self.delta_phi_x - self.delta_phi_y


@dataclass(frozen=True)
class OverlapResult:
    """Overlap ``exp(log_magnitude + i phase)``.

    ``phase`` is the accumulated (unwrapped) argument; ``arg(value)`` is its
    principal value.
    """

    log_magnitude: float
    phase: float
    method: str

    @property
    def value(self):
        return complex(math.exp(self.log_magnitude) * np.exp(1j * self.phase))

    @property
    def magnitude(self):
        return math.exp(self.log_magnitude)

    @property
    def magnitude_deficit(self):
        return -math.expm1(self.log_magnitude)

    @classmethod
    def from_complex(cls, z, method):
        z = complex(z)
        if z == 0:
            return cls(-math.inf, 0.0, method)
        return cls(math.log(abs(z)), math.atan2(z.imag, z.real), method)


@dataclass(frozen=True)
class BinomialCheck:
    n: int
    coefficients: np.ndarray
    norms2: np.ndarray
    max_deviation: float
    overlap_deviation: float = 0.0


def binomial_state_check(n, a, b, a1=None, b1=None):
    """Verify the grouped expansion of ``prod_k (a xi_k + b eta_k)`` by brute force.

    The ``2^n`` amplitudes are grouped by the number ``m`` of spins carrying
    the factor ``a`` (spins in ``xi``); each group's amplitude must be
    ``a^m b^(n-m)`` and its grouped basis sum has squared norm ``C(n, m)``.
    When ``a1, b1`` are given, the product-state overlap is checked against
    ``sum_m C(n,m) (a* a1)^m (b* b1)^(n-m)`` as well.
    """
    if not 1 <= n <= 12:
        raise ValidationError("binomial_state_check supports 1 <= n <= 12")
    single = np.array([a, b], dtype=complex)
    psi = np.array([1.0 + 0j])
    for _ in range(n):
        psi = np.kron(psi, single)
    # Basis index bit 0 -> xi, bit 1 -> eta (most significant bit first).
    eta_count = np.array([bin(i).count("1") for i in range(1 << n)])
    xi_count = n - eta_count
    coeffs = np.array([a**m * b ** (n - m) for m in range(n + 1)], dtype=complex)
    norms2 = np.array([np.count_nonzero(xi_count == m) for m in range(n + 1)], dtype=float)
    dev = max(abs(norms2[m] - math.comb(n, m)) for m in range(n + 1))
    dev = max(dev, float(np.max(np.abs(psi - coeffs[xi_count]))))
    rebuilt = np.zeros_like(psi)
    for m in range(n + 1):
        rebuilt[xi_count == m] += coeffs[m]
    dev = max(dev, float(np.max(np.abs(psi - rebuilt))))
    odev = 0.0
    if a1 is not None:
        other = np.array([1.0 + 0j])
        for _ in range(n):
            other = np.kron(other, np.array([a1, b1], dtype=complex))
        brute = np.vdot(psi, other)
        formula = sum(
            math.comb(n, m) * (np.conj(a) * a1) ** m * (np.conj(b) * b1) ** (n - m)
            for m in range(n + 1)
        )
        odev = abs(brute - formula)
    return BinomialCheck(n, coeffs, norms2, float(dev), float(odev))


def _closed_form(p, q, delta, K):
    s2 = math.sin(delta) ** 2
    log_mag = 0.5 * math.log1p(-4.0 * p * q * s2) if 4.0 * p * q * s2 < 1.0 else -math.inf
    arg = math.atan2((q - p) * math.sin(delta), math.cos(delta))
    return K * log_mag, K * arg


def _direct_sum(p, q, delta, K):
    m = np.arange(K + 1)
    # Exact integer binomials keep the weights within a few ulp; log-gamma
    # cancellation at K ~ 1e3 costs about 1e-12.
    comb = np.array([float(math.comb(K, k)) for k in range(K + 1)])
    with np.errstate(under="ignore"):
        w = comb * (np.power(p, m) * np.power(q, K - m))
    tiny = w == 0.0
    if np.any(tiny):
        with np.errstate(divide="ignore"):
            w[tiny] = np.exp(np.log(comb[tiny]) + xlogy(m[tiny], p) + xlogy(K - m[tiny], q))
    return complex(np.sum(w * np.exp(1j * (K - 2 * m) * delta)))


def exact_section_overlap(spec, direct=False):
    """Exact section overlap.

    Evaluated as the closed-form power in log-magnitude / accumulated-phase
    form (stable for any ``K``), or with ``direct=True`` as the explicit
    binomial sum (``K <= 1000`` only).
    """
    p, q = spec.populations
    if direct:
        if spec.K > DIRECT_SUM_LIMIT:
            raise ValidationError(f"direct summation limited to K <= {DIRECT_SUM_LIMIT}")
        return OverlapResult.from_complex(_direct_sum(p, q, spec.delta, spec.K), "exact")
    log_mag, phase = _closed_form(p, q, spec.delta, spec.K)
    return OverlapResult(log_mag, phase, "closed_form")


def meanfield_section_overlap(spec):
    """Mean-field section overlap: ``m`` replaced by its mean ``p K``."""
    p, q = spec.populations
    phase = spec.K * ((q - p) * spec.delta_phi_x + (p - q) * spec.delta_phi_y)
    return OverlapResult(0.0, phase, "meanfield")


def solenoid_overlap(chain, sections, method="exact"):
    """Product of section overlaps, accumulated in section order."""
    if method not in ("exact", "meanfield"):
        raise ValidationError(f"unknown overlap method {method!r}")
    sections = list(sections)
    if chain is not None and sum(s.K for s in sections) != len(chain):
        raise ValidationError("section dipole counts do not add up to the chain size")
    log_mag = 0.0
    phase = 0.0
    for spec in sections:
        r = exact_section_overlap(spec) if method == "exact" else meanfield_section_overlap(spec)
        log_mag += r.log_magnitude
        phase += r.phase
    return OverlapResult(log_mag, phase, "closed_form" if method == "exact" else "meanfield")


def mean_moment(mu, c1, c2):
    """Quantum average ``(|c1|^2 - |c2|^2) mu`` of the axial moment."""
    return (abs(c1) ** 2 - abs(c2) ** 2) * mu


def build_section_specs(chain, c1, c2, traj_x, traj_y, per_dipole=False,
                        tol=DEFAULT_PHASE_TOL, warn_threshold=PHASE_WARN_THRESHOLD):
    """Section specs for ``chain`` with per-dipole phases for two trajectories.

    By default each section's phases are those of a single representative
    dipole (section centroid, mean tangent).  With ``per_dipole=True`` every
    dipole's phase is computed and the section mean is used instead.
    Per-dipole phases use the bare moment ``chain.mu``.
    """
    if per_dipole:
        px = dipole_phases(traj_x, chain.positions, chain.tangents, chain.mu, tol=tol,
                           spacing=chain.spacing)
        py = dipole_phases(traj_y, chain.positions, chain.tangents, chain.mu, tol=tol,
                           spacing=chain.spacing)
        dx = [float(np.mean(px[a:b])) for a, b in chain.sections]
        dy = [float(np.mean(py[a:b])) for a, b in chain.sections]
    rep_pos, rep_tan = chain.section_representatives()
    if not per_dipole:
        dx = dipole_phases(traj_x, rep_pos, rep_tan, chain.mu, tol=tol, spacing=chain.spacing)
        dy = dipole_phases(traj_y, rep_pos, rep_tan, chain.mu, tol=tol, spacing=chain.spacing)
    return [
        SectionSpec(b - a, c1, c2, rep_pos[i], rep_tan[i], float(dx[i]), float(dy[i]), warn_threshold)
        for i, (a, b) in enumerate(chain.sections)
    ]


def section_discrepancy(chain, c1, c2, traj_x, traj_y, tol=DEFAULT_PHASE_TOL):
    """Largest gap between representative and per-dipole section phases."""
    rep = build_section_specs(chain, c1, c2, traj_x, traj_y, tol=tol, warn_threshold=math.inf)
    full = build_section_specs(chain, c1, c2, traj_x, traj_y, per_dipole=True, tol=tol,
                               warn_threshold=math.inf)
    return max(
        max(abs(r.delta_phi_x - f.delta_phi_x), abs(r.delta_phi_y - f.delta_phi_y))
        for r, f in zip(rep, full)
    )

