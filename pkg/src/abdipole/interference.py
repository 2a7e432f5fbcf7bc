"""Two-path scattering cross-sections with and without solenoid decoherence.

Cross-sections are reported in units of ``|f_R|^2`` of the supplied
amplitude profile; the overall normalisation is arbitrary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "CrossSectionCurve",
    "two_path_sigma",
    "decohered_sigma",
    "fit_visibility",
    "fringe_visibility",
    "default_amplitudes",
    "fringe_scan",
    "FORWARD_EXCLUSION",
]

FORWARD_EXCLUSION = 0.05


@dataclass(frozen=True)
class CrossSectionCurve:
    setting: float
    theta_grid: np.ndarray
    sigma: np.ndarray
    phi: float
    visibility: float
    overlap: complex = 1.0


def two_path_sigma(fR, fL, phi):
    """``|fR|^2 + |fL|^2 + fR* fL e^{-i phi} + fR fL* e^{i phi}`` (real part)."""
    fR = np.asarray(fR, dtype=complex)
    fL = np.asarray(fL, dtype=complex)
    cross = np.conj(fR) * fL * np.exp(-1j * np.asarray(phi))
    return np.abs(fR) ** 2 + np.abs(fL) ** 2 + 2.0 * cross.real


def decohered_sigma(fR, fL, overlap):
    """Cross-section with ``e^{i phi}`` replaced by the solenoid overlap ``<psi_L|psi_R>``.

    ``overlap`` may be a complex number or an object with a ``value``.
    """
    z = complex(getattr(overlap, "value", overlap))
    if abs(z) > 1.0 + 1e-10:
        raise ValidationError(f"overlap magnitude {abs(z)!r} exceeds 1")
    fR = np.asarray(fR, dtype=complex)
    fL = np.asarray(fL, dtype=complex)
    cross = np.conj(fR) * fL * np.conj(z)
    return np.abs(fR) ** 2 + np.abs(fL) ** 2 + 2.0 * cross.real


def fit_visibility(phis, sigma):
    """Least-squares fit ``sigma = a + b cos(phi) + c sin(phi)``; returns ``hypot(b, c) / a``."""
    phis = np.asarray(phis, dtype=float)
    design = np.column_stack([np.ones_like(phis), np.cos(phis), np.sin(phis)])
    (a, b, c), *_ = np.linalg.lstsq(design, np.asarray(sigma, dtype=float), rcond=None)
    return math.hypot(b, c) / a


def fringe_visibility(fR, fL, overlap, phis):
    """Visibility fitted over a sweep of an extra phase ``phi`` applied to ``overlap``.

    Each point uses ``decohered_sigma`` with ``overlap * exp(i phi)``.  With
    ``|fR| = |fL|`` the result equals ``|overlap|``.
    """
    z = complex(getattr(overlap, "value", overlap))
    phis = np.asarray(phis, dtype=float)
    sigma = np.array([decohered_sigma(fR, fL, z * np.exp(1j * p)) for p in phis]).real
    return fit_visibility(phis, sigma)


def default_amplitudes(theta, theta_min=FORWARD_EXCLUSION):
    """Constant off-forward amplitudes ``fL = -fR = -1``; forward angles masked.

    Returns ``(fR, fL, mask)`` where ``mask`` selects ``|theta| >= theta_min``
    (angles wrapped to ``(-pi, pi]``).
    """
    theta = np.asarray(theta, dtype=float)
    wrapped = np.angle(np.exp(1j * theta))
    mask = np.abs(wrapped) >= theta_min
    fR = np.ones_like(theta, dtype=complex)
    return fR, -fR, mask


def fringe_scan(settings, evaluate, theta=None, amplitudes=default_amplitudes,
                theta_min=FORWARD_EXCLUSION):
    """Cross-section curves over a sweep.

    ``evaluate(setting)`` returns ``(phi, overlap)`` for each setting, with
    ``overlap`` the solenoid overlap (or ``None`` for a pure phase factor).
    Angles within ``theta_min`` of forward are dropped from the grid.
    Visibility is the interference depth ``2 |fR fL overlap| / (|fR|^2 + |fL|^2)``
    averaged over the retained angles.
    """
    if theta is None:
        theta = np.linspace(-math.pi, math.pi, 361)
    fR, fL, mask = amplitudes(theta, theta_min)
    theta, fR, fL = np.asarray(theta)[mask], fR[mask], fL[mask]
    curves = []
    for s in settings:
        phi, ov = evaluate(s)
        z = np.exp(1j * phi) if ov is None else complex(getattr(ov, "value", ov))
        sigma = decohered_sigma(fR, fL, z)
        depth = 2.0 * np.abs(fR * fL) * abs(z) / (np.abs(fR) ** 2 + np.abs(fL) ** 2)
        curves.append(CrossSectionCurve(float(s), theta, sigma, float(phi), float(np.mean(depth)), z))
    return curves
