"""Fields, vector potentials and phase integrals of a dipole chain.

Gaussian-style units with hbar = 1.  A point dipole ``m`` has vector potential
``(m x R) / |R|^3``; an infinite straight line of dipoles with linear moment
density ``mu * n`` therefore carries flux ``4 pi mu n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import min_segment_distance2, vector_potential_sum
from .errors import ConvergenceError, SingularFieldError, ValidationError

__all__ = [
    "FieldSample",
    "particle_field",
    "field_sample",
    "dipole_vector_potential",
    "chain_vector_potential",
    "LineIntegral",
    "line_phase",
    "loop_phase",
    "DEFAULT_CUTOFF_FRACTION",
    "DEFAULT_LINE_TOL",
]

DEFAULT_CUTOFF_FRACTION = 1e-6
DEFAULT_LINE_TOL = 1e-9


def particle_field(x, v, g, position):
    """Magnetic field ``g (v x R') / |R'|^3`` of a moving charge.

    ``R' = position - x`` points from the charge at ``x`` to the field point.
    Broadcasts over leading axes of ``x``, ``v`` and ``position``.
    """
    rp = np.asarray(position, dtype=float) - np.asarray(x, dtype=float)
    r = np.linalg.norm(rp, axis=-1)
    if np.any(r == 0.0):
        raise SingularFieldError("field point coincides with the charge")
    return g * np.cross(np.asarray(v, dtype=float), rp) / (r**3)[..., None]


@dataclass(frozen=True)
class FieldSample:
    """Particle field at a dipole site and its projection on the tangent."""

    h: np.ndarray
    h_z: float


def field_sample(x, v, g, position, tangent):
    h = particle_field(x, v, g, position)
    return FieldSample(h, float(h @ np.asarray(tangent, dtype=float)))


def dipole_vector_potential(m, R):
    """Vector potential ``(m x R) / |R|^3`` of a point dipole at displacement ``R``."""
    R = np.asarray(R, dtype=float)
    r = np.linalg.norm(R, axis=-1)
    if np.any(r == 0.0):
        raise SingularFieldError("vector potential evaluated at the dipole location")
    return np.cross(np.asarray(m, dtype=float), R) / (r**3)[..., None]


def _cutoff(chain, cutoff):
    return DEFAULT_CUTOFF_FRACTION * chain.spacing if cutoff is None else float(cutoff)


def chain_vector_potential(chain, points, cutoff=None):
    """Sum of the dipole vector potentials of ``chain`` at ``points``.

    Each dipole carries moment ``mu * tangent``.  Points closer than
    ``cutoff`` (default ``1e-6`` dipole spacings) to any dipole are rejected.
    Accepts a single point ``(3,)`` or an array ``(M, 3)``.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    cut = _cutoff(chain, cutoff)
    out, min_r2 = vector_potential_sum(pts, chain.positions, chain.tangents)
    if np.min(min_r2) < cut * cut:
        j = int(np.argmin(min_r2))
        raise SingularFieldError(f"point {pts[j].tolist()} within cutoff {cut:.3e} of a dipole")
    out *= chain.mu
    return out[0] if single else out


@dataclass(frozen=True)
class LineIntegral:
    """Result of an adaptive line integral.

    ``coarse`` and ``fine`` are the path totals at the last two refinement
    levels of every accepted panel; ``value`` equals ``fine``.
    """

    value: float
    coarse: float
    fine: float
    evaluations: int
    panels: int

    @property
    def certificate(self):
        return abs(self.fine - self.coarse)


def _integrand(chain, seg_start, seg_vec, seg_idx, u, g, cutoff):
    x = seg_start[seg_idx] + u[:, None] * seg_vec[seg_idx]
    a = chain_vector_potential(chain, x, cutoff)
    return g * np.einsum("ij,ij->i", a, seg_vec[seg_idx])


def line_phase(chain, path, g, tol=DEFAULT_LINE_TOL, cutoff=None, max_depth=48,
               initial_panels=8, max_panels=1 << 18, full_output=False):
    """Phase ``g * int A . dx`` along a polyline.

    Each segment is split into panels integrated with the composite midpoint
    rule at two levels (1 and 2 points) and combined by Richardson
    extrapolation.  A panel is accepted once that extrapolated value agrees
    with the one from its two halves to within ``tol`` scaled by the panel's
    share of the path length; otherwise it is bisected.  The accepted values
    are summed in a fixed order.  More than ``max_panels`` unconverged
    panels at once, or bisection beyond ``max_depth``, raises
    :class:`ConvergenceError`.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[1] != 3:
        raise ValidationError("path must have shape (P, 3)")
    seg_vec = np.diff(path, axis=0)
    seg_len = np.linalg.norm(seg_vec, axis=1)
    keep = seg_len > 0.0
    if not np.any(keep):
        res = LineIntegral(0.0, 0.0, 0.0, 0, 0)
        return (0.0, res) if full_output else 0.0
    seg_start = path[:-1][keep]
    seg_vec = seg_vec[keep]
    seg_len = seg_len[keep]
    total_len = float(seg_len.sum())
    cut = _cutoff(chain, cutoff)
    if min_segment_distance2(seg_start, seg_start + seg_vec, chain.positions) < cut * cut:
        raise SingularFieldError(f"path passes within cutoff {cut:.3e} of a dipole")

    def f(idx, u):
        return _integrand(chain, seg_start, seg_vec, idx, u, g, cut)

    nseg = len(seg_len)
    idx = np.repeat(np.arange(nseg), initial_panels)
    h = np.full(len(idx), 1.0 / initial_panels)
    a = np.tile(np.arange(initial_panels) / initial_panels, nseg)
    # f at the panel's 1/4, 1/2, 3/4 points.
    vals = f(np.concatenate([idx] * 3), np.concatenate([a + 0.25 * h, a + 0.5 * h, a + 0.75 * h]))
    fq1, fm, fq3 = np.split(vals, 3)
    evaluations = len(vals)

    acc_idx, acc_a, acc_coarse, acc_fine = [], [], [], []
    depth = 0
    while len(idx):
        coarse = h * (4.0 * 0.5 * (fq1 + fq3) - fm) / 3.0
        u = np.concatenate([a + h / 8, a + 3 * h / 8, a + 5 * h / 8, a + 7 * h / 8])
        new = f(np.concatenate([idx] * 4), u)
        evaluations += len(new)
        e1, e3, e5, e7 = np.split(new, 4)
        half = 0.5 * h
        left = half * (2.0 * (e1 + e3) - fq1) / 3.0
        right = half * (2.0 * (e5 + e7) - fq3) / 3.0
        fine = left + right
        local_tol = tol * h * seg_len[idx] / total_len
        ok = np.abs(fine - coarse) <= local_tol
        acc_idx.append(idx[ok])
        acc_a.append(a[ok])
        acc_coarse.append(coarse[ok])
        acc_fine.append(fine[ok])
        bad = ~ok
        if not np.any(bad):
            break
        depth += 1
        if depth > max_depth or 2 * np.count_nonzero(bad) > max_panels:
            c = float(np.sum(np.concatenate(acc_coarse)) + np.sum(coarse[bad]))
            fn = float(np.sum(np.concatenate(acc_fine)) + np.sum(fine[bad]))
            raise ConvergenceError("line integral did not converge", (c, fn))
        # Children inherit their midpoint and quarter points from the parent.
        ib, ab, hb = idx[bad], a[bad], half[bad]
        idx = np.concatenate([ib, ib])
        a = np.concatenate([ab, ab + hb])
        h = np.concatenate([hb, hb])
        fm = np.concatenate([fq1[bad], fq3[bad]])
        fq1 = np.concatenate([e1[bad], e5[bad]])
        fq3 = np.concatenate([e3[bad], e7[bad]])
    order = np.lexsort((np.concatenate(acc_a), np.concatenate(acc_idx)))
    fine_all = np.concatenate(acc_fine)[order]
    coarse_all = np.concatenate(acc_coarse)[order]
    value = float(np.sum(fine_all))
    res = LineIntegral(value, float(np.sum(coarse_all)), value, evaluations, len(order))
    return (value, res) if full_output else value


def loop_phase(chain, contour, g, **kwargs):
    """Phase ``g * loop-integral A . dx`` around a closed polyline.

    The closing segment is added when the last point differs from the first.
    Keyword arguments are passed to :func:`line_phase`.
    """
    contour = np.asarray(contour, dtype=float)
    if len(contour) < 3:
        raise ValidationError("a closed contour needs at least 3 points")
    if not np.array_equal(contour[0], contour[-1]):
        contour = np.vstack([contour, contour[:1]])
    return line_phase(chain, contour, g, **kwargs)
