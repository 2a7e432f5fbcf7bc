"""Independent reference implementations and frozen reference values.

Nothing here calls into the package's quadrature or compiled kernels.
Frozen values were produced with mpmath at 40 digits.
"""

import math

import mpmath as mp
import numpy as np

# sum_m C(10,m) 0.7^m 0.3^(10-m) exp(i (10-2m) 1e-3)
FROZEN_K10 = complex(0.99998780004824256649, -0.0039999736534071670266)
FROZEN_K10_DEFICIT = 4.1999915440108176968e-6
FROZEN_K10_ARG = -0.0040000011200003404801

# Dipole at origin, tangent z, path (v t, b, 0), t in [-4, 4], mu=0.37, g=1.3, v=2, b=1.5.
FROZEN_FLYBY_PHASE = -0.6303486958872117753814783

# Dipole at (0.3,-0.2,0.4), tangent (0.48,0.6,0.64); path x0 + v t, t in [0, 6],
# x0 = (-3,1.2,0.5), v = (1.1,0.2,-0.3); mu=0.37, g=1.3.
FROZEN_TILTED_PHASE = -0.3504473772835372228249343


def brute_vector_potential(positions, tangents, mu, point):
    """Plain-Python dipole sum."""
    out = np.zeros(3)
    for p, t in zip(positions, tangents):
        R = np.asarray(point, dtype=float) - p
        r = math.sqrt(R @ R)
        out += mu * np.cross(t, R) / r**3
    return out


def mp_dipole_phase(position, tangent, x0, v, t0, t1, mu, g, dps=30):
    """``int mu h_z dt`` by mpmath quadrature split at closest approach."""
    with mp.workdps(dps):
        pos = [mp.mpf(float(c)) for c in position]
        tan = [mp.mpf(float(c)) for c in tangent]
        xs = [mp.mpf(float(c)) for c in x0]
        vs = [mp.mpf(float(c)) for c in v]

        def hz(t):
            R = [pos[i] - xs[i] - vs[i] * t for i in range(3)]
            r = mp.sqrt(R[0] ** 2 + R[1] ** 2 + R[2] ** 2)
            c = [vs[1] * R[2] - vs[2] * R[1], vs[2] * R[0] - vs[0] * R[2], vs[0] * R[1] - vs[1] * R[0]]
            return mu * g * (tan[0] * c[0] + tan[1] * c[1] + tan[2] * c[2]) / r**3

        rel = [pos[i] - xs[i] for i in range(3)]
        tc = sum(rel[i] * vs[i] for i in range(3)) / sum(vs[i] ** 2 for i in range(3))
        pts = [mp.mpf(t0)] + ([tc] if t0 < tc < t1 else []) + [mp.mpf(t1)]
        return float(mp.quad(hz, pts))


def segment_potential_integral(m, dipole_pos, a, b):
    """Exact ``int A . dx`` of one dipole along the segment ``a -> b``.

    With ``x = a + s u`` and ``p`` the foot of the perpendicular from the
    dipole, ``A . u = (m x (x - d)) . u / r^3 = ((m x p') . u) / r^3`` where
    ``p'`` is the perpendicular offset; the remaining integral is elementary.
    """
    a, b, d, m = (np.asarray(z, dtype=float) for z in (a, b, dipole_pos, m))
    seg = b - a
    L = math.sqrt(seg @ seg)
    u = seg / L
    s0 = (d - a) @ u
    perp = a + s0 * u - d
    w2 = perp @ perp
    coef = np.cross(m, perp) @ u

    def prim(s):
        return (s - s0) / (w2 * math.sqrt(w2 + (s - s0) ** 2))

    return coef * (prim(L) - prim(0.0))


def ring_flux_sum(mu, n, R, length):
    """``sum 2 pi mu R^2 / (R^2 + z^2)^1.5`` over a centred straight line of dipoles.

    This is the exact loop integral of the dipole potentials around a circle
    of radius ``R`` in the mid-plane, for dipoles at cell centres.
    """
    N = int(round(n * length))
    z = (np.arange(N) + 0.5) * (length / N) - 0.5 * length
    terms = 2.0 * math.pi * mu * R**2 / (R**2 + z**2) ** 1.5
    return math.fsum(terms)


def extrapolated_line_flux(mu, n, R, lengths):
    """Richardson extrapolation of :func:`ring_flux_sum` in ``1 / L^2``.

    Returns the extrapolated limit and the individual sums.
    """
    sums = [ring_flux_sum(mu, n, R, L) for L in lengths]
    # S(L) = S_inf - c / L^2 + O(1/L^4).
    L1, L2 = lengths[-2], lengths[-1]
    S1, S2 = sums[-2], sums[-1]
    limit = (S2 * L2**2 - S1 * L1**2) / (L2**2 - L1**2)
    return limit, sums


def brute_product_state(n, a, b):
    psi = np.array([1.0 + 0j])
    for _ in range(n):
        psi = np.kron(psi, np.array([a, b], dtype=complex))
    return psi


def direct_overlap(K, p, delta):
    """mpmath sum over ``m`` of the binomially weighted phase factors."""
    with mp.workdps(30):
        p = mp.mpf(p)
        q = 1 - p
        s = mp.fsum(
            mp.binomial(K, m) * p**m * q ** (K - m) * mp.expj((K - 2 * m) * mp.mpf(delta))
            for m in range(K + 1)
        )
        return complex(s)
