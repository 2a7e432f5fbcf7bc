"""Compiled inner loops.  Summation order is fixed (dipole index ascending)."""

import numpy as np
from numba import njit


@njit(cache=True)
def vector_potential_sum(points, positions, tangents):
    """Return ``(A / mu, min_r2)`` for unit-moment dipoles along ``tangents``."""
    m = points.shape[0]
    n = positions.shape[0]
    out = np.zeros((m, 3))
    min_r2 = np.empty(m)
    for i in range(m):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        ax = 0.0
        ay = 0.0
        az = 0.0
        best = np.inf
        for k in range(n):
            rx = px - positions[k, 0]
            ry = py - positions[k, 1]
            rz = pz - positions[k, 2]
            r2 = rx * rx + ry * ry + rz * rz
            if r2 < best:
                best = r2
            if r2 == 0.0:
                # Coincident point; the caller rejects it through min_r2.
                continue
            w = 1.0 / (r2 * np.sqrt(r2))
            tx = tangents[k, 0]
            ty = tangents[k, 1]
            tz = tangents[k, 2]
            ax += (ty * rz - tz * ry) * w
            ay += (tz * rx - tx * rz) * w
            az += (tx * ry - ty * rx) * w
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az
        min_r2[i] = best
    return out, min_r2


@njit(cache=True)
def min_segment_distance2(starts, ends, positions):
    """Smallest squared distance between any segment and any point."""
    best = np.inf
    for i in range(starts.shape[0]):
        ax = starts[i, 0]
        ay = starts[i, 1]
        az = starts[i, 2]
        dx = ends[i, 0] - ax
        dy = ends[i, 1] - ay
        dz = ends[i, 2] - az
        dd = dx * dx + dy * dy + dz * dz
        for k in range(positions.shape[0]):
            px = positions[k, 0] - ax
            py = positions[k, 1] - ay
            pz = positions[k, 2] - az
            u = 0.0
            if dd > 0.0:
                u = (px * dx + py * dy + pz * dz) / dd
                if u < 0.0:
                    u = 0.0
                elif u > 1.0:
                    u = 1.0
            rx = px - u * dx
            ry = py - u * dy
            rz = pz - u * dz
            r2 = rx * rx + ry * ry + rz * rz
            if r2 < best:
                best = r2
    return best
