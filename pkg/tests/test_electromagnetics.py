import math

import numpy as np
import pytest

from abdipole.errors import SingularFieldError, ValidationError
from abdipole.electromagnetics import (
    chain_vector_potential,
    dipole_vector_potential,
    field_sample,
    line_phase,
    loop_phase,
    particle_field,
)
from abdipole.geometry import DipoleChain, discretize_filament, helix_curve, straight_curve

import oracles


def circle(radius, center=(0.0, 0.0, 0.0), points=64, turns=1.0, z=0.0):
    a = 2 * math.pi * np.arange(int(points * turns) + 1) / points
    c = np.asarray(center, dtype=float)
    return np.column_stack([c[0] + radius * np.cos(a), c[1] + radius * np.sin(a), np.full(len(a), c[2] + z)])


@pytest.fixture(scope="module")
def long_chain():
    return discretize_filament(straight_curve(400.0), 10.0, mu=0.1)


@pytest.fixture(scope="module")
def very_long_chain():
    # Return flux near the middle scales as 1/L^2; L = 8000 keeps it below 1e-6.
    return discretize_filament(straight_curve(8000.0), 2.0, mu=0.5)


def test_particle_field_examples():
    assert np.array_equal(particle_field([0, 0, 0], [0, 0, 0], 1.0, [1, 2, 3]), np.zeros(3))
    assert np.allclose(particle_field([0, 0, 0], [1, 0, 0], 1.0, [4, 0, 0]), 0.0)
    d = 1.7
    h = particle_field([0.0, 0, 0], [1.0, 0, 0], 1.0, [0.0, d, 0])
    assert np.allclose(h, [0.0, 0.0, 1.0 / d**2], rtol=0, atol=1e-15)
    with pytest.raises(SingularFieldError):
        particle_field([1.0, 1, 1], [1.0, 0, 0], 1.0, [1.0, 1, 1])


def test_field_parity():
    x = np.array([0.3, -0.2, 0.5])
    v = np.array([0.1, 1.2, -0.4])
    p = np.array([1.0, 0.7, -0.3])
    assert np.allclose(particle_field(-x, -v, 1.0, -p), particle_field(x, v, 1.0, p))


def test_field_sample_projection():
    s = field_sample([0.0, 0, 0], [1.0, 0.2, 0], 0.7, [0.3, 1.0, -0.5], [0.6, 0.0, 0.8])
    assert abs(s.h_z - s.h @ np.array([0.6, 0.0, 0.8])) < 1e-12


def test_dipole_potential_examples():
    mu, d = 0.8, 2.5
    assert np.allclose(dipole_vector_potential([0, 0, mu], [d, 0, 0]), [0, mu / d**2, 0], atol=1e-16)
    assert np.allclose(dipole_vector_potential([1.0, 2, 3], [2.0, 4, 6]), 0.0)
    R = np.array([0.4, -1.1, 0.3])
    m = np.array([0.2, 0.5, -0.9])
    assert np.allclose(dipole_vector_potential(m, -R), -dipole_vector_potential(m, R))
    with pytest.raises(SingularFieldError):
        dipole_vector_potential(m, [0.0, 0, 0])


def test_chain_potential_matches_brute_force():
    chain = discretize_filament(helix_curve(1.0, 0.4, 1.5, 200), 20.0, mu=0.3)
    pts = np.array([[2.0, 0.1, 0.0], [-0.2, 0.3, 1.5], [0.0, 0.0, 0.1]])
    fast = chain_vector_potential(chain, pts)
    for p, a in zip(pts, fast):
        ref = oracles.brute_vector_potential(chain.positions, chain.tangents, chain.mu, p)
        assert np.allclose(a, ref, rtol=1e-12, atol=1e-15)


def test_chain_potential_zero_moment_and_cutoff():
    chain = discretize_filament(straight_curve(2.0), 10.0, mu=0.0)
    assert np.array_equal(chain_vector_potential(chain, [1.0, 0, 0]), np.zeros(3))
    with pytest.raises(SingularFieldError):
        chain_vector_potential(chain, chain.positions[3] + [1e-9, 0, 0])


def test_superposition_over_subchains():
    a = discretize_filament(straight_curve(2.0, (0, 0, -1.0)), 20.0, mu=0.2)
    b = discretize_filament(helix_curve(0.5, 0.2, 1, 64, (0, 0, 1.0)), 20.0, mu=0.2)
    b = DipoleChain(b.positions, b.tangents, 0.2, a.n)
    ab = DipoleChain.concatenate([a, b])
    p = np.array([[1.3, -0.4, 0.2], [0.0, 2.0, 0.0]])
    total = chain_vector_potential(ab, p)
    split = chain_vector_potential(a, p) + chain_vector_potential(b, p)
    assert np.allclose(total, split, rtol=1e-14, atol=1e-17)


def test_far_field_decays_inverse_square():
    chain = discretize_filament(straight_curve(1.0), 50.0, mu=1.0)
    dist = np.array([50.0, 100.0, 200.0, 400.0])
    pts = np.column_stack([dist, np.zeros(4), np.zeros(4)])
    mag = np.linalg.norm(chain_vector_potential(chain, pts), axis=1)
    slope = np.polyfit(np.log(dist), np.log(mag), 1)[0]
    assert slope == pytest.approx(-2.0, abs=1e-3)


def test_long_chain_potential_is_azimuthal(long_chain):
    rho = 0.4
    phis = np.linspace(0, 2 * math.pi, 7, endpoint=False)
    pts = np.column_stack([rho * np.cos(phis), rho * np.sin(phis), np.zeros(7)])
    A = chain_vector_potential(long_chain, pts)
    az = np.column_stack([-np.sin(phis), np.cos(phis), np.zeros(7)])
    expected = 2.0 * long_chain.mu * long_chain.n / rho
    assert np.allclose(np.einsum("ij,ij->i", A, az), expected, rtol=1e-5)
    assert np.allclose(A - np.einsum("ij,ij->i", A, az)[:, None] * az, 0.0, atol=1e-12)


def test_line_phase_segment_oracle():
    chain = discretize_filament(straight_curve(1.0, (0.2, -0.1, 0.0), (0.3, 0.4, 0.866)), 30.0, mu=0.5)
    a, b = np.array([-2.0, 0.8, 0.3]), np.array([3.0, 1.1, -0.2])
    ref = math.fsum(
        oracles.segment_potential_integral(chain.mu * t, p, a, b)
        for p, t in zip(chain.positions, chain.tangents)
    )
    g = 1.7
    assert line_phase(chain, np.array([a, b]), g) == pytest.approx(g * ref, abs=1e-11)


def test_line_phase_trivial_cases(long_chain):
    pt = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert line_phase(long_chain, pt, 1.0) == 0.0
    path = np.array([[-3.0, 1.0, 0.0], [0.0, 1.5, 0.1], [3.0, 1.0, 0.0]])
    fwd = line_phase(long_chain, path, 1.0)
    assert line_phase(long_chain, path[::-1], 1.0) == pytest.approx(-fwd, abs=1e-9)


def test_homotopic_paths_agree(very_long_chain):
    long_chain = very_long_chain
    # Both paths lie in the plane y = 3: far enough for the discreteness ripple
    # to vanish, and parallel to the axis so the return flux between them does too.
    p1 = np.array([[-6.0, 3.0, 0.0], [6.0, 3.0, 0.0]])
    p2 = np.array([[-6.0, 3.0, 0.0], [-2.0, 3.0, 4.0], [3.0, 3.0, -2.0], [6.0, 3.0, 0.0]])
    assert line_phase(long_chain, p1, 1.0) == pytest.approx(line_phase(long_chain, p2, 1.0), abs=1e-6)


def test_loop_phase_linking(very_long_chain):
    long_chain = very_long_chain
    single = loop_phase(long_chain, circle(3.0), 1.0)
    outside = loop_phase(long_chain, circle(1.0, center=(4.0, 0.0, 0.0)), 1.0)
    double = loop_phase(long_chain, circle(3.0, turns=2.0)[:-1], 1.0)
    assert abs(outside) < 1e-6
    assert double == pytest.approx(2.0 * single, abs=1e-6)
    assert single == pytest.approx(4 * math.pi * long_chain.mu * long_chain.n, rel=1e-3)


def test_unit_flux_constant_from_extrapolation():
    mu, n, R = 0.05, 20.0, 2.0
    limit, _ = oracles.extrapolated_line_flux(mu, n, R, [500.0, 1000.0, 2000.0])
    assert limit / (mu * n) == pytest.approx(4 * math.pi, rel=1e-8)


def test_contour_shape_invariance():
    chain = discretize_filament(straight_curve(200.0), 5.0, mu=0.2)
    rng = np.random.default_rng(7)
    values = []
    a = 2 * math.pi * np.arange(96) / 96
    for _ in range(20):
        k = rng.integers(1, 4, 3)
        c = rng.uniform(-0.2, 0.2, 3)
        r = 1.0 + c[0] * np.cos(k[0] * a) + c[1] * np.sin(k[1] * a)
        z = 0.5 * c[2] * np.sin(k[2] * a)
        values.append(loop_phase(chain, np.column_stack([r * np.cos(a), r * np.sin(a), z]), 1.0))
    values = np.array(values)
    assert np.ptp(values) / np.mean(values) < 1e-5


def test_line_phase_rejects_bad_path(long_chain):
    with pytest.raises(ValidationError):
        line_phase(long_chain, np.zeros((3, 2)), 1.0)
    with pytest.raises(SingularFieldError):
        line_phase(long_chain, np.array([[0.0, 0, -1.0], [0.0, 0, 1.0]]), 1.0)
    with pytest.raises(SingularFieldError):
        chain_vector_potential(long_chain, long_chain.positions[:2])


def test_line_phase_certificate(long_chain):
    path = np.array([[-5.0, 0.5, 0.0], [5.0, 0.5, 0.0]])
    value, cert = line_phase(long_chain, path, 1.0, full_output=True)
    assert cert.value == value
    assert cert.certificate <= 1e-8
    assert cert.panels > 0
