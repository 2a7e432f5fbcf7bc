import math

import numpy as np
import pytest

from abdipole.electromagnetics import line_phase
from abdipole.errors import AdmissibilityError, SingularFieldError, ValidationError
from abdipole.geometry import circle_curve, discretize_filament, make_flyby_trajectory, straight_curve
from abdipole.shield import (
    ShieldSpec,
    cancellation_residual,
    check_admissibility,
    electron_speed_fraction,
    feasibility_report,
    make_shield_spec,
    particle_phase_rate,
    shield_current_element,
    shield_phase,
    shield_phase_rate,
    shielding_feasibility,
)


@pytest.fixture(scope="module")
def chain():
    return discretize_filament(straight_curve(400.0), 10.0, mu=0.1)


def test_current_element_examples():
    assert shield_current_element(1.0, [0, 0, 0], [1.0, 2, 3], [0, 0, 0.1]) == 0.0
    assert shield_current_element(1.0, [0.3, 1, 0], [0, 0, 2.0], [0, 0, 0.1]) == 0.0
    d, v, dz = 2.5, 0.7, 0.01
    got = shield_current_element(1.0, [0, v, 0], [d, 0, 0], [0, 0, dz])
    assert got == pytest.approx(-dz * v / (4 * math.pi * d**2), rel=1e-14)
    with pytest.raises(SingularFieldError):
        shield_current_element(1.0, [1.0, 0, 0], [0, 0, 0], [0, 0, 1.0])


def test_spec_validation(chain):
    with pytest.raises(ValidationError):
        ShieldSpec(0.0, chain, 1.0)
    ring = discretize_filament(circle_curve(1.0, 2048), 50.0)
    with pytest.raises(AdmissibilityError) as err:
        make_shield_spec(ring, 0.2)
    assert err.value.ratio_name == "rho/K"


def test_flux_from_loop(chain):
    spec = make_shield_spec(chain, 0.5)
    assert spec.Phi == pytest.approx(4 * math.pi * chain.mu * chain.n, rel=1e-4)
    assert spec.element_length == pytest.approx(0.1)


def test_admissibility_names_ratio(chain):
    spec = make_shield_spec(chain, 0.5)
    assert check_admissibility(spec, [[20.0, 0, 0]]) == pytest.approx(40.0, rel=1e-4)
    with pytest.raises(AdmissibilityError) as err:
        shield_phase_rate(spec, [5.0, 0, 0], [0, 1.0, 0])
    assert err.value.ratio_name == "d/rho"
    assert err.value.value == pytest.approx(10.0, rel=1e-4)
    assert err.value.limit == 20.0


def test_rates_at_rest_and_sign(chain):
    spec = make_shield_spec(chain, 0.2)
    assert shield_phase_rate(spec, [0, -10.0, 0], [0, 0, 0]) == 0.0
    x, v = np.array([0.0, -10.0, 0]), np.array([1.0, 0, 0])
    s = shield_phase_rate(spec, x, v)
    p = particle_phase_rate(chain, x, v)[0]
    assert p != 0 and np.sign(s) == -np.sign(p)


def test_filament_sum_matches_scaled_potential(chain):
    # As rho -> 0 the perimeter average collapses onto the chain itself.
    spec = make_shield_spec(chain, 1e-3)
    x = np.array([[0.0, -10.0, 1.0], [3.0, 7.0, -2.0], [-6.0, 8.0, 0.5]])
    v = np.array([[1.0, 0, 0], [0.2, -0.4, 1.0], [0.0, 1.0, 0.3]])
    shield = shield_phase_rate(spec, x, v, 1.3)
    scaled = -particle_phase_rate(chain, x, v, 1.3) * spec.Phi / (4 * math.pi * chain.mu * chain.n)
    assert np.allclose(shield, scaled, rtol=1e-6)


def test_zero_moment_residual_is_zero():
    zero = discretize_filament(straight_curve(200.0), 5.0, mu=0.0)
    spec = ShieldSpec(0.2, zero, 0.0)
    traj = make_flyby_trajectory(10.0, 1.0, "right", 40.0, 41)
    assert cancellation_residual(spec, traj) == 0.0


def test_residual_reversal_and_scaling(chain):
    traj = make_flyby_trajectory(40.0, 1.0, "right", 160.0, 81)
    rhos = (2.0, 1.4, 1.0)
    resid = [cancellation_residual(make_shield_spec(chain, rho), traj) for rho in rhos]
    assert resid[0] > resid[1] > resid[2]
    spec = make_shield_spec(chain, 1.4)
    assert cancellation_residual(spec, traj.reversed()) == pytest.approx(resid[1], rel=1e-12)
    assert np.polyfit(np.log(rhos), np.log(resid), 1)[0] >= 1.0


def test_flux_loop_clears_discreteness(chain):
    # A loop of radius rho < 8 spacings would sit in the dipoles' near-field ripple.
    tight = make_shield_spec(chain, 0.1)
    assert tight.Phi == pytest.approx(make_shield_spec(chain, 0.8).Phi, rel=1e-12)


def test_total_shield_phase_cancels_line_phase(chain):
    spec = make_shield_spec(chain, 0.4)
    traj = make_flyby_trajectory(20.0, 1.0, "left", 80.0, 81)
    total = shield_phase(spec, traj)
    particle = line_phase(chain, traj.positions, traj.g)
    assert abs(total + particle) <= cancellation_residual(spec, traj) * abs(particle)


def test_feasibility_numbers():
    fast = shielding_feasibility(9.2, 1e-6, 0.77)
    assert 550e9 <= fast["cutoff_hz"] <= 700e9
    assert fast["cutoff_hz"] == pytest.approx(3.5 * 1.380649e-23 * 9.2 / 6.62607015e-34)
    assert fast["tau_s"] == pytest.approx(1e-6 / (0.77 * 299792458.0))
    assert fast["characteristic_hz"] >= 1e14 and not fast["shield_effective"]
    with pytest.raises(ValidationError):
        shielding_feasibility(9.2, 1e-6, 1.2)


def test_feasibility_report_flags_speed_tension():
    beta = electron_speed_fraction(150e3)
    assert beta == pytest.approx(0.63432, abs=1e-5)
    rep = feasibility_report(9.2, 1e-6, 150e3, 0.77)
    assert rep.tension == pytest.approx((0.77 - beta) / beta)
    assert rep.verdict_agrees and not rep.computed["shield_effective"]
    slow = feasibility_report(9.2, 1e-6, 1.0)
    assert slow.computed["shield_effective"] and slow.tension is None
    assert slow.crossover_ev == pytest.approx(1.2797, rel=1e-3)
    assert feasibility_report(9.2, 1e-6, 1.01 * slow.crossover_ev).computed["shield_effective"] is False
    assert set(slow.as_dict()) >= {"computed", "quoted", "speed_tension", "crossover_ev"}
