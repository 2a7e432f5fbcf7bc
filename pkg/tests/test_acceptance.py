"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL criterion N: ...`` line with the
measured numbers, then asserts at the stated tolerance.
"""

import cmath
import math
import time
from pathlib import Path

import numpy as np
import pytest

from abdipole.electromagnetics import line_phase, loop_phase
from abdipole.geometry import (
    DipoleChain,
    discretize_filament,
    make_bypass_trajectory,
    make_flyby_trajectory,
    straight_curve,
)
from abdipole.interference import fringe_visibility, two_path_sigma
from abdipole.overlap import (
    SectionSpec,
    binomial_state_check,
    build_section_specs,
    exact_section_overlap,
    meanfield_section_overlap,
    solenoid_overlap,
)
from abdipole.runner import random_theorem_cases, run
from abdipole.scenario import parse_scenario
from abdipole.shield import cancellation_residual, feasibility_report, make_shield_spec
from abdipole.spin import DipoleParams, DipoleState, chain_phase, oracle_comparison

import oracles

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
Z = np.array([0.0, 0.0, 1.0])


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_criterion_01_phase_theorem(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    kinds = []
    for kind, chain, traj in random_theorem_cases(20261014, count=10, dipoles=10_000):
        cp = chain_phase(chain, traj)
        lp = line_phase(chain, traj.positions, traj.g)
        worst = max(worst, abs(cp - lp) / (1e-6 * abs(lp) + 1e-9))
        kinds.append(kind)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed <= 120.0 and set(kinds) == {"straight", "arc", "helix"}
    verdict(1, ok, f"max |chain-line| / (1e-6|line|+1e-9) = {worst:.3g} over 10 cases, {elapsed:.1f} s")


def test_criterion_02_loop_phase(verdict):
    t0 = time.perf_counter()
    b = 1.0
    chain = discretize_filament(straight_curve(1000.0 * b * 2), 10.0, mu=0.1)
    right = make_bypass_trajectory(b, 3.0, 1.0, "right")
    left = make_bypass_trajectory(b, 3.0, 1.0, "left")
    diff = chain_phase(chain, right) - chain_phase(chain, left)
    contour = np.vstack([right.positions, left.positions[::-1][1:]])
    loop = loop_phase(chain, contour, 1.0)
    rel = abs(diff - loop) / abs(loop)
    # mu n = 1, g = 1 on a circle: compare with the extrapolated oracle constant.
    a = 2 * math.pi * np.arange(128) / 128
    unit = loop_phase(chain, np.column_stack([b * np.cos(a), b * np.sin(a), np.zeros(128)]), 1.0)
    constant, _ = oracles.extrapolated_line_flux(0.05, 20.0, 2.0, [500.0, 1000.0, 2000.0])
    constant /= 0.05 * 20.0
    unit_rel = abs(unit - constant) / constant
    elapsed = time.perf_counter() - t0
    ok = rel <= 1e-4 and unit_rel <= 1e-3 and abs(constant - 4 * math.pi) < 1e-8 and elapsed <= 60.0
    verdict(2, ok, f"right-left vs loop rel {rel:.2e}; unit-flux loop {unit:.9f} vs oracle "
                   f"{constant:.9f} (rel {unit_rel:.2e}); {elapsed:.1f} s")


def test_criterion_03_overlap_asymptotics(verdict):
    t0 = time.perf_counter()
    report = run(parse_scenario((SCENARIOS / "overlap_sweep.yaml").read_text()))
    rows = report.rows["overlap"]
    N = np.array([r["N"] for r in rows], dtype=float)
    deficit = np.array([r["deficit"] for r in rows])
    slope = np.polyfit(np.log(N), np.log(deficit), 1)[0]
    last = rows[-1]
    gap = abs(last["arg_overlap"] - last["loop_phase"])
    elapsed = time.perf_counter() - t0
    ok = (list(N) == [1e2, 1e3, 1e4, 1e5] and abs(slope + 1) <= 0.1 and gap <= 1e-3
          and elapsed <= 120.0 and report.exit_code == 0)
    verdict(3, ok, f"deficits {', '.join(f'{d:.3e}' for d in deficit)}; slope {slope:.4f}; "
                   f"|arg - loop| at N=1e5 = {gap:.2e}; {elapsed:.1f} s")


def _random_spec(rng, K, delta):
    p = rng.uniform()
    a1, a2 = rng.uniform(0, 2 * math.pi, 2)
    return SectionSpec(K, math.sqrt(p) * cmath.exp(1j * a1), math.sqrt(1 - p) * cmath.exp(1j * a2),
                       np.zeros(3), Z, delta, 0.0, warn_threshold=math.inf)


def test_criterion_04_exact_vs_meanfield(verdict):
    rng = np.random.default_rng(4)
    direct_err = 0.0
    for _ in range(300):
        K = int(rng.integers(1, 1001))
        s = _random_spec(rng, K, rng.uniform(-0.05, 0.05))
        direct_err = max(direct_err, abs(exact_section_overlap(s, direct=True).value
                                         - exact_section_overlap(s).value))
    fitted = []
    for seed in (1, 2, 3):
        r = np.random.default_rng(seed)
        ratios = []
        for _ in range(1000):
            K = int(r.integers(1, 10**5))
            delta = r.uniform(-1, 1) / K
            s = _random_spec(r, K, delta)
            gap = abs(exact_section_overlap(s).value - meanfield_section_overlap(s).value)
            ratios.append(gap / (K * delta**2))
        fitted.append(max(ratios))
    spread = (max(fitted) - min(fitted)) / np.mean(fitted)
    ok = direct_err <= 1e-12 and max(fitted) <= 0.5 + 1e-9 and spread <= 0.1
    verdict(4, ok, f"direct vs closed max {direct_err:.2e}; fitted C per seed "
                   f"{', '.join(f'{c:.4f}' for c in fitted)} (spread {spread:.3f}, bound 2pq <= 1/2)")


def test_criterion_05_binomial(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for n in range(1, 11):
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        a, b = z[:2] / np.linalg.norm(z[:2])
        a1, b1 = z[2:] / np.linalg.norm(z[2:])
        rec = binomial_state_check(n, a, b, a1, b1)
        worst = max(worst, rec.max_deviation, rec.overlap_deviation)
    elapsed = time.perf_counter() - t0
    verdict(5, worst < 1e-12 and elapsed <= 10.0, f"max deviation {worst:.2e} for n <= 10, {elapsed:.2f} s")


def test_criterion_06_adiabatic_oracle(verdict):
    t0 = time.perf_counter()
    traj = make_flyby_trajectory(1.0, 1.0, "right", 5000.0, 3)
    slow = oracle_comparison(DipoleState(0.6, 0.8), DipoleParams(1.0, 1e-3), traj, np.zeros(3), Z,
                             samples=200001)
    t_single = time.perf_counter() - t0
    sweep = make_flyby_trajectory(1.0, 1.0, "right", 50.0, 3)
    eps = (0.3, 1.0, 3.0, 10.0, 30.0)
    deficits = [oracle_comparison(DipoleState(0.6, 0.8), DipoleParams(e, 0.05), sweep, np.zeros(3),
                                  [0.0, 0.6, 0.8], samples=40001).deficit for e in eps]
    monotone = all(b <= a + 1e-12 for a, b in zip(deficits, deficits[1:]))
    ok = slow.deficit <= 1e-4 and monotone and t_single <= 60.0
    verdict(6, ok, f"deficit {slow.deficit:.2e} at mu h/eps=1e-3, eps tau=1e4 ({slow.substeps} substeps, "
                   f"{t_single:.1f} s); eps sweep {eps}: {', '.join(f'{d:.2e}' for d in deficits)}")


def test_criterion_07_interference(verdict):
    phis = np.linspace(-2 * math.pi, 2 * math.pi, 1000)
    f = 0.8 - 0.3j
    law = np.max(np.abs(two_path_sigma(f, -f, phis) / (4 * abs(f) ** 2) - np.sin(phis / 2) ** 2))
    chain = discretize_filament(straight_curve(40.0), 10.0, mu=1.0 / 400)
    chain = DipoleChain(chain.positions, chain.tangents, chain.mu, chain.n,
                        tuple((a, a + 4) for a in range(0, 400, 4)))
    left = make_bypass_trajectory(1.0, 3.0, 1.0, "left", samples_per_leg=16)
    right = make_bypass_trajectory(1.0, 3.0, 1.0, "right", samples_per_leg=16)
    ov = solenoid_overlap(chain, build_section_specs(chain, math.sqrt(0.8), math.sqrt(0.2), left, right))
    grid = np.linspace(0, 2 * math.pi, 90, endpoint=False)
    vis = fringe_visibility(1.0, -1.0, ov, grid)
    vis_err = abs(vis - ov.magnitude)
    ok = law <= 1e-12 and vis_err <= 1e-6
    verdict(7, ok, f"max |sigma/(4|f|^2) - sin^2(phi/2)| = {law:.2e} on 1000 points; visibility "
                   f"{vis:.9f} vs |overlap| {ov.magnitude:.9f} (diff {vis_err:.1e})")


def test_criterion_08_shield(verdict):
    t0 = time.perf_counter()
    d = 200.0
    ratios = (20.0, 50.0, 100.0, 200.0)
    resid = []
    for r in ratios:
        rho = d / r
        chain = discretize_filament(straight_curve(2000.0), 25.0 / rho, mu=rho / 25.0)
        spec = make_shield_spec(chain, rho)
        traj = make_flyby_trajectory(d, 1.0, "right", 4 * d, 161)
        resid.append(cancellation_residual(spec, traj))
    slope = np.polyfit(np.log(1 / np.array(ratios)), np.log(resid), 1)[0]
    elapsed = time.perf_counter() - t0
    ok = resid[2] <= 1e-2 and slope >= 1.0 and all(b < a for a, b in zip(resid, resid[1:])) and elapsed <= 60
    verdict(8, ok, f"residuals at d/rho {ratios}: {', '.join(f'{x:.2e}' for x in resid)}; "
                   f"slope in rho/d {slope:.2f}; {elapsed:.1f} s")


def test_criterion_09_feasibility(verdict):
    fast = feasibility_report(9.2, 1e-6, 150e3, quoted_speed_fraction=0.77)
    slow = feasibility_report(9.2, 1e-6, 1.0)
    cutoff = fast.computed["cutoff_hz"]
    ok = (550e9 <= cutoff <= 700e9
          and fast.computed["characteristic_hz"] >= 1e14 and fast.quoted["characteristic_hz"] >= 1e14
          and not fast.computed["shield_effective"] and not fast.quoted["shield_effective"]
          and slow.computed["shield_effective"] and fast.tension is not None and fast.tension > 0.1)
    verdict(9, ok, f"cutoff {cutoff / 1e9:.2f} GHz; 150 keV: beta {fast.computed['speed_fraction_c']:.5f} "
                   f"-> {fast.computed['characteristic_hz']:.3e} Hz, quoted 0.77c -> "
                   f"{fast.quoted['characteristic_hz']:.3e} Hz (tension {fast.tension:.3f}), ineffective; "
                   f"1 eV -> {slow.computed['characteristic_hz']:.3e} Hz, effective; "
                   f"crossover {slow.crossover_ev:.4f} eV")


def test_criterion_10_determinism(verdict, tmp_path):
    text = (SCENARIOS / "overlap_sweep.yaml").read_text()
    text = text.replace("analyses: [overlap, interference]", "analyses: [phase_theorem, overlap, interference, feasibility]")
    text = text.replace("stop: 100000", "stop: 10000")
    cfg = parse_scenario(text)
    outputs = []
    for workers in (1, 4, 16):
        out = tmp_path / f"w{workers}"
        run(cfg, out, workers=workers)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "timing.json"})
    same = outputs[0] == outputs[1] == outputs[2]
    verdict(10, same and len(outputs[0]) == 5,
            f"{len(outputs[0])} output files byte-identical across 1, 4, 16 workers: {same}")
