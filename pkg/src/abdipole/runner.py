"""Scenario execution and bit-stable reporting.

Every sweep point is evaluated independently (optionally in worker
processes) and results are merged in sweep-index order, so outputs do not
depend on the worker count.  Floats are written with 17 significant digits.
Wall-clock times go to ``timing.json``, which is the only output that varies
between runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .electromagnetics import line_phase, loop_phase
from .errors import ABError, ValidationError
from .geometry import (
    arc_curve,
    discretize_filament,
    distance_to_path,
    helix_curve,
    straight_curve,
    straight_trajectory,
)
from .interference import FORWARD_EXCLUSION, decohered_sigma, default_amplitudes
from .overlap import build_section_specs, solenoid_overlap
from .scenario import (
    SCHEMA_VERSION,
    build_chain,
    build_trajectory,
    partner_trajectory,
    state_amplitudes,
    sweep_values,
    point_config,
)
from .shield import cancellation_residual, feasibility_report, make_shield_spec, shield_phase
from .spin import (
    DipoleParams,
    DipoleState,
    adiabaticity_report,
    chain_phase,
    oracle_comparison,
)

__all__ = [
    "RunReport",
    "run",
    "evaluate_point",
    "random_theorem_cases",
    "format_float",
    "dumps_json",
    "atomic_write",
    "CSV_COLUMNS",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_CONVERGENCE",
    "EXIT_IO",
]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

CSV_COLUMNS = {
    "phase_theorem": ("scenario_id", "chain_phase", "line_phase", "abs_err", "rel_err",
                      "quadrature_cert", "sweep_index", "setting"),
    "overlap": ("scenario_id", "N", "abs_overlap", "arg_overlap", "loop_phase", "deficit",
                "meanfield_arg", "sections", "sweep_index", "setting"),
    "interference": ("setting", "phi", "theta", "sigma", "visibility"),
    "shield": ("scenario_id", "rho", "d_over_rho", "residual", "shield_phase", "particle_phase",
               "sweep_index", "setting"),
    "feasibility": ("scenario_id", "label", "kinetic_ev", "speed_fraction_c",
                    "quoted_speed_fraction", "tau_s", "characteristic_hz", "cutoff_hz",
                    "shield_effective", "quoted_shield_effective", "speed_tension",
                    "sweep_index", "setting"),
}


# -- serialisation ----------------------------------------------------------------------


def format_float(x):
    """17-significant-digit text; non-finite values as ``inf``, ``-inf``, ``nan``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, float):
        out.append(format_float(obj) if math.isfinite(obj) else "null")
    else:
        out.append(json.dumps(obj))


def dumps_json(obj, indent=2):
    """Deterministic JSON with 17-digit floats; non-finite floats become ``null``."""
    out = []
    _emit(_plain(obj), indent, 0, out)
    out.append("\n")
    return "".join(out)


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def dumps_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- randomized theorem cases ----------------------------------------------------------


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_theorem_cases(seed, count=10, dipoles=10_000, clearance=20.0):
    """Random ``(kind, chain, trajectory)`` triples for the phase theorem.

    Kinds cycle through straight, arc and helix chains of ``dipoles``
    dipoles.  Each trajectory is a straight flyby whose distance to every
    dipole is at least ``clearance`` dipole spacings.
    """
    rng = np.random.default_rng(seed)
    kinds = ("straight", "arc", "helix")
    cases = []
    for i in range(count):
        kind = kinds[i % 3]
        center = rng.uniform(-1.0, 1.0, 3)
        if kind == "straight":
            curve = straight_curve(rng.uniform(5.0, 20.0), center, _unit(rng))
        elif kind == "arc":
            curve = arc_curve(rng.uniform(2.0, 5.0), rng.uniform(0.5, 1.5) * math.pi, 512,
                              center, _unit(rng), rng.uniform(0.0, 2 * math.pi))
        else:
            curve = helix_curve(rng.uniform(0.5, 1.5), rng.uniform(0.2, 1.0),
                                rng.uniform(2.0, 4.0), 2048, center, _unit(rng))
        chain = discretize_filament(curve, dipoles / curve.length, mu=1e-3)
        centroid = chain.positions.mean(axis=0)
        extent = float(np.max(np.linalg.norm(chain.positions - centroid, axis=1)))
        need = clearance * chain.spacing
        reach = extent + need
        for _ in range(1000):
            u = _unit(rng)
            w = np.cross(u, _unit(rng))
            w /= np.linalg.norm(w)
            start = centroid + reach * rng.uniform(0.2, 1.5) * w - 4.0 * reach * u
            traj = straight_trajectory(start, u, (0.0, 8.0 * reach), 3)
            d = float(np.min(distance_to_path(traj, chain.positions)))
            if d >= need:
                break
        else:
            raise ValidationError(f"no flyby found with clearance {need:.3g} for case {i}")
        cases.append((kind, chain, traj))
    return cases


# -- per-point evaluation ---------------------------------------------------------------


def _tol(data, key, scale):
    return data["tolerances"][key] * scale


def _phase_theorem(data, scale):
    chain = build_chain(data)
    traj = build_trajectory(data)
    return [_theorem_row(data["id"], chain, traj, data, scale)]


def _theorem_row(sid, chain, traj, data, scale):
    cp, cert = chain_phase(chain, traj, tol=_tol(data, "quadrature", scale), full_output=True)
    lp, lcert = line_phase(chain, traj.positions, traj.g, tol=_tol(data, "line", scale),
                           full_output=True)
    abs_err = abs(cp - lp)
    rel_err = abs_err / abs(lp) if lp != 0.0 else math.inf
    bound = data["tolerances"]["theorem"] * abs(lp) + 1e-9
    return {
        "scenario_id": sid,
        "chain_phase": cp,
        "line_phase": lp,
        "abs_err": abs_err,
        "rel_err": rel_err,
        "quadrature_cert": max(cert.certificate, lcert.certificate),
        "passed": abs_err <= bound,
        "_certificates": {
            "chain_phase": {"previous": cert.previous, "last": cert.value},
            "line_phase": {"coarse": lcert.coarse, "fine": lcert.fine},
        },
    }


def _loop_contour(left, right):
    return np.vstack([right.positions, left.positions[::-1][1:]])


def _two_path(data, scale):
    left, right = partner_trajectory(data)
    chain = build_chain(data)
    c1, c2 = state_amplitudes(data)
    specs = build_section_specs(chain, c1, c2, left, right, tol=_tol(data, "quadrature", scale),
                                warn_threshold=data["tolerances"]["phase_warning"])
    exact = solenoid_overlap(chain, specs, "exact")
    mf = solenoid_overlap(chain, specs, "meanfield")
    eff = build_chain(data, effective=True)
    phi, cert = loop_phase(eff, _loop_contour(left, right), right.g, tol=_tol(data, "line", scale),
                           full_output=True)
    return chain, exact, mf, phi, cert


def _overlap_row(data, shared):
    chain, exact, mf, phi, cert = shared
    return {
        "scenario_id": data["id"],
        "N": len(chain),
        "abs_overlap": exact.magnitude,
        "arg_overlap": exact.phase,
        "loop_phase": phi,
        "deficit": exact.magnitude_deficit,
        "meanfield_arg": mf.phase,
        "sections": len(chain.sections),
        "arg_minus_loop": exact.phase - phi,
        "passed": abs(exact.phase - phi) <= data["tolerances"]["overlap"],
        "_certificates": {"loop_phase": {"coarse": cert.coarse, "fine": cert.fine}},
    }


def _interference_rows(data, shared, setting):
    _, exact, _, phi, _ = shared
    opts = data["interference"]
    theta = np.linspace(-math.pi, math.pi, opts["theta_points"])
    fR, fL, mask = default_amplitudes(theta, opts.get("theta_min", FORWARD_EXCLUSION))
    z = exact.value
    sigma = decohered_sigma(fR[mask], fL[mask], z)
    vis = abs(z)
    return [
        {"setting": setting, "phi": phi, "theta": float(t), "sigma": float(s), "visibility": vis}
        for t, s in zip(theta[mask], sigma)
    ]


def _shield_row(data, scale):
    sh = data["shield"]
    chain = build_chain(data, effective=True)
    traj = build_trajectory(data)
    kwargs = {k: sh[k] for k in ("min_distance_ratio", "max_curvature_ratio", "perimeter_points")
              if k in sh}
    spec = make_shield_spec(chain, sh["rho"], traj.g, sh.get("Tc"), **kwargs)
    resid = cancellation_residual(spec, traj)
    dmin = float(np.min(distance_to_path(traj, chain.positions)))
    row = {
        "scenario_id": data["id"],
        "rho": spec.rho,
        "d_over_rho": dmin / spec.rho,
        "residual": resid,
        "Phi": spec.Phi,
        "shield_phase": None,
        "particle_phase": None,
    }
    if sh.get("total_phase", False):
        row["shield_phase"] = shield_phase(spec, traj, tol=_tol(data, "line", scale))
        row["particle_phase"] = line_phase(chain, traj.positions, traj.g,
                                           tol=_tol(data, "line", scale))
    return row


def _feasibility_rows(data):
    f = data["feasibility"]
    rows = []
    for case in f["cases"]:
        rep = feasibility_report(f["Tc"], f["passage_length"], case["kinetic_ev"],
                                 case.get("quoted_speed_fraction"))
        q = rep.quoted or {}
        rows.append({
            "scenario_id": data["id"],
            "label": case["label"],
            "kinetic_ev": rep.kinetic_ev,
            "speed_fraction_c": rep.computed["speed_fraction_c"],
            "quoted_speed_fraction": q.get("speed_fraction_c"),
            "tau_s": rep.computed["tau_s"],
            "characteristic_hz": rep.computed["characteristic_hz"],
            "cutoff_hz": rep.computed["cutoff_hz"],
            "shield_effective": rep.computed["shield_effective"],
            "quoted_shield_effective": q.get("shield_effective"),
            "speed_tension": rep.tension,
            "_report": rep.as_dict(),
        })
    return rows


def _diagnostics(data, oracle):
    chain = build_chain(data)
    traj = build_trajectory(data)
    params = DipoleParams(data["dipole"]["epsilon"], chain.mu)
    out = {"adiabaticity": adiabaticity_report(params, traj, chain).as_dict()}
    if oracle:
        k = int(np.argmin(distance_to_path(traj, chain.positions)))
        c1, c2 = state_amplitudes(data)
        cmp_ = oracle_comparison(DipoleState(c1, c2), params, traj, chain.positions[k],
                                 chain.tangents[k], samples=data["oracle"]["samples"],
                                 max_substeps=data["oracle"]["max_substeps"])
        out["oracle"] = {"dipole": k, **cmp_.as_dict()}
    return out


def evaluate_point(data, index, setting, oracle=False, tolerance_scale=1.0):
    """Run every selected analysis for one sweep point.

    Returns a dict with per-analysis ``rows``, ``diagnostics``, ``errors``
    and ``warnings``.  Module errors are captured with the sweep coordinates
    instead of propagating.
    """
    rows = {}
    errors = []
    diagnostics = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")

        def attempt(name, fn):
            try:
                return fn()
            except ABError as exc:
                errors.append({
                    "analysis": name,
                    "sweep_index": index,
                    "setting": setting,
                    "type": type(exc).__name__,
                    "message": str(exc),
                })
                return None

        analyses = data["analyses"]
        if "phase_theorem" in analyses:
            if "random" in data:
                rnd = data["random"]
                cases = random_theorem_cases(data["seed"], rnd.get("cases", 10),
                                             rnd.get("dipoles", 10_000))
                rows["phase_theorem"] = attempt("phase_theorem", lambda: [
                    _theorem_row(f"{data['id']}#{i}-{kind}", ch, tr, data, tolerance_scale)
                    for i, (kind, ch, tr) in enumerate(cases)
                ])
            else:
                rows["phase_theorem"] = attempt("phase_theorem",
                                                lambda: _phase_theorem(data, tolerance_scale))
        if "overlap" in analyses or "interference" in analyses:
            shared = attempt("overlap", lambda: _two_path(data, tolerance_scale))
            if shared is not None:
                if "overlap" in analyses:
                    rows["overlap"] = [_overlap_row(data, shared)]
                if "interference" in analyses:
                    label = index if setting is None else setting
                    rows["interference"] = _interference_rows(data, shared, label)
        if "shield" in analyses:
            r = attempt("shield", lambda: _shield_row(data, tolerance_scale))
            rows["shield"] = None if r is None else [r]
        if "feasibility" in analyses:
            rows["feasibility"] = attempt("feasibility", lambda: _feasibility_rows(data))
        if "trajectory" in data and "filament" in data and "random" not in data:
            d = attempt("diagnostics", lambda: _diagnostics(data, oracle))
            if d is not None:
                diagnostics = d
    msgs = sorted({str(w.message) for w in caught})
    for r in rows.values():
        for row in r or ():
            row["sweep_index"] = index
            row.setdefault("setting", setting)
    return {"index": index, "rows": {k: v for k, v in rows.items() if v is not None},
            "errors": errors,
            "diagnostics": diagnostics, "warnings": msgs}


def _evaluate_star(args):
    t0 = time.perf_counter()
    res = evaluate_point(*args)
    res["wall_clock_s"] = time.perf_counter() - t0
    return res


# -- run ----------------------------------------------------------------------------------


@dataclass
class RunReport:
    """Outcome of :func:`run`; ``document`` is what ``report.json`` holds."""

    document: dict
    rows: dict
    errors: list
    files: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def exit_code(self):
        if not self.errors:
            return EXIT_OK
        if any(e["type"] == "ConvergenceError" for e in self.errors):
            return EXIT_CONVERGENCE
        return EXIT_VALIDATION


def _public(row):
    return {k: v for k, v in row.items() if not k.startswith("_")}


def run(config, out_dir=None, formats=("csv", "json"), workers=1, oracle=False,
        tolerance_scale=1.0, seed=None):
    """Execute a scenario and (optionally) write its outputs.

    Parameters
    ----------
    config : ScenarioConfig
    out_dir : str or None
        Output directory; nothing is written when ``None``.
    formats : iterable of {"csv", "json"}
    workers : int
        Worker processes for sweep points; outputs do not depend on it.
    oracle : bool
        Also compare adiabatic and exact evolution of the dipole nearest to
        the trajectory.
    tolerance_scale : float
        Multiplier on quadrature and line-integral tolerances.
    seed : int or None
        Overrides the scenario seed.
    """
    t_start = time.perf_counter()
    data = dict(config.data)
    if seed is not None:
        data["seed"] = int(seed)
    values = sweep_values(data)
    jobs = [(point_config(data, v), i, v, oracle, tolerance_scale) for i, v in enumerate(values)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_evaluate_star, jobs))
    else:
        results = [_evaluate_star(j) for j in jobs]

    rows = {a: [] for a in data["analyses"]}
    errors, warn, certs, diags = [], [], [], []
    results_doc = {a: [] for a in data["analyses"]}
    for res in results:
        errors.extend(res["errors"])
        warn.extend(res["warnings"])
        for name, rs in res["rows"].items():
            for r in rs:
                rows[name].append(r)
                if name == "interference":
                    continue
                if "_certificates" in r:
                    certs.append({"analysis": name, "scenario_id": r["scenario_id"],
                                  "sweep_index": r["sweep_index"], **r["_certificates"]})
                entry = _public(r)
                if "_report" in r:
                    entry = {"scenario_id": r["scenario_id"], "label": r["label"], **r["_report"],
                             "sweep_index": r["sweep_index"], "setting": r["setting"]}
                results_doc[name].append(entry)
        if res["diagnostics"]:
            diags.append({"sweep_index": res["index"], **res["diagnostics"]})
    if "interference" in rows:
        results_doc["interference"] = _interference_summary(rows["interference"])

    echo = config.echo
    echo["seed"] = data["seed"]
    document = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "scenario": echo,
        "settings": {"oracle": bool(oracle), "tolerance_scale": float(tolerance_scale)},
        "results": results_doc,
        "certificates": certs,
        "diagnostics": diags,
        "warnings": sorted(set(warn)),
        "errors": errors,
        "sigma_units": "|f_R|^2",
    }
    report = RunReport(document, rows, errors)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        formats = set(formats)
        if "csv" in formats:
            for name, rs in rows.items():
                path = os.path.join(out_dir, f"{name}.csv")
                atomic_write(path, dumps_csv(CSV_COLUMNS[name], rs))
                report.files.append(path)
        if "json" in formats:
            path = os.path.join(out_dir, "report.json")
            atomic_write(path, dumps_json(document))
            report.files.append(path)
    report.wall_clock_s = time.perf_counter() - t_start
    if out_dir is not None:
        timing = {"total_s": report.wall_clock_s,
                  "points_s": [r["wall_clock_s"] for r in results]}
        path = os.path.join(out_dir, "timing.json")
        atomic_write(path, dumps_json(timing))
        report.files.append(path)
    return report


def _interference_summary(rows):
    out, seen = [], {}
    for r in rows:
        key = (r["sweep_index"], r["setting"])
        if key not in seen:
            seen[key] = {"setting": r["setting"], "phi": r["phi"], "visibility": r["visibility"],
                         "sweep_index": r["sweep_index"], "sigma_min": r["sigma"],
                         "sigma_max": r["sigma"]}
            out.append(seen[key])
        s = seen[key]
        s["sigma_min"] = min(s["sigma_min"], r["sigma"])
        s["sigma_max"] = max(s["sigma_max"], r["sigma"])
    return out
