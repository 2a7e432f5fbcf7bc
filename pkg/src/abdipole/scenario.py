"""Scenario files: schema, loading, validation and object construction.

A scenario is a YAML document.  It is validated against :data:`SCHEMA`
(unknown keys are rejected), defaults are filled in, and every sweep point
is built once so that physical preconditions fail at load time.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .electromagnetics import DEFAULT_CUTOFF_FRACTION, DEFAULT_LINE_TOL
from .errors import ValidationError
from .geometry import (
    ChargeTrajectory,
    FilamentCurve,
    arc_curve,
    circle_curve,
    discretize_filament,
    distance_to_path,
    helix_curve,
    make_bypass_trajectory,
    make_flyby_trajectory,
    straight_curve,
    straight_trajectory,
)
from .overlap import mean_moment
from .spin import DEFAULT_PHASE_TOL

__all__ = [
    "SCHEMA",
    "SCHEMA_VERSION",
    "ANALYSES",
    "ScenarioConfig",
    "ScenarioParseError",
    "load_scenario",
    "parse_scenario",
    "sweep_values",
    "point_config",
    "build_chain",
    "build_trajectory",
    "partner_trajectory",
    "state_amplitudes",
]

SCHEMA_VERSION = 1
ANALYSES = ("phase_theorem", "overlap", "interference", "shield", "feasibility")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_complex = {
    "oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]
}


def _obj(props, required=()):
    return {
        "type": "object",
        "properties": props,
        "required": list(required),
        "additionalProperties": False,
    }


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "abdipole scenario",
    **_obj(
        {
            "id": {"type": "string", "minLength": 1},
            "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            "filament": _obj(
                {
                    "preset": {"enum": ["straight", "circle", "arc", "helix", "polyline"]},
                    "length": _pos,
                    "radius": _pos,
                    "angle": _pos,
                    "pitch": _num,
                    "turns": _pos,
                    "points": {"type": "integer", "minimum": 2},
                    "center": _vec3,
                    "direction": _vec3,
                    "vertices": {"type": "array", "items": _vec3, "minItems": 2},
                    "closed": {"type": "boolean"},
                },
                ["preset"],
            ),
            "discretization": _obj(
                {
                    "n": _pos,
                    "count": {"type": "integer", "minimum": 1},
                    "sections": {"type": "integer", "minimum": 1},
                    "straightness": _pos,
                }
            ),
            "dipole": _obj(
                {
                    "mu": _num,
                    "total_moment": _num,
                    "epsilon": _pos,
                    "c1": _complex,
                    "c2": _complex,
                }
            ),
            "trajectory": _obj(
                {
                    "kind": {"enum": ["flyby", "bypass", "straight", "samples"]},
                    "g": _num,
                    "impact_parameter": _pos,
                    "speed": _pos,
                    "side": {"enum": ["left", "right"]},
                    "t_span": {"oneOf": [_pos, {"type": "array", "items": _num,
                                                "minItems": 2, "maxItems": 2}]},
                    "samples": {"type": "integer", "minimum": 2},
                    "half_length": _pos,
                    "samples_per_leg": {"type": "integer", "minimum": 2},
                    "start": _vec3,
                    "velocity": _vec3,
                    "times": {"type": "array", "items": _num, "minItems": 2},
                    "positions": {"type": "array", "items": _vec3, "minItems": 2},
                    "velocities": {"type": "array", "items": _vec3, "minItems": 2},
                },
                ["kind"],
            ),
            "analyses": {
                "type": "array",
                "items": {"enum": list(ANALYSES)},
                "minItems": 1,
                "uniqueItems": True,
            },
            "sweep": _obj(
                {
                    "parameter": {"type": "string", "pattern": r"^[a-z_]+\.[a-z_0-9]+$"},
                    "start": _num,
                    "stop": _num,
                    "steps": {"type": "integer", "minimum": 1},
                    "scale": {"enum": ["linear", "log"]},
                    "integer": {"type": "boolean"},
                },
                ["parameter", "start", "stop", "steps"],
            ),
            "tolerances": _obj(
                {
                    "quadrature": _pos,
                    "line": _pos,
                    "theorem": _pos,
                    "overlap": _pos,
                    "cutoff_fraction": _pos,
                    "phase_warning": _pos,
                }
            ),
            "shield": _obj(
                {
                    "rho": _pos,
                    "Tc": _pos,
                    "min_distance_ratio": _pos,
                    "max_curvature_ratio": _pos,
                    "perimeter_points": {"type": "integer", "minimum": 4},
                    "total_phase": {"type": "boolean"},
                },
                ["rho"],
            ),
            "feasibility": _obj(
                {
                    "Tc": _pos,
                    "passage_length": _pos,
                    "cases": {
                        "type": "array",
                        "minItems": 1,
                        "items": _obj(
                            {
                                "label": {"type": "string"},
                                "kinetic_ev": _pos,
                                "quoted_speed_fraction": {
                                    "type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1,
                                },
                            },
                            ["label", "kinetic_ev"],
                        ),
                    },
                }
            ),
            "interference": _obj(
                {
                    "theta_points": {"type": "integer", "minimum": 3},
                    "theta_min": {"type": "number", "minimum": 0},
                }
            ),
            "random": _obj(
                {
                    "cases": {"type": "integer", "minimum": 1},
                    "dipoles": {"type": "integer", "minimum": 2},
                }
            ),
            "oracle": _obj(
                {
                    "samples": {"type": "integer", "minimum": 3},
                    "max_substeps": {"type": "integer", "minimum": 1},
                }
            ),
        },
        ["id", "analyses"],
    ),
}

DEFAULTS = {
    "seed": 0,
    "discretization": {"straightness": 0.01},
    "dipole": {"epsilon": 1.0},
    "tolerances": {
        "quadrature": DEFAULT_PHASE_TOL,
        "line": DEFAULT_LINE_TOL,
        "theorem": 1e-6,
        "overlap": 1e-3,
        "cutoff_fraction": DEFAULT_CUTOFF_FRACTION,
        "phase_warning": 0.1,
    },
    "trajectory": {"g": 1.0, "side": "right", "samples": 201, "samples_per_leg": 64},
    "interference": {"theta_points": 361, "theta_min": 0.05},
    "feasibility": {
        "Tc": 9.2,
        "passage_length": 1e-6,
        "cases": [
            {"label": "fast", "kinetic_ev": 150e3, "quoted_speed_fraction": 0.77},
            {"label": "slow", "kinetic_ev": 1.0},
        ],
    },
    "oracle": {"samples": 20001, "max_substeps": 5_000_000},
}

_NEEDS_GEOMETRY = {"phase_theorem", "overlap", "interference", "shield"}
_NEEDS_PAIR = {"overlap", "interference"}


class ScenarioParseError(ValidationError):
    """YAML syntax error; ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario with defaults filled in.

    ``data`` is the normalised document (plain Python containers);
    ``echo`` adds derived quantities reported alongside it.
    """

    data: dict
    source: str | None = None

    @property
    def id(self):
        return self.data["id"]

    @property
    def analyses(self):
        return tuple(self.data["analyses"])

    @property
    def echo(self):
        out = copy.deepcopy(self.data)
        dip = out.get("dipole", {})
        if "mu" in dip and "c1" in dip:
            c1, c2 = state_amplitudes(self.data)
            dip["mu_bar"] = mean_moment(dip["mu"], c1, c2)
        return out

    def points(self):
        """Per-sweep-point configs (one entry when there is no sweep)."""
        return [point_config(self.data, v) for v in sweep_values(self.data)]


def _merge(defaults, data):
    # Keys keep the document's order; missing defaults follow.
    out = {}
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(defaults.get(k), dict):
            out[k] = _merge(defaults[k], v)
        else:
            out[k] = copy.deepcopy(v)
    for k, v in defaults.items():
        out.setdefault(k, copy.deepcopy(v))
    return out


def _validate_schema(doc):
    validator = Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"scenario field {where}: {e.message}")


def _as_complex(v):
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def state_amplitudes(data):
    """``(c1, c2)`` from a scenario, defaulting to a fully polarised dipole."""
    dip = data.get("dipole", {})
    if "c1" not in dip and "c2" not in dip:
        return 1.0 + 0j, 0j
    if "c1" not in dip or "c2" not in dip:
        raise ValidationError("dipole.c1 and dipole.c2 must be given together")
    c1, c2 = _as_complex(dip["c1"]), _as_complex(dip["c2"])
    norm = abs(c1) ** 2 + abs(c2) ** 2
    if abs(norm - 1.0) > 1e-10:
        raise ValidationError(f"dipole amplitudes: |c1|^2 + |c2|^2 = {norm!r}, must be 1")
    return c1, c2


def sweep_values(data):
    """Sweep coordinates, or ``[None]`` without a sweep."""
    sw = data.get("sweep")
    if not sw:
        return [None]
    steps = sw["steps"]
    if sw.get("scale", "linear") == "log":
        if sw["start"] <= 0 or sw["stop"] <= 0:
            raise ValidationError("sweep: log scale needs positive start and stop")
        vals = np.geomspace(sw["start"], sw["stop"], steps)
    else:
        vals = np.linspace(sw["start"], sw["stop"], steps)
    if sw.get("integer", False):
        return [int(round(v)) for v in vals]
    return [float(v) for v in vals]


def point_config(data, value):
    """Copy of ``data`` with the sweep parameter set to ``value``."""
    out = copy.deepcopy(data)
    if value is None:
        return out
    block, key = data["sweep"]["parameter"].split(".")
    out.setdefault(block, {})
    out[block][key] = value
    if block == "discretization" and key == "count":
        out[block].pop("n", None)
    if block == "discretization" and key == "n":
        out[block].pop("count", None)
    return out


def _curve(fil):
    preset = fil["preset"]
    center = tuple(fil.get("center", (0.0, 0.0, 0.0)))

    def need(*keys):
        missing = [k for k in keys if k not in fil]
        if missing:
            raise ValidationError(f"filament preset {preset!r} needs {', '.join(missing)}")

    if preset == "straight":
        need("length")
        return straight_curve(fil["length"], center, tuple(fil.get("direction", (0.0, 0.0, 1.0))))
    if preset == "circle":
        need("radius")
        return circle_curve(fil["radius"], fil.get("points", 512), center,
                            tuple(fil.get("direction", (0.0, 0.0, 1.0))))
    if preset == "arc":
        need("radius", "angle")
        return arc_curve(fil["radius"], fil["angle"], fil.get("points", 256), center,
                         tuple(fil.get("direction", (0.0, 0.0, 1.0))))
    if preset == "helix":
        need("radius", "pitch", "turns")
        return helix_curve(fil["radius"], fil["pitch"], fil["turns"], fil.get("points", 1024),
                           center, tuple(fil.get("direction", (0.0, 0.0, 1.0))))
    need("vertices")
    return FilamentCurve(np.asarray(fil["vertices"], dtype=float), fil.get("closed", False))


def _moment(data, count):
    dip = data.get("dipole", {})
    if "mu" in dip and "total_moment" in dip:
        raise ValidationError("dipole: give mu or total_moment, not both")
    if "total_moment" in dip:
        return dip["total_moment"] / count
    return float(dip.get("mu", 1.0))


def build_chain(data, effective=False):
    """Dipole chain for a (point) config; ``effective`` uses the mean moment."""
    if "filament" not in data:
        raise ValidationError("scenario needs a filament block for the selected analyses")
    curve = _curve(data["filament"])
    disc = data.get("discretization", {})
    if "count" in disc:
        n = disc["count"] / curve.length
    else:
        n = disc.get("n", 10.0)
    sections = disc.get("sections")
    chain = discretize_filament(curve, n, sections_hint=sections or 1,
                                straightness=disc.get("straightness", 0.01))
    if sections:
        count = len(chain)
        edges = np.linspace(0, count, min(sections, count) + 1).round().astype(int)
        chain = chain.with_sections(tuple(zip(edges[:-1].tolist(), edges[1:].tolist())))
    mu = _moment(data, len(chain))
    if effective:
        c1, c2 = state_amplitudes(data)
        mu = mean_moment(mu, c1, c2)
    return chain.with_mu(mu)


def build_trajectory(data, side=None):
    """Charge trajectory for a (point) config, optionally forcing ``side``."""
    if "trajectory" not in data:
        raise ValidationError("scenario needs a trajectory block for the selected analyses")
    tr = data["trajectory"]
    kind = tr["kind"]
    g = tr.get("g", 1.0)
    side = side or tr.get("side", "right")

    def need(*keys):
        missing = [k for k in keys if k not in tr]
        if missing:
            raise ValidationError(f"trajectory kind {kind!r} needs {', '.join(missing)}")

    if kind == "flyby":
        need("impact_parameter", "speed", "t_span")
        return make_flyby_trajectory(tr["impact_parameter"], tr["speed"], side, tr["t_span"],
                                     tr.get("samples", 201), g)
    if kind == "bypass":
        need("impact_parameter", "speed", "half_length")
        return make_bypass_trajectory(tr["impact_parameter"], tr["half_length"], tr["speed"], side,
                                      tr.get("samples_per_leg", 64), g)
    if kind == "straight":
        need("start", "velocity", "t_span")
        span = tr["t_span"]
        if np.ndim(span) == 0:
            span = (-span, span)
        return straight_trajectory(tr["start"], tr["velocity"], span, tr.get("samples", 201), g)
    need("times", "positions", "velocities")
    return ChargeTrajectory(np.asarray(tr["times"]), np.asarray(tr["positions"]),
                            np.asarray(tr["velocities"]), g)


def partner_trajectory(data):
    """``(left, right)`` trajectories for two-path analyses."""
    kind = data["trajectory"]["kind"]
    if kind not in ("flyby", "bypass"):
        raise ValidationError(f"two-path analyses need a flyby or bypass trajectory, not {kind!r}")
    return build_trajectory(data, "left"), build_trajectory(data, "right")


def _check_point(data):
    analyses = set(data["analyses"])
    state_amplitudes(data)
    if "shield" in analyses and "shield" not in data:
        raise ValidationError("shield analysis needs a shield block")
    if not analyses & _NEEDS_GEOMETRY:
        return
    chain = build_chain(data)
    cutoff = data["tolerances"]["cutoff_fraction"] * chain.spacing
    trajs = partner_trajectory(data) if analyses & _NEEDS_PAIR else (build_trajectory(data),)
    for traj in trajs:
        d = float(np.min(distance_to_path(traj, chain.positions)))
        if d < cutoff:
            raise ValidationError(
                f"trajectory passes within {d:.3e} of a dipole (cutoff {cutoff:.3e})"
            )
    if "shield" in analyses:
        sh = data["shield"]
        rho = sh["rho"]
        ratio = rho / chain.curvature_radius()
        limit = sh.get("max_curvature_ratio", 0.05)
        if ratio > limit:
            raise ValidationError(f"shield.rho: rho/K = {ratio:.3g} exceeds {limit}")
        dmin = min(float(np.min(distance_to_path(t, chain.positions))) for t in trajs)
        limit = sh.get("min_distance_ratio", 20.0)
        if dmin / rho < limit:
            raise ValidationError(f"shield.rho: d/rho = {dmin / rho:.3g} below {limit}")


def parse_scenario(text, source=None):
    """Parse and validate scenario text; see :func:`load_scenario`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ScenarioParseError(f"YAML parse error: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"YAML parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("scenario must be a mapping at the top level")
    _validate_schema(doc)
    data = _merge(DEFAULTS, doc)
    if "trajectory" not in doc:
        del data["trajectory"]
    if "count" in data["discretization"] and "n" in data["discretization"]:
        raise ValidationError("discretization: give n or count, not both")
    if "count" not in data["discretization"]:
        data["discretization"].setdefault("n", 10.0)
    if "total_moment" not in data["dipole"]:
        data["dipole"].setdefault("mu", 1.0)
    if "sweep" in data:
        data["sweep"].setdefault("scale", "linear")
        block, key = data["sweep"]["parameter"].split(".")
        if block not in SCHEMA["properties"] or key not in SCHEMA["properties"][block].get(
            "properties", {}
        ):
            raise ValidationError(f"sweep.parameter: unknown field {data['sweep']['parameter']!r}")
        spec = SCHEMA["properties"][block]["properties"][key]
        if spec.get("type") == "integer":
            data["sweep"].setdefault("integer", True)
    config = ScenarioConfig(data, source)
    for point in config.points():
        _check_point(point)
    return config


def load_scenario(path):
    """Load, validate and normalise a scenario file.

    Raises
    ------
    ScenarioParseError
        Malformed YAML, with line and column.
    ValidationError
        Schema or physical precondition violated; the message names the field.
    OSError
        The file cannot be read.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, str(path))
