"""JSON configuration for a blending run.

A document names scalar fields, regions and porous structures, then lists
the blending regions between consecutive structures::

    {
      "fields":  {"p": {"type": "tpms", "kind": "P", "periods": [4, 4, 4]}, ...},
      "regions": {"left": {"type": "box", "lo": [0, 0, 0], "hi": [0.5, 0.25, 0.25]}, ...},
      "structures": [{"field": "p", "kind": "rod", "threshold": -1.0, "region": "left"}, ...],
      "blend": {"regions": ["band"], "init": {"mode": "1d", "frame": {"kind": "cartesian", "axis": "x"}}},
      "optimize": {"eta": 0.05, "max_iters": 50, "resolution": [50, 50, 50]},
      "output": {"formats": ["obj", "report"]}
    }

:func:`parse_config` validates against a JSON schema, checks cross
references and fills every default, so ``parse(serialize(c)) == c``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import field as F
from .errors import ConfigError
from .frames import CoordinateFrame
from .initialize import InitPlan
from .optimize import OptimizerSettings

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_IVEC3 = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3}
_RES3 = {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 3, "maxItems": 3}
_NAME = {"type": "string", "minLength": 1}


def _obj(props: dict, required=(), **extra) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False, **extra}


_FIELD = {
    "oneOf": [
        _obj(
            {
                "type": {"const": "tpms"},
                "kind": {"enum": ["P", "G", "D", "IWP"]},
                "periods": _VEC3,
                "offset": _VEC3,
            },
            ["type", "kind"],
        ),
        _obj({"type": {"const": "sphere"}, "center": _VEC3, "radius": {"type": "number", "exclusiveMinimum": 0}}, ["type"]),
        _obj({"type": {"const": "constant"}, "value": {"type": "number"}}, ["type", "value"]),
    ]
}

_REGION = {
    "oneOf": [
        _obj({"type": {"const": "box"}, "lo": _VEC3, "hi": _VEC3}, ["type", "lo", "hi"]),
        _obj(
            {
                "type": {"const": "cylinder"},
                "axis": {"enum": ["x", "y", "z"]},
                "center": _VEC3,
                "r_min": {"type": "number", "minimum": 0},
                "r_max": {"type": "number", "exclusiveMinimum": 0},
            },
            ["type", "r_max"],
        ),
        _obj(
            {
                "type": {"const": "sphere"},
                "center": _VEC3,
                "r_min": {"type": "number", "minimum": 0},
                "r_max": {"type": "number", "exclusiveMinimum": 0},
            },
            ["type", "r_max"],
        ),
        _obj({"type": {"const": "half_space"}, "normal": _VEC3, "offset": {"type": "number"}}, ["type", "normal", "offset"]),
        _obj(
            {
                "type": {"const": "wave"},
                "axis": {"enum": ["x", "y", "z"]},
                "along": {"enum": ["x", "y", "z"]},
                "offset": {"type": "number"},
                "amplitude": {"type": "number"},
                "frequency": {"type": "number"},
                "phase": {"type": "number"},
                "side": {"enum": ["below", "above", "band"]},
                "half_width": {"type": "number", "minimum": 0},
            },
            ["type", "side"],
        ),
        _obj(
            {
                "type": {"const": "image"},
                "path": _NAME,
                "threshold": {"type": "integer", "minimum": 0, "maximum": 255},
                "phase": {"enum": ["dark", "light"]},
                "z_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
            ["type", "path"],
        ),
        _obj(
            {"type": {"enum": ["union", "intersection", "difference"]}, "of": {"type": "array", "items": _NAME, "minItems": 2}},
            ["type", "of"],
        ),
        _obj(
            {
                "type": {"const": "band"},
                "between": {"type": "array", "items": _NAME, "minItems": 2, "maxItems": 2},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "resolution": _RES3,
            },
            ["type", "between", "radius"],
        ),
    ]
}

_FRAME = _obj(
    {"kind": {"enum": ["cartesian", "cylindrical", "spherical"]}, "axis": {"enum": ["x", "y", "z"]}, "center": _VEC3},
    ["kind"],
)

_INIT = {
    "oneOf": [
        _obj(
            {
                "mode": {"const": "1d"},
                "frame": _FRAME,
                "coefficients": {"type": "integer", "minimum": 1},
                "degree": {"type": "integer", "minimum": 0},
            },
            ["mode", "frame"],
        ),
        _obj(
            {
                "mode": {"const": "3d"},
                "coefficients": _IVEC3,
                "degree": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
                "fit_resolution": _IVEC3,
            },
            ["mode"],
        ),
    ]
}

SCHEMA = _obj(
    {
        "box": {"type": "array", "items": _VEC3, "minItems": 2, "maxItems": 2},
        "fields": {"type": "object", "additionalProperties": _FIELD, "minProperties": 1},
        "regions": {"type": "object", "additionalProperties": _REGION, "minProperties": 1},
        "structures": {
            "type": "array",
            "minItems": 2,
            "items": _obj(
                {
                    "field": _NAME,
                    "kind": {"enum": ["pore", "rod", "sheet"]},
                    "threshold": {
                        "oneOf": [
                            {"type": "number"},
                            {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        ]
                    },
                    "region": _NAME,
                },
                ["field", "kind", "threshold", "region"],
            ),
        },
        "blend": _obj(
            {
                "regions": {"type": "array", "items": _NAME, "minItems": 1},
                "init": {"oneOf": [_INIT, {"type": "array", "items": _INIT, "minItems": 1}]},
            },
            ["regions", "init"],
        ),
        "optimize": _obj(
            {
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 0},
                "resolution": _RES3,
            }
        ),
        "output": _obj(
            {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["obj", "stl", "raw", "diagram", "report"]}, "uniqueItems": True},
                "resolution": _RES3,
                "iso": {"const": 0},
            }
        ),
    },
    ["fields", "regions", "structures", "blend"],
)

DEFAULTS_1D = {"coefficients": 50, "degree": 3}
DEFAULTS_3D = {"coefficients": [80, 80, 20], "degree": [3, 3, 3], "fit_resolution": [64, 64, 64]}
DEFAULT_OPTIMIZE = {"eta": 0.05, "epsilon": 1e-8, "max_iters": 50, "resolution": [50, 50, 50]}
DEFAULT_OUTPUT = {"dir": "out", "formats": ["obj", "report"], "iso": 0}
DEFAULT_FIELD = {
    "tpms": {"periods": [1, 1, 1], "offset": [0, 0, 0]},
    "sphere": {"center": [0.5, 0.5, 0.5], "radius": 0.25},
}
DEFAULT_REGION = {
    "cylinder": {"axis": "z", "center": [0, 0, 0], "r_min": 0},
    "sphere": {"center": [0, 0, 0], "r_min": 0},
    "wave": {"axis": "y", "along": "x", "offset": 0.5, "amplitude": 0.0, "frequency": 1.0, "phase": 0.0, "half_width": 0.1},
    "image": {"threshold": 128, "phase": "dark", "z_range": [0, 1]},
    "band": {"resolution": [64, 64, 64]},
}
DEFAULT_FRAME = {"axis": "x", "center": [0, 0, 0]}


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _fill(node: dict, defaults: dict) -> dict:
    for k, v in defaults.items():
        node.setdefault(k, copy.deepcopy(v))
    return node


@dataclass(frozen=True)
class Config:
    """A validated configuration with all defaults filled in."""

    data: dict

    def __eq__(self, other):
        return isinstance(other, Config) and self.data == other.data

    @property
    def base_dir(self) -> Path:
        return Path(self.data.get("_base_dir", "."))

    def serialize(self) -> str:
        return serialize_config(self)

    def optimizer_settings(self, trace_dir=None) -> OptimizerSettings:
        o = self.data["optimize"]
        return OptimizerSettings(o["eta"], o["epsilon"], o["max_iters"], tuple(o["resolution"]), trace_dir)

    def init_plans(self) -> list[InitPlan]:
        inits = self.data["blend"]["init"]
        inits = inits if isinstance(inits, list) else [inits]
        plans = []
        for node in inits:
            if node["mode"] == "1d":
                fr = node["frame"]
                frame = CoordinateFrame(fr["kind"], fr["axis"], tuple(fr["center"]))
                plans.append(InitPlan(frame=frame, coefficients=node["coefficients"], degree=node["degree"]))
            else:
                plans.append(
                    InitPlan(
                        coefficients=tuple(node["coefficients"]),
                        degree=tuple(node["degree"]),
                        fit_resolution=tuple(node["fit_resolution"]),
                    )
                )
        return plans

    def build_fields(self) -> dict:
        box = self.box()
        out = {}
        for name, node in self.data["fields"].items():
            if node["type"] == "tpms":
                out[name] = F.tpms(node["kind"], node["periods"], node["offset"], box)
            elif node["type"] == "sphere":
                out[name] = F.sphere_sdf(node["center"], node["radius"], box)
            else:
                out[name] = F.constant(node["value"], box)
        return out

    def box(self):
        if "box" in self.data:
            lo, hi = self.data["box"]
            return (tuple(lo), tuple(hi))
        return F.UNIT_BOX

    def build_regions(self) -> dict:
        nodes = self.data["regions"]
        built: dict = {}
        box = self.box()

        def make(name, trail):
            if name in built:
                return built[name]
            if name in trail:
                raise ConfigError(f"region {name!r} refers to itself", _path(["regions", name]))
            node = nodes[name]
            kind = node["type"]
            if kind == "box":
                r = F.box_region(node["lo"], node["hi"], name=name)
            elif kind == "cylinder":
                r = F.cylinder_shell(node["axis"], node["center"], node["r_min"], node["r_max"], box, name=name)
            elif kind == "sphere":
                r = F.sphere_shell(node["center"], node["r_min"], node["r_max"], box, name=name)
            elif kind == "half_space":
                r = F.half_space(node["normal"], node["offset"], box, name=name)
            elif kind == "wave":
                r = _wave_region(node, box, name)
            elif kind == "image":
                path = Path(node["path"])
                if not path.is_absolute():
                    path = self.base_dir / path
                dark, light = F.image_region(path, node["threshold"], node["z_range"])
                r = dark if node["phase"] == "dark" else light
            elif kind == "band":
                a, b = (make(n, trail | {name}) for n in node["between"])
                r = F.dilate_region_boundary(a, b, node["radius"], box, tuple(node["resolution"]))
            else:
                parts = [make(n, trail | {name}) for n in node["of"]]
                op = {"union": F.union, "intersection": F.intersection, "difference": F.difference}[kind]
                r = parts[0]
                for p in parts[1:]:
                    r = op(r, p)
            built[name] = r
            return r

        for name in nodes:
            make(name, frozenset())
        return built

    def build_problem(self, trace_dir=None):
        from .pipeline import BlendProblem

        fields = self.build_fields()
        regions = self.build_regions()
        specs, ers = [], []
        for s in self.data["structures"]:
            threshold = tuple(s["threshold"]) if isinstance(s["threshold"], list) else s["threshold"]
            spec = F.PorousSpec(s["kind"], fields[s["field"]], threshold)
            spec.validate()
            specs.append(spec)
            ers.append(regions[s["region"]])
        brs = [regions[n] for n in self.data["blend"]["regions"]]
        out = self.data["output"]
        return BlendProblem(
            specs,
            ers,
            brs,
            self.init_plans(),
            self.optimizer_settings(trace_dir),
            tuple(out["resolution"]) if "resolution" in out else None,
            self.box() if "box" in self.data else None,
        )


_AXIS = {"x": 0, "y": 1, "z": 2}


def _wave_region(node, box, name) -> F.Region:
    a, s = _AXIS[node["axis"]], _AXIS[node["along"]]
    off, amp, freq, ph = node["offset"], node["amplitude"], node["frequency"], node["phase"]
    side, hw = node["side"], node["half_width"]

    def indicator(x, y, z):
        p = (x, y, z)
        d = p[a] - (off + amp * np.sin(2.0 * np.pi * freq * p[s] + ph))
        if side == "below":
            return d
        if side == "above":
            return -d
        return np.abs(d) - hw

    if side == "above":
        member = lambda x, y, z: indicator(x, y, z) < 0  # noqa: E731
    else:
        member = None
    return F.Region(indicator, box, member=member, name=name)


def _validate(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        if err.validator == "oneOf" and err.context:
            # report the alternative that got furthest
            best = max(err.context, key=lambda e: len(e.absolute_path))
            err = best
        raise ConfigError(f"{err.message} (expected {_expected(err)})", err.json_path)


def _expected(err) -> str:
    schema = err.schema
    if isinstance(schema, dict):
        for key in ("type", "enum", "const"):
            if key in schema:
                return f"{key} {schema[key]!r}"
    return f"{err.validator} {err.validator_value!r}"[:120]


def _check_references(doc) -> None:
    fields, regions = doc["fields"], doc["regions"]
    for i, s in enumerate(doc["structures"]):
        if s["field"] not in fields:
            raise ConfigError(f"unknown field {s['field']!r}", _path(["structures", i, "field"]))
        if s["region"] not in regions:
            raise ConfigError(f"unknown region {s['region']!r}", _path(["structures", i, "region"]))
        if s["kind"] == "sheet" and not isinstance(s["threshold"], list):
            raise ConfigError("sheet structures need a [c1, c2] threshold", _path(["structures", i, "threshold"]))
        if s["kind"] != "sheet" and isinstance(s["threshold"], list):
            raise ConfigError(f"{s['kind']} structures need a single threshold", _path(["structures", i, "threshold"]))
    for name, node in regions.items():
        for key in ("of", "between"):
            for j, ref in enumerate(node.get(key, [])):
                if ref not in regions:
                    raise ConfigError(f"unknown region {ref!r}", _path(["regions", name, key, j]))
    n = len(doc["structures"])
    brs = doc["blend"]["regions"]
    if len(brs) != n - 1:
        raise ConfigError(
            f"{n} structures need exactly {n - 1} blending regions (one per adjacent pair), got {len(brs)}",
            "$.blend.regions",
        )
    for j, ref in enumerate(brs):
        if ref not in regions:
            raise ConfigError(f"unknown region {ref!r}", _path(["blend", "regions", j]))
    inits = doc["blend"]["init"]
    if isinstance(inits, list) and len(inits) not in (1, len(brs)):
        raise ConfigError(f"give one init plan or {len(brs)}, got {len(inits)}", "$.blend.init")
    for i, node in enumerate(inits if isinstance(inits, list) else [inits]):
        degs = np.atleast_1d(node["degree"])
        coeffs = np.atleast_1d(node["coefficients"])
        if np.any(coeffs < degs + 1):
            where = _path(["blend", "init", i]) if isinstance(inits, list) else "$.blend.init"
            raise ConfigError("coefficient counts must be at least degree + 1", where)


def _apply_defaults(doc: dict) -> dict:
    for node in doc["fields"].values():
        _fill(node, DEFAULT_FIELD.get(node["type"], {}))
    for node in doc["regions"].values():
        _fill(node, DEFAULT_REGION.get(node["type"], {}))
    inits = doc["blend"]["init"]
    for node in inits if isinstance(inits, list) else [inits]:
        if node["mode"] == "1d":
            _fill(node, DEFAULTS_1D)
            _fill(node["frame"], DEFAULT_FRAME)
        else:
            _fill(node, DEFAULTS_3D)
    _fill(doc.setdefault("optimize", {}), DEFAULT_OPTIMIZE)
    _fill(doc.setdefault("output", {}), DEFAULT_OUTPUT)
    return doc


def parse_config(text: str, base_dir=None) -> Config:
    """Validate JSON ``text`` and return a :class:`Config` with defaults applied.

    Violations raise :class:`ConfigError` carrying the JSON path of the
    offending node.  ``base_dir`` resolves relative image paths.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict):
        doc.pop("_base_dir", None)
    _validate(doc)
    doc = _apply_defaults(doc)
    _validate(doc)
    _check_references(doc)
    if base_dir is not None:
        doc["_base_dir"] = str(base_dir)
    return Config(doc)


def serialize_config(config: Config) -> str:
    data = {k: v for k, v in config.data.items() if not k.startswith("_")}
    return json.dumps(data, indent=2, sort_keys=True)


def load_config(path) -> Config:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
