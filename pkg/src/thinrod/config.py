"""Run configuration: JSON parsing, validation, and object builders.

Validation is collecting, not fail-fast: every problem is reported with a
JSON-pointer-style path.  Unknown keys are rejected so typos cannot
silently fall back to defaults.  A syntactically broken document reports
the byte offset from the JSON decoder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .material import ElasticMaterialField, IsotropicTensor, MaterialRegion
from .rod1d import LoadSpec
from .xsection import CrossSectionMesh, center_and_normalize, generate_mesh


class ConfigError(ValueError):
    """Carries the full list of (json_pointer, message) validation errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(f"invalid configuration: {lines}")


_DEFAULTS = {
    "length": 1.0,
    "section": {"kind": "disk", "radius": 1.0, "target_edge": 0.2, "path": None,
                "width": 2.0, "height": 1.0},
    "material": {"regions": [{"shape": "all", "lambda": 1.0, "mu": 1.0}]},
    "load": {"pieces": [{"from": 0.0, "to": 1.0, "g": [0.0, 0.0, -0.0159154943]}]},
    "rod1d": {"segments": 200},
    "rod3d": {"h": 0.1, "axial_per_h": 6.0, "axial_elements": None, "min_axial": 8},
    "solver": {"tol_1d": 1e-10, "tol_3d": 1e-8, "max_iter_1d": 5000,
               "max_iter_3d": 100, "seed": 0},
    "h_list": [0.2, 0.1, 0.05],
    "acceptance": {"err_rot_ratio_factor": 3.0, "stress_trend_factor": 2.0},
    "output_dir": "out",
}


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""

    length: float
    section: dict
    material: dict
    load: dict
    rod1d: dict
    rod3d: dict
    solver: dict
    h_list: list
    acceptance: dict
    output_dir: str
    raw: dict = field(default_factory=dict)

    def canonical_json(self) -> str:
        """Stable serialization of the semantic content (defaults included).

        Two documents hash equal exactly when they parse to the same run,
        regardless of formatting or key order.
        """
        payload = {
            "length": self.length, "section": self.section,
            "material": self.material, "load": self.load,
            "rod1d": self.rod1d, "rod3d": self.rod3d, "solver": self.solver,
            "h_list": self.h_list, "acceptance": self.acceptance,
            "output_dir": self.output_dir,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    # -- builders -----------------------------------------------------------

    def build_section(self, mesh_text: str | None = None) -> CrossSectionMesh:
        s = self.section
        if s["kind"] == "imported":
            if mesh_text is None:
                raise ConfigError([("/section/path", "imported mesh file not provided")])
            mesh = generate_mesh("imported", 1.0, text=mesh_text)
        else:
            mesh = generate_mesh(
                s["kind"], s["target_edge"], radius=s["radius"],
                width=s["width"], height=s["height"],
            )
        return center_and_normalize(mesh)

    def build_material(self) -> ElasticMaterialField:
        regions = []
        for r in self.material["regions"]:
            tensor = IsotropicTensor(r["lambda"], r["mu"])
            params = {k: v for k, v in r.items() if k not in ("shape", "lambda", "mu")}
            regions.append(MaterialRegion(r["shape"], tensor, params))
        return ElasticMaterialField(regions)

    def build_load(self) -> LoadSpec:
        pieces = [(p["from"], p["to"], np.asarray(p["g"], dtype=float))
                  for p in self.load["pieces"]]
        return LoadSpec(pieces, self.length)


def _type_name(v):
    return type(v).__name__


def _check_keys(obj, allowed, path, errors):
    for key in obj:
        if key not in allowed:
            errors.append((f"{path}/{key}", "unknown key"))


def _get_number(obj, key, path, errors, *, default=None, positive=False,
                in_unit_interval=False):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append((f"{path}/{key}", f"expected a number, got {_type_name(v)}"))
        return default
    v = float(v)
    if positive and not v > 0.0:
        errors.append((f"{path}/{key}", f"must be positive, got {v}"))
        return default
    if in_unit_interval and not 0.0 < v < 1.0:
        errors.append((f"{path}/{key}", f"must lie in (0, 1), got {v}"))
        return default
    return v


def _get_int(obj, key, path, errors, *, default=None, minimum=None):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append((f"{path}/{key}", f"expected an integer, got {_type_name(v)}"))
        return default
    if minimum is not None and v < minimum:
        errors.append((f"{path}/{key}", f"must be >= {minimum}, got {v}"))
        return default
    return v


def _get_vec3(obj, key, path, errors, *, default=None):
    if key not in obj:
        return default
    v = obj[key]
    if (not isinstance(v, list) or len(v) != 3
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)):
        errors.append((f"{path}/{key}", "expected a list of three numbers"))
        return default
    return [float(c) for c in v]


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document.

    Raises ConfigError listing every validation problem (not only the
    first); JSON syntax errors report the byte offset.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("/", f"JSON syntax error at byte {exc.pos}: {exc.msg}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("/", "top-level document must be an object")])

    errors: list = []
    _check_keys(doc, set(_DEFAULTS), "", errors)

    length = _get_number(doc, "length", "", errors,
                         default=_DEFAULTS["length"], positive=True)

    # section ---------------------------------------------------------------
    sec_in = doc.get("section", {})
    section = dict(_DEFAULTS["section"])
    if not isinstance(sec_in, dict):
        errors.append(("/section", "expected an object"))
    else:
        _check_keys(sec_in, set(section), "/section", errors)
        kind = sec_in.get("kind", section["kind"])
        if kind not in ("disk", "rectangle", "imported"):
            errors.append(("/section/kind", f"unknown section kind {kind!r}"))
        else:
            section["kind"] = kind
        for key in ("radius", "target_edge", "width", "height"):
            val = _get_number(sec_in, key, "/section", errors,
                              default=section[key], positive=True)
            section[key] = val
        if "path" in sec_in:
            if sec_in["path"] is not None and not isinstance(sec_in["path"], str):
                errors.append(("/section/path", "expected a string path"))
            else:
                section["path"] = sec_in["path"]
        if section["kind"] == "imported" and not section["path"]:
            errors.append(("/section/path", "imported sections need a mesh file path"))

    # material ---------------------------------------------------------------
    mat_in = doc.get("material", {})
    material = {"regions": []}
    if not isinstance(mat_in, dict):
        errors.append(("/material", "expected an object"))
        material = dict(_DEFAULTS["material"])
    else:
        _check_keys(mat_in, {"regions"}, "/material", errors)
        regions_in = mat_in.get("regions", _DEFAULTS["material"]["regions"])
        if not isinstance(regions_in, list) or not regions_in:
            errors.append(("/material/regions", "expected a non-empty list"))
            material = dict(_DEFAULTS["material"])
        else:
            shape_keys = {
                "all": set(),
                "halfspace": {"normal", "offset"},
                "box": {"lo", "hi"},
                "cylinder": {"point", "direction", "radius"},
            }
            for i, r in enumerate(regions_in):
                path = f"/material/regions/{i}"
                if not isinstance(r, dict):
                    errors.append((path, "expected an object"))
                    continue
                shape = r.get("shape")
                if shape not in shape_keys:
                    errors.append((f"{path}/shape", f"unknown shape {shape!r}"))
                    continue
                _check_keys(r, shape_keys[shape] | {"shape", "lambda", "mu"}, path, errors)
                lam = _get_number(r, "lambda", path, errors, default=None)
                mu = _get_number(r, "mu", path, errors, default=None, positive=True)
                if lam is None and "lambda" not in r:
                    errors.append((f"{path}/lambda", "missing Lame modulus"))
                if mu is None and "mu" not in r:
                    errors.append((f"{path}/mu", "missing shear modulus"))
                if lam is not None and mu is not None:
                    if not 3.0 * lam + 2.0 * mu > 0.0:
                        errors.append((path, f"3*lambda + 2*mu must be positive "
                                             f"(lambda={lam}, mu={mu})"))
                out = {"shape": shape, "lambda": lam, "mu": mu}
                if shape == "halfspace":
                    out["normal"] = _get_vec3(r, "normal", path, errors)
                    out["offset"] = _get_number(r, "offset", path, errors, default=0.0)
                    if out["normal"] is None:
                        errors.append((f"{path}/normal", "missing halfspace normal"))
                elif shape == "box":
                    out["lo"] = _get_vec3(r, "lo", path, errors)
                    out["hi"] = _get_vec3(r, "hi", path, errors)
                    if out["lo"] is None or out["hi"] is None:
                        errors.append((path, "box regions need lo and hi corners"))
                elif shape == "cylinder":
                    out["point"] = _get_vec3(r, "point", path, errors)
                    out["direction"] = _get_vec3(r, "direction", path, errors)
                    out["radius"] = _get_number(r, "radius", path, errors, positive=True)
                    if None in (out["point"], out["direction"], out["radius"]):
                        errors.append((path, "cylinder regions need point, direction, radius"))
                material["regions"].append(out)
            if material["regions"] and material["regions"][-1]["shape"] != "all":
                errors.append(("/material/regions",
                               "last region must have shape 'all' to cover the domain"))

    # load --------------------------------------------------------------------
    load_in = doc.get("load", {})
    load = {"pieces": []}
    if not isinstance(load_in, dict):
        errors.append(("/load", "expected an object"))
        load = dict(_DEFAULTS["load"])
    else:
        _check_keys(load_in, {"pieces", "g"}, "/load", errors)
        if "g" in load_in and "pieces" in load_in:
            errors.append(("/load", "give either a constant g or pieces, not both"))
        if "g" in load_in:
            g = _get_vec3(load_in, "g", "/load", errors)
            if g is not None:
                load["pieces"] = [{"from": 0.0, "to": length, "g": g}]
        elif "pieces" in load_in:
            pieces_in = load_in["pieces"]
            if not isinstance(pieces_in, list):
                errors.append(("/load/pieces", "expected a list"))
            else:
                for i, p in enumerate(pieces_in):
                    path = f"/load/pieces/{i}"
                    if not isinstance(p, dict):
                        errors.append((path, "expected an object"))
                        continue
                    _check_keys(p, {"from", "to", "g"}, path, errors)
                    x0 = _get_number(p, "from", path, errors, default=None)
                    x1 = _get_number(p, "to", path, errors, default=None)
                    g = _get_vec3(p, "g", path, errors)
                    if None in (x0, x1) or g is None:
                        errors.append((path, "pieces need from, to and g"))
                        continue
                    if not (0.0 <= x0 < x1 <= length + 1e-12):
                        errors.append((path, f"piece ({x0}, {x1}) outside (0, {length})"))
                        continue
                    load["pieces"].append({"from": x0, "to": x1, "g": g})
        else:
            load = {"pieces": [dict(p, to=length) for p in _DEFAULTS["load"]["pieces"]]}

    # rod1d / rod3d / solver ----------------------------------------------------
    rod1d = dict(_DEFAULTS["rod1d"])
    r1 = doc.get("rod1d", {})
    if isinstance(r1, dict):
        _check_keys(r1, set(rod1d), "/rod1d", errors)
        rod1d["segments"] = _get_int(r1, "segments", "/rod1d", errors,
                                     default=rod1d["segments"], minimum=1)
    else:
        errors.append(("/rod1d", "expected an object"))

    rod3d = dict(_DEFAULTS["rod3d"])
    r3 = doc.get("rod3d", {})
    if isinstance(r3, dict):
        _check_keys(r3, set(rod3d), "/rod3d", errors)
        rod3d["h"] = _get_number(r3, "h", "/rod3d", errors, default=rod3d["h"],
                                 positive=True)
        rod3d["axial_per_h"] = _get_number(r3, "axial_per_h", "/rod3d", errors,
                                           default=rod3d["axial_per_h"], positive=True)
        rod3d["min_axial"] = _get_int(r3, "min_axial", "/rod3d", errors,
                                      default=rod3d["min_axial"], minimum=1)
        if "axial_elements" in r3 and r3["axial_elements"] is not None:
            rod3d["axial_elements"] = _get_int(r3, "axial_elements", "/rod3d", errors,
                                               minimum=1)
    else:
        errors.append(("/rod3d", "expected an object"))

    solver = dict(_DEFAULTS["solver"])
    sv = doc.get("solver", {})
    if isinstance(sv, dict):
        _check_keys(sv, set(solver), "/solver", errors)
        solver["tol_1d"] = _get_number(sv, "tol_1d", "/solver", errors,
                                       default=solver["tol_1d"], in_unit_interval=True)
        solver["tol_3d"] = _get_number(sv, "tol_3d", "/solver", errors,
                                       default=solver["tol_3d"], in_unit_interval=True)
        solver["max_iter_1d"] = _get_int(sv, "max_iter_1d", "/solver", errors,
                                         default=solver["max_iter_1d"], minimum=1)
        solver["max_iter_3d"] = _get_int(sv, "max_iter_3d", "/solver", errors,
                                         default=solver["max_iter_3d"], minimum=1)
        solver["seed"] = _get_int(sv, "seed", "/solver", errors,
                                  default=solver["seed"], minimum=0)
    else:
        errors.append(("/solver", "expected an object"))

    # h ladder -------------------------------------------------------------------
    h_list = list(_DEFAULTS["h_list"])
    if "h_list" in doc:
        hl = doc["h_list"]
        if (not isinstance(hl, list) or len(hl) < 1
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in hl)):
            errors.append(("/h_list", "expected a list of numbers"))
        else:
            vals = [float(v) for v in hl]
            if any(not v > 0.0 for v in vals):
                errors.append(("/h_list", "entries must be positive"))
            if any(b >= a for a, b in zip(vals, vals[1:])):
                errors.append(("/h_list", "h_list must be strictly decreasing"))
            h_list = vals

    acceptance = dict(_DEFAULTS["acceptance"])
    acc = doc.get("acceptance", {})
    if isinstance(acc, dict):
        _check_keys(acc, set(acceptance), "/acceptance", errors)
        for key in acceptance:
            acceptance[key] = _get_number(acc, key, "/acceptance", errors,
                                          default=acceptance[key], positive=True)
    else:
        errors.append(("/acceptance", "expected an object"))

    output_dir = doc.get("output_dir", _DEFAULTS["output_dir"])
    if not isinstance(output_dir, str):
        errors.append(("/output_dir", "expected a string"))
        output_dir = _DEFAULTS["output_dir"]

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        length=length, section=section, material=material, load=load,
        rod1d=rod1d, rod3d=rod3d, solver=solver, h_list=h_list,
        acceptance=acceptance, output_dir=output_dir, raw=doc,
    )
