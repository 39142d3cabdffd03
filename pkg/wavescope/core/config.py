# wavescope/core/config.py

import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from ..util.artifacts import read_chart_csv
from ..util.constants import DEFAULT_CALIBRATION_PATH, SUBCOMMANDS
from ..util.errors import ParseError, ValidationError
from .entities.domain import Domain, SigmaPortion
from .entities.fields import AnisotropyField, BoundaryData, GridSpec, SeparableTerm
from .entities.records import Calibration

logger = logging.getLogger(__name__)

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))

# Per-subcommand defaults; every key filled from here is listed in the manifest.
SECTION_DEFAULTS = {
    "solve": {"T": 1.0, "snapshots": [], "energy_samples": 11, "flux": True},
    "fbi_check": {"T": 2.0, "mu": [100.0, 400.0], "tau": None, "y": [-0.2, -0.1, 0.0, 0.1, 0.2],
                  "growth": True},
    "three_sphere": {"count": 100, "max_degree": 6, "dim": 2, "radii": [0.25, 0.5, 1.0],
                     "delta": 0.2, "beta": None, "cap": None},
    "chain": {"kind": "cone", "s": 0.5, "L_s": None, "varsigma": 0.05, "count": 11,
              "start": None, "end": None, "r": None, "alpha0": 1e-4, "theta_star": 0.5, "C_step": 2.0,
              "mu": 1.0, "T": 10.0},
    "stability": {"chart_id": None, "amplitudes": [0.0, 0.01, 0.02, 0.04, 0.08], "bump_center": None,
                  "bump_width": None, "T": 1.0, "distance_resolution": None, "t0": None,
                  "schedules": True, "fit": True},
}

TOP_LEVEL_DEFAULTS = {
    "rho0": 1.0,
    "seed": 0,
    "threads": 1,
    "output_dir": "out",
    "anisotropy": {"type": "identity"},
    "boundary_data": {"type": "zero"},
    "grid": {"h": 1.0 / 32.0, "dt": None},
}


@dataclass
class RunConfig:
    """A validated run configuration with its defaults filled in."""
    subcommand: str
    rho0: float
    domain: dict
    anisotropy: dict
    boundary_data: dict
    grid: dict
    calibration: Calibration
    section: dict
    output_dir: str
    seed: int = 0
    threads: int = 1
    defaulted_keys: list = field(default_factory=list)
    source_path: Optional[str] = None
    base_dir: str = "."

    @property
    def section_name(self) -> str:
        return self.subcommand.replace("-", "_")

    def grid_spec(self) -> GridSpec:
        return GridSpec(float(self.grid["h"]), self.grid.get("dt"), self.grid.get("bbox"))

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "rho0": self.rho0,
            "domain": self.domain,
            "anisotropy": self.anisotropy,
            "boundary_data": self.boundary_data,
            "grid": self.grid,
            "calibration": self.calibration.to_dict(),
            self.section_name: self.section,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "threads": self.threads,
        }


def _reject_conflicting_duplicates(pairs):
    """object_pairs_hook: repeated keys are fine only with equal values."""
    out = {}
    for key, value in pairs:
        if key in out and out[key] != value:
            raise ValidationError(f"'{key}' is declared twice with different values", key=key)
        out[key] = value
    return out


def load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle, object_pairs_hook=_reject_conflicting_duplicates)
    except FileNotFoundError as exc:
        raise ParseError("configuration file not found", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed configuration: {exc.msg}", path=path, line=exc.lineno,
                         column=exc.colno) from exc


def load_calibration_defaults() -> dict:
    path = os.path.join(PROJECT_ROOT, DEFAULT_CALIBRATION_PATH)
    if not os.path.exists(path):
        return Calibration().to_dict()
    return load_json(path)


def _fill(target: dict, defaults: dict, prefix: str, defaulted: list) -> dict:
    for key, value in defaults.items():
        if key not in target:
            target[key] = json.loads(json.dumps(value))
            defaulted.append(prefix + key)
    return target


def parse_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    """
    Reads a JSON run configuration, fills defaults and validates ranges.
    A manifest.json written by an earlier run is accepted as well; its
    "config" entry is re-run with inputs resolved against "config_dir".

    Args:
        path (str): Configuration file.
        overrides (dict): Top-level values set from the command line
                          (output_dir, seed, threads, resolution).

    Raises:
        ParseError: The file is missing or malformed (with line number).
        ValidationError: A value is out of range or declared inconsistently.
    """
    raw = load_json(path)
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a JSON object", path=path)
    base_dir = None
    if isinstance(raw.get("config"), dict) and "versions" in raw:
        base_dir = raw.get("config_dir")
        raw = raw["config"]
    return build_config(raw, overrides, source_path=path, base_dir=base_dir)


def build_config(raw: dict, overrides: Optional[dict] = None, source_path: Optional[str] = None,
                 base_dir: Optional[str] = None) -> RunConfig:
    raw = json.loads(json.dumps(raw))
    overrides = overrides or {}
    defaulted = []

    subcommand = raw.get("subcommand")
    if subcommand not in SUBCOMMANDS:
        raise ValidationError(f"subcommand must be one of {', '.join(SUBCOMMANDS)}", subcommand=subcommand)
    section_name = subcommand.replace("-", "_")

    _fill(raw, TOP_LEVEL_DEFAULTS, "", defaulted)
    for key in ("output_dir", "seed", "threads"):
        if overrides.get(key) is not None:
            raw[key] = overrides[key]
    if overrides.get("resolution") is not None:
        raw["grid"]["h"] = float(overrides["resolution"])

    # rho0 may be repeated inside the domain section, but only with the same value
    rho0 = raw["rho0"]
    domain = raw.get("domain", {})
    if "rho0" in domain and domain["rho0"] != rho0:
        raise ValidationError("rho0 is declared twice with different values",
                              top_level=rho0, domain=domain["rho0"])
    if not isinstance(rho0, (int, float)) or rho0 <= 0.0:
        raise ValidationError("rho0 must be positive", rho0=rho0)

    _fill(raw["grid"], TOP_LEVEL_DEFAULTS["grid"], "grid.", defaulted)
    calibration_raw = raw.get("calibration", {})
    _fill(calibration_raw, load_calibration_defaults(), "calibration.", defaulted)
    known = {f.name for f in fields(Calibration)}
    unknown = set(calibration_raw) - known
    if unknown:
        raise ValidationError(f"unknown calibration keys: {', '.join(sorted(unknown))}")
    calibration = Calibration(**calibration_raw)

    section = raw.get(section_name, {})
    _fill(section, SECTION_DEFAULTS[section_name], section_name + ".", defaulted)

    if base_dir is None:
        base_dir = os.path.dirname(os.path.abspath(source_path)) if source_path else os.getcwd()
    config = RunConfig(subcommand, float(rho0), domain, raw["anisotropy"], raw["boundary_data"], raw["grid"],
                       calibration, section, str(raw["output_dir"]), int(raw["seed"]), int(raw["threads"]),
                       defaulted, source_path, base_dir)
    validate_config(config)
    logger.info("Parsed %s configuration (%d defaulted keys).", subcommand, len(defaulted))
    return config


def validate_config(config: RunConfig) -> None:
    c = config.calibration
    checks = [
        (c.beta >= 1.0, "calibration.beta must be >= 1"),
        (c.C_carleman > 0.0, "calibration.C_carleman must be positive"),
        (c.C_F >= 2.0, "calibration.C_F must be >= 2"),
        (c.C_K >= 0.0, "calibration.C_K must be nonnegative"),
        (0.0 < c.vartheta2 <= 1.0, "calibration.vartheta2 must lie in (0, 1]"),
        (0.0 < c.c_cfl <= 1.0, "calibration.c_cfl must lie in (0, 1]"),
        (0.0 < c.theta_min < 1.0, "calibration.theta_min must lie in (0, 1)"),
        (c.mu_cap > 0.0, "calibration.mu_cap must be positive"),
        (c.sigma1 is None or c.sigma1 > 0.0, "calibration.sigma1 must be positive"),
        (c.C_modulus > 0.0, "calibration.C_modulus must be positive"),
        (0.0 < c.s0 < 1.0, "calibration.s0 must lie in (0, 1)"),
        (float(config.grid["h"]) > 0.0, "grid.h must be positive"),
        (config.threads >= 1, "threads must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ValidationError(message)

    lam = config.anisotropy.get("lambda")
    if lam is not None and not 0.0 < lam <= 1.0:
        raise ValidationError("anisotropy.lambda must lie in (0, 1]", value=lam)
    charts_csv = config.domain.get("charts_csv")
    if charts_csv and not os.path.exists(resolve_input(config, charts_csv)):
        raise ValidationError("referenced chart file does not exist", path=charts_csv)


def resolve_input(config: RunConfig, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(config.base_dir, path)


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------

def _profile_callable(spec: Optional[dict]):
    if spec is None or spec.get("type", "flat") == "flat":
        return None
    kind = spec["type"]
    amplitude = float(spec.get("amplitude", 0.0))
    if kind == "bump":
        from ..modules.domain_geometry_module import bump_profile
        width = float(spec.get("width", 1.0))
        center = spec.get("center", 0.0)
        return lambda local: bump_profile(local, amplitude, np.asarray(center, dtype=float), width)
    if kind == "quadratic":
        def quadratic(local):
            local = np.asarray(local, dtype=float)
            squares = local ** 2 if local.ndim == 1 else np.sum(local ** 2, axis=-1)
            return 0.5 * amplitude * squares
        return quadratic
    raise ValidationError(f"unknown chart profile type '{kind}'")


def build_domain(config: RunConfig, geometry) -> Domain:
    """Domain from the `domain` section (box with charts, or ball)."""
    spec = config.domain
    rho0 = config.rho0
    kind = spec.get("kind", "box")
    E = float(spec.get("E", 1.0))
    if kind == "ball":
        return geometry.ball_domain(spec["center"], float(spec["radius"]), rho0, E, spec.get("M"),
                                    spec.get("name", "ball"))
    if kind != "box":
        raise ValidationError(f"unknown domain kind '{kind}'")

    profiles = {}
    if spec.get("charts_csv"):
        profiles = read_chart_csv(resolve_input(config, spec["charts_csv"]))
    charts = []
    for chart_spec in spec.get("charts", []):
        chart_id = chart_spec["id"]
        profile = profiles.get(chart_id, _profile_callable(chart_spec.get("profile")))
        charts.append(geometry.make_chart(chart_id, int(chart_spec["axis"]), int(chart_spec["side"]),
                                          chart_spec["center"], float(chart_spec["radius"]),
                                          float(chart_spec.get("spacing", rho0 / 64.0)), profile,
                                          bool(chart_spec.get("accessible", False))))
    sigma = None
    if spec.get("sigma"):
        s = spec["sigma"]
        sigma = SigmaPortion(s.get("id", "sigma"), int(s["axis"]), int(s["side"]),
                             tuple(s["lower"]), tuple(s["upper"]))
    box = (tuple(spec["lower"]), tuple(spec["upper"])) if "lower" in spec else None
    return geometry.build_graph_domain(charts, rho0, E, spec.get("M"), box, sigma,
                                       require_normalized=bool(spec.get("require_normalized", True)),
                                       require_rim=bool(spec.get("require_rim", False)),
                                       name=spec.get("name", "domain"))


def build_anisotropy(spec: dict, rho0: float, dim: int = 2) -> AnisotropyField:
    """
    identity | constant (matrix) | rotated: eigenvalues (l1, l2) along axes
    turned by angle + angle_gradient . x.
    """
    kind = spec.get("type", "identity")
    if kind == "identity":
        return AnisotropyField.identity(dim, rho0)
    if kind == "constant":
        matrix = np.asarray(spec["matrix"], dtype=float)
        if not np.allclose(matrix, matrix.T):
            raise ValidationError("anisotropy matrix must be symmetric")
        return AnisotropyField.constant(matrix, rho0, spec.get("lambda"))
    if kind == "rotated":
        l1, l2 = (float(v) for v in spec["eigenvalues"])
        angle = float(spec.get("angle", 0.0))
        gradient = np.asarray(spec.get("angle_gradient", [0.0] * dim), dtype=float)
        lam = min(l1, l2, 1.0 / max(l1, l2))

        def matrix(points):
            theta = angle + points @ gradient
            c, s = np.cos(theta), np.sin(theta)
            out = np.empty(points.shape[:-1] + (2, 2))
            out[..., 0, 0] = l1 * c * c + l2 * s * s
            out[..., 1, 1] = l1 * s * s + l2 * c * c
            out[..., 0, 1] = out[..., 1, 0] = (l1 - l2) * c * s
            return out
        Lambda = abs(l1 - l2) * float(np.linalg.norm(gradient)) * rho0
        return AnisotropyField(matrix, float(spec.get("lambda", lam)), Lambda, rho0, dim, "rotated")
    raise ValidationError(f"unknown anisotropy type '{kind}'")


def _face_bump(domain: Domain, spec: dict):
    """Smooth bump centered on a flat face point, vanishing away from the face."""
    axis, side = int(spec["axis"]), int(spec["side"])
    face = domain.box_lower[axis] if side < 0 else domain.box_upper[axis]
    center = np.asarray(spec["center"], dtype=float)
    width = float(spec["width"])
    amplitude = float(spec.get("amplitude", 1.0))
    tangential_axes = [a for a in range(domain.dim) if a != axis]

    def bump(s):
        out = np.zeros_like(s)
        inside = s < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out

    def spatial(points):
        points = np.asarray(points, dtype=float)
        tangential = np.linalg.norm(points[..., tangential_axes] - center, axis=-1) / width
        normal = np.abs(points[..., axis] - face) / width
        return amplitude * bump(tangential) * bump(normal)
    return spatial


def build_boundary_data(spec: dict, domain: Domain) -> BoundaryData:
    """
    zero | separable: spatial face bump times a polynomial (default t^7, or sine power)
    time factor.
    """
    kind = spec.get("type", "zero")
    if kind == "zero":
        return BoundaryData.zero(domain)
    if kind != "separable":
        raise ValidationError(f"unknown boundary data type '{kind}'")
    spatial = _face_bump(domain, spec["spatial"])
    temporal_spec = spec.get("temporal", {"type": "polynomial", "coefficients": [0, 0, 0, 0, 0, 0, 0, 1]})
    if temporal_spec["type"] == "polynomial":
        temporal = Polynomial(np.asarray(temporal_spec["coefficients"], dtype=float))
    elif temporal_spec["type"] == "sine":
        omega = float(temporal_spec.get("omega", math.pi))
        power = int(temporal_spec.get("power", 7))
        def temporal(t):
            return np.sin(omega * np.asarray(t, dtype=float)) ** power
    else:
        raise ValidationError(f"unknown time factor type '{temporal_spec['type']}'")
    return BoundaryData(domain, (SeparableTerm(spatial, temporal),), t1=float(spec.get("t1", 1.0)),
                        label=spec.get("label", "separable"))
