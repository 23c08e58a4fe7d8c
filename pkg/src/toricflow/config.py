"""Run configuration: a JSON file mapping onto nested dataclasses, with the field
diagnostics the CLI reports on exit code 1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .flow import FlowParams
from .polygon import DelzantPolygon, load_polygon
from .poly2 import Polynomial2D, n_coeffs
from .potential import SymplecticPotential


@dataclass
class QuadratureParams:
    depth: int = 6
    order: int = 7
    boundary_order: int = 8
    boundary_depth: int = 30


@dataclass
class PotentialParams:
    degree: int = 8
    preset: str = "guillemin"  # "guillemin" | "perturbed:<amplitude>"
    coeffs: list = None  # explicit packed coefficient vector, overrides preset


@dataclass
class StabilityParams:
    n_directions: int = 720
    n_offsets: int = 200
    refine: bool = True
    mcond_offsets: tuple = (1e-2, 1e-3, 1e-4)
    mcond_edge_fractions: int = 9
    mcond_grid: int = 5
    diameter_depth: int = 40
    diameter_order: int = 12
    dump_crease_csv: bool = False


@dataclass
class RunConfig:
    polygon_path: str = None
    potential: PotentialParams = field(default_factory=PotentialParams)
    quadrature: QuadratureParams = field(default_factory=QuadratureParams)
    flow: FlowParams = field(default_factory=FlowParams)
    stability: StabilityParams = field(default_factory=StabilityParams)
    out_dir: str = "runs"
    seed: int = 0


def _apply(obj, data, section):
    for key, value in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown field '{key}' in section '{section}'")
        if isinstance(value, list) and key == "mcond_offsets":
            value = tuple(value)
        setattr(obj, key, value)
    return obj


def run_config_from_dict(data):
    cfg = RunConfig()
    sections = {
        "potential": cfg.potential,
        "quadrature": cfg.quadrature,
        "flow": cfg.flow,
        "stability": cfg.stability,
    }
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"section '{key}' must be an object")
            _apply(sections[key], value, key)
        elif key in ("polygon_path", "out_dir", "seed"):
            setattr(cfg, key, value)
        elif key == "polygon":
            cfg.polygon_path = value  # accepted alias
        else:
            raise ConfigError(f"unknown top-level field '{key}'")
    _validate(cfg)
    return cfg


def _validate(cfg):
    pot, quad, flow = cfg.potential, cfg.quadrature, cfg.flow
    if pot.degree < 2:
        raise ConfigError("potential.degree must be >= 2")
    for name, value in (
        ("flow.dt0", flow.dt0),
        ("flow.dt_min", flow.dt_min),
        ("flow.dt_max", flow.dt_max),
        ("flow.tol", flow.tol),
    ):
        if not value > 0.0:
            raise ConfigError(f"{name} must be positive (got {value})")
    if flow.t_max < 0.0:
        raise ConfigError("flow.t_max must be nonnegative")
    if quad.depth < 0 or quad.order < 1:
        raise ConfigError("quadrature depth/order out of range")
    if cfg.stability.n_directions < 4 or cfg.stability.n_offsets < 2:
        raise ConfigError("stability grid too small")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")


def load_run_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} col {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return run_config_from_dict(data)


def build_potential(polygon, params):
    """Initial potential from a preset name or an explicit coefficient vector.

    "perturbed:<amp>" adds amp * prod_k (x_k - lo_k)(x_k - hi_k), which on the unit
    square is amp * (x1^2 - x1)(x2^2 - x2): a bump vanishing on the bounding box.
    """
    degree = params.degree
    if params.coeffs is not None:
        vec = np.asarray(params.coeffs, dtype=float)
        if vec.size != n_coeffs(degree):
            raise ConfigError(
                f"potential.coeffs has {vec.size} entries, degree {degree} needs {n_coeffs(degree)}"
            )
        return SymplecticPotential.from_packed(polygon, vec, degree)
    preset = params.preset
    if preset == "guillemin":
        return SymplecticPotential.guillemin(polygon, degree=degree)
    if preset.startswith("perturbed:"):
        try:
            amp = float(preset.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad perturbed amplitude in preset '{preset}'")
        lo, hi = polygon.bounding_box
        px = Polynomial2D([[lo[0] * hi[0], 0.0], [-(lo[0] + hi[0]), 0.0], [1.0, 0.0]])
        py = Polynomial2D([[lo[1] * hi[1], -(lo[1] + hi[1]), 1.0]])
        bump = (px * py) * amp
        u = SymplecticPotential.guillemin(polygon, degree=degree)
        s_frame = bump.compose_affine(np.diag(u._half), u._mid)
        return u.with_f(s_frame)
    raise ConfigError(f"unknown potential preset '{preset}'")


def load_polygon_checked(cfg):
    if not cfg.polygon_path:
        raise ConfigError("polygon_path is required")
    try:
        poly = load_polygon(cfg.polygon_path)
    except FileNotFoundError:
        raise ConfigError(f"polygon file not found: {cfg.polygon_path}")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed polygon file {cfg.polygon_path}: {exc}")
    return poly
