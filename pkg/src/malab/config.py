"""Experiment configuration: presets, TOML/JSON loading, defaults, validation.

A config is a nested dict.  ``preset = "<name>"`` pulls in a shipped preset
first; keys given alongside it override the preset.  :func:`resolve` fills
every default so the written ``resolved_config.json`` is self-contained and
can be fed back with ``--config``.
"""

from __future__ import annotations

import copy
import json
import sys
from importlib import resources
from pathlib import Path

from .density import DensitySpec, PeriodicDensitySpec
from .exceptions import MalabError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PRESETS = ("flat", "counterexample", "beta4-n3", "thm1-n3", "manufactured-2d", "separable-cell")


class ConfigError(MalabError, ValueError):
    """Malformed or inconsistent experiment configuration."""


DEFAULTS = {
    "name": "experiment",
    "seed": 0,
    "threads": None,
    "solver": {
        "tol": 1e-8,
        "max_newton": 20,
        "max_linear": 20000,
        "damping_levels": 8,
        "linear_solver": "bicgstab",
        "linear_tol": 1e-10,
        "cvx_factor": 10.0,
    },
    "cell": {"nodes": 32, "tol": 1e-8, "max_newton": 30, "normalize": True, "oracle": False},
    "radial": {
        "cases": [],
        "r_min": 10.0,
        "r_max": 1e5,
        "count": 41,
        "slope_window": [1e3, 1e5],
        "slope_tolerance": 0.15,
        "log_ratio_radii": [1e3, 1e5],
        "log_ratio_tolerance": 0.10,
    },
    "analysis": {
        "annuli": [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875],
        "annuli_geometric": None,
        "boundary_cells": 4,
        "inner_annulus": [0.25, 0.5],
        "inner_ratio_min": 1.5,
        "quotient_annuli": [0.0, 0.125, 0.25, 0.375, 0.5],
        "quotients": True,
        "quotient_max_deviation": 0.5,
        "monotone_slack": 0.2,
        "K": 2,
        "lattice_order": 1,
        "level_sets": True,
        "M_fractions": [0.02, 0.04, 0.08, 0.16, 0.3],
        "level_set_tolerance": 0.10,
        "eig_interval": [0.25, 4.0],
        "detA_tolerance": 0.02,
        "green": False,
        "green_grid": {"L": 8.0, "m": 49, "corrector_nodes": 24},
        "green_window": None,
        "green_slope_range": [-1.3, -0.7],
    },
    "verify": {"sample_count": 4096},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("malab").joinpath("presets", f"{name}.toml").read_text()
    return tomllib.loads(text)


def load_config(path) -> dict:
    """Read a TOML or JSON config file, expanding ``preset``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return expand(raw)


def expand(raw: dict) -> dict:
    if "preset" in raw and raw["preset"]:
        base = load_preset(raw["preset"])
        rest = {k: v for k, v in raw.items() if k != "preset"}
        return _merge(base, rest) | {"preset": raw["preset"]}
    return copy.deepcopy(raw)


def resolve(raw: dict, tol: float = None, threads: int = None) -> dict:
    """Fill defaults, apply CLI overrides and validate."""
    cfg = _merge(DEFAULTS, raw)
    if tol is not None:
        if not tol > 0:
            raise ConfigError("--tol must be positive")
        cfg["solver"]["tol"] = float(tol)
        cfg["cell"]["tol"] = float(tol)
    if threads is not None:
        cfg["threads"] = int(threads)
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> None:
    s = cfg["solver"]
    _require(s["tol"] > 0 and s["linear_tol"] > 0, "solver tolerances must be positive")
    _require(int(s["max_newton"]) >= 0 and int(s["damping_levels"]) >= 0, "iteration caps must be non-negative")
    _require(s["linear_solver"] in ("bicgstab", "gmres", "direct"), "solver.linear_solver must be bicgstab, gmres or direct")
    _require(cfg["threads"] is None or int(cfg["threads"]) >= 1, "threads must be at least 1")
    if "density" in cfg:
        density_from_config(cfg["density"])
    if "grid" in cfg:
        g = cfg["grid"]
        _require(g.get("dim") in (2, 3), "grid.dim must be 2 or 3")
        _require(len(g.get("L", [])) > 0 and all(L > 0 for L in g["L"]), "grid.L must be a non-empty list of positive lengths")
        _require(len(g.get("m", [])) > 0 and all(int(m) >= 8 for m in g["m"]), "grid.m entries must be at least 8")
        if "density" in cfg:
            _require(cfg["density"]["dim"] == g["dim"], "grid.dim and density.dim differ")
    r = cfg["radial"]
    for case in r["cases"]:
        _require(int(case.get("n", 0)) >= 2, "radial case needs n >= 2")
        _require(case.get("beta", 0) >= 2, "radial beta must be at least 2")
        _require(0 <= case.get("amp_d", 0) <= 1.0, "radial amp_d must lie in [0, 1]")
    _require(0 < r["r_min"] < r["r_max"] <= 1e6, "need 0 < radial.r_min < radial.r_max <= 1e6")
    _require(int(r["count"]) >= 3, "radial.count must be at least 3")
    a = cfg["analysis"]
    fr = a["annuli"]
    _require(len(fr) >= 4 and all(0 < x <= 1 for x in fr) and sorted(fr) == list(fr),
             "analysis.annuli must be at least four increasing fractions in (0, 1]")
    _require(int(a["K"]) >= 0, "analysis.K must be non-negative")
    if "manufactured" in cfg:
        mcfg = cfg["manufactured"]
        _require(len(mcfg.get("m", [])) >= 2, "manufactured.m needs at least two grids")
        _require(mcfg.get("L", 0) > 0, "manufactured.L must be positive")


def density_from_config(d: dict) -> DensitySpec:
    """Build a :class:`DensitySpec` from the ``[density]`` table."""
    try:
        dim = int(d["dim"])
        terms = []
        for c in d.get("coeffs", []):
            terms.append((tuple(c["freq"]), float(c.get("cos", 0.0)), float(c.get("sin", 0.0))))
        base = PeriodicDensitySpec(dim, tuple(d.get("periods", [1.0] * dim)), tuple(terms),
                                   float(d.get("mean", 1.0)), float(d.get("d0", 2.0)))
        return DensitySpec(base, float(d.get("amp_d", 0.0)), float(d.get("beta", 3.0)), float(d.get("d1", 2.0)))
    except KeyError as exc:
        raise ConfigError(f"density table is missing key {exc}") from exc
    except MalabError as exc:
        raise ConfigError(f"invalid density: {exc}") from exc
