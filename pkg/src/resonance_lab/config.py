"""Experiment configuration: INI files with sections, every key mirrored by a flag."""

from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import PreconditionError
from .nonlinearity import REGISTRY, STANDARD, DUAL

# section -> key -> (type, default).  None means "auto".
SCHEMA = {
    "domain": {
        "kind": (str, "interval"),
        "length": (float, math.pi),
        "quadrature_points_per_dim": (int, 64),
    },
    "nonlinearity": {
        "name": (str, "tanh"),
        "orientation": (str, STANDARD),
        "c": (float, 0.2),
        "c_plus": (float, None),
        "c_minus": (float, None),
        "c_min": (float, None),
        "c_max": (float, None),
        "fbar": (float, None),
        "g": (float, None),
    },
    "problem": {
        "k": (int, 1),
        "truncation_factor": (float, 12.0),
        "min_modes": (int, 8),
        "modes": (int, None),
    },
    "lambda": {
        "theta": (float, None),
        "levels": (int, 9),
        "grid": (str, "geometric"),
        "certify": (str, "auto"),
        "certify_count": (int, 3),
    },
    "lp": {
        "window": (float, None),
        "nodes_per_unit": (float, 40.0),
        "grading": (float, 2.0),
        "tol": (float, 1e-10),
        "max_iter": (int, 60),
    },
    "graph": {
        "n_radial": (int, 96),
        "n_angular": (int, 32),
        "box_factor": (float, 4.2),
        "theta_n_radial": (int, 48),
        "theta_n_angular": (int, 24),
        "invariance_points": (int, 3),
        "invariance_horizon": (float, 5.0),
    },
    "integrator": {
        "h": (float, None),
    },
    "attractor": {
        "cells": (int, 96),
        "test_points": (int, 4),
        "tau": (float, None),
        "dt": (float, 0.5),
    },
    "run": {
        "seed": (int, 0),
        "stage": (str, None),
        "out": (str, "results"),
        "cross_validate": (int, 1),
    },
}

TRUE_WORDS = {"true", "yes", "on"}
FALSE_WORDS = {"false", "no", "off"}


def _parse(section: str, key: str, raw):
    typ, _ = SCHEMA[section][key]
    if raw is None:
        return None
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() in ("", "auto", "none"):
            return None
        try:
            if typ is int:
                if text.lower() in TRUE_WORDS:
                    return 1
                if text.lower() in FALSE_WORDS:
                    return 0
                return int(text)
            return typ(text)
        except ValueError:
            raise PreconditionError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None
    return typ(raw)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})
    source: str | None = None

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise PreconditionError(f"unknown configuration key [{section}] {key}")
        self.values[section][key] = _parse(section, key, raw)

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig(copy.deepcopy(self.values), self.source)

    def validate(self) -> "ExperimentConfig":
        nl = self.values["nonlinearity"]
        if nl["name"] not in REGISTRY:
            raise PreconditionError(f"unknown nonlinearity {nl['name']!r}; known: {sorted(REGISTRY)}")
        if nl["orientation"] not in (STANDARD, DUAL):
            raise PreconditionError(f"orientation must be {STANDARD!r} or {DUAL!r}")
        if self.values["problem"]["k"] < 1:
            raise PreconditionError("k must be >= 1")
        grid = self.values["lambda"]["grid"]
        if grid != "geometric":
            parse_float_list(grid)
        cert = self.values["lambda"]["certify"]
        if cert is not None and cert != "auto":
            parse_float_list(cert)
        return self

    def nonlinearity_params(self) -> dict:
        nl = self.values["nonlinearity"]
        wanted = {
            "tanh": ("c",),
            "arctan": ("c", "fbar"),
            "modulated_tanh": ("c_min", "c_max"),
            "asymmetric_tanh": ("c_plus", "c_minus"),
            "constant": ("g",),
            "zero": (),
        }[nl["name"]]
        out = {}
        for key in wanted:
            if nl[key] is None and key != "fbar":
                raise PreconditionError(f"nonlinearity {nl['name']!r} needs parameter {key!r}")
            if nl[key] is not None:
                out[key] = nl[key]
        return out

    def as_dict(self) -> dict:
        return copy.deepcopy(self.values)


def parse_float_list(text: str) -> list:
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise PreconditionError(f"cannot parse {text!r} as a comma-separated list of numbers") from None
    if not vals:
        raise PreconditionError("empty number list")
    return vals


def load_config(path=None) -> ExperimentConfig:
    """Read an INI file (or a bundled config name) over the defaults."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg.validate()
    p = Path(path)
    if not p.exists():
        bundled = resources.files("resonance_lab") / "configs" / f"{path}.ini"
        if not bundled.is_file():
            raise PreconditionError(f"config {path!r} is neither a file nor a bundled config ({', '.join(bundled_configs())})")
        text = bundled.read_text()
        cfg.source = f"bundled:{path}"
    else:
        text = p.read_text()
        cfg.source = str(p)
    parser = configparser.ConfigParser()
    parser.read_string(text)
    for section in parser.sections():
        if section not in SCHEMA:
            raise PreconditionError(f"unknown configuration section [{section}]")
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg.validate()


def bundled_configs() -> list:
    root = resources.files("resonance_lab") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def flag_name(section: str, key: str) -> str:
    return f"--{section}-{key}".replace("_", "-")
