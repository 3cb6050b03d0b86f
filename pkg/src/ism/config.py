"""Scenario configuration: a small INI-style grammar with strict validation.

Grammar (documented in the README): UTF-8 text of `[section]` headers and
`key = value` lines; `#` starts a comment; blank lines ignored.  Unknown
sections or keys, type mismatches, range violations, and duplicate keys are
all reported with line numbers (duplicates name both lines).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

MODELS = ("deterministic", "free_space", "stochastic", "monokinetic_1d",
          "polar_2d", "line_chain", "equilibrium_scan")
KERNEL_TAGS = ("constant", "multiplicative", "distance", "rank")
PROFILES = ("indicator", "smooth_bump", "table")
INIT_NAMES = ("uniform_sphere", "aligned_perturbed", "two_groups", "equilibrium",
              "circle_chain", "helix_chain", "uniform_field_perturbed",
              "rotating_state", "beta_j_scan")


class ConfigError(ValueError):
    """Carries the full list of (line, message) validation failures."""

    def __init__(self, errors: list):
        self.errors = errors
        lines = "\n".join(f"  line {ln}: {msg}" if ln else f"  {msg}"
                          for ln, msg in errors)
        super().__init__(f"invalid configuration:\n{lines}")


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    val = float(text)
    if val != int(val):
        raise ValueError("not an integer")
    return int(val)


def _str(text: str) -> str:
    return text


def _float_list(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


# (parser, default, validator description, validator)
_SCHEMA = {
    "model": {
        "kind": (_str, None, f"one of {MODELS}", lambda v: v in MODELS),
    },
    "params": {
        "v": (_float, 1.0, "> 0", lambda v: v > 0),
        "j": (_float, 1.0, ">= 0", lambda v: v >= 0),
        "eta": (_float, 0.0, ">= 0", lambda v: v >= 0),
        "nu": (_float, 0.0, ">= 0", lambda v: v >= 0),
        "n": (_int, 100, ">= 1", lambda v: v >= 1),
    },
    "kernel": {
        "tag": (_str, "constant", f"one of {KERNEL_TAGS}", lambda v: v in KERNEL_TAGS),
        "c": (_float, 1.0, "> 0", lambda v: v > 0),
        "q": (_float, 0.0, "in [0, 1] (distance class)", lambda v: 0.0 <= v <= 1.0),
        "profile": (_str, "indicator", f"one of {PROFILES}", lambda v: v in PROFILES),
        "radius": (_float, 1.0, "> 0", lambda v: v > 0),
        "height": (_float, 1.0, ">= 0", lambda v: v >= 0),
        "rates": (_float_list, None, "positive floats", lambda v: all(x > 0 for x in v)),
        "table_r": (_float_list, None, "ascending radii from 0", lambda v: len(v) >= 2),
        "table_v": (_float_list, None, "nonincreasing values", lambda v: len(v) >= 2),
        "include_self": (_str, "true", "true or false", lambda v: v in ("true", "false")),
    },
    "integration": {
        "dt": (_float, 1e-3, "> 0", lambda v: v > 0),
        "t_end": (_float, 10.0, ">= 0", lambda v: v >= 0),
        "stride": (_int, 100, ">= 1", lambda v: v >= 1),
        "seed": (_int, None, "64-bit integer", lambda v: True),
        "x_update": (_str, "chord", "chord or arc", lambda v: v in ("chord", "arc")),
        "order": (_int, 2, "2 or 4", lambda v: v in (2, 4)),
        "store_states": (_str, "true", "true or false", lambda v: v in ("true", "false")),
    },
    "init": {
        "name": (_str, None, f"one of {INIT_NAMES}", lambda v: v in INIT_NAMES),
        "spin_sigma": (_float, 1.0, ">= 0", lambda v: v >= 0),
        "delta": (_float, 0.1, ">= 0", lambda v: v >= 0),
        "beta_j": (_float, None, ">= 0", lambda v: v >= 0),
        "beta": (_float, None, "> 0", lambda v: v > 0),
        "box": (_float, 1.0, "> 0", lambda v: v > 0),
        "radius": (_float, 1.0, "> 0", lambda v: v > 0),
        "pitch": (_float, 0.3, "any real", lambda v: True),
        "gamma": (_float, 1.0, "> 0", lambda v: v > 0),
        "lam": (_float, None, "> 0", lambda v: v > 0),
        "samples": (_int, 512, ">= 8", lambda v: v >= 8),
        "cells": (_int, 512, ">= 8", lambda v: v >= 8),
        "length": (_float, 2.0 * np.pi, "> 0", lambda v: v > 0),
        "rho": (_float, 1.0, "> 0", lambda v: v > 0),
        "amplitude": (_float, 1e-4, ">= 0", lambda v: v >= 0),
        "wavenumber": (_int, 1, ">= 1", lambda v: v >= 1),
        "half_extent": (_float, 3.0, "> 0", lambda v: v > 0),
        "r_center": (_float, 1.5, "> 0", lambda v: v > 0),
        "r_width": (_float, 0.5, "> 0", lambda v: v > 0),
        "min": (_float, 0.5, ">= 0", lambda v: v >= 0),
        "max": (_float, 10.0, "> 0", lambda v: v > 0),
        "steps": (_int, 96, ">= 2", lambda v: v >= 2),
    },
    "output": {
        "directory": (_str, "runs/out", "path", lambda v: len(v) > 0),
        "formats": (_str, "csv,json", "csv,json subset", lambda v: set(
            t.strip() for t in v.split(",")) <= {"csv", "json"}),
    },
}


@dataclass
class ScenarioConfig:
    """Validated scenario: one section dict per schema section."""

    model: str
    params: dict
    kernel: dict
    integration: dict
    init: dict
    output: dict
    source: dict = dc_field(default_factory=dict)

    def echo(self) -> dict:
        """Round-trippable plain-dict form (written into summary.json)."""
        return {
            "model": {"kind": self.model},
            "params": dict(self.params),
            "kernel": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.kernel.items() if v is not None},
            "integration": {k: v for k, v in self.integration.items() if v is not None},
            "init": {k: v for k, v in self.init.items() if v is not None},
            "output": dict(self.output),
        }


def render_config(config: ScenarioConfig) -> str:
    """Print a config back to the INI grammar (parse(render(c)) == c)."""
    out = []
    for section, values in (("model", {"kind": config.model}),
                            ("params", config.params),
                            ("kernel", config.kernel),
                            ("integration", config.integration),
                            ("init", config.init),
                            ("output", config.output)):
        out.append(f"[{section}]")
        for key, val in values.items():
            if val is None:
                continue
            if isinstance(val, tuple):
                val = " ".join(repr(x) for x in val)
            elif isinstance(val, float):
                val = repr(val)
            out.append(f"{key} = {val}")
        out.append("")
    return "\n".join(out)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate; raises ConfigError listing every failure."""
    errors: list = []
    seen: dict = {}
    values: dict = {sec: {} for sec in _SCHEMA}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((lineno, f"malformed section header {raw.strip()!r}"))
                section = None
                continue
            name = line[1:-1].strip().lower()
            if name not in _SCHEMA:
                errors.append((lineno, f"unknown section [{name}]"))
                section = None
            else:
                section = name
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'key = value', got {raw.strip()!r}"))
            continue
        if section is None:
            errors.append((lineno, "key outside any valid section"))
            continue
        key, _, val = line.partition("=")
        key = key.strip().lower()
        val = val.strip()
        spec = _SCHEMA[section].get(key)
        if spec is None:
            errors.append((lineno, f"unknown key {key!r} in section [{section}]"))
            continue
        if (section, key) in seen:
            errors.append((lineno, f"duplicate key {key!r} in [{section}], "
                                   f"first set on line {seen[(section, key)]}"))
            continue
        seen[(section, key)] = lineno
        parser, _, want, check = spec
        try:
            parsed = parser(val)
        except ValueError:
            errors.append((lineno, f"{key!r} must be {want}, got {val!r}"))
            continue
        if not check(parsed):
            errors.append((lineno, f"{key!r} out of range: expected {want}, got {val!r}"))
            continue
        values[section][key] = parsed

    # fill defaults
    for sec, keys in _SCHEMA.items():
        for key, (_, default, _, _) in keys.items():
            values[sec].setdefault(key, default)

    model = values["model"]["kind"]
    if model is None:
        errors.append((0, "missing [model] kind"))
    if values["init"]["name"] is None and model not in ("equilibrium_scan", "polar_2d", None):
        errors.append((0, "missing [init] name"))

    # cross-field checks
    if model in ("deterministic", "free_space", "stochastic"):
        tag = values["kernel"]["tag"]
        if model == "stochastic":
            if tag != "constant":
                errors.append((0, "the stochastic system uses constant communication "
                                  "rates (kernel tag must be 'constant')"))
            if values["params"]["nu"] > 0 and values["integration"]["seed"] is None:
                errors.append((0, "stochastic runs require an explicit seed"))
        if model == "free_space" and tag not in ("constant", "multiplicative"):
            errors.append((0, "free_space needs a constant or multiplicative kernel"))
        if tag == "multiplicative":
            rates = values["kernel"]["rates"]
            if rates is not None and len(rates) != values["params"]["n"]:
                errors.append((0, f"kernel rates length {len(rates)} != N = "
                                  f"{values['params']['n']}"))
    if values["kernel"]["tag"] == "table":
        pass
    if values["kernel"]["profile"] == "table":
        if values["kernel"]["table_r"] is None or values["kernel"]["table_v"] is None:
            errors.append((0, "table profile needs table_r and table_v"))
    if model == "line_chain" and values["kernel"]["tag"] not in ("distance", "rank"):
        errors.append((0, "line_chain needs a distance or rank kernel (sets j)"))
    if model in ("monokinetic_1d", "polar_2d") and values["kernel"]["tag"] not in ("distance", "rank"):
        errors.append((0, "grid models need a distance or rank kernel (sets j)"))
    init_name = values["init"]["name"]
    if init_name == "equilibrium" and values["init"]["beta_j"] is None:
        errors.append((0, "equilibrium init needs beta_j"))

    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e[0]))
    return ScenarioConfig(model=model, params=values["params"], kernel=values["kernel"],
                          integration=values["integration"], init=values["init"],
                          output=values["output"], source=seen)
