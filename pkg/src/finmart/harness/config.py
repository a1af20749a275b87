"""Experiment configuration: an INI file of ``key = value`` lines in sections.

Rationals are written exactly as "p/q" (decimals are read exactly too),
points as comma-separated coordinates, several points separated by ";",
and counterexample functions as "const c" or "affine a b".
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .._exact import as_fraction, fraction_text
from ..metastability import CounterexampleFunction, EvaluationBudget

KINDS = ("simulate", "verify", "bound", "delta", "km")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    theorem: str | None = None
    M: int = 1000
    N: int = 100
    master_seed: int = 0
    process: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    km: dict = field(default_factory=dict)
    budget: EvaluationBudget | None = None
    output: dict = field(default_factory=dict)

    def rational(self, key: str, default=None, section: str = "params") -> Fraction:
        raw = getattr(self, section).get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing [{section}] {key}")
            return as_fraction(default)
        try:
            return as_fraction(raw)
        except (ValueError, ZeroDivisionError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a rational") from exc

    def integer(self, key: str, default: int | None = None, section: str = "params") -> int:
        value = self.rational(key, default, section)
        if value.denominator != 1:
            raise ConfigError(f"[{section}] {key} must be an integer")
        return int(value)

    def rationals(self, key: str, default=None, section: str = "params") -> list[Fraction]:
        raw = getattr(self, section).get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing [{section}] {key}")
            return [as_fraction(x) for x in default]
        return [as_fraction(x) for x in raw.replace(",", " ").split()]

    def point(self, key: str, default=None, section: str = "km") -> np.ndarray:
        return np.array([float(x) for x in self.rationals(key, default, section)])

    def points(self, key: str, default: str = "", section: str = "km") -> list[np.ndarray]:
        raw = getattr(self, section).get(key, default)
        out = []
        for chunk in raw.split(";"):
            if chunk.strip():
                out.append(np.array([float(as_fraction(x)) for x in chunk.replace(",", " ").split()]))
        return out

    def g_function(self, key: str = "g", default: str = "const 1") -> CounterexampleFunction:
        try:
            return CounterexampleFunction.parse(self.params.get(key, default))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "theorem": self.theorem,
            "ensemble": {"M": self.M, "N": self.N, "master_seed": self.master_seed},
            "process": dict(sorted(self.process.items())),
            "params": dict(sorted(self.params.items())),
            "km": dict(sorted(self.km.items())),
            "budget": None if self.budget is None else
            {"steps": self.budget.max_steps, "bits": self.budget.max_bits},
        }


def _int(section: configparser.SectionProxy, key: str, default: int) -> int:
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not an integer") from exc


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    kind = exp.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"[experiment] kind must be one of {', '.join(KINDS)}")
    config = ExperimentConfig(kind=kind, theorem=exp.get("theorem"))
    if parser.has_section("ensemble"):
        ens = parser["ensemble"]
        config.M = _int(ens, "M", config.M)
        config.N = _int(ens, "N", config.N)
        config.master_seed = _int(ens, "master_seed", config.master_seed)
    if config.M < 1 or config.N < 1:
        raise ConfigError("[ensemble] needs M >= 1 and N >= 1")
    if not 0 <= config.master_seed < 2**64:
        raise ConfigError("[ensemble] master_seed must lie in [0, 2**64)")
    for name in ("process", "params", "km", "output"):
        if parser.has_section(name):
            setattr(config, name, dict(parser[name]))
    if parser.has_section("budget"):
        section = parser["budget"]
        try:
            config.budget = EvaluationBudget(_int(section, "steps", EvaluationBudget.max_steps),
                                             _int(section, "bits", EvaluationBudget.max_bits))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def rational_text(x) -> str:
    return fraction_text(as_fraction(x))
