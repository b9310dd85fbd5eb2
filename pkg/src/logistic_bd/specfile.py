"""Experiment spec files.

Grammar (one entry per line)::

    line    := blank | comment | entry
    comment := '#' any-text
    entry   := key '=' value (',' value)*

Keys are case-sensitive and must come from :data:`KEYS`; an unknown or
repeated key is an error.  List-valued keys (``lam``, ``mu``, ``theta``,
``m``, ``a``) define a Cartesian grid; ``lam_equals_mu = true`` replaces the
``lam`` axis by ``lam = mu`` for critical sweeps.  Example::

    # desk-scale reproduction of the subcritical figure
    name = figure1-desk
    lam = 1
    mu = 1.5, 2, 3
    theta = 0.005
    m = 200
    replicates = 400
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ParameterError
from .model import ModelParams

LIST_KEYS = ("lam", "mu", "theta", "m", "a")
SCALAR_KEYS = {
    "name": str,
    "replicates": int,
    "seed": int,
    "out": str,
    "tolerance": float,
    "law": str,
    "horizon": int,
    "note": str,
    "lam_equals_mu": lambda text: _parse_bool(text),
}
KEYS = LIST_KEYS + tuple(SCALAR_KEYS)


class SpecError(ParameterError):
    """Malformed spec file."""


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ValueError(text)


@dataclass(frozen=True)
class GridPoint:
    index: int
    params: ModelParams
    m: Optional[int]
    a: Optional[float]

    def start(self) -> int:
        """Initial state: ``m`` if given, else ``round(a / theta)``."""
        if self.m is not None:
            return self.m
        if self.a is None or self.params.theta == 0:
            raise ParameterError("grid point needs m, or a with theta > 0")
        return int(round(self.a / self.params.theta))

    def scaled_start(self) -> Optional[float]:
        if self.a is not None:
            return self.a
        if self.m is not None and self.params.theta > 0:
            return self.m * self.params.theta
        return None


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    lam: tuple = (1.0,)
    mu: tuple = (1.0,)
    theta: tuple = (0.0,)
    m: tuple = ()
    a: tuple = ()
    replicates: int = 100
    seed: int = 0
    out: Optional[str] = None
    tolerance: Optional[float] = None
    law: Optional[str] = None
    horizon: Optional[int] = None
    note: str = ""
    lam_equals_mu: bool = False

    def grid(self) -> list[GridPoint]:
        """Grid points in canonical order (the order of the lists in the spec)."""
        if not (self.lam and self.mu and self.theta):
            raise SpecError("lam, mu and theta must be non-empty")
        starts = [(int(m), None) for m in self.m] + [(None, float(a)) for a in self.a]
        if not starts:
            starts = [(None, None)]
        lams = (None,) if self.lam_equals_mu else self.lam
        points = []
        for n, (lam, mu, theta, (m, a)) in enumerate(
            itertools.product(lams, self.mu, self.theta, starts)
        ):
            lam = mu if lam is None else lam
            points.append(GridPoint(n, ModelParams(float(lam), float(mu), float(theta)), m, a))
        if not points:
            raise SpecError("empty parameter grid")
        return points

    def with_overrides(self, **kw) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _parse_number(text: str, key: str):
    try:
        value = float(text)
    except ValueError:
        raise SpecError(f"{key}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise SpecError(f"{key}: must be finite")
    if key == "m":
        if value != int(value):
            raise SpecError(f"m must be an integer, got {text!r}")
        return int(value)
    return value


def parse_spec(text: str) -> ExperimentSpec:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value'")
        key, _, rhs = (s.strip() for s in line.partition("="))
        if key not in KEYS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise SpecError(f"line {lineno}: repeated key {key!r}")
        if key in LIST_KEYS:
            items = [s.strip() for s in rhs.split(",")]
            if not all(items):
                raise SpecError(f"line {lineno}: empty list item for {key!r}")
            values[key] = tuple(_parse_number(s, key) for s in items)
        else:
            try:
                values[key] = SCALAR_KEYS[key](rhs)
            except ValueError:
                raise SpecError(f"line {lineno}: bad value for {key!r}: {rhs!r}") from None
    return ExperimentSpec(**values)


def load_spec(path) -> ExperimentSpec:
    """Load a spec from a path, or by name from the bundled spec files."""
    p = Path(path)
    if p.exists():
        return parse_spec(p.read_text())
    name = p.name if p.suffix else p.name + ".spec"
    bundled = resources.files("logistic_bd").joinpath("specs", name)
    if bundled.is_file():
        return parse_spec(bundled.read_text())
    raise SpecError(f"no spec file {path!r}")


def bundled_specs() -> list[str]:
    folder = resources.files("logistic_bd").joinpath("specs")
    return sorted(f.name[:-5] for f in folder.iterdir() if f.name.endswith(".spec"))
