"""Experiment configuration files.

An INI file with an ``[experiment]`` section naming the ``kind`` plus
sections for the system, measurement, sweep, noise and output. Values are
arithmetic expressions over numbers, ``pi``, ``e``, ``sqrt``, ``exp`` and the
imaginary unit ``i`` (or ``j``), e.g. ``1.24 + 1.24i`` or ``pi/4``. Lists are
comma separated; ``start:stop:step`` expands to an inclusive range.

Example::

    [experiment]
    kind = sweep-k
    name = fig1a
    seed = 0

    [system]
    alpha = 0.8
    beta = 2
    tau = pi

    [measurement]
    type = homodyne
    x = 0
    theta = 0, pi/4, pi/2

    [sweep]
    k = 0.1:2:0.05
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field
import math
import operator
from pathlib import Path
import re

import numpy as np

from .errors import ConfigError

__all__ = ["ExperimentConfig", "KINDS", "load_config", "parse_value", "parse_list"]

KINDS = (
    "sweep-k",
    "sweep-x-theta",
    "sweep-sigma",
    "wigner-grid",
    "fidelity-opt",
    "dissipative",
    "thermal",
    "subtraction",
)

_NAMES = {"pi": math.pi, "e": math.e, "i": 1j, "j": 1j}
_FUNCS = {"sqrt": np.sqrt, "exp": np.exp, "cos": math.cos, "sin": math.sin}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_IMAG_SUFFIX = re.compile(r"(\d(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)\s*[ij]\b")


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval(node.operand))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return complex(_FUNCS[node.func.id](*[_eval(a) for a in node.args]))
    raise ValueError(f"unsupported expression element {ast.dump(node)}")


def parse_value(text: str) -> complex | float:
    """Evaluate one scalar expression; returns ``float`` when the value is real."""
    src = _IMAG_SUFFIX.sub(r"\1j", text.strip())
    try:
        val = _eval(ast.parse(src, mode="eval"))
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot evaluate {text!r}: {exc}") from None
    val = complex(val)
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise ValueError(f"{text!r} is not finite")
    return val.real if val.imag == 0 else val


def parse_list(text: str) -> list:
    """Comma-separated values, each a scalar or an inclusive ``start:stop:step`` range."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise ValueError(f"range {item!r} must be start:stop:step")
            start, stop, step = (parse_value(p) for p in parts)
            if any(isinstance(v, complex) for v in (start, stop, step)):
                raise ValueError(f"range {item!r} must be real")
            if not step > 0 or stop < start:
                raise ValueError(f"range {item!r} needs step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9))
            out.extend(start + step * np.arange(n + 1))
        else:
            out.append(parse_value(item))
    if not out:
        raise ValueError("empty list")
    return [float(v) if not isinstance(v, complex) else v for v in out]


@dataclass
class ExperimentConfig:
    """Parsed configuration; ``sections`` keeps raw strings for diagnostics."""

    kind: str
    name: str
    seed: int
    path: Path | None
    sections: dict = field(default_factory=dict)

    def _raw(self, section, key):
        try:
            return self.sections[section][key]
        except KeyError:
            raise ConfigError(f"{self._where(section, key)}: missing required key") from None

    def _where(self, section, key):
        src = self.path.name if self.path else "<config>"
        return f"{src} [{section}] {key}"

    def has(self, section, key) -> bool:
        return key in self.sections.get(section, {})

    def value(self, section, key, default=None, real=False):
        if default is not None and not self.has(section, key):
            return default
        raw = self._raw(section, key)
        try:
            v = parse_value(raw)
        except ValueError as exc:
            raise ConfigError(f"{self._where(section, key)}: {exc}") from None
        if real and isinstance(v, complex):
            raise ConfigError(f"{self._where(section, key)}: expected a real value, got {raw!r}")
        return v

    def values(self, section, key, default=None, real=False) -> list:
        if default is not None and not self.has(section, key):
            return list(default)
        raw = self._raw(section, key)
        try:
            v = parse_list(raw)
        except ValueError as exc:
            raise ConfigError(f"{self._where(section, key)}: {exc}") from None
        if real and any(isinstance(x, complex) for x in v):
            raise ConfigError(f"{self._where(section, key)}: expected real values, got {raw!r}")
        return v

    def text(self, section, key, default=None) -> str:
        if default is not None and not self.has(section, key):
            return default
        return self._raw(section, key).strip()

    def flag(self, section, key, default=False) -> bool:
        if not self.has(section, key):
            return default
        raw = self._raw(section, key).strip().lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self._where(section, key)}: expected a boolean, got {raw!r}")

    def integer(self, section, key, default=None) -> int:
        v = self.value(section, key, default, real=True)
        if v != int(v):
            raise ConfigError(f"{self._where(section, key)}: expected an integer")
        return int(v)

    def as_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.sections.items()}


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    """Read and minimally validate a configuration file.

    Raises:
        ConfigError: with the file, line or section/key of the problem.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    if "experiment" not in sections:
        raise ConfigError(f"{path}: missing [experiment] section")
    kind = sections["experiment"].get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"{path} [experiment] kind: {kind!r} is not one of {', '.join(KINDS)}")
    name = sections["experiment"].get("name", path.stem).strip()
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError(f"{path} [experiment] name: {name!r} is not a valid file stem")
    cfg = ExperimentConfig(kind, name, 0, path, sections)
    cfg.seed = seed if seed is not None else cfg.integer("experiment", "seed", 0)
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError(f"{path} [experiment] seed: must be in [0, 2^64)")
    return cfg
