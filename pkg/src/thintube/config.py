"""Study configuration: INI text with sections, plus named presets.

Numbers accept ``pi`` and ``sqrt(..)`` (e.g. ``h = pi/32``); lists are
comma separated.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidInput

SUBCOMMANDS = ("cross-section", "effective", "tube", "broken-line", "gamma-lab", "invariants")

_RECT = "rectangle pi pi/sqrt(2)"


def parse_number(tok: str) -> float:
    """A float, optionally written with ``pi``, ``sqrt``, ``+-*/`` and parentheses."""
    import math

    tok = tok.strip()
    if not tok:
        raise InvalidInput("empty number")
    allowed = set("0123456789.eE+-*/() ")
    stripped = tok.replace("pi", "").replace("sqrt", "")
    if not set(stripped) <= allowed:
        raise InvalidInput(f"not a number: {tok!r}")
    try:
        val = eval(tok, {"__builtins__": {}}, {"pi": math.pi, "sqrt": math.sqrt})
    except Exception:
        raise InvalidInput(f"not a number: {tok!r}") from None
    if not isinstance(val, (int, float)) or val != val or val in (float("inf"), float("-inf")):
        raise InvalidInput(f"not a finite number: {tok!r}")
    return float(val)


def parse_list(text: str) -> list:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise InvalidInput("empty list")
    return [parse_number(t) for t in items]


@dataclass(frozen=True)
class StudyConfig:
    """Parsed configuration; typed getters validate on access."""
    text: str
    subcommand: str | None
    base_dir: Path
    parser: configparser.ConfigParser

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def get(self, section: str, key: str, default=None) -> str:
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is None:
            raise InvalidInput(f"missing [{section}] {key}")
        return default

    def number(self, section: str, key: str, default: float | None = None, positive: bool = False) -> float:
        if not self.parser.has_option(section, key):
            if default is None:
                raise InvalidInput(f"missing [{section}] {key}")
            val = float(default)
        else:
            val = parse_number(self.parser.get(section, key))
        if positive and not val > 0:
            raise InvalidInput(f"[{section}] {key} must be positive, got {val}")
        return val

    def integer(self, section: str, key: str, default: int | None = None, minimum: int | None = None) -> int:
        val = self.number(section, key, default)
        if val != int(val):
            raise InvalidInput(f"[{section}] {key} must be an integer")
        val = int(val)
        if minimum is not None and val < minimum:
            raise InvalidInput(f"[{section}] {key} must be >= {minimum}")
        return val

    def numbers(self, section: str, key: str, default: str | None = None, positive: bool = False) -> list:
        raw = self.get(section, key, default)
        vals = parse_list(raw)
        if positive and any(not v > 0 for v in vals):
            raise InvalidInput(f"[{section}] {key} entries must be positive")
        return vals


def load_config(text: str, base_dir: str | Path = ".", subcommand: str | None = None) -> StudyConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidInput(f"malformed config: {exc}") from None
    sub = parser.get("run", "subcommand", fallback=None)
    sub = sub.strip() if sub else None
    if sub is not None and sub not in SUBCOMMANDS:
        raise InvalidInput(f"unknown subcommand {sub!r} in config")
    if subcommand is not None and sub is not None and sub != subcommand:
        raise InvalidInput(f"config is for {sub!r}, not {subcommand!r}")
    return StudyConfig(text, subcommand or sub, Path(base_dir), parser)


def read_config(path: str | Path, subcommand: str | None = None) -> StudyConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read config {p}: {exc}") from None
    return load_config(text, p.parent, subcommand)


# -- presets -------------------------------------------------------------------

_BUMP_TUBE = f"""
[curve]
preset = bump
length = 10
n = 100
amplitude = 1.5
center = 5
halfwidth = 2
[section]
shape = {_RECT}
h = pi/32
"""

_TWIST_TUBE = f"""
[curve]
preset = twisted
length = 10
n = 100
amplitude = 1
center = 5
halfwidth = 2
[section]
shape = {_RECT}
h = pi/16
"""

PRESETS = {
    # acceptance criteria
    "acc-1": ("tube", _BUMP_TUBE + """
[study]
n = 0
eps_list = 0.2, 0.1, 0.05
j_max = 3
[acceptance]
criterion = 1
"""),
    "acc-2": ("tube", _TWIST_TUBE + """
[study]
n = 1
eps_list = 0.2, 0.1, 0.05
j_max = 3
[acceptance]
criterion = 2
"""),
    "acc-3": ("tube", _BUMP_TUBE.replace("pi/32", "pi/16") + """
[study]
n = 1
eps_list = 0.2, 0.1, 0.05
j_max = 1
leak_j = 0
[acceptance]
criterion = 3
"""),
    "acc-4": ("cross-section", f"""
[section]
shape = {_RECT}
h = pi/64
n_modes = 3
[curvature]
xi_list = 0.02, 0.04, 0.06, 0.08
directions = 1 0; 0 1; 1 1
complement = minmax
[acceptance]
criterion = 4
"""),
    "acc-5": ("cross-section", f"""
[section]
shape = {_RECT}
h = pi/128
n_modes = 3
[acceptance]
criterion = 5
"""),
    "acc-6": ("broken-line", """
[broken_line]
base = square-well
v0 = 1
n_cells = 2000
delta_list = 0.4, 0.2, 0.1
k_list = 0.1
[acceptance]
criterion = 6
"""),
    "acc-7": ("gamma-lab", """
[gamma]
family = all
n_families = 100
dim = 50
[acceptance]
criterion = 7
"""),
    "acc-8": ("invariants", """
[acceptance]
criterion = 8
"""),
    # plain studies
    "straight-tube": ("tube", f"""
[curve]
preset = straight
length = 10
n = 50
[section]
shape = {_RECT}
h = pi/16
[study]
n = 0
eps_list = 0.2, 0.1, 0.05
j_max = 3
"""),
    "bent-tube": ("tube", _BUMP_TUBE.replace("pi/32", "pi/16") + """
[study]
n = 0
eps_list = 0.2, 0.1, 0.05
j_max = 3
"""),
    "twisted-tube": ("tube", _TWIST_TUBE + """
[study]
n = 1
eps_list = 0.2, 0.1, 0.05
j_max = 3
"""),
    "rectangle": ("cross-section", f"""
[section]
shape = {_RECT}
h = pi/32
n_modes = 4
"""),
    "disc": ("cross-section", """
[section]
shape = disc 1
h = 0.02
n_modes = 2
"""),
    "square": ("cross-section", """
[section]
shape = rectangle pi pi
h = pi/32
n_modes = 3
"""),
    "bump-effective": ("effective", _BUMP_TUBE.replace("pi/32", "pi/16") + """
[study]
n = 0
j_max = 3
halfwidth = 20
"""),
    "square-well-resonant": ("broken-line", """
[broken_line]
base = square-well
v0 = pi**2
n_cells = 2000
delta_list = 0.4, 0.2, 0.1
k_list = 0.05, 0.1, 0.2
"""),
    "square-well": ("broken-line", """
[broken_line]
base = square-well
v0 = 1
n_cells = 2000
delta_list = 0.4, 0.2, 0.1
k_list = 0.05, 0.1, 0.2
"""),
    "zero-mean": ("broken-line", """
[broken_line]
base = zero-mean
delta_list = 0.4, 0.2, 0.1
k_list = 0.1
"""),
    "perturbation": ("gamma-lab", """
[gamma]
family = perturbation
dim = 10
n_families = 10
"""),
}


def preset(name: str) -> StudyConfig:
    if name not in PRESETS:
        raise InvalidInput(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    sub, text = PRESETS[name]
    text = f"[run]\nsubcommand = {sub}\npreset = {name}\n" + text
    return load_config(text, ".", sub)
