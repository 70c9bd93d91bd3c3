"""Scenario files: a small sectioned key = value format.

Example::

    [scenario]
    kind = jc
    name = rabi
    seed = 7
    unit = 2pi*MHz

    [params]
    g = 1.0
    cutoff = 5

    [sweep]
    parameter = g
    values = 0.5, 1.0, 2.0

    [outputs]
    observables = p_g1, n_cav

Blank lines and lines starting with ``#`` or ``;`` are ignored. Frequencies
are given in the declared ``unit`` and times in its inverse; the
corresponding SI values (rad/s and s) are computed once at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType

from .schema import KINDS, FREQ, TIME, ParamSpec

SECTIONS = ("scenario", "params", "sweep", "outputs", "program")
SCENARIO_KEYS = ("kind", "name", "seed", "unit")
_UNIT_RE = re.compile(r"^(?:(2pi|2\*pi)\s*\*\s*)?(Hz|kHz|MHz|GHz)$")
_SCALE = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ConfigError(Exception):
    """Scenario parse or validation failure with a machine-readable code."""

    def __init__(self, code: str, message: str, line: int | None = None,
                 column: int | None = None):
        self.code, self.message, self.line, self.column = code, message, line, column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{code}: {message}{where}")

    def as_dict(self) -> dict:
        return {"error": self.code, "message": self.message,
                "line": self.line, "column": self.column}


def unit_factor(unit: str) -> float:
    """Angular frequency in rad/s of one declared unit.

    Accepts ``rad/s``, ``1`` (natural units, factor 1), ``Hz``-family
    names (cycles per second, multiplied by 2 pi) and ``2pi*MHz``-style
    names, which mean the same thing written explicitly.
    """
    unit = unit.strip()
    if unit in ("rad/s", "1"):
        return 1.0
    m = _UNIT_RE.match(unit)
    if not m:
        raise ValueError(f"unknown unit {unit!r}")
    return 2 * math.pi * _SCALE[m.group(2)]


@dataclass(frozen=True)
class Scenario:
    kind: str
    name: str
    params: MappingProxyType
    seed: int = 0
    unit: str = "1"
    sweep: tuple[str, tuple] | None = None
    outputs: tuple[str, ...] = ()
    program: tuple[str, ...] = ()
    si: MappingProxyType = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        params = MappingProxyType(dict(self.params))
        object.__setattr__(self, "params", params)
        factor = unit_factor(self.unit)
        schema = KINDS[self.kind].param_map
        si = {}
        for k, v in params.items():
            dim = schema[k].dim
            if dim == FREQ:
                si[k] = v * factor
            elif dim == TIME:
                si[k] = v / factor
            else:
                si[k] = v
        object.__setattr__(self, "si", MappingProxyType(si))

    def exact(self, key: str) -> Fraction:
        """Decimal value of a numeric parameter as written, as an exact fraction."""
        return Fraction(repr(self.params[key]))

    def with_params(self, **updates) -> "Scenario":
        params = dict(self.params)
        params.update(updates)
        return Scenario(self.kind, self.name, params, self.seed, self.unit, self.sweep,
                        self.outputs, self.program)

    def points(self) -> list[tuple[int, object, "Scenario"]]:
        """``(index, value, scenario)`` for every sweep point (one if no sweep)."""
        if self.sweep is None:
            return [(0, None, self)]
        name, values = self.sweep
        return [(i, v, self.with_params(**{name: v})) for i, v in enumerate(values)]


@dataclass
class _Entry:
    value: str
    line: int
    column: int
    key_column: int


def _split_sections(text: str):
    sections: dict[str, dict[str, _Entry]] = {}
    headers: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("SYNTAX_ERROR", "unterminated section header", lineno,
                                  indent + 1)
            name = stripped[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError("UNKNOWN_SECTION", f"unknown section [{name}]", lineno,
                                  indent + 1)
            if name in sections:
                raise ConfigError("DUPLICATE_KEY", f"section [{name}] appears twice", lineno,
                                  indent + 1)
            sections[name] = {}
            headers[name] = lineno
            current = name
            continue
        if "=" not in stripped:
            raise ConfigError("SYNTAX_ERROR", "expected 'key = value'", lineno, indent + 1)
        if current is None:
            raise ConfigError("SYNTAX_ERROR", "key outside of any section", lineno, indent + 1)
        key, value = raw.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError("SYNTAX_ERROR", "empty key", lineno, indent + 1)
        if key in sections[current]:
            raise ConfigError("DUPLICATE_KEY", f"duplicate key {key!r} in [{current}]",
                              lineno, indent + 1)
        value_col = len(raw.split("=", 1)[0]) + 2 + (len(value) - len(value.lstrip()))
        sections[current][key] = _Entry(value.strip(), lineno, value_col, indent + 1)
    return sections, headers


def _convert(spec: ParamSpec, entry: _Entry):
    try:
        return spec.parse(entry.value)
    except ValueError as exc:
        raise ConfigError("BAD_VALUE", f"{spec.name}: {exc}", entry.line,
                          entry.column) from None


def _check_range(spec: ParamSpec, value, entry: _Entry | None):
    problem = spec.range_problem(value)
    if problem:
        line = entry.line if entry else None
        col = entry.column if entry else None
        raise ConfigError("OUT_OF_RANGE", f"{spec.name} = {value!r}: {problem}", line, col)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text; raises :class:`ConfigError`."""
    sections, headers = _split_sections(text)
    head = sections.get("scenario")
    if head is None:
        raise ConfigError("MISSING_PARAMETER", "missing [scenario] section", 1, 1)
    for key, entry in head.items():
        if key not in SCENARIO_KEYS:
            raise ConfigError("UNKNOWN_PARAMETER", f"unknown scenario key {key!r}",
                              entry.line, entry.key_column)
    if "kind" not in head:
        raise ConfigError("MISSING_PARAMETER", "scenario kind is required",
                          headers["scenario"], 1)
    kind_entry = head["kind"]
    kind = kind_entry.value
    if kind not in KINDS:
        raise ConfigError("UNKNOWN_KIND", f"unknown scenario kind {kind!r}; known: "
                          + ", ".join(sorted(KINDS)), kind_entry.line, kind_entry.column)
    schema = KINDS[kind]

    name = head["name"].value if "name" in head else kind
    if not _NAME_RE.match(name):
        e = head["name"]
        raise ConfigError("BAD_VALUE", f"name {name!r} must match {_NAME_RE.pattern}",
                          e.line, e.column)
    seed = 0
    if "seed" in head:
        e = head["seed"]
        try:
            seed = int(e.value)
        except ValueError:
            raise ConfigError("BAD_VALUE", f"seed must be an integer, got {e.value!r}",
                              e.line, e.column) from None
        if seed < 0:
            raise ConfigError("OUT_OF_RANGE", "seed must be non-negative", e.line, e.column)
    unit = "1"
    if "unit" in head:
        e = head["unit"]
        unit = e.value
        try:
            unit_factor(unit)
        except ValueError as exc:
            raise ConfigError("BAD_UNIT", str(exc), e.line, e.column) from None

    params = {}
    entries = sections.get("params", {})
    for key, entry in entries.items():
        if key not in schema.param_map:
            raise ConfigError("UNKNOWN_PARAMETER", f"kind {kind!r} has no parameter {key!r}",
                              entry.line, entry.key_column)
        params[key] = _convert(schema.param_map[key], entry)
    for spec in schema.params:
        if spec.name not in params and spec.required:
            raise ConfigError("MISSING_PARAMETER",
                              f"kind {kind!r} requires parameter {spec.name!r}",
                              headers.get("params", headers["scenario"]), 1)

    sweep = None
    if "sweep" in sections:
        sw = sections["sweep"]
        for key, entry in sw.items():
            if key not in ("parameter", "values"):
                raise ConfigError("UNKNOWN_PARAMETER", f"unknown sweep key {key!r}",
                                  entry.line, entry.key_column)
        if "parameter" not in sw or "values" not in sw:
            raise ConfigError("MISSING_PARAMETER", "[sweep] needs 'parameter' and 'values'",
                              headers["sweep"], 1)
        pe, ve = sw["parameter"], sw["values"]
        if pe.value not in schema.param_map:
            raise ConfigError("UNKNOWN_SWEEP_PARAMETER",
                              f"kind {kind!r} has no parameter {pe.value!r} to sweep",
                              pe.line, pe.column)
        spec = schema.param_map[pe.value]
        if spec.is_list:
            raise ConfigError("UNKNOWN_SWEEP_PARAMETER",
                              f"list parameter {pe.value!r} cannot be swept", pe.line, pe.column)
        items = [v.strip() for v in ve.value.split(",")]
        if not items or any(not v for v in items):
            raise ConfigError("BAD_VALUE", "sweep values must be a comma-separated list",
                              ve.line, ve.column)
        values = tuple(_convert(spec, _Entry(v, ve.line, ve.column, ve.key_column))
                       for v in items)
        for v in values:
            _check_range(spec, v, ve)
        sweep = (pe.value, values)

    outputs: tuple[str, ...] = ()
    if "outputs" in sections:
        out = sections["outputs"]
        for key, entry in out.items():
            if key != "observables":
                raise ConfigError("UNKNOWN_PARAMETER", f"unknown outputs key {key!r}",
                                  entry.line, entry.key_column)
        if "observables" in out:
            e = out["observables"]
            outputs = tuple(v.strip() for v in e.value.split(",") if v.strip())
            for o in outputs:
                if o not in schema.observables:
                    raise ConfigError("UNKNOWN_OUTPUT",
                                      f"kind {kind!r} has no observable {o!r}; known: "
                                      + ", ".join(schema.observables), e.line, e.column)
            if len(set(outputs)) != len(outputs):
                raise ConfigError("DUPLICATE_KEY", "observable listed twice", e.line, e.column)

    program: tuple[str, ...] = ()
    if "program" in sections:
        if not schema.accepts_program:
            first = next(iter(sections["program"].values()), None)
            raise ConfigError("UNKNOWN_SECTION", f"kind {kind!r} takes no [program]",
                              first.line if first else None, 1 if first else None)
        steps = sections["program"]
        keyed = []
        for key, entry in steps.items():
            m = re.fullmatch(r"step(\d+)", key)
            if not m:
                raise ConfigError("UNKNOWN_PARAMETER", f"program keys are step0, step1, ...; "
                                  f"got {key!r}", entry.line, entry.key_column)
            keyed.append((int(m.group(1)), entry))
        keyed.sort(key=lambda p: p[0])
        if [k for k, _ in keyed] != list(range(len(keyed))):
            raise ConfigError("BAD_VALUE", "program steps must be numbered 0..n-1 without gaps",
                              headers["program"], 1)
        for _, entry in keyed:
            problem = schema.check_program_line(entry.value)
            if problem:
                raise ConfigError("BAD_VALUE", problem, entry.line, entry.column)
        program = tuple(" ".join(entry.value.split()) for _, entry in keyed)

    for key, value in params.items():
        _check_range(schema.param_map[key], value, entries.get(key))
    variants = [params] if sweep is None else [{**params, sweep[0]: v} for v in sweep[1]]
    for variant in variants:
        problem = schema.cross_check(variant)
        if problem:
            raise ConfigError("OUT_OF_RANGE", problem, headers.get("params", 1), 1)
    return Scenario(kind, name, params, seed, unit, sweep, outputs, program)


def _fmt(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_scenario(s: Scenario) -> str:
    """Inverse of :func:`parse_scenario`: ``parse_scenario(serialize_scenario(s)) == s``."""
    lines = ["[scenario]", f"kind = {s.kind}", f"name = {s.name}", f"seed = {s.seed}",
             f"unit = {s.unit}", "", "[params]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in s.params.items()]
    if s.sweep is not None:
        lines += ["", "[sweep]", f"parameter = {s.sweep[0]}", f"values = {_fmt(s.sweep[1])}"]
    if s.outputs:
        lines += ["", "[outputs]", f"observables = {', '.join(s.outputs)}"]
    if s.program:
        lines += ["", "[program]"] + [f"step{i} = {step}" for i, step in enumerate(s.program)]
    return "\n".join(lines) + "\n"
