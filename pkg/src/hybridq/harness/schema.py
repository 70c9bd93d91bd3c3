"""Parameter schemas for every registered scenario kind."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

FREQ, TIME, NONE = "frequency", "time", "dimensionless"


@dataclass(frozen=True)
class ParamSpec:
    """One scenario parameter.

    ``type`` is ``float``, ``int``, ``str`` or ``floats`` (comma list).
    ``lo``/``hi`` bound numeric values; ``open_lo`` excludes the lower bound.
    A parameter with ``default is None`` and ``required`` set must appear.
    """

    name: str
    type: str = "float"
    dim: str = NONE
    default: object = None
    required: bool = False
    lo: float | None = None
    hi: float | None = None
    open_lo: bool = False
    choices: tuple[str, ...] = ()
    help: str = ""

    @property
    def is_list(self) -> bool:
        return self.type == "floats"

    def parse(self, text: str):
        text = text.strip()
        if self.type == "float":
            return _float(text)
        if self.type == "int":
            try:
                return int(text)
            except ValueError:
                raise ValueError(f"expected an integer, got {text!r}") from None
        if self.type == "floats":
            items = [t.strip() for t in text.split(",")]
            if any(not t for t in items):
                raise ValueError("empty entry in list")
            return tuple(_float(t) for t in items)
        if self.type == "str":
            if not text:
                raise ValueError("empty value")
            return text
        raise AssertionError(self.type)

    def range_problem(self, value) -> str | None:
        if self.type == "str":
            if self.choices and value not in self.choices:
                return "must be one of " + ", ".join(self.choices)
            return None
        values = value if self.is_list else (value,)
        for v in values:
            if self.lo is not None and (v < self.lo or (self.open_lo and v == self.lo)):
                return f"must be {'>' if self.open_lo else '>='} {self.lo}"
            if self.hi is not None and v > self.hi:
                return f"must be <= {self.hi}"
        return None

    def describe(self) -> str:
        bits = [self.type]
        if self.dim != NONE:
            bits.append(self.dim)
        if self.lo is not None or self.hi is not None:
            lo = "(-inf" if self.lo is None else ("(" if self.open_lo else "[") + f"{self.lo:g}"
            hi = "inf)" if self.hi is None else f"{self.hi:g}]"
            bits.append(f"{lo}, {hi}")
        if self.choices:
            bits.append("{" + "|".join(self.choices) + "}")
        default = "required" if self.required else (
            "auto" if self.default is None else f"default {self.default!r}")
        bits.append(default)
        return f"{self.name:<16} {'; '.join(bits)}" + (f"\n{'':<17}{self.help}" if self.help
                                                       else "")


def _float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


@dataclass(frozen=True)
class KindSchema:
    name: str
    summary: str
    params: tuple[ParamSpec, ...]
    observables: tuple[str, ...]
    index_columns: tuple[str, ...] = ("t",)
    accepts_program: bool = False
    checks: tuple[Callable[[dict], str | None], ...] = field(default=(), repr=False)

    @property
    def param_map(self) -> dict[str, ParamSpec]:
        return {p.name: p for p in self.params}

    def resolved(self, params: dict) -> dict:
        """Parameters with defaults filled in (``auto`` defaults stay ``None``)."""
        out = {p.name: p.default for p in self.params}
        out.update(params)
        return out

    def cross_check(self, params: dict) -> str | None:
        full = self.resolved(params)
        for check in self.checks:
            problem = check(full)
            if problem:
                return problem
        return None

    def check_program_line(self, line: str) -> str | None:
        parts = line.split()
        if not parts:
            return "empty program step"
        head, args = parts[0], parts[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError:
            return f"non-numeric argument in program step {line!r}"
        if any(not math.isfinite(v) for v in vals):
            return f"non-finite argument in program step {line!r}"
        if head == "rotation" and len(vals) == 4:
            if vals[0] == vals[1] == vals[2] == 0:
                return "rotation axis must be non-zero"
            return None
        if head == "jc" and len(vals) == 1:
            return None if vals[0] >= 0 else "jc duration must be non-negative"
        if head == "reset" and not vals:
            return None
        return (f"cannot parse program step {line!r}; expected 'rotation nx ny nz angle', "
                "'jc duration' or 'reset'")

    def explain(self) -> str:
        lines = [f"{self.name}: {self.summary}", "", "parameters:"]
        lines += ["  " + p.describe().replace("\n", "\n  ") for p in self.params]
        lines += ["", "observables: " + ", ".join(self.observables),
                  "index columns: " + ", ".join(self.index_columns)]
        if self.accepts_program:
            lines.append("accepts [program] with step0..stepN = rotation nx ny nz angle | "
                         "jc duration | reset")
        return "\n".join(lines)


def P(name, type="float", dim=NONE, default=None, **kw) -> ParamSpec:
    return ParamSpec(name, type, dim, default, **kw)


def _positive_delta(p):
    return "delta must be non-zero" if p.get("delta") == 0 else None


def _qnd_dt(p):
    dt = p.get("dt")
    if dt is not None and dt > 1 / (50 * p["omega_m"]) * (1 + 1e-12):
        return f"dt = {dt} too coarse; need dt <= 1/(50 omega_m)"
    return None


def _target_length(p):
    re_, im = p.get("target_re"), p.get("target_im")
    if re_ is not None and im is not None and len(im) != len(re_):
        return "target_im must have the same length as target_re"
    if re_ is not None and len(re_) > p["cutoff"] - 1:
        return "target has too many coefficients for the cutoff (n_max <= cutoff - 2)"
    return None


def _cooling_sizes(p):
    if p["n_init"] >= (p["cutoff_motion"] - 1) / 2:
        return "n_init must stay below (cutoff_motion - 1)/2 for a mean-matched thermal state"
    dim = 2 * p["cutoff_motion"] * p["cutoff_cavity"]
    if p["method"] == "expm" and dim * dim > 4096:
        return f"method = expm needs (2 cutoff_motion cutoff_cavity)^2 <= 4096, got {dim * dim}"
    return None


_TIMES = (P("t_max", dim=TIME, lo=0, open_lo=True, help="evolution window (auto if absent)"),
          P("n_times", "int", default=201, lo=2, hi=1_000_000))

KINDS: dict[str, KindSchema] = {s.name: s for s in [
    KindSchema(
        "jc", "single rotor-cavity Jaynes-Cummings model, initial |e,0>, rotating frame",
        (P("g", dim=FREQ, required=True, lo=0),
         P("kappa", dim=FREQ, default=0.0, lo=0),
         P("omega_c", dim=FREQ, default=1.0, lo=0, open_lo=True,
           help="cavity frequency (enters the quality factor only)"),
         P("detuning", dim=FREQ, default=0.0, help="rotor transition minus cavity frequency"),
         P("cutoff", "int", default=5, lo=2, hi=200)) + _TIMES,
        ("p_g1", "p_e0", "n_cav", "excitation")),
    KindSchema(
        "tavis", "n identical rotors sharing one cavity mode, initial all-ground + 1 photon",
        (P("n_spins", "int", required=True, lo=1, hi=8),
         P("g", dim=FREQ, required=True, lo=0),
         P("kappa", dim=FREQ, default=0.0, lo=0),
         P("detuning", dim=FREQ, default=0.0),
         P("cutoff", "int", default=2, lo=2, hi=20)) + _TIMES,
        ("n_cav", "p_vacuum", "excitation")),
    KindSchema(
        "sideband-cooling", "motion x rotor x cavity sideband cooling from a thermal state",
        (P("nu_t", dim=FREQ, required=True, lo=0, open_lo=True),
         P("eta", dim=FREQ, required=True, lo=0),
         P("kappa", dim=FREQ, required=True, lo=0, open_lo=True),
         P("detuning", dim=FREQ, help="drive detuning from the dressed state (auto: -nu_t)"),
         P("n_init", default=0.0, lo=0),
         P("g_rc", dim=FREQ, default=1.0, lo=0),
         P("cutoff_motion", "int", default=6, lo=2, hi=60),
         P("cutoff_cavity", "int", default=4, lo=2, hi=20),
         P("method", "str", default="adaptive", choices=("adaptive", "expm"),
           help="expm: exact propagator, for runs far longer than 1/nu_t")) + _TIMES,
        ("n_motion", "n_cav", "p_top"), checks=(_cooling_sizes,)),
    KindSchema(
        "spin-cooling", "swap-and-reset cooling of a resonator by a spin",
        (P("lam", dim=FREQ, required=True, lo=0, open_lo=True),
         P("omega_m", dim=FREQ, default=1.0, lo=0, open_lo=True),
         P("gamma_spin", dim=FREQ, default=0.0, lo=0),
         P("gamma_heat", dim=FREQ, default=0.0, lo=0),
         P("n_bar", default=0.0, lo=0),
         P("pump_rate", dim=FREQ, default=0.0, lo=0),
         P("reset_time", dim=TIME, default=0.0, lo=0),
         P("cutoff", "int", default=10, lo=2, hi=100),
         P("cycles", "int", default=20, lo=1, hi=100_000),
         P("n_init", default=1.0, lo=0),
         P("initial", "str", default="thermal", choices=("thermal", "fock")),
         P("schedule", "str", default="fixed", choices=("fixed", "sweep"))),
        ("n_mean",), index_columns=("cycle",)),
    KindSchema(
        "state-synthesis", "spin-resonator pulse program preparing a resonator superposition",
        (P("lam", dim=FREQ, default=1.0, lo=0, open_lo=True),
         P("cutoff", "int", default=8, lo=2, hi=60),
         P("gamma_spin", dim=FREQ, default=0.0, lo=0),
         P("gamma_heat", dim=FREQ, default=0.0, lo=0),
         P("n_bar", default=0.0, lo=0),
         P("target_re", "floats", help="real parts of c_0..c_n (normalized with target_im)"),
         P("target_im", "floats")),
        ("n_mean", "p_excited", "fidelity"), index_columns=("step", "op"),
        accepts_program=True, checks=(_target_length,)),
    KindSchema(
        "membrane-atom-full", "two cavity fields mediating membrane-atom coupling",
        (P("delta", dim=FREQ, required=True),
         P("g_cm", dim=FREQ, required=True, lo=0),
         P("g_ca", dim=FREQ, required=True, lo=0),
         P("omega_m", dim=FREQ, default=1.0, lo=0, open_lo=True),
         P("omega_a", dim=FREQ, lo=0, open_lo=True, help="atom trap frequency (auto: omega_m)"),
         P("kappa", dim=FREQ, default=0.0, lo=0),
         P("cutoff_c", "int", default=3, lo=2, hi=20),
         P("cutoff_m", "int", default=4, lo=2, hi=20),
         P("cutoff_a", "int", default=4, lo=2, hi=20)) + _TIMES,
        ("x_m", "n_m", "n_a"), checks=(_positive_delta,)),
    KindSchema(
        "membrane-atom-effective", "eliminated two-mode membrane-atom model",
        (P("delta", dim=FREQ, required=True),
         P("g_cm", dim=FREQ, required=True, lo=0),
         P("g_ca", dim=FREQ, required=True, lo=0),
         P("omega_m", dim=FREQ, default=1.0, lo=0, open_lo=True),
         P("omega_a", dim=FREQ, lo=0, open_lo=True),
         P("cutoff_m", "int", default=4, lo=2, hi=40),
         P("cutoff_a", "int", default=4, lo=2, hi=40)) + _TIMES,
        ("x_m", "n_m", "n_a"), checks=(_positive_delta,)),
    KindSchema(
        "adiabatic-check", "full versus eliminated membrane-atom dynamics",
        (P("delta", dim=FREQ, required=True),
         P("g_cm", dim=FREQ, required=True, lo=0),
         P("g_ca", dim=FREQ, required=True, lo=0),
         P("omega_m", dim=FREQ, default=1.0, lo=0, open_lo=True),
         P("kappa", dim=FREQ, default=0.0, lo=0),
         P("cutoff_c", "int", default=3, lo=2, hi=20),
         P("cutoff_m", "int", default=4, lo=2, hi=20),
         P("cutoff_a", "int", default=4, lo=2, hi=20),
         P("periods", default=2.0, lo=0, open_lo=True)) + _TIMES,
        ("x_full", "x_eff", "n_a_full", "n_a_eff", "max_x_deviation", "swap_error"),
        checks=(_positive_delta,)),
    KindSchema(
        "epr-cascade", "conditional Gaussian dynamics of the cascaded QND measurement",
        (P("omega_m", dim=FREQ, required=True, lo=0, open_lo=True),
         P("Omega", dim=FREQ, help="ensemble frequency (auto: -omega_m)"),
         P("g", dim=FREQ, required=True, lo=0),
         P("kappa_c", dim=FREQ, required=True, lo=0, open_lo=True),
         P("efficiency", default=1.0, lo=0, hi=1),
         P("t_final", dim=TIME, required=True, lo=0, open_lo=True),
         P("dt", dim=TIME, lo=0, open_lo=True, help="step (auto: 1/(50 omega_m))"),
         P("n_bar_m", default=0.0, lo=0),
         P("n_bar_a", default=0.0, lo=0),
         P("gamma_m", dim=FREQ, default=0.0, lo=0),
         P("n_th", default=0.0, lo=0),
         P("n_traj", "int", default=0, lo=0, hi=1_000_000),
         P("record_every", "int", default=10, lo=1)),
        ("epr", "v_xx_sum", "v_pp_diff", "cov"), checks=(_qnd_dt,)),
    KindSchema(
        "qnd-check", "Heisenberg conservation of X_m + X_a and P_m - P_a",
        (P("omega_m", dim=FREQ, required=True, lo=0, open_lo=True),
         P("Omega", dim=FREQ, required=True),
         P("g", dim=FREQ, default=1.0, lo=0)),
        ("dx_sum_norm", "dp_diff_norm", "p_diff_component", "conserved"), index_columns=()),
    KindSchema(
        "cv-teleport", "unit-gain teleportation of a coherent state through a squeezed resource",
        (P("r", default=0.0, lo=0, help="two-mode squeezing of the resource"),
         P("resource_n", default=0.0, lo=0, help="thermal occupancy added to each resource mode"),
         P("input_x", default=0.0),
         P("input_p", default=0.0)),
        ("epr", "fidelity", "out_var_x", "out_var_p"), index_columns=()),
]}
