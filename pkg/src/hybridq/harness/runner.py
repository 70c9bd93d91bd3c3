"""Dispatch scenarios to the device modules and write their results."""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .. import gaussian_cv as gcv
from .. import jc_molecule as jcm
from .. import membrane_atom as ma
from .. import spin_nems as sn
from ..core import (LindbladModel, Operator, basis_state, evolve_lindblad,
                    evolve_schrodinger, expectation, number, quadrature_x, spin_op,
                    steady_state)
from ..errors import HybridQError
from .config import Scenario
from .schema import KINDS


class RunError(Exception):
    """A sweep point failed; ``point`` identifies it."""

    def __init__(self, point: int, value, cause: Exception):
        self.point, self.value, self.cause = point, value, cause
        super().__init__(f"sweep point {point} (value {value!r}) failed: "
                         f"{type(cause).__name__}: {cause}")

    def as_dict(self) -> dict:
        return {"error": "RUN_FAILED", "sweep_index": self.point, "sweep_value": self.value,
                "cause": type(self.cause).__name__, "message": str(self.cause),
                "diagnostics": getattr(self.cause, "diagnostics", {})}


@dataclass
class PointResult:
    """Table of one sweep point: ``index`` columns plus observables, and a summary."""

    index: dict[str, np.ndarray]
    columns: dict[str, np.ndarray]
    summary: dict
    stats: dict = field(default_factory=dict)


@dataclass
class RunReport:
    scenario: Scenario
    points: list[tuple[int, object, PointResult]]
    header: list[str]
    rows: list[list]
    wall_time: float

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows([[_cell(v) for v in row] for row in self.rows])
        return buf.getvalue()

    def summary(self) -> dict:
        s = self.scenario
        return {
            "scenario": {"kind": s.kind, "name": s.name, "seed": s.seed, "unit": s.unit,
                         "params": dict(s.params), "si_params": dict(s.si),
                         "sweep": None if s.sweep is None else
                         {"parameter": s.sweep[0], "values": list(s.sweep[1])},
                         "outputs": list(s.outputs), "program": list(s.program)},
            "points": [{"index": i, "value": v, "summary": r.summary}
                       for i, v, r in self.points],
        }

    def timing(self) -> dict:
        return {"wall_time_s": self.wall_time,
                "points": [{"index": i, "stats": r.stats} for i, _, r in self.points]}


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- per-kind runners ---------------------------------------------------------

def _times(p, default_t):
    t_max = p.get("t_max") or default_t
    return np.linspace(0.0, t_max, p["n_times"])


def _evolve(model: LindbladModel, state, times, e_ops):
    if model.active_collapses():
        return evolve_lindblad(model, state, times, e_ops)
    return evolve_schrodinger(model.H, state, times, e_ops)


def run_jc(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    omega_c = p["omega_c"]
    spec = jcm.JcSpec(omega_c, (omega_c + p["detuning"]) / 2, p["g"], p["kappa"], p["cutoff"])
    model = jcm.build_jc(spec, rotating_frame=True)
    space = model.space
    g1 = basis_state(space, {jcm.ROTOR: 1, jcm.CAVITY: 1}).to_density()
    e0 = basis_state(space, {jcm.ROTOR: 0})
    e_ops = {"p_g1": Operator(space, g1.matrix, hermitian_hint=True),
             "p_e0": Operator(space, e0.to_density().matrix, hermitian_hint=True),
             "n_cav": number(space, jcm.CAVITY),
             "excitation": jcm.excitation_number(space)}
    times = _times(p, np.pi / p["g"] if p["g"] > 0 else 1.0)
    res = _evolve(model, e0, times, e_ops)
    cols = {k: np.real(v) for k, v in res.expectations.items()}
    k_peak = int(np.argmax(cols["p_g1"]))
    q = (s.exact("omega_c") / s.exact("kappa")) if p["kappa"] > 0 else None
    summary = {"quality_factor": float(q) if q is not None else float("inf"),
               "peak_time": float(times[k_peak]), "peak_p_g1": float(cols["p_g1"][k_peak]),
               "truncation_suspect": res.truncation_suspect}
    return PointResult({"t": times}, cols, summary, res.stats)


def _fit_rabi(times, p_vacuum):
    # P(vacuum photon) = sin^2(G t) for the bright-state exchange
    G0 = np.pi / (2 * times[int(np.argmax(p_vacuum))]) if np.max(p_vacuum) > 0 else 1.0
    popt, _ = curve_fit(lambda t, G: np.sin(G * t) ** 2, times, p_vacuum, p0=(G0,))
    return abs(float(popt[0]))


def run_tavis(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    n, g = p["n_spins"], p["g"]
    model = jcm.build_tavis_cummings(n, g, 1.0, (1.0 + p["detuning"]) / 2, kappa=p["kappa"],
                                     cutoff=p["cutoff"], rotating_frame=True)
    space = model.space
    ground = {m.label: 1 for m in space.modes if m.kind == "spin_half"}
    psi0 = basis_state(space, {**ground, jcm.CAVITY: 1})
    n_cav = number(space, jcm.CAVITY)
    e_ops = {"n_cav": n_cav, "excitation": jcm.excitation_number(space)}
    G = jcm.collective_coupling(g, n)
    times = _times(p, np.pi / G if G > 0 else 1.0)
    res = _evolve(model, psi0, times, e_ops)
    cols = {k: np.real(v) for k, v in res.expectations.items()}
    cols["p_vacuum"] = 1 - cols["n_cav"]
    summary = {"collective_coupling": G, "truncation_suspect": res.truncation_suspect}
    if G > 0 and p["detuning"] == 0 and p["kappa"] == 0:
        summary["fitted_rabi"] = _fit_rabi(times, cols["p_vacuum"])
    return PointResult({"t": times}, cols, summary, res.stats)


def run_sideband(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    det = p["detuning"] if p["detuning"] is not None else -p["nu_t"]
    spec = jcm.CoolingSpec(p["nu_t"], p["eta"], p["kappa"], det, p["n_init"], p["g_rc"],
                           (p["cutoff_motion"], p["cutoff_cavity"]))
    model = jcm.build_sideband_cooling(spec)
    space = model.space
    n_m = number(space, jcm.MOTION)
    top_proj = np.diag((np.diag(n_m.matrix).real == spec.cutoffs[0] - 1).astype(float))
    e_ops = {"n_motion": n_m, "n_cav": number(space, jcm.CAVITY),
             "p_top": Operator(space, top_proj, hermitian_hint=True)}
    rate = max(p["eta"] ** 2 / p["kappa"], 1e-12)
    times = _times(p, min(10.0 / rate, 1e4))
    res = evolve_lindblad(model, jcm.cooling_initial_state(spec), times, e_ops,
                          method=p["method"])
    cols = {k: np.real(v) for k, v in res.expectations.items()}
    rho_ss = steady_state(model)
    summary = {"steady_n_motion": float(np.real(expectation(n_m, rho_ss))),
               "final_n_motion": float(cols["n_motion"][-1]),
               "initial_n_motion": float(cols["n_motion"][0]),
               "truncation_suspect": res.truncation_suspect}
    return PointResult({"t": times}, cols, summary, res.stats)


def run_spin_cooling(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    spec = sn.SpinResonatorSpec(p["lam"], p["omega_m"], p["gamma_spin"], p["gamma_heat"],
                                p["n_bar"], p["cutoff"], p["pump_rate"])
    n = sn.run_cooling(spec, p["cycles"], p["n_init"], initial=p["initial"],
                       schedule=p["schedule"], reset_time=p["reset_time"])
    summary = {"final_n": float(n[-1]), "strong_coupling": sn.is_strong_coupling(spec),
               "floor_estimate": sn.cooling_floor_estimate(spec, p["reset_time"])}
    return PointResult({"cycle": np.arange(1, n.size + 1)}, {"n_mean": n}, summary)


def run_synthesis(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    cutoff = p["cutoff"]
    spec = sn.SpinResonatorSpec(p["lam"], cutoff=cutoff, gamma_spin=p["gamma_spin"],
                                gamma_heat=p["gamma_heat"], n_bar=p["n_bar"])
    target = None
    if p["target_re"] is not None:
        re_ = np.array(p["target_re"])
        im = np.array(p["target_im"]) if p["target_im"] is not None else np.zeros_like(re_)
        c = re_ + 1j * im
        target = c / np.linalg.norm(c)
    if s.program:
        program = sn.PulseProgram.from_lines(s.program)
    elif target is not None:
        program = sn.synthesize_state(target, p["lam"], cutoff)
    else:
        program = sn.PulseProgram()
    model = sn.build_spin_resonator(spec)
    space = model.space
    state = sn.ground_state(cutoff)
    tgt = sn.target_state(target, cutoff) if target is not None else None
    n_op = number(space, sn.MECH)
    sz = spin_op(space, sn.SPIN, "z")
    p_e = 0.5 * (sz + (sz @ sz))

    def observe(st):
        f = sn.expectation_state_fidelity(st, tgt) if tgt is not None else float("nan")
        return (float(np.real(expectation(n_op, st))), float(np.real(expectation(p_e, st))), f)

    rows = [observe(state)]
    ops = ["init"]
    for step in program.steps:
        state, _ = sn.simulate_program(model, sn.PulseProgram((step,)), state)
        rows.append(observe(state))
        ops.append(type(step).__name__)
    arr = np.array(rows)
    summary = {"program": program.to_lines(), "n_steps": len(program),
               "fidelity": float(arr[-1, 2]) if tgt is not None else None}
    return PointResult({"step": np.arange(len(rows)), "op": np.array(ops)},
                       {"n_mean": arr[:, 0], "p_excited": arr[:, 1], "fidelity": arr[:, 2]},
                       summary)


def _two_mode_spec(p) -> ma.TwoModeSpec:
    c = p.get("cutoff_c", 3)
    return ma.TwoModeSpec(p["delta"], p["g_cm"], p["g_ca"], p["omega_m"], p.get("omega_a"),
                          p.get("kappa", 0.0), (c, c, p["cutoff_m"], p["cutoff_a"]))


def _membrane_run(s: Scenario, full: bool) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    spec = _two_mode_spec(p)
    model = ma.build_full_model(spec) if full else ma.build_effective_model(spec)
    space = model.space
    e_ops = {"x_m": quadrature_x(space, ma.MEMBRANE), "n_m": number(space, ma.MEMBRANE),
             "n_a": number(space, ma.ATOM)}
    g_eff = abs(spec.g_eff)
    times = _times(p, 2 * np.pi / g_eff if g_eff > 0 else 10.0)
    psi0 = ma.initial_state(space)
    if model.active_collapses():
        res = evolve_lindblad(model, psi0, times, e_ops)
    else:
        res = evolve_schrodinger(model.H, psi0, times, e_ops, method="spectral")
    cols = {k: np.real(v) for k, v in res.expectations.items()}
    summary = {"g_eff": spec.g_eff, "in_regime": spec.in_regime(),
               "truncation_suspect": res.truncation_suspect}
    return PointResult({"t": times}, cols, summary, res.stats)


def run_adiabatic(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    spec = _two_mode_spec(p)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ma.RegimeWarning)
        rep = ma.adiabatic_check(spec, p["t_max"], n_times=p["n_times"], periods=p["periods"])
    n = rep.times.size
    cols = {"x_full": rep.x_full, "x_eff": rep.x_eff, "n_a_full": rep.n_atom_full,
            "n_a_eff": rep.n_atom_eff, "max_x_deviation": np.full(n, rep.max_x_deviation),
            "swap_error": np.full(n, rep.swap_error_full)}
    summary = rep.as_dict()
    summary["warnings"] = [str(w.message) for w in caught]
    return PointResult({"t": rep.times}, cols, summary)


_COV_LABELS = [f"v{i}{j}" for i in range(4) for j in range(i, 4)]


def run_epr(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    Omega = p["Omega"] if p["Omega"] is not None else -p["omega_m"]
    spec = gcv.CascadeSpec(p["omega_m"], Omega, p["g"], p["kappa_c"], p["t_final"], p["dt"],
                           p["efficiency"], p["gamma_m"], p["n_th"])
    state = gcv.GaussianState.thermal([p["n_bar_m"], p["n_bar_a"]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj = gcv.evolve_conditional(state, spec)
        mc = None
        if p["n_traj"] >= 2:
            mc = gcv.monte_carlo(state, spec, p["n_traj"], seed=seed)
    keep = np.arange(0, traj.times.size, p["record_every"])
    if keep[-1] != traj.times.size - 1:
        keep = np.append(keep, traj.times.size - 1)
    covs = traj.covs[keep]
    epr = traj.epr[keep]
    cols = {"epr": epr,
            "v_xx_sum": covs[:, 0, 0] + covs[:, 2, 2] + 2 * covs[:, 0, 2],
            "v_pp_diff": covs[:, 1, 1] + covs[:, 3, 3] - 2 * covs[:, 1, 3]}
    iu = np.triu_indices(4)
    cov_cols = {lab: covs[:, i, j] for lab, i, j in zip(_COV_LABELS, *iu)}
    summary = {"final_epr": float(traj.epr[-1]), "entangled": bool(traj.epr[-1] < 2),
               "qnd_mode": spec.qnd_mode, "measurement_rate": spec.measurement_rate,
               "warnings": [str(w.message) for w in caught]}
    if spec.qnd_mode and spec.gamma_m == 0:
        summary["exact_final_epr"] = float(gcv.qnd_epr_exact(spec, p["n_bar_m"],
                                                             p["n_bar_a"])[-1])
    if mc is not None:
        summary["monte_carlo"] = {"n_traj": mc.n_traj, "epr_mc": mc.epr_mc,
                                  "stderr": mc.epr_mc_stderr, "z_score": mc.z_score,
                                  "agrees_3sigma": mc.agrees(3.0)}
    return PointResult({"t": traj.times[keep]}, {**cols, "cov": cov_cols}, summary)


def run_qnd(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    r = gcv.qnd_conservation_check(p["omega_m"], p["Omega"], p["g"])
    cols = {"dx_sum_norm": np.array([r.dX_sum_norm]), "dp_diff_norm": np.array([r.dP_diff_norm]),
            "p_diff_component": np.array([r.x_sum_p_diff_component]),
            "conserved": np.array([r.conserved])}
    summary = {"dX_sum_dt": r.dX_sum_dt, "dP_diff_dt": r.dP_diff_dt, "conserved": r.conserved,
               "coupling_contribution": r.coupling_contribution}
    return PointResult({}, cols, summary)


def run_teleport(s: Scenario, seed) -> PointResult:
    p = KINDS[s.kind].resolved(s.params)
    res = gcv.GaussianState.two_mode_squeezed(p["r"])
    if p["resource_n"] > 0:
        res = gcv.GaussianState(res.mean, res.cov + p["resource_n"] * np.eye(4))
    inp = gcv.GaussianState.coherent(p["input_x"], p["input_p"])
    out, F = gcv.teleport(inp, res)
    epr = gcv.epr_variance(res)
    cols = {"epr": np.array([epr]), "fidelity": np.array([F]),
            "out_var_x": np.array([out.cov[0, 0]]), "out_var_p": np.array([out.cov[1, 1]])}
    summary = {"epr": epr, "fidelity": F, "symmetric_formula": 1 / (1 + epr / 2)}
    return PointResult({}, cols, summary)


RUNNERS = {
    "jc": run_jc, "tavis": run_tavis, "sideband-cooling": run_sideband,
    "spin-cooling": run_spin_cooling, "state-synthesis": run_synthesis,
    "membrane-atom-full": lambda s, seed: _membrane_run(s, True),
    "membrane-atom-effective": lambda s, seed: _membrane_run(s, False),
    "adiabatic-check": run_adiabatic, "epr-cascade": run_epr, "qnd-check": run_qnd,
    "cv-teleport": run_teleport,
}


def _expand(result: PointResult, selected: list[str]):
    """Flatten the selected observables into column arrays in a fixed order."""
    names, arrays = [], []
    for obs in selected:
        col = result.columns[obs]
        if isinstance(col, dict):
            for lab, arr in col.items():
                names.append(lab)
                arrays.append(arr)
        else:
            names.append(obs)
            arrays.append(col)
    return names, arrays


def run(scenario: Scenario, *, threads: int = 1, seed: int | None = None) -> RunReport:
    """Execute every sweep point of ``scenario`` and assemble the result table.

    Points run concurrently when ``threads > 1``; each gets its own seed
    derived from the scenario seed, so the output does not depend on the
    thread count.
    """
    seed = scenario.seed if seed is None else seed
    schema = KINDS[scenario.kind]
    runner = RUNNERS[scenario.kind]
    points = scenario.points()
    seeds = [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(len(points))]

    def one(item):
        (i, value, sc), pt_seed = item
        try:
            return i, value, runner(sc, pt_seed)
        except (HybridQError, ValueError, RuntimeError, ArithmeticError) as exc:
            raise RunError(i, value, exc) from exc

    t0 = time.perf_counter()
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, zip(points, seeds)))
    else:
        results = [one(item) for item in zip(points, seeds)]
    wall = time.perf_counter() - t0
    results.sort(key=lambda r: r[0])

    selected = list(scenario.outputs) or list(schema.observables)
    header = (["sweep_index", "sweep_value"] if scenario.sweep else []) + list(
        schema.index_columns)
    rows = []
    col_names = None
    for i, value, res in results:
        names, arrays = _expand(res, selected)
        if col_names is None:
            col_names = names
        idx = [res.index[c] for c in schema.index_columns]
        n = len(arrays[0]) if arrays else 0
        for r in range(n):
            row = [i, value] if scenario.sweep else []
            row += [col[r] for col in idx]
            row += [arr[r] for arr in arrays]
            rows.append(row)
    header += col_names or []
    return RunReport(scenario, results, header, rows, wall)


def write_outputs(report: RunReport, out_dir) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.summary.json`` into ``out_dir``.

    The CSV and the ``result`` part of the JSON are deterministic; timing
    goes under a separate ``timing`` key.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = report.scenario.name
    csv_path = out / f"{name}.csv"
    json_path = out / f"{name}.summary.json"
    csv_path.write_text(report.csv_text(), encoding="utf-8")
    payload = {"result": _jsonable(report.summary()), "timing": _jsonable(report.timing())}
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
