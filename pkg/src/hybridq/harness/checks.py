"""Small-scale invariant suites run by ``hybridq check``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .. import gaussian_cv as gcv
from .. import jc_molecule as jcm
from .. import membrane_atom as ma
from .. import spin_nems as sn
from ..core import (CompositeSpace, DensityMatrix, LindbladModel, ModeSpec, Operator,
                    StateVector, annihilation, basis_state, build_annihilation, commutator,
                    evolve_lindblad, evolve_schrodinger, expectation, liouvillian, number,
                    steady_state, thermal_populations)
from ..errors import NotHermitian

SUITES = ("core-invariants", "jc", "spin", "membrane", "epr")


@dataclass
class CheckResult:
    suite: str
    name: str
    value: float
    tolerance: float
    relation: str
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] {self.suite}/{self.name}: {self.value:.3e} {self.relation} "
                f"{self.tolerance:.3e} ({self.seconds:.2f} s)")


def _le(value, tol):
    return float(value), float(tol), "<=", bool(value <= tol)


def _ge(value, tol):
    return float(value), float(tol), ">=", bool(value >= tol)


def _rng():
    return np.random.default_rng(20240611)


def _random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (A + A.conj().T)


# -- core ---------------------------------------------------------------------

def core_commutator(scale):
    a = build_annihilation(8)
    c = commutator(a, a.dag).matrix
    expected = np.diag([1.0] * 7 + [-7.0])
    return _le(np.max(np.abs(c - expected)), 1e-12 * scale)


def core_schrodinger_expm(scale):
    rng = _rng()
    space = CompositeSpace([ModeSpec.multilevel("q", 6)])
    H = Operator(space, _random_hermitian(rng, 6), hermitian_hint=True)
    psi = rng.normal(size=6) + 1j * rng.normal(size=6)
    psi0 = StateVector(space, psi, normalize=True)
    times = np.linspace(0, 3, 31)
    res = evolve_schrodinger(H, psi0, times, store_states=True)
    err = max(np.max(np.abs(s.amplitudes - la.expm(-1j * H.matrix * t) @ psi0.amplitudes))
              for s, t in zip(res.snapshots, times))
    return _le(err, 1e-7 * scale)


def core_norm(scale):
    model = jcm.build_jc(jcm.JcSpec(1.0, 0.5, 1.0, cutoff=6), rotating_frame=True)
    psi0 = basis_state(model.space, {jcm.ROTOR: 0, jcm.CAVITY: 2})
    res = evolve_schrodinger(model.H, psi0, np.linspace(0, 20, 201))
    return _le(res.stats["max_norm_drift"], 1e-8 * scale)


def _driven_damped(cutoff=15, eps=0.5, kappa=1.0, delta=0.7):
    return ma.build_driven_cavity(eps, kappa, delta, cutoff)


def core_trace(scale):
    model = _driven_damped()
    rho0 = basis_state(model.space).to_density()
    res = evolve_lindblad(model, rho0, np.linspace(0, 10, 101))
    return _le(res.stats["max_trace_error"], 1e-8 * scale)


def core_positivity(scale):
    model = _driven_damped()
    rho0 = basis_state(model.space).to_density()
    res = evolve_lindblad(model, rho0, np.linspace(0, 10, 101))
    return _ge(res.stats["min_eigenvalue"], -1e-6 * scale)


def core_liouvillian_consistency(scale):
    rng = _rng()
    space = CompositeSpace([ModeSpec.spin("s"), ModeSpec.boson("b", 4)])
    H = Operator(space, _random_hermitian(rng, space.dim), hermitian_hint=True)
    b = annihilation(space, "b")
    model = LindbladModel(H, ((b, 0.3), (b.dag, 0.1)))
    psi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    rho0 = StateVector(space, psi, normalize=True).to_density()
    t = 1.7
    res = evolve_lindblad(model, rho0, [0, t], store_states=True)
    L = liouvillian(model, sparse=False)
    exact = (la.expm(L * t) @ np.array(rho0.matrix).reshape(-1)).reshape(space.dim, space.dim)
    return _le(np.max(np.abs(res.final_state.matrix - exact)), 1e-7 * scale)


def core_steady_thermal(scale):
    nbar, cutoff = 0.8, 25
    space = CompositeSpace([ModeSpec.boson("b", cutoff)])
    b = annihilation(space, "b")
    model = LindbladModel(0 * number(space, "b"), ((b, nbar + 1), (b.dag, nbar)))
    rho = steady_state(model)
    ratio = nbar / (nbar + 1)
    expected = ratio ** np.arange(cutoff)
    expected /= expected.sum()
    return _le(np.max(np.abs(np.real(np.diag(rho.matrix)) - expected)), 1e-10 * scale)


def core_steady_cavity(scale):
    eps, kappa, delta = 0.3, 1.0, 0.4
    model = _driven_damped(20, eps, kappa, delta)
    rho = steady_state(model)
    a = annihilation(model.space, "cav")
    alpha = expectation(a, rho)
    return _le(abs(alpha - ma.cavity_response(eps, kappa, delta)), 1e-8 * scale)


def core_hermiticity_rejected(scale):
    space = CompositeSpace([ModeSpec.boson("b", 3)])
    a = annihilation(space, "b")
    try:
        evolve_schrodinger(a, basis_state(space), [0, 1])
    except NotHermitian:
        return 0.0, 0.0, "==", True
    return 1.0, 0.0, "==", False


def core_truncation_sentinel(scale):
    space = CompositeSpace([ModeSpec.boson("b", 6)])
    a = annihilation(space, "b")
    H = (2.0 * (a + a.dag)).as_hermitian()
    res = evolve_schrodinger(H, basis_state(space), np.linspace(0, 3, 31))
    flagged = res.truncation_suspect
    return float(flagged), 1.0, "==", bool(flagged)


def core_expectation_real(scale):
    rng = _rng()
    space = CompositeSpace([ModeSpec.multilevel("q", 5)])
    A = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    state = DensityMatrix(space, rho)
    O = Operator(space, _random_hermitian(rng, 5), hermitian_hint=True)
    val = expectation(O, state)
    return _le(max(abs(val.imag), abs(val - np.trace(O.matrix @ rho))), 1e-12 * scale)


# -- jc -----------------------------------------------------------------------

def jc_rabi(scale):
    model = jcm.build_jc(jcm.JcSpec(1.0, 0.5, 1.0, cutoff=4), rotating_frame=True)
    space = model.space
    times = np.linspace(0, np.pi, 200)
    p_g1 = basis_state(space, {jcm.ROTOR: 1, jcm.CAVITY: 1}).to_density()
    res = evolve_schrodinger(model.H, basis_state(space, {jcm.ROTOR: 0}), times,
                             {"p": Operator(space, p_g1.matrix, hermitian_hint=True)})
    return _le(np.max(np.abs(np.real(res.expectations["p"]) - np.sin(times) ** 2)),
               1e-7 * scale)


def jc_excitation_conserved(scale):
    spec = jcm.JcSpec(1.0, 0.6, 0.3, cutoff=6)
    model = jcm.build_jc(spec)
    space = model.space
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.basis_index({jcm.ROTOR: 0, jcm.CAVITY: 1})] = 1
    psi[space.basis_index({jcm.ROTOR: 1, jcm.CAVITY: 3})] = 1j
    res = evolve_schrodinger(model.H, StateVector(space, psi, normalize=True),
                             np.linspace(0, 30, 301), {"N": jcm.excitation_number(space)})
    return _le(np.var(np.real(res.expectations["N"])), 1e-10 * scale)


def _single_excitation_splitting(n, g):
    model = jcm.build_tavis_cummings(n, g, 1.0, 0.5, cutoff=2, rotating_frame=True)
    space = model.space
    N = np.real(np.diag(jcm.excitation_number(space).matrix))
    idx = np.nonzero(np.isclose(N, 1))[0]
    ev = la.eigvalsh(model.H.matrix[np.ix_(idx, idx)])
    return ev[-1] - ev[0]


def jc_tavis_splitting(scale):
    g = 0.7
    err = max(abs(_single_excitation_splitting(n, g) - 2 * g * np.sqrt(n)) for n in range(2, 7))
    return _le(err, 1e-10 * scale)


def tavis_fitted_rabi(n, g, n_times=400):
    """Collective Rabi frequency fitted from the photon-number trace."""
    from scipy.optimize import curve_fit
    model = jcm.build_tavis_cummings(n, g, 1.0, 0.5, cutoff=2, rotating_frame=True)
    space = model.space
    ground = {m.label: 1 for m in space.modes if m.kind == "spin_half"}
    times = np.linspace(0, 2 * np.pi / (g * np.sqrt(n)), n_times)
    res = evolve_schrodinger(model.H, basis_state(space, {**ground, jcm.CAVITY: 1}), times,
                             {"n": number(space, jcm.CAVITY)}, rtol=1e-12, atol=1e-13)
    p_vac = 1 - np.real(res.expectations["n"])
    popt, _ = curve_fit(lambda t, G: np.sin(G * t) ** 2, times, p_vac,
                        p0=(g * np.sqrt(n) * 1.01,), xtol=1e-14, ftol=1e-14)
    return abs(popt[0])


def jc_tavis_fit(scale):
    g = 0.7
    err = max(abs(tavis_fitted_rabi(n, g) / (g * np.sqrt(n)) - 1) for n in range(2, 7))
    return _le(err, 1e-6 * scale)


def jc_quality_factor(scale):
    from .config import parse_scenario
    s = parse_scenario("[scenario]\nkind = jc\nunit = 2pi*Hz\n[params]\ng = 1e4\n"
                       "omega_c = 1e10\nkappa = 1e4\n")
    q = s.exact("omega_c") / s.exact("kappa")
    return float(abs(q - 10 ** 6)), 0.0, "==", q == 10 ** 6


def jc_detuned_transfer(scale):
    g, delta = 1.0, 10.0
    model = jcm.build_jc(jcm.JcSpec(1.0, (1.0 + delta) / 2, g, cutoff=3), rotating_frame=True)
    space = model.space
    p = basis_state(space, {jcm.ROTOR: 1, jcm.CAVITY: 1}).to_density()
    times = np.linspace(0, 2 * np.pi / np.sqrt(4 * g ** 2 + delta ** 2), 2001)
    res = evolve_schrodinger(model.H, basis_state(space, {jcm.ROTOR: 0}), times,
                             {"p": Operator(space, p.matrix, hermitian_hint=True)})
    ev = la.eigvalsh(np.array([[delta / 2, g], [g, -delta / 2]]))
    expected = 4 * g ** 2 / (ev[1] - ev[0]) ** 2
    return _le(abs(np.max(np.real(res.expectations["p"])) - expected), 1e-6 * scale)


# -- spin ---------------------------------------------------------------------

def random_target(rng, n_max):
    c = rng.normal(size=n_max + 1) + 1j * rng.normal(size=n_max + 1)
    return c / np.linalg.norm(c)


def synthesis_infidelity(target, lam=1.0, cutoff=8):
    spec = sn.SpinResonatorSpec(lam, cutoff=cutoff)
    program = sn.synthesize_state(target, lam, cutoff)
    _, f = sn.simulate_program(sn.build_spin_resonator(spec), program, sn.ground_state(cutoff),
                               sn.target_state(target, cutoff))
    return 1 - f, len(program)


def spin_synthesis(scale):
    rng = _rng()
    worst = 0.0
    for k in range(20):
        inf, length = synthesis_infidelity(random_target(rng, k % 5), 1.3)
        if length > 2 * (k % 5) + 1:
            return float(length), 2.0 * (k % 5) + 1, "<=", False
        worst = max(worst, inf)
    return _le(worst, 1e-6 * scale)


def spin_swap_unitarity(scale):
    spec = sn.SpinResonatorSpec(1.0, cutoff=4)
    model = sn.build_spin_resonator(spec)
    space = model.space
    al, be = 0.6, 0.8j
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.basis_index({sn.SPIN: 1})] = al
    psi[space.basis_index({sn.SPIN: 0})] = be
    out, _ = sn.simulate_program(model, sn.PulseProgram((sn.JcInteraction(spec.swap_time),)),
                                 StateVector(space, psi))
    amp = out.amplitudes
    g0 = amp[space.basis_index({sn.SPIN: 1})]
    g1 = amp[space.basis_index({sn.SPIN: 1, sn.MECH: 1})]
    return _le(max(abs(g0 - al), abs(abs(g1) - abs(be))), 1e-10 * scale)


def spin_cooling_monotone(scale):
    spec = sn.SpinResonatorSpec(1.0, cutoff=10)
    n = sn.run_cooling(spec, 10, 1.5)
    n = np.concatenate([[1.5], n])
    return _le(max(0.0, np.max(np.diff(n))), 1e-10 * scale)


def spin_single_phonon(scale):
    n = sn.run_cooling(sn.SpinResonatorSpec(1.0, cutoff=4), 1, 1, initial="fock")
    return _le(abs(n[0]), 1e-8 * scale)


# -- membrane -----------------------------------------------------------------

def membrane_effective_formula(scale):
    err = max(abs(ma.effective_coupling(1, 1, 100) - 0.04),
              abs(ma.effective_coupling(2, 2, 100) - 4 * ma.effective_coupling(1, 1, 100)),
              abs(ma.effective_coupling(0.3, 0, 7)))
    return _le(err, 1e-15 * scale)


def membrane_decoupled_atom(scale):
    spec = ma.TwoModeSpec(20.0, 1.0, 0.0, 1.0)
    rep = ma.adiabatic_check(spec, t_max=50.0, n_times=501, parallel=False)
    return _le(max(np.max(np.abs(rep.n_atom_full - rep.n_atom_full[0])),
                   np.max(np.abs(rep.n_atom_full - rep.n_atom_eff))), 1e-8 * scale)


def membrane_energy(scale):
    spec = ma.TwoModeSpec(8.0, 0.5, 0.4, 1.0)
    model = ma.build_full_model(spec)
    psi0 = ma.initial_state(model.space)
    res = evolve_schrodinger(model.H, psi0, np.linspace(0, 20, 201), {"E": model.H})
    E = np.real(res.expectations["E"])
    return _le(np.max(np.abs(E - E[0])), 1e-8 * scale)


def membrane_swap_at_50g(scale):
    rep = ma.adiabatic_check(ma.TwoModeSpec(50.0, 1.0, 1.0, 1.0))
    return _le(rep.swap_error_full, 0.2)


def membrane_swap_convergence(scale):
    e1 = ma.adiabatic_check(ma.TwoModeSpec(50.0, 1.0, 1.0, 1.0)).swap_error_full
    e2 = ma.adiabatic_check(ma.TwoModeSpec(500.0, 1.0, 1.0, 1.0)).swap_error_full
    return _ge(e1 / e2, 5.0)


# -- epr ----------------------------------------------------------------------

def _cascade(**kw):
    base = dict(omega_m=1.0, Omega=-1.0, g=1.0, kappa_c=4.0, t_final=10.0)
    base.update(kw)
    return gcv.CascadeSpec(**base)


def epr_record_independence(scale):
    spec = _cascade()
    covs = [gcv.evolve_conditional(gcv.GaussianState.vacuum(2), spec, stochastic=True,
                                   seed=s).covs for s in range(10)]
    return _le(max(np.max(np.abs(c - covs[0])) for c in covs), 1e-10 * scale)


def epr_riccati_exact(scale):
    spec = _cascade()
    state = gcv.GaussianState.thermal([2.0, 0.0])
    traj = gcv.evolve_conditional(state, spec)
    return _le(np.max(np.abs(traj.epr - gcv.qnd_epr_exact(spec, 2.0))), 1e-7 * scale)


def epr_conservation(scale):
    spec = _cascade(efficiency=0.0)
    traj = gcv.evolve_conditional(gcv.GaussianState.thermal([1.0, 0.5]), spec)
    V = traj.covs
    vx = V[:, 0, 0] + V[:, 2, 2] + 2 * V[:, 0, 2]
    vp = V[:, 1, 1] + V[:, 3, 3] - 2 * V[:, 1, 3]
    return _le(max(np.ptp(vx), np.ptp(vp)), 1e-9 * scale)


def epr_uncertainty(scale):
    spec = _cascade(efficiency=0.7, gamma_m=0.05, n_th=3.0)
    traj = gcv.evolve_conditional(gcv.GaussianState.thermal([1.0, 0.0]), spec)
    worst = min(gcv.uncertainty_margin(V) for V in traj.covs)
    dets = min(min(np.linalg.det(V[:2, :2]), np.linalg.det(V[2:, 2:])) for V in traj.covs)
    return _ge(min(worst, dets - 0.25), -1e-8 * scale)


def epr_monte_carlo(scale):
    rep = gcv.monte_carlo(gcv.GaussianState.vacuum(2), _cascade(), 500, seed=11)
    return _le(rep.z_score, 3.0)


def epr_monte_carlo_cov(scale):
    rep = gcv.monte_carlo(gcv.GaussianState.vacuum(2), _cascade(), 500, seed=12)
    # 16 elements, 10 independent: Bonferroni-style 4 sigma for the worst one
    return _le(rep.max_cov_z(), 4.0)


def epr_qnd_iff(scale):
    ok = gcv.qnd_conservation_check(1.0, -1.0, 0.8).conserved
    others = [gcv.qnd_conservation_check(1.0, om, 0.8).conserved for om in (1.0, -0.9, 0.0)]
    return float(ok and not any(others)), 1.0, "==", bool(ok and not any(others))


def epr_teleport_classical(scale):
    _, F = gcv.teleport(gcv.GaussianState.coherent(0.3, -1.0), gcv.GaussianState.vacuum(2))
    return _le(abs(F - 0.5), 1e-12 * scale)


CHECKS: dict[str, list[tuple[str, Callable]]] = {
    "core-invariants": [
        ("commutator_truncation", core_commutator),
        ("schrodinger_vs_expm", core_schrodinger_expm),
        ("norm_preservation", core_norm),
        ("trace_preservation", core_trace),
        ("positivity", core_positivity),
        ("liouvillian_consistency", core_liouvillian_consistency),
        ("steady_state_detailed_balance", core_steady_thermal),
        ("steady_state_driven_cavity", core_steady_cavity),
        ("hermiticity_enforced", core_hermiticity_rejected),
        ("truncation_sentinel", core_truncation_sentinel),
        ("expectation_hermitian_real", core_expectation_real),
    ],
    "jc": [
        ("vacuum_rabi", jc_rabi),
        ("excitation_conservation", jc_excitation_conserved),
        ("collective_splitting", jc_tavis_splitting),
        ("collective_rabi_fit", jc_tavis_fit),
        ("quality_factor", jc_quality_factor),
        ("detuned_transfer", jc_detuned_transfer),
    ],
    "spin": [
        ("synthesis_fidelity", spin_synthesis),
        ("swap_unitarity", spin_swap_unitarity),
        ("cooling_monotone", spin_cooling_monotone),
        ("single_phonon_cooling", spin_single_phonon),
    ],
    "membrane": [
        ("effective_coupling_formula", membrane_effective_formula),
        ("decoupled_atom", membrane_decoupled_atom),
        ("energy_conservation", membrane_energy),
        ("swap_frequency_at_50g", membrane_swap_at_50g),
        ("swap_error_convergence", membrane_swap_convergence),
    ],
    "epr": [
        ("record_independence", epr_record_independence),
        ("riccati_vs_closed_form", epr_riccati_exact),
        ("qnd_variances_conserved", epr_conservation),
        ("uncertainty_relation", epr_uncertainty),
        ("monte_carlo_epr", epr_monte_carlo),
        ("monte_carlo_covariance", epr_monte_carlo_cov),
        ("qnd_iff_negative_mass", epr_qnd_iff),
        ("teleport_classical_limit", epr_teleport_classical),
    ],
}


def run_suite(suite: str, tolerance_scale: float = 1.0) -> list[CheckResult]:
    """Run one suite (or ``all``) and return a result per property."""
    if suite == "all":
        names = SUITES
    elif suite in CHECKS:
        names = (suite,)
    else:
        raise KeyError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    out = []
    for name in names:
        for label, fn in CHECKS[name]:
            t0 = time.perf_counter()
            try:
                value, tol, rel, passed = fn(tolerance_scale)
            except Exception as exc:  # a crashing check is a failing check
                value, tol, rel, passed = float("nan"), float("nan"), f"raised {exc!r}", False
            out.append(CheckResult(name, label, value, tol, rel, passed,
                                   time.perf_counter() - t0))
    return out
