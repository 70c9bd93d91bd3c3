import numpy as np
import pytest
import scipy.linalg as la
from scipy.optimize import brentq
from hypothesis import given, settings, strategies as st

import hybridq.spin_nems as sn
from hybridq.core import (Operator, StateVector, basis_state, evolve_lindblad,
                          evolve_schrodinger, expectation, number)
from hybridq.errors import InvalidArgument

E, G = 0, 1  # spin basis: |e> first


def spin_proj(space, level):
    return Operator(space, np.kron(np.diag([1.0 - level, float(level)]),
                                   np.eye(space.dims[1])), hermitian_hint=True)


def random_target(rng, n_max):
    c = rng.normal(size=n_max + 1) + 1j * rng.normal(size=n_max + 1)
    return c / np.linalg.norm(c)


def program_oracle(program, lam, cutoff):
    """Dense product of step unitaries for a reset-free program."""
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1)
    sp_ = np.array([[0, 1], [0, 0]])
    H = lam * (np.kron(sp_, a) + np.kron(sp_.T, a.T))
    U = np.eye(2 * cutoff, dtype=complex)
    for step in program.steps:
        if isinstance(step, sn.SpinRotation):
            n = np.array(step.axis)
            sig = (n[0] * np.array([[0, 1], [1, 0]]) + n[1] * np.array([[0, -1j], [1j, 0]])
                   + n[2] * np.diag([1, -1]))
            R = la.expm(-0.5j * step.angle * sig)
            U = np.kron(R, np.eye(cutoff)) @ U
        else:
            U = la.expm(-1j * H * step.duration) @ U
    return U


# -- model -----------------------------------------------------------------------

def test_rabi_exchange_period():
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=4)
    model = sn.build_spin_resonator(spec)
    space = model.space
    times = np.linspace(0, 2 * np.pi, 201)
    res = evolve_schrodinger(model.H, basis_state(space, {sn.SPIN: E}), times,
                             {"pe": spin_proj(space, E)})
    np.testing.assert_allclose(np.real(res.expectations["pe"]), np.cos(times) ** 2, atol=1e-8)


def test_lab_frame_hamiltonian():
    spec = sn.SpinResonatorSpec(lam=0.2, omega_m=3.0, cutoff=3)
    H = sn.build_spin_resonator(spec, rotating_frame=False).H.matrix
    space = sn.spin_resonator_space(3)
    i = space.basis_index({sn.SPIN: E, sn.MECH: 1})
    j = space.basis_index({sn.SPIN: G, sn.MECH: 2})
    assert H[i, i] == pytest.approx(3.0 + 1.5)
    assert H[j, i] == pytest.approx(0.2 * np.sqrt(2))


def test_collapse_operators():
    spec = sn.SpinResonatorSpec(lam=1.0, gamma_spin=0.4, gamma_heat=0.1, n_bar=2.0,
                                pump_rate=3.0, cutoff=3)
    rates = [r for _, r in sn.build_spin_resonator(spec, pumping=True).collapses]
    assert rates == pytest.approx([0.2, 0.3, 0.2, 3.0])
    assert spec.heating_rate == pytest.approx(0.2)


def test_strong_coupling_predicate():
    lam = 2 * np.pi * 100e3
    spec = sn.SpinResonatorSpec(lam=lam, omega_m=2 * np.pi * 5e6, gamma_spin=2 * np.pi * 1e3,
                                gamma_heat=2 * np.pi * 10, n_bar=100.0)
    assert sn.is_strong_coupling(spec)
    weak = sn.SpinResonatorSpec(lam=1.0, gamma_spin=2.0)
    assert not sn.is_strong_coupling(weak)


def test_dephasing_washes_out_exchange():
    lam = 1.0
    times = np.linspace(0, 3 * np.pi, 301)

    def contrast(gamma):
        spec = sn.SpinResonatorSpec(lam=lam, gamma_spin=gamma, cutoff=3)
        model = sn.build_spin_resonator(spec)
        res = evolve_lindblad(model, basis_state(model.space, {sn.SPIN: E}), times,
                              {"pe": spin_proj(model.space, E)})
        pe = np.real(res.expectations["pe"])
        late = times > np.pi / 2
        return pe[late].max() - pe[late].min()

    assert contrast(10 * lam) < 0.5 * contrast(0.0)


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        sn.SpinResonatorSpec(lam=0.0)
    with pytest.raises(InvalidArgument):
        sn.SpinResonatorSpec(lam=1.0, gamma_heat=-1)


# -- programs -----------------------------------------------------------------------

def test_empty_program_is_identity():
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=4)
    rng = np.random.default_rng(0)
    psi = StateVector(sn.spin_resonator_space(4), rng.normal(size=8), normalize=True)
    out, f = sn.simulate_program(sn.build_spin_resonator(spec), sn.PulseProgram(), psi, psi)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-15)
    assert f == pytest.approx(1.0)


def test_opposite_rotations_cancel():
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=4)
    rng = np.random.default_rng(1)
    psi = StateVector(sn.spin_resonator_space(4), rng.normal(size=8) + 1j * rng.normal(size=8),
                      normalize=True)
    r = sn.SpinRotation((0.3, -0.2, 0.9), 1.1)
    out, _ = sn.simulate_program(sn.build_spin_resonator(spec),
                                 sn.PulseProgram((r, r.inverse())), psi)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_program_matches_unitary_product(seed):
    rng = np.random.default_rng(seed)
    lam, cutoff = rng.uniform(0.3, 2.0), 6
    steps = []
    for _ in range(rng.integers(1, 8)):
        if rng.random() < 0.5:
            steps.append(sn.SpinRotation(tuple(rng.normal(size=3)), rng.uniform(-4, 4)))
        else:
            steps.append(sn.JcInteraction(rng.uniform(0, 3)))
    program = sn.PulseProgram(tuple(steps))
    space = sn.spin_resonator_space(cutoff)
    psi0 = StateVector(space, rng.normal(size=2 * cutoff) + 1j * rng.normal(size=2 * cutoff),
                       normalize=True)
    out, _ = sn.simulate_program(sn.build_spin_resonator(sn.SpinResonatorSpec(lam,
                                                                              cutoff=cutoff)),
                                 program, psi0)
    exact = program_oracle(program, lam, cutoff) @ psi0.amplitudes
    assert np.max(np.abs(out.amplitudes - exact)) <= 1e-10


def test_density_path_agrees_with_pure_path():
    rng = np.random.default_rng(4)
    spec = sn.SpinResonatorSpec(lam=0.8, cutoff=5)
    model = sn.build_spin_resonator(spec)
    program = sn.synthesize_state(random_target(rng, 3), 0.8, 5)
    psi0 = sn.ground_state(5)
    pure, _ = sn.simulate_program(model, program, psi0)
    mixed, _ = sn.simulate_program(model, program, psi0.to_density())
    exact = np.outer(pure.amplitudes, pure.amplitudes.conj())
    assert np.max(np.abs(mixed.matrix - exact)) <= 1e-8


def test_reset_projects_spin_to_ground():
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=3)
    model = sn.build_spin_resonator(spec)
    psi = basis_state(model.space, {sn.SPIN: E, sn.MECH: 1})
    out, _ = sn.simulate_program(model, sn.PulseProgram((sn.ResetSpin(),)), psi)
    expected = basis_state(model.space, {sn.SPIN: G, sn.MECH: 1}).to_density().matrix
    np.testing.assert_allclose(out.matrix, expected, atol=1e-15)


def test_program_text_round_trip():
    program = sn.PulseProgram((sn.SpinRotation((1, 0, 0), np.pi), sn.JcInteraction(0.25),
                               sn.ResetSpin(), sn.SpinRotation((0.1, 0.2, 0.3), -1.7)))
    assert sn.PulseProgram.from_lines(program.to_lines()) == program


@pytest.mark.parametrize("line", ["rotation 1 0 0", "jc -1", "jc", "reset now", "spin 1",
                                  "rotation 0 0 0 1"])
def test_program_parse_errors(line):
    with pytest.raises(InvalidArgument):
        sn.PulseProgram.from_lines([line])


def test_swap_unitarity():
    spec = sn.SpinResonatorSpec(lam=1.3, cutoff=4)
    model = sn.build_spin_resonator(spec)
    space = model.space
    alpha, beta = 0.6, 0.8 * np.exp(0.7j)
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.basis_index({sn.SPIN: G})] = alpha
    psi[space.basis_index({sn.SPIN: E})] = beta
    out, _ = sn.simulate_program(model, sn.PulseProgram((sn.JcInteraction(spec.swap_time),)),
                                 StateVector(space, psi))
    amp = out.amplitudes
    assert abs(amp[space.basis_index({sn.SPIN: G})] - alpha) <= 1e-10
    b1 = amp[space.basis_index({sn.SPIN: G, sn.MECH: 1})]
    assert abs(abs(b1) - abs(beta)) <= 1e-10
    # documented phase: |e,0> -> -i |g,1>
    assert abs(b1 - (-1j) * beta) <= 1e-10


# -- synthesis ----------------------------------------------------------------------

def test_synthesis_vacuum_is_empty():
    assert len(sn.synthesize_state([1.0, 0, 0])) == 0


def test_synthesis_single_phonon():
    lam = 0.7
    program = sn.synthesize_state([0, 1.0], lam)
    kinds = [type(s) for s in program.steps]
    assert kinds == [sn.SpinRotation, sn.JcInteraction]
    assert abs(program.steps[0].angle) == pytest.approx(np.pi)
    assert program.steps[1].duration == pytest.approx(np.pi / (2 * lam))
    _, f = sn.simulate_program(sn.build_spin_resonator(sn.SpinResonatorSpec(lam, cutoff=4)),
                               program, sn.ground_state(4), sn.target_state([0, 1], 4))
    assert f == pytest.approx(1.0, abs=1e-12)


def test_synthesis_zero_plus_two():
    target = np.array([1, 0, 1]) / np.sqrt(2)
    program = sn.synthesize_state(target, 1.0, 6)
    assert len(program) <= 5
    psi0 = sn.ground_state(6)
    model = sn.build_spin_resonator(sn.SpinResonatorSpec(1.0, cutoff=6))
    # independent check through the general-purpose integrator
    psi = psi0
    for step in program.steps:
        if isinstance(step, sn.SpinRotation):
            U = np.kron(step.unitary(), np.eye(6))
            psi = StateVector(psi.space, U @ psi.amplitudes)
        else:
            psi = evolve_schrodinger(model.H, psi, [0, step.duration], store_states=True,
                                     rtol=1e-12, atol=1e-14).final_state
    assert psi.fidelity(sn.target_state(target, 6)) >= 1 - 1e-6


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 4), st.floats(0.2, 5.0))
def test_synthesis_round_trip(seed, n_max, lam):
    rng = np.random.default_rng(seed)
    target = random_target(rng, n_max)
    cutoff = n_max + 2
    program = sn.synthesize_state(target, lam, cutoff)
    assert len(program) <= 2 * n_max + 1
    _, f = sn.simulate_program(sn.build_spin_resonator(sn.SpinResonatorSpec(lam,
                                                                              cutoff=cutoff)),
                               program, sn.ground_state(cutoff), sn.target_state(target, cutoff))
    assert f >= 1 - 1e-6


def test_synthesis_errors():
    with pytest.raises(InvalidArgument):
        sn.synthesize_state([1.0, 1.0])
    with pytest.raises(InvalidArgument):
        sn.synthesize_state([0, 0, 0, 1.0], cutoff=4)


# -- cooling ------------------------------------------------------------------------

def test_single_phonon_cools_in_one_cycle():
    n = sn.run_cooling(sn.SpinResonatorSpec(lam=1.0, cutoff=4), 1, 1, initial="fock")
    assert n.shape == (1,)
    assert abs(n[0]) < 1e-9


def test_thermal_cooling_sweep_reaches_threshold():
    n = sn.run_cooling(sn.SpinResonatorSpec(lam=1.0, cutoff=12), 20, 2.0, schedule="sweep")
    assert n[-1] <= 0.05


@pytest.mark.xfail(strict=True, reason="fixed pi/(2 lam) swaps never empty the dark n = 4 "
                   "level; the thermal start stalls near <n> = 0.84")
def test_thermal_cooling_fixed_schedule_reaches_threshold():
    n = sn.run_cooling(sn.SpinResonatorSpec(lam=1.0, cutoff=12), 20, 2.0)
    assert n[-1] <= 0.05


def test_fixed_schedule_leaves_dark_fock_levels():
    # sqrt(4) lam T = pi: the n = 4 level returns to itself every cycle
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=8)
    n = sn.run_cooling(spec, 10, 4, initial="fock")
    assert n[-1] == pytest.approx(4.0, abs=1e-8)
    n = sn.run_cooling(spec, 10, 4, initial="fock", schedule="sweep")
    assert n[-1] < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 3.0), st.sampled_from(["fixed", "sweep"]))
def test_ideal_cooling_never_heats(n_init, schedule):
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=10)
    n = np.concatenate([[n_init], sn.run_cooling(spec, 8, n_init, schedule=schedule)])
    assert np.all(np.diff(n) <= 1e-10)


def test_one_fixed_cycle_from_thermal():
    # Fock level n keeps sin^2 of its swap phase: <n> drops by sum_n p_n sin^2(pi sqrt(n)/2)
    n_init, cutoff = 1.5, 12
    levels = np.arange(cutoff)

    def mean(r):
        p = r ** levels
        return p @ levels / p.sum()

    r = brentq(lambda r: mean(r) - n_init, 1e-9, 1 - 1e-12)
    p = r ** levels / np.sum(r ** levels)
    expected = n_init - p @ np.sin(np.pi * np.sqrt(levels) / 2) ** 2
    n = sn.run_cooling(sn.SpinResonatorSpec(lam=0.6, cutoff=cutoff), 1, n_init)
    assert n[0] == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("gamma", [1e-3, 2e-3])
def test_heating_floor_instantaneous_reset(gamma):
    spec = sn.SpinResonatorSpec(lam=1.0, gamma_heat=gamma, n_bar=1.0, cutoff=8)
    n = sn.run_cooling(spec, 30, 0.0)
    assert n[-1] == pytest.approx(sn.cooling_floor_estimate(spec), rel=0.1)


def test_heating_floor_finite_reset():
    spec = sn.SpinResonatorSpec(lam=1.0, gamma_heat=2e-3, n_bar=1.0, pump_rate=20.0, cutoff=8)
    n = sn.run_cooling(spec, 30, 0.0, reset_time=1.0)
    est = sn.cooling_floor_estimate(spec, reset_time=1.0)
    assert n[-1] == pytest.approx(est, rel=0.25)
    # longer resets leave more heat behind
    assert est > sn.cooling_floor_estimate(spec)


def test_cooling_argument_checks():
    spec = sn.SpinResonatorSpec(lam=1.0, cutoff=4)
    with pytest.raises(InvalidArgument):
        sn.run_cooling(spec, 0, 1.0)
    with pytest.raises(InvalidArgument):
        sn.run_cooling(spec, 1, 1.0, reset_time=1.0)
    with pytest.raises(InvalidArgument):
        sn.run_cooling(spec, 1, 1.0, schedule="zigzag")
