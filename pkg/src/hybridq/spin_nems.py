"""Electronic spin strongly coupled to a nanomechanical resonator.

The spin is an effective resonant two-level system (the dressed-state
encoding of a driven NV centre is abstracted into the phenomenological
dephasing rate). Two protocols are provided on top of the Jaynes-Cummings
model: swap-and-reset cooling of the resonator, and synthesis of arbitrary
resonator superpositions from alternating spin rotations and JC intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg as la

from .core import (CompositeSpace, DensityMatrix, LindbladModel, ModeSpec, StateVector,
                   annihilation, basis_state, evolve_lindblad, expectation, number,
                   spin_op, thermal_populations)
from .core.operators import sigma_x, sigma_y, sigma_z
from .errors import DimensionMismatch, InvalidArgument

SPIN = "spin"
MECH = "mech"

# basis index 0 = |e>, 1 = |g>
_PAULI = (sigma_x().matrix, sigma_y().matrix, sigma_z().matrix)
_E, _G = 0, 1


@dataclass(frozen=True)
class SpinResonatorSpec:
    """Parameters of the spin-resonator system.

    ``lam`` is the single-phonon coupling. ``gamma_heat`` is the mechanical
    damping rate; with bath occupancy ``n_bar`` phonons enter at
    ``gamma_heat * n_bar`` per unit time. ``pump_rate`` enables the
    finite-rate optical-pumping channel ``sqrt(pump_rate) sigma_-``.
    """

    lam: float
    omega_m: float = 1.0
    gamma_spin: float = 0.0
    gamma_heat: float = 0.0
    n_bar: float = 0.0
    cutoff: int = 10
    pump_rate: float = 0.0

    def __post_init__(self):
        if not self.lam > 0 or not self.omega_m > 0:
            raise InvalidArgument("lam and omega_m must be positive")
        for name in ("gamma_spin", "gamma_heat", "n_bar", "pump_rate"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise InvalidArgument("cutoff must be an integer >= 2")

    @property
    def heating_rate(self) -> float:
        return self.gamma_heat * self.n_bar

    @property
    def swap_time(self) -> float:
        """Duration of a full single-phonon swap, pi / (2 lam)."""
        return np.pi / (2 * self.lam)


def is_strong_coupling(spec: SpinResonatorSpec) -> bool:
    """Coupling exceeds both the spin decoherence and the mechanical heating rate."""
    return spec.lam > spec.gamma_spin and spec.lam > spec.heating_rate


def spin_resonator_space(cutoff: int) -> CompositeSpace:
    return CompositeSpace([ModeSpec.spin(SPIN), ModeSpec.boson(MECH, cutoff)])


def build_spin_resonator(spec: SpinResonatorSpec, *, rotating_frame: bool = True,
                         pumping: bool = False) -> LindbladModel:
    """Resonant JC model with dephasing, thermal heating and optional pumping.

    In the lab frame ``H = omega_m a^dag a + omega_m sigma_z / 2
    + lam (sigma_+ a + sigma_- a^dag)``; the rotating frame keeps only the
    coupling. Collapses: ``sqrt(gamma_spin/2) sigma_z``,
    ``sqrt(gamma_heat (n_bar+1)) a``, ``sqrt(gamma_heat n_bar) a^dag`` and,
    with ``pumping=True``, ``sqrt(pump_rate) sigma_-``.
    """
    space = spin_resonator_space(spec.cutoff)
    a = annihilation(space, MECH)
    sp_, sm, sz = (spin_op(space, SPIN, w) for w in "+-z")
    H = spec.lam * (sp_ @ a + sm @ a.dag)
    if not rotating_frame:
        H = H + spec.omega_m * (a.dag @ a) + 0.5 * spec.omega_m * sz
    collapses = [(sz, spec.gamma_spin / 2),
                 (a, spec.gamma_heat * (spec.n_bar + 1)),
                 (a.dag, spec.gamma_heat * spec.n_bar)]
    if pumping:
        collapses.append((sm, spec.pump_rate))
    return LindbladModel(H.as_hermitian(), tuple((op, r) for op, r in collapses if r > 0))


# -- pulse programs ---------------------------------------------------------

@dataclass(frozen=True)
class SpinRotation:
    """Instantaneous rotation ``exp(-i angle/2 n.sigma)`` about unit ``axis``."""

    axis: tuple[float, float, float]
    angle: float

    def __post_init__(self):
        axis = tuple(float(x) for x in self.axis)
        norm = np.linalg.norm(axis)
        if len(axis) != 3 or not np.isfinite(norm) or norm == 0:
            raise InvalidArgument(f"invalid rotation axis {self.axis!r}")
        if not np.isfinite(self.angle):
            raise InvalidArgument("rotation angle must be finite")
        if abs(norm - 1) > 4e-16:  # leave unit axes bit-exact for text round trips
            axis = tuple(x / norm for x in axis)
        object.__setattr__(self, "axis", tuple(float(x) for x in axis))
        object.__setattr__(self, "angle", float(self.angle))

    def unitary(self) -> np.ndarray:
        n_sigma = sum(n * p for n, p in zip(self.axis, _PAULI))
        return (np.cos(self.angle / 2) * np.eye(2)
                - 1j * np.sin(self.angle / 2) * n_sigma)

    def inverse(self) -> "SpinRotation":
        return SpinRotation(self.axis, -self.angle)


@dataclass(frozen=True)
class JcInteraction:
    duration: float

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration >= 0):
            raise InvalidArgument("JC durations must be finite and non-negative")
        object.__setattr__(self, "duration", float(self.duration))


@dataclass(frozen=True)
class ResetSpin:
    """Projective re-preparation of the spin in |g> (strong optical pumping)."""


Step = Union[SpinRotation, JcInteraction, ResetSpin]


@dataclass(frozen=True)
class PulseProgram:
    steps: tuple[Step, ...] = ()

    def __post_init__(self):
        steps = tuple(self.steps)
        for s in steps:
            if not isinstance(s, (SpinRotation, JcInteraction, ResetSpin)):
                raise InvalidArgument(f"unknown program step {s!r}")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def to_lines(self) -> list[str]:
        """One text line per step, e.g. ``rotation 1.0 0.0 0.0 3.14159``."""
        out = []
        for s in self.steps:
            if isinstance(s, SpinRotation):
                out.append("rotation " + " ".join(repr(float(x)) for x in (*s.axis, s.angle)))
            elif isinstance(s, JcInteraction):
                out.append(f"jc {s.duration!r}")
            else:
                out.append("reset")
        return out

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "PulseProgram":
        steps = []
        for line in lines:
            parts = line.split()
            if not parts:
                continue
            head, args = parts[0].lower(), parts[1:]
            try:
                if head == "rotation" and len(args) == 4:
                    vals = [float(x) for x in args]
                    steps.append(SpinRotation(tuple(vals[:3]), vals[3]))
                elif head == "jc" and len(args) == 1:
                    steps.append(JcInteraction(float(args[0])))
                elif head == "reset" and not args:
                    steps.append(ResetSpin())
                else:
                    raise InvalidArgument(f"cannot parse program step {line!r}")
            except ValueError as exc:
                raise InvalidArgument(f"cannot parse program step {line!r}: {exc}") from None
        return cls(tuple(steps))


def _su2_to_rotation(U: np.ndarray, tol: float = 1e-14) -> SpinRotation | None:
    """Axis-angle form of an SU(2) matrix; ``None`` for the identity."""
    c = np.real(np.trace(U)) / 2
    ns = np.array([np.real(1j * np.trace(p @ U) / 2) for p in _PAULI])
    s = np.linalg.norm(ns)
    if s < tol:
        return None
    return SpinRotation(tuple(ns / s), 2 * np.arctan2(s, c))


# -- state synthesis --------------------------------------------------------

def synthesize_state(target, lam: float = 1.0, cutoff: int | None = None) -> PulseProgram:
    """Pulse program taking ``|g,0>`` to ``|g> (sum_n c_n |n>)``.

    The construction unwinds the target backwards: at each excitation level
    k a JC interval (Rabi frequency ``lam sqrt(k)``) moves the ``|g,k>``
    amplitude into ``|e,k-1>`` and a single spin rotation clears ``|e,k-1>``
    while fixing the relative phase needed by the next JC interval. The
    forward program is the reversed list of inverses, at most
    ``2 n_max + 1`` steps.
    """
    coeffs = np.asarray(target, dtype=complex).reshape(-1)
    if coeffs.size == 0:
        raise InvalidArgument("empty target")
    if abs(np.linalg.norm(coeffs) - 1) > 1e-10:
        raise InvalidArgument("target coefficients must be normalized")
    nz = np.nonzero(np.abs(coeffs) > 0)[0]
    n_max = int(nz[-1]) if nz.size else 0
    if cutoff is not None and n_max > cutoff - 2:
        raise InvalidArgument(f"n_max = {n_max} too large for cutoff {cutoff}")
    if lam <= 0:
        raise InvalidArgument("lam must be positive")

    E = np.zeros(n_max + 1, dtype=complex)
    G = coeffs[:n_max + 1].copy()
    backward: list = []

    def rotate(U):
        nonlocal E, G
        E, G = U[0, 0] * E + U[0, 1] * G, U[1, 0] * E + U[1, 1] * G

    def phase_fix(k):
        # z-rotation making G[k] / E[k-1] a non-negative multiple of -i
        if k < 1 or abs(G[k]) == 0 or abs(E[k - 1]) == 0:
            return np.eye(2)
        alpha = -np.pi / 2 - np.angle(G[k] / E[k - 1])
        return np.diag([np.exp(-0.5j * alpha), np.exp(0.5j * alpha)])

    if n_max >= 1:
        Z = phase_fix(n_max)
        rotate(Z)
        backward.append(("rot", Z))
    for k in range(n_max, 0, -1):
        theta = np.arctan2(abs(G[k]), abs(E[k - 1]))
        t = theta / (lam * np.sqrt(k))
        # inverse JC on every (|e,n-1>, |g,n>) pair
        for n in range(1, n_max + 1):
            th = lam * np.sqrt(n) * t
            e, g = E[n - 1], G[n]
            E[n - 1] = np.cos(th) * e + 1j * np.sin(th) * g
            G[n] = 1j * np.sin(th) * e + np.cos(th) * g
        backward.append(("jc", t))
        a, b = E[k - 1], G[k - 1]
        norm = np.hypot(abs(a), abs(b))
        W = np.eye(2, dtype=complex) if norm == 0 else np.array(
            [[b, -a], [np.conj(a), np.conj(b)]]) / norm
        rotate(W)
        Z = phase_fix(k - 1)
        rotate(Z)
        backward.append(("rot", Z @ W))

    steps: list[Step] = []
    for kind, val in reversed(backward):
        if kind == "jc":
            if val > 0:
                steps.append(JcInteraction(val))
        else:
            rot = _su2_to_rotation(val.conj().T)
            if rot is not None:
                steps.append(rot)
    return PulseProgram(tuple(steps))


def target_state(coeffs, cutoff: int) -> StateVector:
    """``|g> (sum_n c_n |n>)`` on the spin-resonator space."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.size > cutoff:
        raise InvalidArgument("more coefficients than the cutoff allows")
    space = spin_resonator_space(cutoff)
    amps = np.zeros((2, cutoff), dtype=complex)
    amps[_G, :coeffs.size] = coeffs
    return StateVector(space, amps.reshape(-1))


def ground_state(cutoff: int) -> StateVector:
    return basis_state(spin_resonator_space(cutoff), {SPIN: _G})


def _spin_unitary(space: CompositeSpace, U2: np.ndarray) -> np.ndarray:
    k = space.index(SPIN)
    factors = [np.eye(d) for d in space.dims]
    factors[k] = U2
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def _reset(rho: np.ndarray, space: CompositeSpace) -> np.ndarray:
    k = space.index(SPIN)
    dims = space.dims
    t = rho.reshape(dims + dims)
    n = len(dims)
    # trace out the spin, re-prepare |g><g|
    reduced = np.trace(t, axis1=k, axis2=k + n)
    g = np.zeros((2, 2))
    g[_G, _G] = 1
    rest = [d for i, d in enumerate(dims) if i != k]
    reduced = reduced.reshape(int(np.prod(rest)), int(np.prod(rest)))
    return np.kron(g, reduced) if k == 0 else np.kron(reduced, g)


def simulate_program(model: LindbladModel, program: PulseProgram, psi0, target=None,
                     *, rtol: float = 1e-10, atol: float = 1e-12):
    """Apply ``program`` to ``psi0`` under ``model``.

    Rotations are instantaneous unitaries and JC intervals evolve under the
    model. A closed model with no resets keeps the state pure and uses exact
    spectral propagation; otherwise the density matrix is integrated through
    the master equation. Returns ``(final_state, fidelity)``; ``fidelity``
    is ``None`` without a ``target``.
    """
    space = model.space
    if psi0.space != space:
        raise DimensionMismatch("initial state lives on a different space")
    if SPIN not in space.labels:
        raise DimensionMismatch(f"model has no {SPIN!r} mode")
    pure = (isinstance(psi0, StateVector) and not model.active_collapses()
            and not any(isinstance(s, ResetSpin) for s in program.steps))
    if pure:
        energies, vecs = la.eigh(model.H.matrix)
        psi = np.array(psi0.amplitudes)
        for step in program.steps:
            if isinstance(step, SpinRotation):
                psi = _spin_unitary(space, step.unitary()) @ psi
            else:
                psi = vecs @ (np.exp(-1j * energies * step.duration) * (vecs.conj().T @ psi))
        final = StateVector(space, psi, normalize=True)
    else:
        rho = np.array(psi0.to_density().matrix if isinstance(psi0, StateVector)
                       else psi0.matrix)
        for step in program.steps:
            if isinstance(step, SpinRotation):
                U = _spin_unitary(space, step.unitary())
                rho = U @ rho @ U.conj().T
            elif isinstance(step, ResetSpin):
                rho = _reset(rho, space)
            elif step.duration > 0:
                res = evolve_lindblad(model, DensityMatrix(space, rho, check=False),
                                      [0.0, step.duration], store_states=True,
                                      rtol=rtol, atol=atol)
                rho = np.array(res.final_state.matrix)
        final = DensityMatrix(space, 0.5 * (rho + rho.conj().T))
    fidelity = None
    if target is not None:
        fidelity = float(np.real(expectation_state_fidelity(final, target)))
    return final, fidelity


def expectation_state_fidelity(state, target: StateVector) -> float:
    if isinstance(state, StateVector):
        return state.fidelity(target)
    psi = target.amplitudes
    return float(np.real(np.vdot(psi, state.matrix @ psi)))


# -- cooling ----------------------------------------------------------------

def cooling_schedule(spec: SpinResonatorSpec, cycles: int, schedule: str = "fixed"):
    """JC durations for each cooling cycle.

    ``fixed`` uses the single-phonon swap time pi/(2 lam) every cycle (Fock
    levels with sqrt(n) an even integer, n = 4, 16, ..., are then never
    transferred). ``sweep`` walks the swap time down the ladder,
    pi/(2 lam sqrt(m)) for m = min(cycles, cutoff-1) ... 1, which empties
    every level below the starting m in a single pass.
    """
    if schedule == "fixed":
        return [spec.swap_time] * cycles
    if schedule == "sweep":
        top = min(cycles, spec.cutoff - 1)
        levels = list(range(top, 0, -1))
        levels += [1] * (cycles - len(levels))
        return [np.pi / (2 * spec.lam * np.sqrt(m)) for m in levels]
    raise InvalidArgument(f"unknown cooling schedule {schedule!r}")


def run_cooling(spec: SpinResonatorSpec, cycles: int, n_init: float, *,
                initial: str = "thermal", schedule: str = "fixed",
                reset_time: float = 0.0) -> np.ndarray:
    """Swap-and-reset cooling; returns ``<n>`` after each cycle.

    A thermal start is the truncated Gibbs state with mean exactly
    ``n_init``. Each cycle runs a JC interval followed by a spin reset. With
    ``reset_time == 0`` the reset is an instantaneous projection onto
    ``|g>``; otherwise the spin is pumped for ``reset_time`` through the
    ``sqrt(pump_rate) sigma_-`` channel with the JC coupling switched off
    and heating still active.
    """
    if int(cycles) != cycles or cycles < 1:
        raise InvalidArgument("cycles must be a positive integer")
    if reset_time < 0:
        raise InvalidArgument("reset_time must be non-negative")
    if reset_time > 0 and spec.pump_rate <= 0:
        raise InvalidArgument("finite-time reset needs pump_rate > 0")
    model = build_spin_resonator(spec)
    space = model.space
    if initial == "thermal":
        pops = thermal_populations(n_init, spec.cutoff, match_mean=True)
    elif initial == "fock":
        if int(n_init) != n_init or not 0 <= n_init < spec.cutoff:
            raise InvalidArgument("Fock initial state needs an integer n_init below cutoff")
        pops = np.zeros(spec.cutoff)
        pops[int(n_init)] = 1
    else:
        raise InvalidArgument(f"unknown initial state kind {initial!r}")
    spin_g = np.zeros(2)
    spin_g[_G] = 1
    rho = np.kron(np.diag(spin_g), np.diag(pops)).astype(complex)
    n_op = number(space, MECH)

    pump_model = None
    if reset_time > 0:
        zero_H = 0 * model.H
        pump_model = LindbladModel(zero_H.as_hermitian(), tuple(
            (op, r) for op, r in build_spin_resonator(spec, pumping=True).collapses))

    out = []
    for duration in cooling_schedule(spec, int(cycles), schedule):
        res = evolve_lindblad(model, DensityMatrix(space, rho, check=False),
                              [0.0, duration], store_states=True, rtol=1e-10, atol=1e-12)
        rho = np.array(res.final_state.matrix)
        if pump_model is None:
            rho = _reset(rho, space)
        else:
            res = evolve_lindblad(pump_model, DensityMatrix(space, rho, check=False),
                                  [0.0, reset_time], store_states=True,
                                  rtol=1e-10, atol=1e-12)
            rho = np.array(res.final_state.matrix)
        out.append(float(np.real(expectation(n_op, DensityMatrix(space, rho, check=False)))))
    return np.array(out)


def cooling_floor_estimate(spec: SpinResonatorSpec, reset_time: float = 0.0) -> float:
    """Rate-equation estimate of the residual ``<n>`` at the end of a cycle.

    Phonons entering at ``gamma_heat * n_bar`` during the swap interval of
    length T are transferred with probability sin^2(lam (T - s)), which
    averages to 1/2 over a uniform entry time s; phonons entering during the
    reset survive until the next swap removes them.
    """
    return spec.heating_rate * (spec.swap_time / 2 + reset_time)
