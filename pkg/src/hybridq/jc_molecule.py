"""Polar-molecule memory coupled to a stripline cavity.

Covers the rigid-rotor level structure, the single-molecule Jaynes-Cummings
model, the ensemble (Tavis-Cummings) model with its collective coupling, and
a sideband-cooling model for the trapped molecule's motion.

Spin convention for the rotor two-level subspace {|N+1>, |N>}: basis index 0
is the upper level |e>, ``sigma_z = |e><e| - |g><g|``, so ``E_rot * sigma_z``
splits the levels by ``2 * E_rot``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (CompositeSpace, LindbladModel, ModeSpec, Operator, annihilation,
                   expectation, number, product_density, spin_op, steady_state,
                   thermal_populations)
from .errors import InvalidArgument

ROTOR = "rotor"
CAVITY = "cav"
MOTION = "motion"
MAX_EXACT_SPINS = 8


@dataclass(frozen=True)
class RotorSpec:
    """Rigid rotor ``E_N = B N (N + 1)`` with qubit levels N_lower, N_lower+1."""

    B: float
    N_lower: int = 0

    def __post_init__(self):
        if not self.B > 0:
            raise InvalidArgument("rotational constant B must be positive")
        if int(self.N_lower) != self.N_lower or self.N_lower < 0:
            raise InvalidArgument("N_lower must be a non-negative integer")


def rotor_energy(B: float, N: int) -> float:
    return B * N * (N + 1)


def rotor_transition(spec: RotorSpec) -> tuple[float, float]:
    """Return ``(E_rot, transition)`` for the chosen rotor level pair.

    ``transition = E_{N+1} - E_N = 2 B (N + 1)`` and ``E_rot`` is half of it.
    """
    N = int(spec.N_lower)
    transition = rotor_energy(spec.B, N + 1) - rotor_energy(spec.B, N)
    return transition / 2, transition


def anharmonicity(spec: RotorSpec) -> float:
    """Difference between the next transition up the ladder and this one (= 2B)."""
    _, here = rotor_transition(spec)
    _, above = rotor_transition(RotorSpec(spec.B, spec.N_lower + 1))
    return above - here


@dataclass(frozen=True)
class JcSpec:
    omega_c: float
    E_rot: float
    g: float
    kappa: float = 0.0
    cutoff: int = 5

    def __post_init__(self):
        if not self.omega_c > 0:
            raise InvalidArgument("omega_c must be positive")
        if self.g < 0 or self.kappa < 0:
            raise InvalidArgument("g and kappa must be non-negative")
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise InvalidArgument("cutoff must be an integer >= 2")

    @property
    def detuning(self) -> float:
        """Rotor transition minus cavity frequency."""
        return 2 * self.E_rot - self.omega_c

    @property
    def quality_factor(self) -> float:
        return quality_factor(self.omega_c, self.kappa)


def quality_factor(omega_c: float, kappa: float) -> float:
    """``Q = omega_c / kappa`` (kappa is the energy decay rate)."""
    if kappa <= 0:
        return float("inf")
    return omega_c / kappa


def jc_space(cutoff: int) -> CompositeSpace:
    return CompositeSpace([ModeSpec.spin(ROTOR), ModeSpec.boson(CAVITY, cutoff)])


def build_jc(spec: JcSpec, *, rotating_frame: bool = False) -> LindbladModel:
    """``H = omega_c c^dag c + E_rot sigma_z + g (sigma_+ c + sigma_- c^dag)``.

    With ``rotating_frame=True`` the Hamiltonian is written in the frame
    rotating at ``omega_c`` (only the detuning survives), which is the
    sensible choice for GHz cavities with kHz couplings.
    """
    space = jc_space(spec.cutoff)
    c = annihilation(space, CAVITY)
    sz = spin_op(space, ROTOR, "z")
    sp_, sm = spin_op(space, ROTOR, "+"), spin_op(space, ROTOR, "-")
    if rotating_frame:
        free = 0.5 * spec.detuning * sz
    else:
        free = spec.omega_c * (c.dag @ c) + spec.E_rot * sz
    H = (free + spec.g * (sp_ @ c + sm @ c.dag)).as_hermitian()
    collapses = ((c, spec.kappa),) if spec.kappa > 0 else ()
    return LindbladModel(H, collapses)


def excitation_number(space: CompositeSpace) -> Operator:
    """``c^dag c + sum_i sigma_+ sigma_-`` over every spin mode in ``space``."""
    total = number(space, CAVITY)
    for mode in space.modes:
        if mode.kind == "spin_half":
            total = total + spin_op(space, mode.label, "+") @ spin_op(space, mode.label, "-")
    return total.as_hermitian()


def collective_coupling(g: float, n_spins: int) -> float:
    return g * np.sqrt(n_spins)


def tavis_cummings_space(n_spins: int, cutoff: int) -> CompositeSpace:
    spins = [ModeSpec.spin(f"{ROTOR}{i}") for i in range(n_spins)]
    return CompositeSpace(spins + [ModeSpec.boson(CAVITY, cutoff)])


def build_tavis_cummings(n_spins: int, g: float, omega_c: float, E_rot: float, *,
                         kappa: float = 0.0, cutoff: int = 2,
                         rotating_frame: bool = False) -> LindbladModel:
    """Exact model of ``n_spins`` identical rotors sharing one cavity mode.

    Spins are labelled ``rotor0 .. rotor{n-1}``; for ``n_spins == 1`` the
    single spin keeps the plain ``rotor`` label so the model coincides with
    :func:`build_jc`.
    """
    if int(n_spins) != n_spins or not 1 <= n_spins <= MAX_EXACT_SPINS:
        raise InvalidArgument(
            f"n_spins must be an integer in [1, {MAX_EXACT_SPINS}] for the exact model; "
            "use build_bosonized_ensemble for large ensembles")
    if n_spins == 1:
        return build_jc(JcSpec(omega_c, E_rot, g, kappa, cutoff),
                        rotating_frame=rotating_frame)
    space = tavis_cummings_space(n_spins, cutoff)
    c = annihilation(space, CAVITY)
    detuning = 2 * E_rot - omega_c
    H = 0 if rotating_frame else omega_c * (c.dag @ c)
    for i in range(n_spins):
        label = f"{ROTOR}{i}"
        sz = spin_op(space, label, "z")
        H = H + (0.5 * detuning if rotating_frame else E_rot) * sz
        H = H + g * (spin_op(space, label, "+") @ c + spin_op(space, label, "-") @ c.dag)
    collapses = ((c, kappa),) if kappa > 0 else ()
    return LindbladModel(H.as_hermitian(), collapses)


def build_bosonized_ensemble(n_spins: float, g: float, omega_c: float, E_rot: float, *,
                             kappa: float = 0.0, cutoffs: tuple[int, int] = (4, 4)
                             ) -> LindbladModel:
    """Large-ensemble approximation: a single collective oscillator.

    A highly polarized ensemble's collective excitation is treated as a
    harmonic mode ``b`` of frequency ``2 E_rot`` coupled to the cavity at
    ``g sqrt(N)``. Mode labels: ``ensemble`` and ``cav``.
    """
    if n_spins < 1:
        raise InvalidArgument("n_spins must be >= 1")
    space = CompositeSpace([ModeSpec.boson("ensemble", cutoffs[0]),
                            ModeSpec.boson(CAVITY, cutoffs[1])])
    b = annihilation(space, "ensemble")
    c = annihilation(space, CAVITY)
    G = collective_coupling(g, n_spins)
    H = omega_c * (c.dag @ c) + 2 * E_rot * (b.dag @ b) + G * (b.dag @ c + b @ c.dag)
    collapses = ((c, kappa),) if kappa > 0 else ()
    return LindbladModel(H.as_hermitian(), collapses)


@dataclass(frozen=True)
class CoolingSpec:
    """Sideband cooling of the molecule's trapped motion through the cavity.

    Attributes
    ----------
    nu_t : trap frequency.
    eta : motion-rotor sideband coupling (Lamb-Dicke parameter times drive
        Rabi frequency).
    kappa : cavity energy decay rate.
    detuning : drive detuning measured from the lower rotor-cavity dressed
        state; ``-nu_t`` is the red sideband.
    n_init : initial thermal occupancy of the motion.
    g_rc : resonant rotor-cavity coupling. Must exceed ``kappa`` for the
        dressed-state picture to hold.
    cutoffs : boson cutoffs for (motion, cavity).
    """

    nu_t: float
    eta: float
    kappa: float
    detuning: float
    n_init: float = 0.0
    g_rc: float = 1.0
    cutoffs: tuple[int, int] = (6, 4)

    def __post_init__(self):
        if not self.nu_t > 0:
            raise InvalidArgument("nu_t must be positive")
        if not self.kappa > 0:
            raise InvalidArgument("kappa must be positive")
        if self.n_init < 0:
            raise InvalidArgument("n_init must be non-negative")
        if self.eta < 0 or self.g_rc < 0:
            raise InvalidArgument("couplings must be non-negative")


def cooling_space(spec: CoolingSpec) -> CompositeSpace:
    return CompositeSpace([ModeSpec.boson(MOTION, spec.cutoffs[0]), ModeSpec.spin(ROTOR),
                           ModeSpec.boson(CAVITY, spec.cutoffs[1])])


def red_sideband_detuning(spec: CoolingSpec) -> float:
    return -spec.nu_t


def build_sideband_cooling(spec: CoolingSpec) -> LindbladModel:
    """Three-component cooling model: motion x rotor x cavity.

    Written in the frame of the cooling drive::

        H = nu_t b^dag b + w (sigma_+ sigma_- + c^dag c)
            + eta (sigma_+ + sigma_-)(b + b^dag) + g_rc (sigma_+ c + sigma_- c^dag)

    with ``w = g_rc - detuning`` so the lower dressed state sits at
    ``-detuning``. At the red sideband a phonon is converted into a dressed
    rotor-cavity excitation that leaks out through the cavity (rate kappa).
    The carrier term of the drive is omitted (Lamb-Dicke limit, sideband
    coupling only).
    """
    space = cooling_space(spec)
    b = annihilation(space, MOTION)
    c = annihilation(space, CAVITY)
    sp_, sm = spin_op(space, ROTOR, "+"), spin_op(space, ROTOR, "-")
    w = spec.g_rc - spec.detuning
    H = (spec.nu_t * (b.dag @ b) + w * (sp_ @ sm + c.dag @ c)
         + spec.eta * ((sp_ + sm) @ (b + b.dag))
         + spec.g_rc * (sp_ @ c + sm @ c.dag))
    return LindbladModel(H.as_hermitian(), ((c, spec.kappa),))


def cooling_initial_state(spec: CoolingSpec):
    """Thermal motion with rotor and cavity in their ground states.

    The motional distribution is a truncated Gibbs state whose mean is
    exactly ``n_init``, so ``n_init`` must stay below ``(cutoff - 1) / 2``.
    """
    space = cooling_space(spec)
    rotor_g = np.array([0.0, 1.0])
    motion = thermal_populations(spec.n_init, spec.cutoffs[0], match_mean=True)
    return product_density(space, {MOTION: motion, ROTOR: rotor_g})


def steady_phonon_number(spec: CoolingSpec) -> float:
    """Steady-state ``<b^dag b>`` of the cooling model."""
    model = build_sideband_cooling(spec)
    rho = steady_state(model)
    return float(np.real(expectation(number(model.space, MOTION), rho)))
