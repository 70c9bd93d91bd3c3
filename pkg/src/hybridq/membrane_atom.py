"""Membrane and trapped atom coupled through two driven cavity modes.

The cavity fluctuation fields ``c1`` (detuned by ``-delta``) and ``c2``
(detuned by ``+delta``) couple linearly to the membrane displacement and to
the atom's motion. Far from resonance the two fields can be eliminated,
leaving a direct membrane-atom coupling of strength
``4 g_cm g_ca / delta``. :func:`adiabatic_check` runs both descriptions side
by side and quantifies what the elimination loses.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .core import (CompositeSpace, LindbladModel, ModeSpec, annihilation, evolve_lindblad,
                   evolve_schrodinger, number, product_state, quadrature_x)
from .errors import InvalidArgument

CAV1, CAV2, MEMBRANE, ATOM = "c1", "c2", "m", "a"
REGIME_FACTOR = 5.0


class RegimeWarning(UserWarning):
    """Parameters lie outside the large-detuning regime of the elimination."""


@dataclass(frozen=True)
class TwoModeSpec:
    """Parameters of the two-mode cavity, membrane and atom system.

    ``cutoffs`` are ordered (c1, c2, membrane, atom).
    """

    delta: float
    g_cm: float
    g_ca: float
    omega_m: float = 1.0
    omega_a: float | None = None
    kappa: float = 0.0
    cutoffs: tuple[int, int, int, int] = (3, 3, 4, 4)

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta == 0:
            raise InvalidArgument("delta must be finite and non-zero")
        if self.g_cm < 0 or self.g_ca < 0:
            raise InvalidArgument("couplings must be non-negative")
        if self.kappa < 0:
            raise InvalidArgument("kappa must be non-negative")
        if not self.omega_m > 0:
            raise InvalidArgument("omega_m must be positive")
        if self.omega_a is None:
            object.__setattr__(self, "omega_a", self.omega_m)
        elif not self.omega_a > 0:
            raise InvalidArgument("omega_a must be positive")
        cutoffs = tuple(int(c) for c in self.cutoffs)
        if len(cutoffs) != 4 or min(cutoffs) < 2:
            raise InvalidArgument("need four cutoffs, each >= 2")
        object.__setattr__(self, "cutoffs", cutoffs)

    @property
    def resonant(self) -> bool:
        return self.omega_m == self.omega_a

    @property
    def g_eff(self) -> float:
        return effective_coupling(self.g_cm, self.g_ca, self.delta)

    def in_regime(self) -> bool:
        return abs(self.delta) >= REGIME_FACTOR * max(self.g_cm, self.g_ca, self.kappa,
                                                      self.omega_m)


def effective_coupling(g_cm: float, g_ca: float, delta: float) -> float:
    """``4 g_cm g_ca / delta``; enters the effective Hamiltonian with a minus sign."""
    if delta == 0 or not np.isfinite(delta):
        raise InvalidArgument("delta must be finite and non-zero")
    return 4.0 * g_cm * g_ca / delta


def full_space(spec: TwoModeSpec) -> CompositeSpace:
    c1, c2, m, a = spec.cutoffs
    return CompositeSpace([ModeSpec.boson(CAV1, c1), ModeSpec.boson(CAV2, c2),
                           ModeSpec.boson(MEMBRANE, m), ModeSpec.boson(ATOM, a)])


def effective_space(spec: TwoModeSpec) -> CompositeSpace:
    return CompositeSpace([ModeSpec.boson(MEMBRANE, spec.cutoffs[2]),
                           ModeSpec.boson(ATOM, spec.cutoffs[3])])


def build_full_model(spec: TwoModeSpec) -> LindbladModel:
    """Linearized four-mode model in the frame of the driving laser.

    ``H = -delta n1 + delta n2 + omega_m n_m + omega_a n_a
    + (g_cm x_m + g_ca x_a) x1 + (g_cm x_m - g_ca x_a) x2`` with
    ``x = a + a^dag``; collapses ``sqrt(kappa) c1`` and ``sqrt(kappa) c2``.
    """
    space = full_space(spec)
    x = {k: quadrature_x(space, k) for k in (CAV1, CAV2, MEMBRANE, ATOM)}
    H = (-spec.delta * number(space, CAV1) + spec.delta * number(space, CAV2)
         + spec.omega_m * number(space, MEMBRANE) + spec.omega_a * number(space, ATOM)
         + (spec.g_cm * x[MEMBRANE] + spec.g_ca * x[ATOM]) @ x[CAV1]
         + (spec.g_cm * x[MEMBRANE] - spec.g_ca * x[ATOM]) @ x[CAV2])
    collapses = ()
    if spec.kappa > 0:
        collapses = ((annihilation(space, CAV1), spec.kappa),
                     (annihilation(space, CAV2), spec.kappa))
    return LindbladModel(H.as_hermitian(), collapses)


def build_effective_model(spec: TwoModeSpec) -> LindbladModel:
    """``H = omega_m n_m + omega_a n_a - g_eff x_m x_a`` with no dissipation."""
    space = effective_space(spec)
    H = (spec.omega_m * number(space, MEMBRANE) + spec.omega_a * number(space, ATOM)
         - spec.g_eff * quadrature_x(space, MEMBRANE) @ quadrature_x(space, ATOM))
    return LindbladModel(H.as_hermitian(), ())


def effective_swap_frequency(spec: TwoModeSpec) -> float:
    """Exact excitation-exchange frequency of the resonant effective model.

    The normal modes of ``-g_eff x_m x_a`` have frequencies
    ``sqrt(w (w -+ 2 g_eff))``; the exchange frequency is half their
    difference, ``g_eff (1 + g_eff^2 / (2 w^2) + ...)``.
    """
    w, g = spec.omega_m, abs(spec.g_eff)
    if 2 * g >= w:
        raise InvalidArgument("effective coupling too strong: normal mode unstable")
    return 0.5 * (np.sqrt(w * (w + 2 * g)) - np.sqrt(w * (w - 2 * g)))


def cavity_response(epsilon: float, kappa: float, delta: float) -> complex:
    """Steady field amplitude ``epsilon / (kappa/2 - i delta)`` of a driven cavity.

    ``|alpha|^2 = epsilon^2 / (kappa^2/4 + delta^2)``: a Lorentzian in the
    detuning with half-width ``kappa/2`` (kappa being the energy decay rate).
    """
    if kappa == 0 and delta == 0:
        raise InvalidArgument("undamped resonant cavity has no steady state")
    return epsilon / (kappa / 2 - 1j * delta)


def build_driven_cavity(epsilon: float, kappa: float, delta: float,
                        cutoff: int = 15) -> LindbladModel:
    """``H = -delta a^dag a + i epsilon (a^dag - a)`` with collapse ``sqrt(kappa) a``."""
    space = CompositeSpace([ModeSpec.boson("cav", cutoff)])
    a = annihilation(space, "cav")
    H = -delta * (a.dag @ a) + 1j * epsilon * (a.dag - a)
    return LindbladModel(H.as_hermitian(), ((a, kappa),) if kappa > 0 else ())


@dataclass
class AdiabaticReport:
    """Result of :func:`adiabatic_check`.

    ``swap_frequency_full`` and ``swap_frequency_effective`` are fitted from
    the atom's occupation ``n_a(t)``; relative errors are taken against the
    elimination formula ``|g_eff|``. ``max_x_deviation`` is the largest
    difference between the two ``<x_m>(t)`` traces.
    """

    delta: float
    g_eff: float
    times: np.ndarray
    x_full: np.ndarray
    x_eff: np.ndarray
    n_atom_full: np.ndarray
    n_atom_eff: np.ndarray
    swap_frequency_full: float
    swap_frequency_effective: float
    max_x_deviation: float
    max_n_deviation: float
    in_regime: bool
    truncation_suspect: bool
    stats: dict = field(default_factory=dict)

    @property
    def swap_error_full(self) -> float:
        return abs(self.swap_frequency_full - abs(self.g_eff)) / abs(self.g_eff)

    @property
    def swap_error_effective(self) -> float:
        return abs(self.swap_frequency_effective - abs(self.g_eff)) / abs(self.g_eff)

    @property
    def swap_time_error(self) -> float:
        """Relative mismatch of the full-model swap time against the effective one."""
        return abs(self.swap_frequency_effective / self.swap_frequency_full - 1)

    def as_dict(self) -> dict:
        return {
            "delta": self.delta, "g_eff": self.g_eff,
            "swap_frequency_full": self.swap_frequency_full,
            "swap_frequency_effective": self.swap_frequency_effective,
            "swap_error_full": self.swap_error_full,
            "swap_error_effective": self.swap_error_effective,
            "swap_time_error": self.swap_time_error,
            "max_x_deviation": self.max_x_deviation,
            "max_n_deviation": self.max_n_deviation,
            "in_regime": self.in_regime,
            "truncation_suspect": self.truncation_suspect,
        }


def fit_swap_frequency(times, n_atom, guess: float) -> float:
    """Fit ``A sin^2(W t + phi) + B`` to an occupation trace and return ``|W|``."""
    times = np.asarray(times, dtype=float)
    n_atom = np.asarray(n_atom, dtype=float)
    amp = max(float(np.ptp(n_atom)), 1e-12)

    def model(t, A, W, phi, B):
        return A * np.sin(W * t + phi) ** 2 + B

    p0 = (amp, guess, 0.0, float(np.min(n_atom)))
    try:
        popt, _ = curve_fit(model, times, n_atom, p0=p0, maxfev=20000)
    except RuntimeError:
        return float("nan")
    return abs(float(popt[1]))


def initial_state(space: CompositeSpace):
    """Membrane in ``(|0> + |1>)/sqrt(2)``, every other mode in vacuum."""
    v = np.zeros(space.mode(MEMBRANE).dim, dtype=complex)
    v[:2] = 1
    return product_state(space, {MEMBRANE: v})


def _run(model: LindbladModel, times, *, rtol, atol):
    space = model.space
    e_ops = {"x_m": quadrature_x(space, MEMBRANE), "n_a": number(space, ATOM)}
    psi0 = initial_state(space)
    if model.active_collapses():
        return evolve_lindblad(model, psi0, times, e_ops, rtol=rtol, atol=atol)
    return evolve_schrodinger(model.H, psi0, times, e_ops, method="spectral")


def adiabatic_check(spec: TwoModeSpec, t_max: float | None = None, *, n_times: int = 2001,
                    periods: float = 2.0, rtol: float = 1e-9, atol: float = 1e-11,
                    parallel: bool = True) -> AdiabaticReport:
    """Compare the full four-mode model with the eliminated two-mode model.

    Both start from the membrane in ``(|0> + |1>)/sqrt(2)`` with the atom and
    both cavity fields in vacuum. The default window covers ``periods``
    excitation-exchange cycles, ``periods * pi / |g_eff|``. Closed systems
    (``kappa == 0``) are propagated spectrally, open ones through the master
    equation. A :class:`RegimeWarning` is issued when
    ``|delta| < 5 max(g_cm, g_ca, kappa, omega_m)``.
    """
    in_regime = spec.in_regime()
    if not in_regime:
        warnings.warn(f"|delta| = {abs(spec.delta)} is below {REGIME_FACTOR} x the largest "
                      "of (g_cm, g_ca, kappa, omega_m); elimination not justified",
                      RegimeWarning, stacklevel=2)
    g_eff = spec.g_eff
    if t_max is None:
        if g_eff == 0:
            raise InvalidArgument("t_max is required when the effective coupling vanishes")
        t_max = periods * np.pi / abs(g_eff)
    if not t_max > 0:
        raise InvalidArgument("t_max must be positive")
    times = np.linspace(0.0, t_max, n_times)
    models = (build_full_model(spec), build_effective_model(spec))
    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            full, eff = pool.map(lambda m: _run(m, times, rtol=rtol, atol=atol), models)
    else:
        full, eff = (_run(m, times, rtol=rtol, atol=atol) for m in models)

    x_full = np.real(full.expectations["x_m"])
    x_eff = np.real(eff.expectations["x_m"])
    n_full = np.real(full.expectations["n_a"])
    n_eff = np.real(eff.expectations["n_a"])
    if g_eff == 0:
        w_full = w_eff = 0.0
    else:
        w_full = fit_swap_frequency(times, n_full, abs(g_eff))
        w_eff = fit_swap_frequency(times, n_eff, abs(g_eff))
    return AdiabaticReport(
        delta=spec.delta, g_eff=g_eff, times=times, x_full=x_full, x_eff=x_eff,
        n_atom_full=n_full, n_atom_eff=n_eff, swap_frequency_full=w_full,
        swap_frequency_effective=w_eff,
        max_x_deviation=float(np.max(np.abs(x_full - x_eff))),
        max_n_deviation=float(np.max(np.abs(n_full - n_eff))),
        in_regime=in_regime,
        truncation_suspect=full.truncation_suspect or eff.truncation_suspect,
        stats={"full": full.stats, "effective": eff.stats})
