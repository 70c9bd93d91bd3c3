"""Gaussian continuous-variable engine for the cascaded EPR protocol.

Conventions: quadratures are ordered ``(X1, P1, X2, P2, ...)`` with
``[X, P] = i`` and vacuum variance 1/2, so a product of vacua has
``Var(X_m + X_a) + Var(P_m - P_a) = 2``. Covariances are symmetrized,
``V_ij = <{dx_i, dx_j}>/2``.

Cascade model. Light probing the mechanics (frequency ``omega_m``) and then
the ensemble (frequency ``Omega``) is eliminated into a single measurement
channel ``L = sqrt(2 k) q(t)`` with ``k = g^2 / kappa_c``. All dynamics are
written in the frame rotating at ``+omega_m`` for the mechanics and
``-omega_m`` for the ensemble, where the measured combination is
``q(t) = cos(w t)(X_m + X_a) + sin(w t)(P_m - P_a)``. In this frame the
ensemble keeps a residual frequency ``Omega + omega_m``, which vanishes in
the QND configuration ``Omega = -omega_m``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, InvalidArgument

COV_SYMMETRY_TOL = 1e-10
UNCERTAINTY_TOL = 1e-8


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix of an ``n_modes`` Gaussian state.

    Construction checks symmetry and the uncertainty relation
    ``V + (i/2) Omega >= 0``; pass ``check=False`` to skip the latter.
    """

    mean: np.ndarray
    cov: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean of length {mean.size} and covariance of shape {cov.shape} do not match")
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if np.max(np.abs(cov - cov.T), initial=0.0) > COV_SYMMETRY_TOL * scale:
            raise InvalidArgument("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if self.check:
            lo = uncertainty_margin(cov)
            if lo < -UNCERTAINTY_TOL * scale:
                raise InvalidArgument(
                    f"covariance violates the uncertainty relation (min eigenvalue {lo:.3g})")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    @classmethod
    def vacuum(cls, n_modes: int) -> "GaussianState":
        return cls(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes))

    @classmethod
    def thermal(cls, n_bars) -> "GaussianState":
        n_bars = np.atleast_1d(np.asarray(n_bars, dtype=float))
        if np.any(n_bars < 0):
            raise InvalidArgument("occupancies must be non-negative")
        return cls(np.zeros(2 * n_bars.size), np.diag(np.repeat(n_bars + 0.5, 2)))

    @classmethod
    def coherent(cls, x: float, p: float) -> "GaussianState":
        return cls(np.array([x, p]), 0.5 * np.eye(2))

    @classmethod
    def two_mode_squeezed(cls, r: float) -> "GaussianState":
        """Two-mode squeezed vacuum correlated so that ``X1 + X2`` and ``P1 - P2`` shrink."""
        c, s = np.cosh(2 * r) / 2, np.sinh(2 * r) / 2
        cov = np.array([[c, 0, -s, 0],
                        [0, c, 0, s],
                        [-s, 0, c, 0],
                        [0, s, 0, c]])
        return cls(np.zeros(4), cov)

    def reduced(self, modes) -> "GaussianState":
        idx = np.ravel([[2 * m, 2 * m + 1] for m in modes])
        return GaussianState(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def tensor(self, other: "GaussianState") -> "GaussianState":
        return GaussianState(np.concatenate([self.mean, other.mean]),
                             la.block_diag(self.cov, other.cov))


def uncertainty_margin(cov) -> float:
    """Smallest eigenvalue of ``V + (i/2) Omega`` (non-negative for physical states)."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0] // 2
    return float(np.linalg.eigvalsh(cov + 0.5j * symplectic_form(n))[0])


def _check_mode(state: GaussianState, m: int):
    if int(m) != m or not 0 <= m < state.n_modes:
        raise InvalidArgument(f"mode index {m} out of range for {state.n_modes} modes")


def epr_variance(state: GaussianState, mode_m: int = 0, mode_a: int = 1) -> float:
    """``Var(X_m + X_a) + Var(P_m - P_a)``; below 2 certifies entanglement."""
    _check_mode(state, mode_m)
    _check_mode(state, mode_a)
    if mode_m == mode_a:
        raise InvalidArgument("EPR variance needs two distinct modes")
    V = state.cov
    xm, pm, xa, pa = 2 * mode_m, 2 * mode_m + 1, 2 * mode_a, 2 * mode_a + 1
    var_x = V[xm, xm] + V[xa, xa] + 2 * V[xm, xa]
    var_p = V[pm, pm] + V[pa, pa] - 2 * V[pm, pa]
    return float(var_x + var_p)


def is_entangled(state: GaussianState, mode_m: int = 0, mode_a: int = 1) -> bool:
    return epr_variance(state, mode_m, mode_a) < 2.0


def symplectic_step(state: GaussianState, drift, diffusion, dt: float) -> GaussianState:
    """Exact step of ``dx = A x dt + noise`` for constant drift ``A`` and diffusion ``D``.

    ``V <- Phi V Phi^T + int_0^dt e^{A s} D e^{A^T s} ds`` with
    ``Phi = e^{A dt}``; the integral comes from the Van Loan block
    exponential.
    """
    A = np.asarray(drift, dtype=float)
    D = np.asarray(diffusion, dtype=float)
    n = state.mean.size
    if A.shape != (n, n) or D.shape != (n, n):
        raise DimensionMismatch(f"drift and diffusion must be {n}x{n}")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -A
    block[:n, n:] = D
    block[n:, n:] = A.T
    E = la.expm(block * dt)
    phi_T = E[n:, n:]
    Q = phi_T.T @ E[:n, n:]
    cov = phi_T.T @ state.cov @ phi_T + Q
    return GaussianState(phi_T.T @ state.mean, 0.5 * (cov + cov.T), check=False)


# -- cascaded QND protocol --------------------------------------------------

@dataclass(frozen=True)
class CascadeSpec:
    """Parameters of the cascaded mechanics-to-ensemble measurement.

    ``gamma_m`` and ``n_th`` add optional thermal decoherence of the
    mechanics (amplitude damping ``gamma_m/2`` and diffusion
    ``gamma_m (n_th + 1/2)`` per quadrature).
    """

    omega_m: float
    Omega: float
    g: float
    kappa_c: float
    t_final: float
    dt: float | None = None
    efficiency: float = 1.0
    gamma_m: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        if not self.omega_m > 0:
            raise InvalidArgument("omega_m must be positive")
        if not self.kappa_c > 0:
            raise InvalidArgument("kappa_c must be positive")
        if self.g < 0:
            raise InvalidArgument("g must be non-negative")
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidArgument(f"efficiency {self.efficiency} outside [0, 1]")
        if not self.t_final > 0:
            raise InvalidArgument("t_final must be positive")
        if self.gamma_m < 0 or self.n_th < 0:
            raise InvalidArgument("gamma_m and n_th must be non-negative")
        max_dt = 1.0 / (50.0 * self.omega_m)
        if self.dt is None:
            object.__setattr__(self, "dt", max_dt)
        elif not 0 < self.dt <= max_dt * (1 + 1e-12):
            raise InvalidArgument(f"dt = {self.dt} too coarse; need dt <= 1/(50 omega_m)"
                                  f" = {max_dt}")

    @property
    def measurement_rate(self) -> float:
        """``k = g^2 / kappa_c``; the measured combination is read out at ``8 k eta``."""
        return self.g ** 2 / self.kappa_c

    @property
    def qnd_mode(self) -> bool:
        return self.Omega == -self.omega_m

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_final / self.dt - 1e-9))

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)


def _measured_vector(spec: CascadeSpec, t: float) -> np.ndarray:
    c, s = np.cos(spec.omega_m * t), np.sin(spec.omega_m * t)
    return np.array([c, s, c, -s])


def _drift_and_noise(spec: CascadeSpec):
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    A = np.zeros((4, 4))
    A[2:, 2:] = (spec.Omega + spec.omega_m) * J
    D = np.zeros((4, 4))
    if spec.gamma_m > 0:
        A[:2, :2] -= 0.5 * spec.gamma_m * np.eye(2)
        D[:2, :2] = spec.gamma_m * (spec.n_th + 0.5) * np.eye(2)
    return A, D


def _riccati_generator(spec: CascadeSpec, conditional: bool):
    """Return ``t -> G(t)`` for the linear lift of the Riccati equation.

    ``dV/dt = A V + V A^T + Q - V R V`` is solved by ``V = Y X^-1`` with
    ``d/dt [X; Y] = [[-A^T, R], [Q, A]] [X; Y]``, which stays well behaved
    when the measurement term is stiff.
    """
    A, D = _drift_and_noise(spec)
    Om = symplectic_form(2)
    k = spec.measurement_rate
    gain = 8 * k * spec.efficiency if conditional else 0.0

    def G(t):
        h = _measured_vector(spec, t)
        u = Om @ h
        out = np.zeros((8, 8))
        out[:4, :4] = -A.T
        out[:4, 4:] = gain * np.outer(h, h)
        out[4:, :4] = D + 2 * k * np.outer(u, u)
        out[4:, 4:] = A
        return out
    return G


def _propagate_covariance(spec: CascadeSpec, V0: np.ndarray, conditional: bool) -> np.ndarray:
    # fourth-order Magnus step (two Gauss-Legendre nodes) per grid interval
    G = _riccati_generator(spec, conditional)
    times = spec.time_grid()
    out = np.empty((times.size, 4, 4))
    V = np.array(V0, dtype=float)
    out[0] = V
    c = np.sqrt(3) / 6
    for i in range(times.size - 1):
        t, h = times[i], times[i + 1] - times[i]
        G1, G2 = G(t + (0.5 - c) * h), G(t + (0.5 + c) * h)
        magnus = 0.5 * h * (G1 + G2) + (np.sqrt(3) / 12) * h * h * (G2 @ G1 - G1 @ G2)
        phi = la.expm(magnus)
        X = phi[:4, :4] + phi[:4, 4:] @ V
        Y = phi[4:, :4] + phi[4:, 4:] @ V
        V = np.linalg.solve(X.T, Y.T)
        V = 0.5 * (V + V.T)
        out[i + 1] = V
    return out


@dataclass
class ConditionalTrajectory:
    """Conditional Gaussian evolution on the time grid of a :class:`CascadeSpec`.

    ``covs`` depends only on the parameters. ``means``, ``record`` (the
    homodyne increments ``dy``) and the demodulated ``record_cos`` and
    ``record_sin`` (running integrals of ``cos(w t) dy`` and ``sin(w t) dy``)
    are present only for stochastic runs.
    """

    times: np.ndarray
    covs: np.ndarray
    means: np.ndarray | None = None
    record: np.ndarray | None = None
    record_cos: np.ndarray | None = None
    record_sin: np.ndarray | None = None

    @property
    def epr(self) -> np.ndarray:
        return np.array([_epr_from_cov(V) for V in self.covs])

    def state(self, index: int = -1) -> GaussianState:
        mean = np.zeros(4) if self.means is None else self.means[index]
        return GaussianState(mean, self.covs[index])


def _epr_from_cov(V) -> float:
    return float(V[0, 0] + V[2, 2] + 2 * V[0, 2] + V[1, 1] + V[3, 3] - 2 * V[1, 3])


def _check_two_mode(state: GaussianState):
    if state.n_modes != 2:
        raise DimensionMismatch("the cascade acts on exactly two modes (mechanics, ensemble)")


def _warn_non_qnd(spec: CascadeSpec):
    if not spec.qnd_mode:
        warnings.warn("Omega != -omega_m: X_m + X_a and P_m - P_a are not conserved, "
                      "the measurement is not QND", stacklevel=3)


def conditional_covariance(state: GaussianState, spec: CascadeSpec) -> np.ndarray:
    """Riccati solution for the conditional covariance on the time grid."""
    _check_two_mode(state)
    return _propagate_covariance(spec, state.cov, conditional=True)


def unconditional_covariance(state: GaussianState, spec: CascadeSpec) -> np.ndarray:
    """Covariance averaged over all records (measurement back-action only)."""
    _check_two_mode(state)
    return _propagate_covariance(spec, state.cov, conditional=False)


def _simulate_means(spec: CascadeSpec, mean0, covs, dW: np.ndarray):
    """Euler-Maruyama for the conditional means of a batch of records.

    ``dW`` has shape ``(n_traj, n_steps)``; returns means of shape
    ``(n_traj, n_times, 4)`` and the record increments plus their
    demodulated running integrals, each ``(n_traj, ...)``.
    """
    A, _ = _drift_and_noise(spec)
    times = spec.time_grid()
    k, eta = spec.measurement_rate, spec.efficiency
    c_out = 2 * np.sqrt(2 * k * eta)
    n_traj = dW.shape[0]
    means = np.empty((n_traj, times.size, 4))
    dy = np.empty((n_traj, times.size - 1))
    x = np.tile(np.asarray(mean0, dtype=float), (n_traj, 1))
    means[:, 0] = x
    for i in range(times.size - 1):
        h_t = times[i + 1] - times[i]
        h = _measured_vector(spec, times[i])
        dy[:, i] = c_out * (x @ h) * h_t + dW[:, i]
        x = x + (x @ A.T) * h_t + np.outer(dW[:, i], c_out * (covs[i] @ h))
        means[:, i + 1] = x
    w = spec.omega_m * times[:-1]
    zero = np.zeros((n_traj, 1))
    rc = np.hstack([zero, np.cumsum(np.cos(w) * dy, axis=1)])
    rs = np.hstack([zero, np.cumsum(np.sin(w) * dy, axis=1)])
    return means, dy, rc, rs


def _increments(spec: CascadeSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 1.0, spec.n_steps) * np.sqrt(np.diff(spec.time_grid()))


def evolve_conditional(state: GaussianState, spec: CascadeSpec, *, stochastic: bool = False,
                       seed=None, rng: np.random.Generator | None = None
                       ) -> ConditionalTrajectory:
    """Conditional dynamics under continuous homodyne detection of the output light.

    The covariance obeys ``dV/dt = A V + V A^T + D + 2k u u^T
    - 8 k eta (V h)(V h)^T`` with ``h`` the measured quadrature direction and
    ``u`` its symplectic conjugate (the back-action direction). With
    ``stochastic=True`` one measurement record is drawn and the means follow
    ``dx = A x dt + 2 sqrt(2 k eta) V h dW`` (Euler-Maruyama), with record
    ``dy = 2 sqrt(2 k eta) h.x dt + dW``.
    """
    _check_two_mode(state)
    _warn_non_qnd(spec)
    covs = conditional_covariance(state, spec)
    traj = ConditionalTrajectory(spec.time_grid(), covs)
    if stochastic:
        rng = rng if rng is not None else np.random.default_rng(seed)
        dW = _increments(spec, rng)[None, :]
        means, dy, rc, rs = _simulate_means(spec, state.mean, covs, dW)
        traj.means, traj.record, traj.record_cos, traj.record_sin = means[0], dy[0], rc[0], rs[0]
    return traj


@dataclass
class MonteCarloReport:
    """Comparison of the Riccati prediction with an ensemble of trajectories.

    Conditioning splits the unconditional covariance into the conditional
    covariance plus the spread of conditional means; ``epr_mc`` estimates
    the conditional EPR variance as ``epr_unconditional - spread`` and
    ``epr_mc_stderr`` is the standard error of that estimate.
    """

    n_traj: int
    epr_riccati: float
    epr_unconditional: float
    epr_mc: float
    epr_mc_stderr: float
    mean_outer: np.ndarray
    mean_outer_stderr: np.ndarray
    cov_conditional: np.ndarray
    cov_unconditional: np.ndarray
    final_means: np.ndarray

    @property
    def z_score(self) -> float:
        if self.epr_mc_stderr == 0:
            return 0.0 if self.epr_mc == self.epr_riccati else np.inf
        return abs(self.epr_mc - self.epr_riccati) / self.epr_mc_stderr

    def agrees(self, n_sigma: float = 3.0) -> bool:
        return self.z_score <= n_sigma

    def max_cov_z(self) -> float:
        """Largest element-wise deviation of ``E[x x^T] + V_cond`` from ``V_uncond`` in sigmas."""
        resid = self.mean_outer + self.cov_conditional - self.cov_unconditional
        err = np.where(self.mean_outer_stderr > 0, self.mean_outer_stderr, np.inf)
        return float(np.max(np.abs(resid) / err))


def monte_carlo(state: GaussianState, spec: CascadeSpec, n_traj: int = 500, seed: int = 0,
                threads: int = 1) -> MonteCarloReport:
    """Run ``n_traj`` independent records and check them against the Riccati solution.

    Trajectory ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``,
    so results do not depend on ``threads``.
    """
    _check_two_mode(state)
    if n_traj < 2:
        raise InvalidArgument("need at least two trajectories")
    _warn_non_qnd(spec)
    covs = conditional_covariance(state, spec)
    V_unc = unconditional_covariance(state, spec)[-1]
    children = np.random.SeedSequence(seed).spawn(n_traj)
    dW = np.array([_increments(spec, np.random.default_rng(c)) for c in children])

    def run(chunk):
        return _simulate_means(spec, state.mean, covs, dW[chunk])[0][:, -1]

    chunks = np.array_split(np.arange(n_traj), max(1, min(threads, n_traj)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            finals = np.concatenate(list(pool.map(run, chunks)))
    else:
        finals = np.concatenate([run(c) for c in chunks])

    # unconditional cov is about the initial mean, which the records average to
    dev = finals - state.mean
    outer = np.einsum("ti,tj->tij", dev, dev)
    mean_outer = outer.mean(axis=0)
    outer_se = outer.std(axis=0, ddof=1) / np.sqrt(n_traj)
    u = dev[:, 0] + dev[:, 2]
    w = dev[:, 1] - dev[:, 3]
    z = u ** 2 + w ** 2
    epr_unc = _epr_from_cov(V_unc)
    return MonteCarloReport(
        n_traj=n_traj, epr_riccati=_epr_from_cov(covs[-1]), epr_unconditional=epr_unc,
        epr_mc=float(epr_unc - z.mean()), epr_mc_stderr=float(z.std(ddof=1) / np.sqrt(n_traj)),
        mean_outer=mean_outer, mean_outer_stderr=outer_se, cov_conditional=covs[-1],
        cov_unconditional=V_unc, final_means=finals)


def qnd_epr_exact(spec: CascadeSpec, n_bar_m: float = 0.0, n_bar_a: float = 0.0,
                  times=None) -> np.ndarray:
    """Closed-form conditional EPR variance in the ideal QND configuration.

    For ``Omega = -omega_m`` without decoherence the pair ``(X_m + X_a,
    P_m - P_a)`` commutes with everything, so its 2x2 covariance obeys
    ``d(S^-1)/dt = 8 k eta c c^T`` with ``c = (cos w t, sin w t)``. The
    result is ``tr S(t)``, starting from uncorrelated thermal states.
    """
    if not spec.qnd_mode or spec.gamma_m > 0:
        raise InvalidArgument("closed form needs Omega = -omega_m and no decoherence")
    t = spec.time_grid() if times is None else np.asarray(times, dtype=float)
    w = spec.omega_m
    a = 8 * spec.measurement_rate * spec.efficiency
    s0 = n_bar_m + n_bar_a + 1.0
    icc = t / 2 + np.sin(2 * w * t) / (4 * w)
    iss = t / 2 - np.sin(2 * w * t) / (4 * w)
    ics = np.sin(w * t) ** 2 / (2 * w)
    p, q, r = 1 / s0 + a * icc, 1 / s0 + a * iss, a * ics
    # trace of the inverse of [[p, r], [r, q]]
    return (p + q) / (p * q - r * r)


# -- QND structure ----------------------------------------------------------

_SYS = ("X_m", "P_m", "X_a", "P_a")


@dataclass
class QndCheck:
    """Heisenberg derivatives of the QND pair in the rotating frame.

    Coefficient vectors are over ``(X_m, P_m, X_a, P_a)``; norms are the
    Euclidean norms of those vectors maximised over one mechanical period.
    ``x_sum_p_diff_component`` is the coefficient of ``P_m - P_a`` when
    ``dX_sum/dt`` is expanded in ``{P_m + P_a, P_m - P_a}``.
    """

    dX_sum_dt: np.ndarray
    dP_diff_dt: np.ndarray
    dX_sum_norm: float
    dP_diff_norm: float
    x_sum_p_diff_component: float
    coupling_contribution: float

    @property
    def conserved(self) -> bool:
        return max(self.dX_sum_norm, self.dP_diff_norm) <= 1e-12


def _heisenberg(M: np.ndarray, c: np.ndarray) -> np.ndarray:
    # H = x^T M x / 2 gives dx/dt = Omega M x, so d(c.x)/dt = (Omega M)^T c . x
    Om = symplectic_form(M.shape[0] // 2)
    return (Om @ M).T @ c


def _rotating_hamiltonian(omega_m, Omega, g, t, coupling=True) -> np.ndarray:
    # quadratic form over (X_m, P_m, X_a, P_a, X_c, P_c), frame +omega_m / -omega_m
    M = np.zeros((6, 6))
    M[2, 2] = M[3, 3] = Omega + omega_m
    if coupling:
        h = np.array([np.cos(omega_m * t), np.sin(omega_m * t),
                      np.cos(omega_m * t), -np.sin(omega_m * t)])
        M[4, :4] = M[:4, 4] = g * h
    return M


def qnd_conservation_check(omega_m: float, Omega: float, g: float,
                           n_samples: int = 16) -> QndCheck:
    """Check that ``X_m + X_a`` and ``P_m - P_a`` are conserved.

    The system Hamiltonian ``(omega_m/2)(X_m^2 + P_m^2) + (Omega/2)(X_a^2 +
    P_a^2) + g (X_m + X_a) X_c`` is taken to the frame rotating at
    ``+omega_m`` (mechanics) and ``-omega_m`` (ensemble), where the coupling
    reads ``g X_c [cos(w t)(X_m + X_a) + sin(w t)(P_m - P_a)]``. Both
    derivatives vanish exactly when ``Omega = -omega_m``.
    """
    if not omega_m > 0:
        raise InvalidArgument("omega_m must be positive")
    x_sum = np.array([1.0, 0, 1, 0, 0, 0])
    p_diff = np.array([0.0, 1, 0, -1, 0, 0])
    ts = np.linspace(0, 2 * np.pi / omega_m, n_samples, endpoint=False)
    dx_norm = dp_norm = coupling = 0.0
    dx = dp = None
    for t in ts:
        M = _rotating_hamiltonian(omega_m, Omega, g, t)
        dx_t, dp_t = _heisenberg(M, x_sum), _heisenberg(M, p_diff)
        M0 = _rotating_hamiltonian(omega_m, Omega, g, t, coupling=False)
        coupling = max(coupling, np.linalg.norm(dx_t - _heisenberg(M0, x_sum)),
                       np.linalg.norm(dp_t - _heisenberg(M0, p_diff)))
        if dx is None:
            dx, dp = dx_t[:4], dp_t[:4]
        dx_norm = max(dx_norm, float(np.linalg.norm(dx_t[:4])))
        dp_norm = max(dp_norm, float(np.linalg.norm(dp_t[:4])))
    return QndCheck(dX_sum_dt=dx, dP_diff_dt=dp, dX_sum_norm=dx_norm, dP_diff_norm=dp_norm,
                    x_sum_p_diff_component=float((dx[1] - dx[3]) / 2),
                    coupling_contribution=float(coupling))


# -- teleportation ----------------------------------------------------------

def gaussian_fidelity(s1: GaussianState, s2: GaussianState) -> float:
    """Uhlmann fidelity of two single-mode Gaussian states.

    ``F = exp(-d^T (V1 + V2)^-1 d / 2) / (sqrt(Delta + delta) - sqrt(delta))``
    with ``Delta = det(V1 + V2)`` and ``delta = 4 (det V1 - 1/4)(det V2 - 1/4)``.
    """
    if s1.n_modes != 1 or s2.n_modes != 1:
        raise DimensionMismatch("fidelity formula is for single-mode states")
    S = s1.cov + s2.cov
    d = s1.mean - s2.mean
    big = np.linalg.det(S)
    small = max(4 * (np.linalg.det(s1.cov) - 0.25) * (np.linalg.det(s2.cov) - 0.25), 0.0)
    return float(np.exp(-0.5 * d @ np.linalg.solve(S, d)) / (np.sqrt(big + small)
                                                             - np.sqrt(small)))


def teleport(input_state: GaussianState, resource: GaussianState, modes=(0, 1)):
    """Unit-gain continuous-variable teleportation through an EPR resource.

    The sender holds resource mode ``modes[1]``, the receiver ``modes[0]``.
    After the joint measurement and displacement the output quadratures are
    ``X_out = X_in + (X_m + X_a)`` and ``P_out = P_in + (P_m - P_a)``, so the
    output covariance is the input one plus the noise of the EPR pair.
    Returns ``(output_state, fidelity)``; for coherent inputs and a
    symmetric resource ``fidelity = 1 / (1 + epr / 2)``.
    """
    if input_state.n_modes != 1:
        raise DimensionMismatch("input must be a single mode")
    m, a = modes
    _check_mode(resource, m)
    _check_mode(resource, a)
    if m == a:
        raise InvalidArgument("resource modes must differ")
    if uncertainty_margin(resource.cov) < -UNCERTAINTY_TOL:
        raise InvalidArgument("resource is not a physical Gaussian state")
    T = np.zeros((2, resource.mean.size))
    T[0, 2 * m] = T[0, 2 * a] = 1.0
    T[1, 2 * m + 1], T[1, 2 * a + 1] = 1.0, -1.0
    noise = T @ resource.cov @ T.T
    out = GaussianState(input_state.mean + T @ resource.mean, input_state.cov + noise)
    return out, gaussian_fidelity(input_state, out)
