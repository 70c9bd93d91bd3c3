"""Unitary and Lindblad time evolution, Liouvillians and steady states.

Conventions: hbar = 1, all energies are angular frequencies. A collapse
``(L, rate)`` enters the master equation as

    drho/dt = -i[H, rho] + rate * (L rho L^dag - 1/2 {L^dag L, rho})

so ``(a, kappa)`` damps the field amplitude at kappa/2 and the energy at
kappa.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from ..errors import (AmbiguousSteadyState, DimensionMismatch, IntegrationError,
                      InvalidArgument, NotHermitian)
from .operators import (DensityMatrix, Operator, StateVector, State,
                        HERMITIAN_RTOL, hermiticity_error)
from .space import CompositeSpace

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-11
DEFAULT_MAX_NFEV = 5_000_000
TRUNCATION_TOL = 1e-4
NORM_TOL = 1e-8
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-6
STEADY_RESIDUAL_TOL = 1e-10
STEADY_MAX_DIM = 4096


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian plus rated collapse operators on one space."""

    H: Operator
    collapses: tuple[tuple[Operator, float], ...] = ()

    def __post_init__(self):
        if hermiticity_error(self.H.matrix) > HERMITIAN_RTOL:
            raise NotHermitian("LindbladModel Hamiltonian is not hermitian")
        collapses = tuple((op, float(rate)) for op, rate in self.collapses)
        for op, rate in collapses:
            if op.space != self.H.space:
                raise DimensionMismatch("collapse operator lives on a different space")
            if not np.isfinite(rate) or rate < 0:
                raise InvalidArgument(f"collapse rates must be non-negative, got {rate}")
        object.__setattr__(self, "collapses", collapses)

    @property
    def space(self) -> CompositeSpace:
        return self.H.space

    def active_collapses(self):
        return [(op, rate) for op, rate in self.collapses if rate > 0]


@dataclass
class EvolutionResult:
    """Expectation traces sampled on ``times``.

    ``top_population`` holds, per boson mode, the largest population of the
    highest retained Fock level seen at any output time; when any of them
    exceeds 1e-4 the run is flagged ``truncation_suspect``.
    """

    times: np.ndarray
    expectations: dict[str, np.ndarray]
    snapshots: list | None = None
    top_population: dict[str, float] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def truncation_suspect(self) -> bool:
        return any(p > TRUNCATION_TOL for p in self.top_population.values())

    @property
    def final_state(self):
        if not self.snapshots:
            raise InvalidArgument("evolution was run without store_states=True")
        return self.snapshots[-1]


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 1:
        raise InvalidArgument("need at least one output time")
    if times[0] < 0 or not np.all(np.isfinite(times)):
        raise InvalidArgument("times must be finite and start at t >= 0")
    if np.any(np.diff(times) <= 0):
        raise InvalidArgument("times must be strictly increasing")
    return times


def _check_hamiltonian(H: Operator):
    err = hermiticity_error(H.matrix)
    if err > HERMITIAN_RTOL:
        raise NotHermitian(f"Hamiltonian is not hermitian (relative error {err:.3e})")


def _top_level_tracker(space: CompositeSpace):
    bosons = [m for m in space.modes if m.is_boson]

    def update(store, diag):
        probs = np.real(diag).reshape(space.dims)
        for k, mode in enumerate(space.modes):
            if not mode.is_boson:
                continue
            top = float(np.take(probs, mode.dim - 1, axis=k).sum())
            store[mode.label] = max(store.get(mode.label, 0.0), top)

    return update if bosons else (lambda store, diag: None)


class _Budget(Exception):
    pass


def _integrate(rhs, y0, times, rtol, atol, max_nfev, method="DOP853"):
    """Adaptive embedded Runge-Kutta with dense output at ``times``."""
    count = [0]

    def fun(t, y):
        count[0] += 1
        if count[0] > max_nfev:
            raise _Budget
        return rhs(t, y)

    if times.size == 1:
        return np.asarray(y0)[:, None], {"nfev": 0, "method": method}
    time_start = _time.perf_counter()
    try:
        sol = solve_ivp(fun, (times[0], times[-1]), y0, method=method, t_eval=times,
                        rtol=rtol, atol=atol)
    except _Budget:
        raise IntegrationError("step budget exhausted before reaching final time",
                               max_nfev=max_nfev, rtol=rtol, atol=atol) from None
    if not sol.success:
        raise IntegrationError(f"integrator failed: {sol.message}", nfev=sol.nfev,
                               t_reached=float(sol.t[-1]) if sol.t.size else None)
    stats = {"nfev": int(sol.nfev), "method": method,
             "wall_time": _time.perf_counter() - time_start}
    return sol.y, stats


def evolve_schrodinger(H: Operator, psi0: StateVector, times,
                       e_ops: Mapping[str, Operator] | None = None, *,
                       rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                       method: str = "adaptive", store_states: bool = False,
                       max_nfev: int = DEFAULT_MAX_NFEV,
                       norm_tol: float = NORM_TOL) -> EvolutionResult:
    """Solve ``i dpsi/dt = H psi`` and sample expectation values.

    Parameters
    ----------
    H : Operator
        Time-independent hermitian Hamiltonian.
    psi0 : StateVector
        State at ``times[0]``.
    times : array_like
        Strictly increasing output times.
    e_ops : mapping of label to Operator, optional
    method : {"adaptive", "spectral"}
        ``adaptive`` runs an embedded Dormand-Prince 8(5,3) integrator with
        dense output; ``spectral`` propagates exactly through the
        eigendecomposition of ``H`` (useful for long, stiff runs).

    Raises
    ------
    NotHermitian
        If ``H`` is not hermitian.
    IntegrationError
        On step-budget exhaustion or if the norm drifts by more than
        ``norm_tol`` at any output time, even after one retry with the
        tolerances tightened a hundredfold.
    """
    _check_hamiltonian(H)
    if psi0.space != H.space:
        raise DimensionMismatch("initial state and Hamiltonian live on different spaces")
    times = _check_times(times)
    e_ops = dict(e_ops or {})
    for op in e_ops.values():
        if op.space != H.space:
            raise DimensionMismatch("expectation operator on a different space")

    if method == "adaptive":
        mat = -1j * np.asarray(H.matrix)
        psis, stats = _integrate(lambda t, y: mat @ y, np.array(psi0.amplitudes), times,
                                 rtol, atol, max_nfev)
        psis = psis.T
        # local errors accumulate in the norm on long runs; one tighter retry
        if np.max(np.abs(np.linalg.norm(psis, axis=1) - 1)) > norm_tol and rtol > 1e-13:
            psis, stats = _integrate(lambda t, y: mat @ y, np.array(psi0.amplitudes), times,
                                     rtol * 1e-2, atol * 1e-2, max_nfev)
            psis = psis.T
            stats["retried"] = True
    elif method == "spectral":
        energies, vecs = la.eigh(H.matrix)
        coeffs = vecs.conj().T @ psi0.amplitudes
        phases = np.exp(-1j * np.outer(times - times[0], energies))
        psis = (phases * coeffs) @ vecs.T
        stats = {"nfev": 0, "method": "spectral"}
    else:
        raise InvalidArgument(f"unknown method {method!r}")

    norms = np.linalg.norm(psis, axis=1)
    drift = float(np.max(np.abs(norms - 1)))
    if drift > norm_tol:
        bad = int(np.argmax(np.abs(norms - 1)))
        raise IntegrationError("norm not preserved", t=float(times[bad]), norm_drift=drift)
    stats["max_norm_drift"] = drift

    expectations = {
        label: np.einsum("ti,ij,tj->t", psis.conj(), op.matrix, psis)
        for label, op in e_ops.items()
    }
    top = {}
    track = _top_level_tracker(H.space)
    for psi in psis:
        track(top, np.abs(psi) ** 2)
    snapshots = None
    if store_states:
        snapshots = [StateVector(H.space, psi, normalize=True) for psi in psis]
    return EvolutionResult(times, expectations, snapshots, top, stats)


def _lindblad_parts(model: LindbladModel):
    H = np.asarray(model.H.matrix)
    heff = H.astype(complex).copy()
    jumps = []
    for op, rate in model.active_collapses():
        L = np.asarray(op.matrix)
        heff -= 0.5j * rate * (L.conj().T @ L)
        Ls = sp.csr_matrix(np.sqrt(rate) * L)
        jumps.append((Ls, sp.csr_matrix(Ls.conj().T)))
    return heff, jumps


def lindblad_rhs(model: LindbladModel):
    """Return ``f(rho) -> drho/dt`` acting on dense matrices."""
    heff, jumps = _lindblad_parts(model)
    heff_dag = heff.conj().T

    def f(rho):
        out = -1j * (heff @ rho - rho @ heff_dag)
        for L, Ld in jumps:
            out += L @ (Ld.T @ rho.T).T
        return out

    return f


def evolve_lindblad(model: LindbladModel, rho0: State, times,
                    e_ops: Mapping[str, Operator] | None = None, *,
                    rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                    method: str = "adaptive", store_states: bool = False,
                    max_nfev: int = DEFAULT_MAX_NFEV, trace_tol: float = TRACE_TOL,
                    positivity_tol: float = POSITIVITY_TOL) -> EvolutionResult:
    """Integrate the Lindblad master equation of ``model`` from ``rho0``.

    A pure initial state is promoted to a density matrix. Trace and
    positivity are checked at every output time; a violation raises
    :class:`IntegrationError` instead of being projected away.

    ``method="expm"`` skips the ODE solver and applies the exact propagator
    ``exp(L dt)`` of the dense Liouvillian, one exponential per distinct
    output spacing. It suits runs much longer than the fastest timescale,
    as long as ``dim**2`` stays below ``STEADY_MAX_DIM``.
    """
    if rho0.space != model.space:
        raise DimensionMismatch("initial state and model live on different spaces")
    times = _check_times(times)
    if isinstance(rho0, StateVector):
        rho0 = rho0.to_density()
    e_ops = dict(e_ops or {})
    for op in e_ops.values():
        if op.space != model.space:
            raise DimensionMismatch("expectation operator on a different space")
    n = model.space.dim
    y0 = np.array(rho0.matrix).reshape(-1)
    if method == "adaptive":
        f = lindblad_rhs(model)

        def rhs(t, y):
            return f(y.reshape(n, n)).reshape(-1)

        ys, stats = _integrate(rhs, y0, times, rtol, atol, max_nfev)
        rhos = ys.T.reshape(-1, n, n)
    elif method == "expm":
        if n * n > STEADY_MAX_DIM:
            raise InvalidArgument(f"expm propagation needs dim**2 <= {STEADY_MAX_DIM}, "
                                  f"got {n * n}")
        L = liouvillian(model, sparse=False)
        steps = np.diff(times)
        props = {}
        ys = [y0]
        for dt in steps:
            key = float(f"{dt:.12g}")
            if key not in props:
                props[key] = la.expm(L * dt)
            ys.append(props[key] @ ys[-1])
        rhos = np.array(ys).reshape(-1, n, n)
        stats = {"nfev": 0, "method": "expm", "n_propagators": len(props)}
    else:
        raise InvalidArgument(f"unknown method {method!r}")

    traces = np.einsum("tii->t", rhos)
    trace_err = float(np.max(np.abs(traces - 1)))
    if trace_err > trace_tol:
        bad = int(np.argmax(np.abs(traces - 1)))
        raise IntegrationError("trace not preserved", t=float(times[bad]),
                               trace_error=trace_err)
    min_eig = np.inf
    for k, rho in enumerate(rhos):
        lo = la.eigvalsh(0.5 * (rho + rho.conj().T), subset_by_index=[0, 0])[0]
        if lo < -positivity_tol:
            raise IntegrationError("positivity violated", t=float(times[k]),
                                   min_eigenvalue=float(lo))
        min_eig = min(min_eig, lo)
    stats.update(max_trace_error=trace_err, min_eigenvalue=float(min_eig))

    expectations = {label: np.einsum("ij,tji->t", op.matrix, rhos)
                    for label, op in e_ops.items()}
    top = {}
    track = _top_level_tracker(model.space)
    for rho in rhos:
        track(top, np.diagonal(rho))
    snapshots = None
    if store_states:
        snapshots = [DensityMatrix(model.space, 0.5 * (r + r.conj().T), check=False)
                     for r in rhos]
    return EvolutionResult(times, expectations, snapshots, top, stats)


def liouvillian(model: LindbladModel, sparse: bool = True):
    """Superoperator acting on row-major ``vec(rho)``.

    With this ordering ``vec(A rho B) = kron(A, B.T) vec(rho)``.
    """
    n = model.space.dim
    eye = sp.identity(n, dtype=complex, format="csr")
    H = sp.csr_matrix(model.H.matrix)
    sup = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    for op, rate in model.active_collapses():
        L = sp.csr_matrix(op.matrix)
        LdL = (L.conj().T @ L).tocsr()
        sup = sup + rate * (sp.kron(L, L.conj())
                            - 0.5 * sp.kron(LdL, eye) - 0.5 * sp.kron(eye, LdL.T))
    sup = sp.csr_matrix(sup)
    return sup if sparse else sup.toarray()


def null_space_dimension(sup, tol: float) -> int:
    """Count Liouvillian eigenvalues with modulus below ``tol``."""
    N = sup.shape[0]
    if N <= 900:
        vals = la.eigvals(sup.toarray() if sp.issparse(sup) else sup)
        return int(np.sum(np.abs(vals) <= tol))
    k = min(4, N - 2)
    # small positive shift keeps the factorization regular when L is singular
    shift = 10 * tol
    vals = spla.eigs(sp.csc_matrix(sup), k=k, sigma=shift, which="LM",
                     return_eigenvectors=False, tol=1e-12)
    return int(np.sum(np.abs(vals) <= tol))


def steady_state(model: LindbladModel, *, max_dim: int = STEADY_MAX_DIM,
                 residual_tol: float = STEADY_RESIDUAL_TOL,
                 null_tol: float = 1e-9) -> DensityMatrix:
    """Unique fixed point of the Lindblad generator.

    Raises :class:`AmbiguousSteadyState` if the Liouvillian has more than one
    (numerically) zero eigenvalue; ``null_tol`` is relative to the largest
    matrix element of the superoperator.
    """
    n = model.space.dim
    if n > max_dim:
        raise InvalidArgument(f"dimension {n} exceeds steady-state cap {max_dim}")
    sup = liouvillian(model)
    scale = max(1.0, float(np.max(np.abs(sup.data)))) if sup.nnz else 1.0
    null_dim = null_space_dimension(sup, null_tol * scale)
    if null_dim != 1:
        raise AmbiguousSteadyState(null_dim)

    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[np.arange(n) * (n + 1)] = 1.0
    A = sup.tolil()
    A[0, :] = trace_row
    A = sp.csc_matrix(A)
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0
    lu = spla.splu(A)
    x = lu.solve(b)
    # one round of iterative refinement
    x += lu.solve(b - A @ x)
    rho = x.reshape(n, n)
    residual = float(np.linalg.norm(sup @ x))
    if residual > residual_tol:
        raise IntegrationError("steady-state residual above tolerance", residual=residual)
    return DensityMatrix(model.space, rho)
