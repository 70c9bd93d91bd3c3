"""Operators and states on a :class:`CompositeSpace`.

All objects are immutable: the underlying arrays are copied on construction
and flagged read-only, so they can be shared between threads freely.
"""

from __future__ import annotations

from functools import reduce
from numbers import Number
from typing import Mapping, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from ..errors import DimensionMismatch, InvalidArgument, NotHermitian
from .space import CompositeSpace, ModeSpec, single_mode_space

HERMITIAN_RTOL = 1e-12
NORM_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


def _frozen(array, dtype=complex):
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def hermiticity_error(matrix: np.ndarray) -> float:
    """Return max|M - M^dagger| relative to max|M| (0 for the zero matrix)."""
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T)) / scale)


class Operator:
    """A dense complex matrix acting on ``space``.

    Parameters
    ----------
    space : CompositeSpace
    matrix : array_like
        Square matrix of the total space dimension.
    hermitian_hint : bool, optional
        If true, hermiticity is verified to ``1e-12`` relative precision and a
        :class:`NotHermitian` is raised on failure.
    """

    __slots__ = ("space", "matrix", "hermitian_hint")

    def __init__(self, space: CompositeSpace, matrix, hermitian_hint: bool | None = None):
        matrix = _frozen(matrix)
        if matrix.shape != (space.dim, space.dim):
            raise DimensionMismatch(
                f"matrix shape {matrix.shape} does not match space dimension {space.dim}")
        if hermitian_hint and hermiticity_error(matrix) > HERMITIAN_RTOL:
            raise NotHermitian(
                f"operator flagged hermitian but max|M - M^dag|/max|M| = "
                f"{hermiticity_error(matrix):.3e}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "hermitian_hint", hermitian_hint)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, self.hermitian_hint)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return hermiticity_error(self.matrix) <= rtol

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise DimensionMismatch(f"operators live on different spaces: "
                                    f"{self.space!r} vs {other.space!r}")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix + other.matrix)
        if isinstance(other, Number) and other == 0:
            return self
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Operator(self.space, -self.matrix, self.hermitian_hint)

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Number):
            return Operator(self.space, self.matrix * other)
        if isinstance(other, Operator):
            return self @ other
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Number):
            return Operator(self.space, other * self.matrix)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, Number):
            return Operator(self.space, self.matrix / other)
        return NotImplemented

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return NotImplemented

    def as_hermitian(self) -> "Operator":
        """Return the same operator with the hermiticity check enforced."""
        return Operator(self.space, self.matrix, hermitian_hint=True)

    def __repr__(self):
        return f"Operator({self.space!r}, hermitian_hint={self.hermitian_hint})"


class StateVector:
    """Normalized pure state; ``|norm - 1| <= 1e-10`` is enforced."""

    __slots__ = ("space", "amplitudes")

    def __init__(self, space: CompositeSpace, amplitudes, *, normalize: bool = False):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (space.dim,):
            raise DimensionMismatch(
                f"state has {amps.size} amplitudes, space dimension is {space.dim}")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise InvalidArgument("cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm - 1) > NORM_TOL:
            raise InvalidArgument(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "amplitudes", _frozen(amps))

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "StateVector") -> complex:
        if other.space != self.space:
            raise DimensionMismatch("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def __repr__(self):
        return f"StateVector({self.space!r})"


class DensityMatrix:
    """Mixed state. Hermitian, unit trace and positive within tolerance."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: CompositeSpace, matrix, *, check: bool = True,
                 positivity_tol: float = POSITIVITY_TOL):
        matrix = np.array(matrix, dtype=complex)
        if matrix.shape != (space.dim, space.dim):
            raise DimensionMismatch(
                f"density matrix shape {matrix.shape} does not match dimension {space.dim}")
        if check:
            herm = np.max(np.abs(matrix - matrix.conj().T))
            if herm > TRACE_TOL:
                raise InvalidArgument(f"density matrix not hermitian (error {herm:.3e})")
            tr = np.trace(matrix)
            if abs(tr - 1) > TRACE_TOL:
                raise InvalidArgument(f"density matrix trace {tr!r} differs from 1")
            lo = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))[0]
            if lo < -positivity_tol:
                raise InvalidArgument(f"density matrix has eigenvalue {lo:.3e} < 0")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", _frozen(matrix))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def populations(self, label: str) -> np.ndarray:
        """Reduced level populations of one mode."""
        return mode_populations(self.space, np.real(np.diag(self.matrix)), label)

    def partial_trace(self, keep: list[str]) -> "DensityMatrix":
        return DensityMatrix(*_partial_trace(self.space, self.matrix, keep), check=False)

    def __repr__(self):
        return f"DensityMatrix({self.space!r})"


State = Union[StateVector, DensityMatrix]


def mode_populations(space: CompositeSpace, diagonal: np.ndarray, label: str) -> np.ndarray:
    """Marginal populations of mode ``label`` from the full diagonal."""
    k = space.index(label)
    probs = np.asarray(diagonal).reshape(space.dims)
    axes = tuple(i for i in range(len(space.dims)) if i != k)
    return probs.sum(axis=axes)


def _partial_trace(space, matrix, keep):
    keep_idx = [space.index(lbl) for lbl in keep]
    n = len(space.dims)
    rho = matrix.reshape(space.dims + space.dims)
    trace_idx = [i for i in range(n) if i not in keep_idx]
    # einsum over the traced modes
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for i in trace_idx:
        col[i] = row[i]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, rho)
    sub = CompositeSpace(space.modes[i] for i in keep_idx)
    return sub, reduced.reshape(sub.dim, sub.dim)


# -- single-mode builders ---------------------------------------------------

def build_annihilation(cutoff: int, label: str = "a") -> Operator:
    """Truncated annihilation operator with ``a[n-1, n] = sqrt(n)``."""
    if int(cutoff) != cutoff or cutoff < 2:
        raise InvalidArgument(f"cutoff must be an integer >= 2, got {cutoff!r}")
    cutoff = int(cutoff)
    mat = np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(complex)
    return Operator(single_mode_space(ModeSpec.boson(label, cutoff)), mat)


def _spin_space(label="s"):
    return single_mode_space(ModeSpec.spin(label))


# Spin basis ordering: index 0 is |e> (sigma_z = +1), index 1 is |g>.
def sigma_z(label: str = "s") -> Operator:
    return Operator(_spin_space(label), np.diag([1.0, -1.0]), hermitian_hint=True)


def sigma_x(label: str = "s") -> Operator:
    return Operator(_spin_space(label), [[0, 1], [1, 0]], hermitian_hint=True)


def sigma_y(label: str = "s") -> Operator:
    return Operator(_spin_space(label), [[0, -1j], [1j, 0]], hermitian_hint=True)


def sigma_plus(label: str = "s") -> Operator:
    """Raising operator |e><g|."""
    return Operator(_spin_space(label), [[0, 1], [0, 0]])


def sigma_minus(label: str = "s") -> Operator:
    return Operator(_spin_space(label), [[0, 0], [1, 0]])


def identity(space: CompositeSpace) -> Operator:
    return Operator(space, np.eye(space.dim), hermitian_hint=True)


def embed(op: Operator, mode_label: str, space: CompositeSpace) -> Operator:
    """Lift a single-mode operator onto ``space``, identities elsewhere."""
    k = space.index(mode_label)
    target = space.modes[k].dim
    if op.space.dim != target:
        raise DimensionMismatch(
            f"operator dimension {op.space.dim} does not match mode "
            f"{mode_label!r} of dimension {target}")
    factors = [np.eye(d) for d in space.dims]
    factors[k] = op.matrix
    return Operator(space, reduce(np.kron, factors), op.hermitian_hint)


def annihilation(space: CompositeSpace, label: str) -> Operator:
    mode = space.mode(label)
    if not mode.is_boson:
        raise InvalidArgument(f"mode {label!r} is not a boson mode")
    return embed(build_annihilation(mode.dim), label, space)


def number(space: CompositeSpace, label: str) -> Operator:
    a = annihilation(space, label)
    return (a.dag @ a).as_hermitian()


def quadrature_x(space: CompositeSpace, label: str) -> Operator:
    """``a + a^dagger`` (the displacement combination used in couplings)."""
    a = annihilation(space, label)
    return (a + a.dag).as_hermitian()


def spin_op(space: CompositeSpace, label: str, which: str) -> Operator:
    builders = {"z": sigma_z, "x": sigma_x, "y": sigma_y, "+": sigma_plus, "-": sigma_minus}
    try:
        return embed(builders[which](), label, space)
    except KeyError:
        raise InvalidArgument(f"unknown spin operator {which!r}") from None


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


# -- state builders ---------------------------------------------------------

def basis_state(space: CompositeSpace, levels: Mapping[str, int] | None = None) -> StateVector:
    vec = np.zeros(space.dim, dtype=complex)
    vec[space.basis_index(dict(levels or {}))] = 1.0
    return StateVector(space, vec)


def product_state(space: CompositeSpace, factors: Mapping[str, np.ndarray]) -> StateVector:
    """Tensor product of per-mode amplitude vectors (level 0 for omitted modes)."""
    vecs = []
    for mode in space.modes:
        if mode.label in factors:
            v = np.asarray(factors[mode.label], dtype=complex)
            if v.shape != (mode.dim,):
                raise DimensionMismatch(f"factor for {mode.label!r} has shape {v.shape}")
        else:
            v = np.zeros(mode.dim, dtype=complex)
            v[0] = 1
        vecs.append(v)
    return StateVector(space, reduce(np.kron, vecs), normalize=True)


def thermal_populations(n_mean: float, cutoff: int, *, match_mean: bool = False) -> np.ndarray:
    """Bose-Einstein populations truncated to ``cutoff`` levels and renormalized.

    Truncation lowers the mean occupancy. With ``match_mean=True`` the
    Boltzmann ratio is instead solved for so that the truncated
    distribution has mean exactly ``n_mean``; this needs
    ``n_mean < (cutoff - 1) / 2``.
    """
    if n_mean < 0:
        raise InvalidArgument("thermal occupancy must be non-negative")
    if n_mean == 0:
        p = np.zeros(cutoff)
        p[0] = 1
        return p
    levels = np.arange(cutoff)

    def dist(ratio):
        p = ratio ** levels
        return p / p.sum()

    if not match_mean:
        return dist(n_mean / (n_mean + 1))
    if not n_mean < (cutoff - 1) / 2:
        raise InvalidArgument(
            f"a truncated thermal state on {cutoff} levels has mean below {(cutoff - 1) / 2}")
    ratio = brentq(lambda r: dist(r) @ levels - n_mean, 0.0, 1.0 - 1e-15, xtol=1e-15)
    return dist(ratio)


def product_density(space: CompositeSpace, factors: Mapping[str, np.ndarray]) -> DensityMatrix:
    """Tensor product of per-mode density matrices (ground state when omitted)."""
    mats = []
    for mode in space.modes:
        if mode.label in factors:
            m = np.asarray(factors[mode.label], dtype=complex)
            if m.ndim == 1:
                m = np.diag(m)
            if m.shape != (mode.dim, mode.dim):
                raise DimensionMismatch(f"factor for {mode.label!r} has shape {m.shape}")
        else:
            m = np.zeros((mode.dim, mode.dim), dtype=complex)
            m[0, 0] = 1
        mats.append(m)
    return DensityMatrix(space, reduce(np.kron, mats))


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    """Fock amplitudes of a coherent state, renormalized after truncation."""
    amps = np.zeros(cutoff, dtype=complex)
    if alpha == 0:
        amps[0] = 1
        return amps
    n = np.arange(cutoff)
    log_mag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return amps / np.linalg.norm(amps)


def as_density(state: State) -> DensityMatrix:
    return state.to_density() if isinstance(state, StateVector) else state


# -- expectations -----------------------------------------------------------

def expectation(op: Operator, state: State) -> complex:
    """``<psi|O|psi>`` or ``Tr(O rho)``.

    For a hermitian ``op`` the imaginary part is at round-off level; it is
    returned as-is so callers can see it.
    """
    if op.space != state.space:
        raise DimensionMismatch(
            f"operator space {op.space!r} differs from state space {state.space!r}")
    if isinstance(state, StateVector):
        psi = state.amplitudes
        return complex(np.vdot(psi, op.matrix @ psi))
    # Tr(O rho) without forming the product
    return complex(np.sum(op.matrix * state.matrix.T))
