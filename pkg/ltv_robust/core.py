"""Finite-horizon operator algebra.

Signals live on a finite time axis ``0 .. T-1`` with a block of ``dims[k]`` real
coordinates at step ``k``. Operators between two such spaces are dense block
matrices; causal operators are the block lower-triangular ones. Truncation
``P_n`` keeps the coordinates with time index ``<= n`` (``P_{-1} = 0`` and
``P_inf = I``).
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike

from ltv_robust.config import DEFAULT_TOLERANCES
from ltv_robust.errors import DimensionMismatchError, SingularDiagonalBlockError

logger = logging.getLogger(__name__)

TruncationSide = Literal["left", "right", "both"]


@dataclass(frozen=True)
class SignalSpace:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise DimensionMismatchError("A signal space needs a horizon T >= 1")
        if any(d < 1 for d in dims):
            raise DimensionMismatchError(f"Block dimensions must all be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def uniform(cls, dim: int, horizon: int) -> "SignalSpace":
        if horizon < 1:
            raise DimensionMismatchError(f"Horizon must be >= 1, got {horizon}")
        return cls((dim,) * horizon)

    @property
    def horizon(self) -> int:
        return len(self.dims)

    @property
    def total(self) -> int:
        return sum(self.dims)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(x) for x in np.concatenate(([0], np.cumsum(self.dims))))

    @cached_property
    def time_index(self) -> np.ndarray:
        """Time step of every coordinate, in coordinate order."""
        return np.repeat(np.arange(self.horizon), self.dims)

    def block_slice(self, k: int) -> slice:
        return slice(self.offsets[k], self.offsets[k + 1])

    def reversed(self) -> "SignalSpace":
        return SignalSpace(self.dims[::-1])


@dataclass(frozen=True)
class NestIndex:
    """Index of a truncation projection; ``math.inf`` stands for the identity."""

    n: int | float

    def __post_init__(self):
        if self.n != math.inf and (int(self.n) != self.n or self.n < -1):
            raise DimensionMismatchError(f"Invalid nest index {self.n}")

    @property
    def is_identity(self) -> bool:
        return self.n == math.inf

    def validate(self, horizon: int) -> "NestIndex":
        if not self.is_identity and self.n > horizon - 1:
            raise DimensionMismatchError(
                f"Nest index {self.n} is outside the horizon (valid: -1..{horizon - 1} or inf)",
            )
        return self

    def mask(self, space: SignalSpace) -> np.ndarray:
        """Boolean mask of the coordinates kept by P_n."""
        self.validate(space.horizon)
        if self.is_identity:
            return np.ones(space.total, dtype=bool)
        return space.time_index <= self.n


def _nest(n: "int | float | NestIndex") -> NestIndex:
    return n if isinstance(n, NestIndex) else NestIndex(n)


@dataclass(frozen=True, eq=False)
class LtvOperator:
    """Dense block matrix mapping ``domain`` signals to ``codomain`` signals."""

    codomain: SignalSpace
    domain: SignalSpace
    matrix: np.ndarray

    # numpy scalars defer to __rmul__
    __array_ufunc__ = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionMismatchError(f"Operator entries must be 2-d, got ndim={matrix.ndim}")
        if self.codomain.horizon != self.domain.horizon:
            raise DimensionMismatchError(
                f"Domain horizon {self.domain.horizon} differs from "
                f"codomain horizon {self.codomain.horizon}",
            )
        expected = (self.codomain.total, self.domain.total)
        if matrix.shape != expected:
            raise DimensionMismatchError(
                f"Entry array has shape {matrix.shape}, block dimensions require {expected}",
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def horizon(self) -> int:
        return self.domain.horizon

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[self.codomain.block_slice(i), self.domain.block_slice(j)]

    def with_matrix(self, matrix: ArrayLike) -> "LtvOperator":
        return LtvOperator(self.codomain, self.domain, matrix)

    @property
    def T(self) -> "LtvOperator":
        return adjoint(self)

    def __matmul__(self, other: "LtvOperator") -> "LtvOperator":
        return compose(self, other)

    def __add__(self, other: "LtvOperator") -> "LtvOperator":
        return add(self, other)

    def __sub__(self, other: "LtvOperator") -> "LtvOperator":
        return add(self, scale(other, -1.0))

    def __neg__(self) -> "LtvOperator":
        return scale(self, -1.0)

    def __mul__(self, factor: float) -> "LtvOperator":
        return scale(self, factor)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return (
            f"LtvOperator(T={self.horizon}, codomain={self.codomain.dims}, "
            f"domain={self.domain.dims})"
        )


def zeros(codomain: SignalSpace, domain: SignalSpace) -> LtvOperator:
    return LtvOperator(codomain, domain, np.zeros((codomain.total, domain.total)))


def identity(space: SignalSpace) -> LtvOperator:
    return LtvOperator(space, space, np.eye(space.total))


def _check_conformable(left: LtvOperator, right: LtvOperator) -> None:
    if left.domain != right.codomain:
        raise DimensionMismatchError(
            f"Cannot compose: left domain {left.domain.dims} != right codomain {right.codomain.dims}",
        )


def compose(left: LtvOperator, right: LtvOperator) -> LtvOperator:
    _check_conformable(left, right)
    return LtvOperator(left.codomain, right.domain, left.matrix @ right.matrix)


def adjoint(X: LtvOperator) -> LtvOperator:
    return LtvOperator(X.domain, X.codomain, X.matrix.T)


def add(A: LtvOperator, B: LtvOperator) -> LtvOperator:
    if A.codomain != B.codomain or A.domain != B.domain:
        raise DimensionMismatchError(
            f"Cannot add operators {A.shape} and {B.shape} with different signal spaces",
        )
    return LtvOperator(A.codomain, A.domain, A.matrix + B.matrix)


def scale(X: LtvOperator, factor: float) -> LtvOperator:
    return LtvOperator(X.codomain, X.domain, float(factor) * X.matrix)


def solve_causal_inverse(
    X: LtvOperator,
    rtol: float = DEFAULT_TOLERANCES.singular_block,
) -> LtvOperator:
    """Invert a causal operator by block forward substitution.

    Only the block lower-triangular part of ``X`` is read.

    Args:
        X: causal operator with square diagonal blocks
        rtol: a diagonal block with smallest/largest singular value ratio at or
            below this value is treated as singular

    Returns:
        The causal inverse, mapping ``X.codomain`` to ``X.domain``.

    Raises:
        SingularDiagonalBlockError: a diagonal block is numerically singular
    """
    if X.codomain.dims != X.domain.dims:
        raise DimensionMismatchError(
            f"Causal inversion needs square diagonal blocks, got codomain {X.codomain.dims} "
            f"and domain {X.domain.dims}",
        )
    L = nest_project(X).matrix
    inverse = np.zeros_like(L)
    space = X.domain
    for k in range(space.horizon):
        rows = space.block_slice(k)
        diagonal = L[rows, rows]
        sigma = np.linalg.svd(diagonal, compute_uv=False)
        if sigma[0] == 0.0 or sigma[-1] <= rtol * sigma[0]:
            raise SingularDiagonalBlockError(k, float(sigma[-1]), float(sigma[0]))
        start = rows.start
        inverse[rows, rows] = np.linalg.inv(diagonal)
        if start:
            coupling = L[rows, :start] @ inverse[:start, :start]
            inverse[rows, :start] = -np.linalg.solve(diagonal, coupling)
    return LtvOperator(X.domain, X.codomain, inverse)


def truncation(space: SignalSpace, n: "int | float | NestIndex", complement: bool = False) -> LtvOperator:
    """The diagonal projection P_n (or I - P_n when ``complement``) on ``space``."""
    keep = _nest(n).mask(space)
    if complement:
        keep = ~keep
    return LtvOperator(space, space, np.diag(keep.astype(float)))


def truncate(
    X: LtvOperator,
    n: "int | float | NestIndex",
    side: TruncationSide = "left",
    complement: bool = False,
) -> LtvOperator:
    """Apply P_n on the left (P_n X), right (X P_n) or both sides of ``X``.

    With ``complement`` the projection used is Q_n = I - P_n.
    """
    if side not in ("left", "right", "both"):
        raise ValueError(f"Unknown truncation side: {side}")
    nest = _nest(n)
    rows = nest.mask(X.codomain)
    cols = nest.mask(X.domain)
    if complement:
        rows, cols = ~rows, ~cols
    matrix = X.matrix.copy()
    if side in ("left", "both"):
        matrix[~rows, :] = 0.0
    if side in ("right", "both"):
        matrix[:, ~cols] = 0.0
    return X.with_matrix(matrix)


def causal_mask(X: LtvOperator) -> np.ndarray:
    return X.codomain.time_index[:, None] >= X.domain.time_index[None, :]


def nest_project(X: LtvOperator) -> LtvOperator:
    """Block lower-triangular part of ``X``, diagonal blocks included."""
    return X.with_matrix(np.where(causal_mask(X), X.matrix, 0.0))


def anticausal_part(X: LtvOperator) -> LtvOperator:
    """Strictly block upper-triangular part, (I - nest_project)(X)."""
    return X.with_matrix(np.where(causal_mask(X), 0.0, X.matrix))


def corner_norms(X: LtvOperator) -> np.ndarray:
    """Spectral norms of P_n X (I - P_n) for n = 0 .. T-2."""
    values = []
    for n in range(X.horizon - 1):
        rows = X.codomain.time_index <= n
        cols = X.domain.time_index > n
        values.append(np.linalg.norm(X.matrix[np.ix_(rows, cols)], 2))
    return np.asarray(values, dtype=float)


def is_causal(X: LtvOperator, tol: float = DEFAULT_TOLERANCES.structural) -> bool:
    corners = corner_norms(X)
    return bool(corners.size == 0 or corners.max() <= tol)


def operator_norm(X: LtvOperator) -> float:
    if X.matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(X.matrix, 2))


def hs_norm(X: LtvOperator) -> float:
    return float(np.linalg.norm(X.matrix, "fro"))


def hs_inner(A: LtvOperator, B: LtvOperator) -> float:
    """Hilbert-Schmidt pairing tr(B* A)."""
    if A.codomain != B.codomain or A.domain != B.domain:
        raise DimensionMismatchError("Hilbert-Schmidt pairing needs operators on the same spaces")
    return float(np.sum(A.matrix * B.matrix))


def flip(X: LtvOperator) -> LtvOperator:
    """Order-reversed adjoint J X* J, where J reverses the coordinate order.

    Maps causal operators to causal operators, and exchanges left and right
    factorization problems.
    """
    return LtvOperator(X.domain.reversed(), X.codomain.reversed(), X.matrix.T[::-1, ::-1])


def direct_sum(spaces: Sequence[SignalSpace]) -> SignalSpace:
    horizons = {space.horizon for space in spaces}
    if len(horizons) != 1:
        raise DimensionMismatchError(f"Cannot stack spaces with horizons {sorted(horizons)}")
    return SignalSpace(tuple(int(sum(ds)) for ds in zip(*(space.dims for space in spaces))))


def _interleave(spaces: Sequence[SignalSpace]) -> tuple[SignalSpace, np.ndarray]:
    """Coordinate permutation from plain concatenation to time-interleaved stacking."""
    stacked = direct_sum(spaces)
    starts = np.concatenate(([0], np.cumsum([space.total for space in spaces])))
    order = []
    for k in range(stacked.horizon):
        for start, space in zip(starts, spaces):
            block = space.block_slice(k)
            order.append(np.arange(block.start, block.stop) + start)
    return stacked, np.concatenate(order)


def stack_rows(operators: Sequence[LtvOperator]) -> LtvOperator:
    """Column operator [X_1; X_2; ...] with time-interleaved output coordinates."""
    domain = operators[0].domain
    if any(op.domain != domain for op in operators):
        raise DimensionMismatchError("Stacked rows must share a domain")
    codomain, order = _interleave([op.codomain for op in operators])
    return LtvOperator(codomain, domain, np.vstack([op.matrix for op in operators])[order])


def stack_columns(operators: Sequence[LtvOperator]) -> LtvOperator:
    """Row operator (X_1, X_2, ...) with time-interleaved input coordinates."""
    codomain = operators[0].codomain
    if any(op.codomain != codomain for op in operators):
        raise DimensionMismatchError("Stacked columns must share a codomain")
    domain, order = _interleave([op.domain for op in operators])
    return LtvOperator(codomain, domain, np.hstack([op.matrix for op in operators])[:, order])


def split_rows(X: LtvOperator, spaces: Sequence[SignalSpace]) -> list[LtvOperator]:
    """Inverse of :func:`stack_rows` for the given component output spaces."""
    codomain, order = _interleave(spaces)
    if codomain != X.codomain:
        raise DimensionMismatchError(
            f"Components {[s.dims for s in spaces]} do not stack to {X.codomain.dims}",
        )
    plain = np.empty_like(X.matrix)
    plain[order] = X.matrix
    starts = np.concatenate(([0], np.cumsum([space.total for space in spaces])))
    return [
        LtvOperator(space, X.domain, plain[starts[c] : starts[c + 1]])
        for c, space in enumerate(spaces)
    ]


def _coefficient(value: ArrayLike) -> np.ndarray:
    return np.atleast_2d(np.asarray(value, dtype=float))


def lift_state_space(
    A: Sequence[ArrayLike],
    B: Sequence[ArrayLike],
    C: Sequence[ArrayLike],
    D: Sequence[ArrayLike],
    horizon: int | None = None,
) -> LtvOperator:
    """Lift a time-varying state-space system into its causal block matrix.

    The system is ``x_{k+1} = A_k x_k + B_k u_k``, ``y_k = C_k x_k + D_k u_k`` with zero
    initial state. Block (i, j) of the result is ``D_i`` on the diagonal and
    ``C_i A_{i-1} ... A_{j+1} B_j`` below it.

    Args:
        A, B, C, D: per-step matrices, each sequence of length T
        horizon: T; defaults to the common sequence length

    Returns:
        The lifted causal operator from input to output signals.
    """
    A, B, C, D = ([_coefficient(m) for m in seq] for seq in (A, B, C, D))
    T = len(D) if horizon is None else horizon
    if T < 1:
        raise DimensionMismatchError(f"Horizon must be >= 1, got {T}")
    for name, seq in (("A", A), ("B", B), ("C", C), ("D", D)):
        if len(seq) != T:
            raise DimensionMismatchError(f"Sequence {name} has length {len(seq)}, expected {T}")

    for k in range(T):
        if B[k].shape[0] != A[k].shape[0]:
            raise DimensionMismatchError(f"B_{k} has {B[k].shape[0]} rows, A_{k} has {A[k].shape[0]}")
        if C[k].shape[1] != A[k].shape[1]:
            raise DimensionMismatchError(
                f"C_{k} has {C[k].shape[1]} columns, A_{k} has {A[k].shape[1]}",
            )
        if D[k].shape != (C[k].shape[0], B[k].shape[1]):
            raise DimensionMismatchError(
                f"D_{k} has shape {D[k].shape}, expected {(C[k].shape[0], B[k].shape[1])}",
            )
        if k + 1 < T and A[k + 1].shape[1] != A[k].shape[0]:
            raise DimensionMismatchError(
                f"A_{k + 1} has {A[k + 1].shape[1]} columns but A_{k} has {A[k].shape[0]} rows",
            )

    codomain = SignalSpace(tuple(d.shape[0] for d in D))
    domain = SignalSpace(tuple(d.shape[1] for d in D))
    matrix = np.zeros((codomain.total, domain.total))
    for j in range(T):
        cols = domain.block_slice(j)
        matrix[codomain.block_slice(j), cols] = D[j]
        state = B[j]
        for i in range(j + 1, T):
            matrix[codomain.block_slice(i), cols] = C[i] @ state
            state = A[i] @ state
    logger.debug(f"Lifted state-space system over T={T}: {codomain.dims} <- {domain.dims}")
    return LtvOperator(codomain, domain, matrix)


def toeplitz_lift(h: Sequence[ArrayLike], horizon: int, block_dim: int = 1) -> LtvOperator:
    """Lift an FIR impulse response into its block-Toeplitz causal operator.

    Scalar coefficients are taken as multiples of the ``block_dim`` identity;
    matrix coefficients fix the block shape themselves.
    """
    if len(h) < 1:
        raise DimensionMismatchError("An FIR response needs at least one coefficient")
    if horizon < 1:
        raise DimensionMismatchError(f"Horizon must be >= 1, got {horizon}")
    coefficients = []
    for value in h:
        array = np.asarray(value, dtype=float)
        coefficients.append(array * np.eye(block_dim) if array.ndim == 0 else _coefficient(array))
    shape = coefficients[0].shape
    if any(c.shape != shape for c in coefficients):
        raise DimensionMismatchError("FIR coefficients must share one shape")
    codomain = SignalSpace((shape[0],) * horizon)
    domain = SignalSpace((shape[1],) * horizon)
    matrix = np.zeros((codomain.total, domain.total))
    for i in range(horizon):
        for lag, coefficient in enumerate(coefficients[: i + 1]):
            matrix[codomain.block_slice(i), domain.block_slice(i - lag)] = coefficient
    return LtvOperator(codomain, domain, matrix)


def random_space(rng: np.random.Generator, horizon: int, max_dim: int = 2) -> SignalSpace:
    return SignalSpace(tuple(int(d) for d in rng.integers(1, max_dim + 1, size=horizon)))


def random_operator(
    rng: np.random.Generator,
    codomain: SignalSpace,
    domain: SignalSpace,
    causal: bool = False,
) -> LtvOperator:
    X = LtvOperator(codomain, domain, rng.standard_normal((codomain.total, domain.total)))
    return nest_project(X) if causal else X


def random_causal(
    rng: np.random.Generator,
    codomain: SignalSpace,
    domain: SignalSpace,
) -> LtvOperator:
    return random_operator(rng, codomain, domain, causal=True)
