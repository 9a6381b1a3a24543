"""Time-varying Hankel operators and the optimal causal approximation.

Operators on the Hilbert-Schmidt space are handled in explicit coordinates: an
operator subspace such as the causal Hilbert-Schmidt operators is a boolean mask
over matrix entries, vectorized in column-major order. The mask of a source column
depends only on its time step, so a left multiplication ``A -> L A`` read off in
such coordinates is block diagonal with one block per time step, repeated once
for every source coordinate at that step (:class:`FlattenedMap`).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
from scipy.linalg import block_diag, eigh, svd

from ltv_robust.core import (
    LtvOperator,
    SignalSpace,
    anticausal_part,
    corner_norms,
    is_causal,
    operator_norm,
)
from ltv_robust.errors import CausalityError, DimensionMismatchError

logger = logging.getLogger(__name__)

CoordinateKind = Literal["causal", "anticausal", "full"]


@dataclass(frozen=True)
class OperatorCoordinates:
    """Elementary-entry basis of a subspace of operators ``domain -> codomain``.

    Attributes:
        codomain: output space of the operators (may be a stacked space)
        domain: input (source) space of the operators
        kind: ``causal`` (block lower-triangular), ``anticausal`` (strictly upper)
            or ``full``
        after: for causal coordinates, keep only rows with time index > after,
            i.e. the subspace (I - P_after) times the causal operators
    """

    codomain: SignalSpace
    domain: SignalSpace
    kind: CoordinateKind = "causal"
    after: int | None = None

    @cached_property
    def mask(self) -> np.ndarray:
        lower = self.codomain.time_index[:, None] >= self.domain.time_index[None, :]
        if self.kind == "causal":
            mask = lower
        elif self.kind == "anticausal":
            mask = ~lower
        elif self.kind == "full":
            mask = np.ones_like(lower)
        else:
            raise ValueError(f"Unknown coordinate kind: {self.kind}")
        if self.after is not None:
            mask = mask & (self.codomain.time_index > self.after)[:, None]
        return mask

    @cached_property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel(order="F"))

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @property
    def horizon(self) -> int:
        return self.domain.horizon

    def rows_in_column(self, column: int) -> np.ndarray:
        return np.flatnonzero(self.mask[:, column])

    def rows_at(self, k: int) -> np.ndarray:
        """Kept rows of every source column at time step k."""
        return self.rows_in_column(self.domain.offsets[k])

    @cached_property
    def time_slices(self) -> tuple[slice, ...]:
        """Segment of the flattened vector holding the source columns at each time step."""
        lengths = [self.domain.dims[k] * self.rows_at(k).size for k in range(self.horizon)]
        ends = np.cumsum(lengths)
        return tuple(slice(int(end - length), int(end)) for end, length in zip(ends, lengths))

    def flatten(self, X: LtvOperator) -> np.ndarray:
        if X.codomain != self.codomain or X.domain != self.domain:
            raise DimensionMismatchError(
                f"Operator {X!r} does not live in coordinates {self.codomain.dims} <- {self.domain.dims}",
            )
        return X.matrix.ravel(order="F")[self.indices]

    def unflatten(self, vector: np.ndarray) -> LtvOperator:
        flat = np.zeros(self.codomain.total * self.domain.total)
        flat[self.indices] = vector
        matrix = flat.reshape((self.codomain.total, self.domain.total), order="F")
        return LtvOperator(self.codomain, self.domain, matrix)

    def restricted(self, after: int | None) -> "OperatorCoordinates":
        return OperatorCoordinates(self.codomain, self.domain, self.kind, after)


@dataclass(frozen=True, eq=False)
class FlattenedMap:
    """Block-diagonal map between two coordinate subspaces sharing a source space.

    ``blocks[k]`` acts on every source column at time step k, so it has shape
    ``(len(codomain_basis.rows_at(k)), len(domain_basis.rows_at(k)))`` and occurs
    ``source.dims[k]`` times in the full matrix.
    """

    domain_basis: OperatorCoordinates
    codomain_basis: OperatorCoordinates
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.domain_basis.domain != self.codomain_basis.domain:
            raise DimensionMismatchError("Coordinates must share a source space")
        if len(self.blocks) != self.domain_basis.horizon:
            raise DimensionMismatchError(
                f"Expected {self.domain_basis.horizon} blocks, got {len(self.blocks)}",
            )
        for k, block in enumerate(self.blocks):
            expected = (self.codomain_basis.rows_at(k).size, self.domain_basis.rows_at(k).size)
            if block.shape != expected:
                raise DimensionMismatchError(
                    f"Block {k} has shape {block.shape}, bases require {expected}",
                )

    @classmethod
    def identity(cls, basis: OperatorCoordinates) -> "FlattenedMap":
        blocks = tuple(np.eye(basis.rows_at(k).size) for k in range(basis.horizon))
        return cls(basis, basis, blocks)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return self.domain_basis.domain.dims

    @property
    def shape(self) -> tuple[int, int]:
        return self.codomain_basis.size, self.domain_basis.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_basis.size,):
            raise DimensionMismatchError(f"Vector of shape {x.shape} does not fit map shape {self.shape}")
        y = np.zeros(self.codomain_basis.size)
        for block, d, source, target in zip(
            self.blocks, self.multiplicities, self.domain_basis.time_slices, self.codomain_basis.time_slices
        ):
            if block.size:
                columns = x[source].reshape(d, block.shape[1]).T
                y[target] = (block @ columns).T.ravel()
        return y

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.adjoint().matvec(y)

    def apply(self, X: LtvOperator) -> LtvOperator:
        return self.codomain_basis.unflatten(self.matvec(self.domain_basis.flatten(X)))

    def dense(self) -> np.ndarray:
        """The full matrix in the flattened coordinates."""
        repeated = [block for block, d in zip(self.blocks, self.multiplicities) for _ in range(d)]
        return block_diag(*repeated).reshape(self.shape)

    @cached_property
    def block_singular_values(self) -> tuple[np.ndarray, ...]:
        return tuple(
            svd(block, compute_uv=False) if block.size else np.zeros(0) for block in self.blocks
        )

    @cached_property
    def singular_values(self) -> np.ndarray:
        """Singular values of all blocks with their multiplicities, in descending order."""
        values = np.concatenate(
            [np.repeat(s, d) for s, d in zip(self.block_singular_values, self.multiplicities)]
        )
        return np.sort(values)[::-1]

    def singular_triples(
        self,
        limit: int | None = None,
        floor: float = 0.0,
    ) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """Leading singular values with full-length left and right singular vectors.

        Args:
            limit: return at most this many triples
            floor: drop singular values below this

        Returns:
            List of (value, left vector, right vector) in descending order of value.
        """
        candidates = [
            (float(value), k, i, j)
            for k, (values, d) in enumerate(zip(self.block_singular_values, self.multiplicities))
            for i, value in enumerate(values)
            if value >= floor
            for j in range(d)
        ]
        candidates.sort(key=lambda item: -item[0])
        if limit is not None:
            candidates = candidates[:limit]
        factors = {}
        triples = []
        for value, k, i, j in candidates:
            if k not in factors:
                factors[k] = svd(self.blocks[k], full_matrices=False)
            left, _, right_t = factors[k]
            u = np.zeros(self.codomain_basis.size)
            v = np.zeros(self.domain_basis.size)
            rows_out, rows_in = left.shape[0], right_t.shape[1]
            start_out = self.codomain_basis.time_slices[k].start + j * rows_out
            start_in = self.domain_basis.time_slices[k].start + j * rows_in
            u[start_out : start_out + rows_out] = left[:, i]
            v[start_in : start_in + rows_in] = right_t[i]
            triples.append((value, u, v))
        return triples

    def norm(self) -> float:
        return max((float(s[0]) for s in self.block_singular_values if s.size), default=0.0)

    def min_gain(self) -> float:
        """Smallest gain ``min ||F x|| / ||x||`` over the domain."""
        gains = []
        for block, values in zip(self.blocks, self.block_singular_values):
            if block.shape[1] == 0:
                continue
            gains.append(0.0 if block.shape[0] < block.shape[1] else float(values[-1]))
        return min(gains, default=0.0)

    def adjoint(self) -> "FlattenedMap":
        return FlattenedMap(self.codomain_basis, self.domain_basis, tuple(block.T for block in self.blocks))

    def restrict(self, domain_basis: OperatorCoordinates) -> "FlattenedMap":
        """Restriction to a coordinate subspace of the current domain."""
        current = self.domain_basis
        if domain_basis.domain != current.domain or domain_basis.codomain != current.codomain:
            raise DimensionMismatchError("Restriction basis is not a subspace of the domain")
        blocks = []
        for k, block in enumerate(self.blocks):
            rows, kept = current.rows_at(k), domain_basis.rows_at(k)
            positions = np.searchsorted(rows, kept)
            if not (positions < rows.size).all() or not np.array_equal(rows[positions], kept):
                raise DimensionMismatchError("Restriction basis is not a subspace of the domain")
            blocks.append(block[:, positions])
        return FlattenedMap(domain_basis, self.codomain_basis, tuple(blocks))

    def _check_same_bases(self, other: "FlattenedMap") -> None:
        if other.domain_basis != self.domain_basis or other.codomain_basis != self.codomain_basis:
            raise DimensionMismatchError("Flattened maps act between different coordinates")

    def __add__(self, other: "FlattenedMap") -> "FlattenedMap":
        self._check_same_bases(other)
        blocks = tuple(a + b for a, b in zip(self.blocks, other.blocks))
        return FlattenedMap(self.domain_basis, self.codomain_basis, blocks)

    def __sub__(self, other: "FlattenedMap") -> "FlattenedMap":
        self._check_same_bases(other)
        blocks = tuple(a - b for a, b in zip(self.blocks, other.blocks))
        return FlattenedMap(self.domain_basis, self.codomain_basis, blocks)

    def __matmul__(self, other: "FlattenedMap") -> "FlattenedMap":
        if other.codomain_basis != self.domain_basis:
            raise DimensionMismatchError("Flattened maps do not compose")
        blocks = tuple(a @ b for a, b in zip(self.blocks, other.blocks))
        return FlattenedMap(other.domain_basis, self.codomain_basis, blocks)


def left_multiplication_map(
    L: LtvOperator,
    domain_basis: OperatorCoordinates,
    codomain_basis: OperatorCoordinates,
) -> FlattenedMap:
    """Map ``A -> L A`` read off in the given coordinates.

    Entries of ``L A`` outside ``codomain_basis`` are discarded, so choosing
    anticausal codomain coordinates realizes ``A -> (I - nest_project)(L A)``.
    """
    if domain_basis.codomain != L.domain or codomain_basis.codomain != L.codomain:
        raise DimensionMismatchError(f"Operator {L!r} does not map between the given coordinates")
    if domain_basis.domain != codomain_basis.domain:
        raise DimensionMismatchError("Coordinates must share a source space")
    blocks = tuple(
        L.matrix[np.ix_(codomain_basis.rows_at(k), domain_basis.rows_at(k))]
        for k in range(domain_basis.horizon)
    )
    return FlattenedMap(domain_basis, codomain_basis, blocks)


def hankel_apply(R: LtvOperator, A: LtvOperator) -> LtvOperator:
    """The Hankel operator with symbol R at a causal A: (I - nest_project)(R A)."""
    if not is_causal(A):
        raise CausalityError("The Hankel operator acts on causal operators only")
    return anticausal_part(R @ A)


def flatten_hankel(R: LtvOperator, source: SignalSpace | None = None) -> FlattenedMap:
    """Explicit matrix of the Hankel operator from causal to anticausal coordinates."""
    source = source or R.domain
    return left_multiplication_map(
        R,
        OperatorCoordinates(R.domain, source, "causal"),
        OperatorCoordinates(R.codomain, source, "anticausal"),
    )


def distance_to_causal(R: LtvOperator) -> float:
    """inf over causal Q of ||R + Q||, by the corner formula max_n ||P_n R (I - P_n)||."""
    corners = corner_norms(R)
    return float(corners.max()) if corners.size else 0.0


@dataclass(frozen=True, eq=False)
class ParrottSweep:
    Q: LtvOperator
    target: float
    achieved: float
    column_norms: tuple[float, ...]


def _central_completion(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    bound: float,
    rcut: float,
) -> np.ndarray:
    """Central Z making ||[[A, B], [C, Z]]|| <= bound, given ||[A, B]|| and ||[A; C]|| <= bound."""
    Z = np.zeros((C.shape[0], B.shape[1]))
    if A.size == 0 or B.size == 0 or C.size == 0 or bound == 0.0:
        return Z
    eigenvalues, vectors = eigh(A @ A.T)
    gap = bound**2 - eigenvalues
    kept = gap > rcut * bound**2
    if not kept.any():
        return Z
    inner = vectors[:, kept] @ np.diag(1.0 / gap[kept]) @ vectors[:, kept].T
    return -C @ A.T @ inner @ B


def parrott_sweep(R: LtvOperator, rcut: float = 1e-10) -> ParrottSweep:
    """Fill the causal part of R + Q one block column at a time, last column first.

    Each step solves a Parrott problem with the central completion, so the
    columns already filled never exceed the distance to the causal operators.
    """
    target = distance_to_causal(R)
    X = R.matrix.copy()
    rows_time = R.codomain.time_index
    cols_time = R.domain.time_index
    column_norms = []
    for k in range(R.horizon - 1, -1, -1):
        upper, lower = rows_time < k, rows_time >= k
        later, current = cols_time > k, cols_time == k
        A = X[np.ix_(upper, later)]
        B = X[np.ix_(upper, current)]
        C = X[np.ix_(lower, later)]
        X[np.ix_(lower, current)] = _central_completion(A, B, C, target, rcut)
        column_norms.append(float(np.linalg.norm(X[:, cols_time >= k], 2)))
    Q = R.with_matrix(np.where(R.codomain.time_index[:, None] >= cols_time[None, :], X - R.matrix, 0.0))
    achieved = operator_norm(R + Q)
    logger.debug(f"Parrott sweep: target {target:.12g}, achieved {achieved:.12g}")
    return ParrottSweep(Q=Q, target=target, achieved=achieved, column_norms=tuple(column_norms))


def nehari_extension(R: LtvOperator) -> LtvOperator:
    """A causal Q with ||R + Q|| equal to the distance from R to the causal operators."""
    return parrott_sweep(R).Q
