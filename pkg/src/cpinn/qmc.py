"""Sobol low-discrepancy sequences and training-batch composition.

The generator uses the Joe-Kuo ``new-joe-kuo-6.21201`` direction numbers for
up to eight dimensions and emits points in Gray-code order, so the first
``2**k`` points of every coordinate form a dyadic net.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

if TYPE_CHECKING:
    from cpinn.problems import ProblemDefinition

__all__ = [
    "MAX_DIMENSION",
    "UnsupportedDimensionError",
    "InvalidDomainError",
    "SobolStream",
    "sobol_points",
    "map_to_box",
    "BatchPlan",
    "Batch",
    "compose_batches",
]

MAX_DIMENSION = 8
_BITS = 32
_SCALE = 2.0**-_BITS

# (degree s, polynomial coefficients a, initial direction integers m_1..m_s)
# for dimensions 2..8; dimension 1 is the van der Corput sequence.
_JOE_KUO = (
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
)


class UnsupportedDimensionError(ValueError):
    """Requested Sobol dimension is outside 1..MAX_DIMENSION."""


class InvalidDomainError(ValueError):
    """A box has a coordinate with ``lower >= upper``."""


def _direction_table(dimension: int) -> NDArray[np.uint64]:
    table = np.zeros((dimension, _BITS), dtype=np.uint64)
    for j in range(_BITS):
        table[0, j] = 1 << (_BITS - 1 - j)
    for d in range(1, dimension):
        s, a, m = _JOE_KUO[d - 1]
        v = [0] * _BITS
        for j in range(s):
            v[j] = m[j] << (_BITS - 1 - j)
        for j in range(s, _BITS):
            v[j] = v[j - s] ^ (v[j - s] >> s)
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    v[j] ^= v[j - k]
        table[d] = v
    return table


def _check_dimension(dimension: int) -> None:
    if not 1 <= dimension <= MAX_DIMENSION:
        raise UnsupportedDimensionError(
            f"Sobol dimension must be in 1..{MAX_DIMENSION}, got {dimension}"
        )


class SobolStream:
    """Stateful Sobol stream; ``draw`` returns the next ``count`` points.

    Points are reproducible from any index: ``SobolStream(d, index=k)`` emits
    exactly what a fresh stream emits after ``k`` points.
    """

    def __init__(self, dimension: int, index: int = 0) -> None:
        _check_dimension(dimension)
        if index < 0:
            raise ValueError("index must be non-negative")
        self.dimension = dimension
        self.index = index
        self.direction_numbers = _direction_table(dimension)

    def _integers_at(self, start: int, count: int) -> NDArray[np.uint64]:
        if start + count > 2**_BITS:
            raise ValueError("Sobol stream exhausted (more than 2**32 points)")
        v = self.direction_numbers
        gray = start ^ (start >> 1)
        first = np.zeros(self.dimension, dtype=np.uint64)
        for bit in range(_BITS):
            if (gray >> bit) & 1:
                first ^= v[:, bit]
        out = np.empty((count, self.dimension), dtype=np.uint64)
        out[0] = first
        if count > 1:
            # x_{n+1} = x_n ^ v[ctz(n + 1)]
            n1 = np.arange(start + 1, start + count, dtype=np.int64)
            lowbit = (n1 & -n1).astype(np.float64)
            ctz = np.log2(lowbit).astype(np.int64)
            out[1:] = v[:, ctz].T
            np.bitwise_xor.accumulate(out, axis=0, out=out)
        return out

    def draw(self, count: int) -> NDArray[np.float64]:
        if count < 1:
            raise ValueError("count must be positive")
        ints = self._integers_at(self.index, count)
        self.index += count
        return ints.astype(np.float64) * _SCALE

    def points_at(self, start: int, count: int) -> NDArray[np.float64]:
        """Points ``start .. start+count-1`` without touching the stream index."""
        return self._integers_at(start, count).astype(np.float64) * _SCALE


def sobol_points(dimension: int, count: int, skip: int = 0) -> NDArray[np.float64]:
    """Return ``count`` Sobol points in ``[0, 1)**dimension`` after skipping ``skip``.

    >>> sobol_points(1, 3, 1)[:, 0].tolist()
    [0.5, 0.75, 0.25]
    """
    if count < 1:
        raise ValueError("count must be positive")
    return SobolStream(dimension, index=skip).draw(count)


def _as_box(lower: ArrayLike, upper: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    lo = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    if lo.shape != hi.shape:
        raise InvalidDomainError("lower and upper bounds differ in length")
    if np.any(lo >= hi):
        raise InvalidDomainError(f"degenerate box: lower={lo.tolist()} upper={hi.tolist()}")
    return lo, hi


def map_to_box(unit_points: ArrayLike, lower: ArrayLike, upper: ArrayLike) -> NDArray[np.float64]:
    """Affinely map points from the unit cube to ``[lower, upper]``."""
    lo, hi = _as_box(lower, upper)
    u = np.asarray(unit_points, dtype=np.float64)
    return lo + u * (hi - lo)


@dataclass(frozen=True)
class BatchPlan:
    """``repeats`` (I) x ``tag_vectors`` (M) batches of ``points_per_batch`` (N) points."""

    points_per_batch: int
    tag_vectors: int = 1
    repeats: int = 1
    point_seed: int = 1
    tag_seed: int = 1

    def __post_init__(self) -> None:
        for name in ("points_per_batch", "tag_vectors", "repeats"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.point_seed < 0 or self.tag_seed < 0:
            raise ValueError("sequence offsets must be non-negative")

    @property
    def n_batches(self) -> int:
        return self.repeats * self.tag_vectors

    @property
    def n_records(self) -> int:
        return self.n_batches * self.points_per_batch


@dataclass(frozen=True, eq=False)
class Batch:
    """One batch: a contiguous window of the spatial Sobol stream plus one tag vector.

    Spatial points are regenerated on demand from the stream window, which
    keeps plans with ~10**8 records out of memory.
    """

    batch_id: int
    tags: NDArray[np.float64]
    stream: SobolStream
    start: int
    count: int
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    @property
    def points(self) -> NDArray[np.float64]:
        u = self.stream.points_at(self.start, self.count)
        return self.lower + u * (self.upper - self.lower)


def compose_batches(plan: BatchPlan, problem: ProblemDefinition) -> list[Batch]:
    """Build the ``I*M`` batches for ``problem`` in repeat-major, tag-minor order.

    Batch ``j`` carries tag vector ``j % M``; every batch owns a disjoint window
    of one spatial Sobol stream.
    """
    lower, upper = _as_box(problem.lower, problem.upper)
    m = plan.tag_vectors
    if problem.tag_dim:
        tag_lo, tag_hi = _as_box(problem.tag_lower, problem.tag_upper)
        tags = map_to_box(sobol_points(problem.tag_dim, m, plan.tag_seed), tag_lo, tag_hi)
    else:
        tags = np.zeros((m, 0))
    stream = SobolStream(problem.spatial_dim)
    n = plan.points_per_batch
    batches = []
    for j in range(plan.n_batches):
        batches.append(
            Batch(
                batch_id=j,
                tags=tags[j % m],
                stream=stream,
                start=plan.point_seed + j * n,
                count=n,
                lower=lower,
                upper=upper,
            )
        )
    return batches


def batch_rows(batches: Sequence[Batch]) -> list[list[float]]:
    """Flatten batches to ``[batch_id, coords..., tags...]`` rows (debug dumps)."""
    rows: list[list[float]] = []
    for b in batches:
        for x in b.points:
            rows.append([b.batch_id, *x.tolist(), *b.tags.tolist()])
    return rows
