"""Post-training evaluation: tag grids, nucleation-field sweeps, eigenfunction curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from cpinn.network import Ansatz, NetworkParams
from cpinn.problems import ProblemDefinition, TagDomainError
from cpinn.variational import estimate_eigenvalue, evaluation_points

__all__ = [
    "GridSpecError",
    "DEFAULT_GRIDS",
    "parse_grid",
    "SweepRow",
    "sweep",
    "sweep_summary",
    "EigenfunctionCurve",
    "eigenfunction_curve",
]

Array = NDArray[np.float64]

# 30 x 30 tag grid including the box edges; sphere lines r0 = 1.0, 1.1, ..., 10.0
DEFAULT_GRIDS = {
    "textbook": "",
    "planar-defect": "r0=1:10:30,dk=0:1:30",
    "sphere": "r0=1:10:91,m=1,a=1;r0=1:10:91,m=1.387,a=1.5",
}


class GridSpecError(ValueError):
    """Malformed grid specification."""


def _axis(spec: str) -> tuple[str, Array]:
    name, sep, rhs = spec.partition("=")
    if not sep or not name.strip():
        raise GridSpecError(f"expected name=value or name=lo:hi:count, got {spec!r}")
    parts = rhs.split(":")
    try:
        if len(parts) == 1:
            values = np.array([float(parts[0])])
        elif len(parts) == 3:
            count = int(parts[2])
            if count < 1:
                raise GridSpecError(f"count must be positive in {spec!r}")
            values = np.linspace(float(parts[0]), float(parts[1]), count)
        else:
            raise GridSpecError(f"cannot parse axis {spec!r}")
    except ValueError as exc:
        raise GridSpecError(f"cannot parse axis {spec!r}: {exc}") from exc
    return name.strip(), values


def parse_grid(spec: str, problem: ProblemDefinition) -> Array:
    """Expand a grid spec into tag vectors, shape ``(n, tag_dim)``.

    ``;`` separates independent grids; within one grid, ``,`` separates axes,
    each ``name=value`` or ``name=lo:hi:count`` (inclusive, evenly spaced).
    The tensor product is ordered with the first named axis slowest.
    """
    if problem.tag_dim == 0:
        if spec.strip():
            raise GridSpecError(f"{problem.name} has no tags")
        return np.zeros((1, 0))
    blocks = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        axes = dict(_axis(a) for a in part.split(","))
        missing = set(problem.tag_names) - set(axes)
        extra = set(axes) - set(problem.tag_names)
        if missing or extra:
            raise GridSpecError(
                f"grid axes {sorted(axes)} do not match tags {list(problem.tag_names)}"
            )
        mesh = np.meshgrid(*(axes[n] for n in problem.tag_names), indexing="ij")
        blocks.append(np.stack([m.ravel() for m in mesh], axis=1))
    if not blocks:
        raise GridSpecError("empty grid")
    return np.concatenate(blocks)


@dataclass(frozen=True)
class SweepRow:
    tags: tuple[float, ...]
    h_predicted: float = math.nan
    h_true: float = math.nan
    error: str = ""

    @property
    def residual(self) -> float:
        return self.h_predicted - self.h_true


def sweep(
    problem: ProblemDefinition,
    params: NetworkParams,
    grid: Array,
    n_points: int = 2**16,
    ansatz: Optional[Ansatz] = None,
) -> list[SweepRow]:
    """Predicted vs oracle eigenvalue at each tag vector of ``grid``.

    Tag vectors outside the problem's tag box produce rows carrying an error
    message instead of values.
    """
    ansatz = ansatz or Ansatz.for_problem(problem)
    points = evaluation_points(problem, n_points)
    rows = []
    for tags in np.atleast_2d(grid):
        key = tuple(float(t) for t in tags)
        try:
            problem.check_tags(tags)
        except TagDomainError as exc:
            rows.append(SweepRow(key, error=str(exc)))
            continue
        est = estimate_eigenvalue(problem, params, tags, ansatz=ansatz, points=points)
        rows.append(SweepRow(key, est.eigenvalue, float(problem.eigenvalue_oracle(*key))))
    return rows


def sweep_summary(rows: Sequence[SweepRow]) -> dict[str, float]:
    good = [r.residual for r in rows if not r.error]
    if not good:
        return {"n": 0, "mae": math.nan, "max_abs_residual": math.nan}
    res = np.abs(np.array(good))
    return {"n": len(good), "mae": float(res.mean()), "max_abs_residual": float(res.max())}


@dataclass(frozen=True)
class EigenfunctionCurve:
    coordinates: Array  # (n, d)
    predicted: Array
    true: Array
    l2_error: float


def eigenfunction_curve(
    problem: ProblemDefinition,
    params: NetworkParams,
    tags: Sequence[float] = (),
    samples: int = 201,
    n_points: int = 2**16,
    ansatz: Optional[Ansatz] = None,
) -> EigenfunctionCurve:
    """Predicted and oracle eigenfunctions on a regular line through the domain.

    1-D problems use the whole interval; 3-D problems the x-axis through the
    centre.  Both functions are normalized to ``int r y^2 = 1`` by QMC over the
    domain, and the prediction's sign is aligned with the oracle's at the
    domain centre.  ``l2_error`` is the QMC L2 distance over the whole domain.
    """
    ansatz = ansatz or Ansatz.for_problem(problem)
    t = problem.check_tags(tags)
    layers = params.layers()
    lo = np.asarray(problem.lower)
    hi = np.asarray(problem.upper)
    centre = 0.5 * (lo + hi)

    line = np.tile(centre, (samples, 1))
    line[:, 0] = np.linspace(lo[0], hi[0], samples)

    cloud = evaluation_points(problem, n_points)
    _, _, r = problem.coefficients(cloud, t)
    r = np.broadcast_to(r, (len(cloud),))

    def predicted(x: Array) -> Array:
        return np.asarray(ansatz.evaluate(layers, x, t)[0])

    def true(x: Array) -> Array:
        return np.asarray(problem.eigenfunction_oracle(x, t))

    pc, tc = predicted(cloud), true(cloud)
    p_norm = math.sqrt(problem.volume * float(np.mean(r * pc * pc)))
    t_norm = math.sqrt(problem.volume * float(np.mean(r * tc * tc)))
    sign = 1.0
    if predicted(centre[None, :])[0] * true(centre[None, :])[0] < 0:
        sign = -1.0
    pc = sign * pc / p_norm
    tc = tc / t_norm
    l2 = math.sqrt(problem.volume * float(np.mean((pc - tc) ** 2)))
    return EigenfunctionCurve(
        coordinates=line,
        predicted=sign * predicted(line) / p_norm,
        true=true(line) / t_norm,
        l2_error=l2,
    )
