"""Quasi-Monte-Carlo Rayleigh quotient and the penalized training loss.

For a trial function ``y`` sampled at points ``x_i`` of a box with volume
``V``::

    numerator   = V/N * sum(p |grad y|^2 - q y^2)
    denominator = V/N * sum(r y^2)
    loss        = numerator / denominator + gamma * (denominator - 1)^2

Numerator, denominator and penalty share one sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cpinn import autodiff as ad
from cpinn.network import Ansatz, NetworkParams, unflatten
from cpinn.qmc import Batch, map_to_box, sobol_points

__all__ = [
    "DegenerateAnsatzError",
    "DENOMINATOR_FLOOR",
    "LossConfig",
    "EigenEstimate",
    "qmc_integral",
    "quotient_terms",
    "rayleigh_quotient",
    "rayleigh_quotient_of",
    "loss",
    "loss_and_gradient",
    "estimate_eigenvalue",
]

Array = NDArray[np.float64]
DENOMINATOR_FLOOR = 1e-8


class DegenerateAnsatzError(ArithmeticError):
    """The trial function is numerically zero; the quotient is undefined."""


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")


@dataclass(frozen=True)
class EigenEstimate:
    eigenvalue: float
    tags: tuple[float, ...]
    quadrature_points: int
    rayleigh_numerator: float
    rayleigh_denominator: float
    evaluate: Optional[Callable[[ArrayLike], Array]] = field(default=None, repr=False, compare=False)


def qmc_integral(integrand: Callable[[Array], Array], lower: ArrayLike, upper: ArrayLike, points: ArrayLike) -> float:
    """``volume / N * sum(integrand(points))``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty sample")
    lo = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    pts = pts.reshape(len(pts), -1) if pts.ndim > 1 else pts.reshape(-1, 1)
    if np.any(pts < lo) or np.any(pts > hi):
        raise ValueError("sample points outside the integration box")
    volume = float(np.prod(hi - lo))
    return volume * float(np.mean(integrand(pts)))


def quotient_terms(problem, y, gy, points: Array, tags: Array):
    """QMC numerator and denominator integrals for sampled ``y`` and ``grad y``.

    Works on plain arrays and on tape variables alike.
    """
    p, q, r = problem.coefficients(points, np.asarray(tags, dtype=np.float64))
    scale = problem.volume / len(points)
    grad_sq = ad.square(gy).sum(axis=0)
    y_sq = ad.square(y)
    numerator = (grad_sq * p - y_sq * q).sum() * scale
    denominator = (y_sq * r).sum() * scale
    return numerator, denominator


def _check_denominator(denominator) -> None:
    value = float(ad._value(denominator))
    if not value >= DENOMINATOR_FLOOR:
        raise DegenerateAnsatzError(f"denominator integral {value:.3e} below {DENOMINATOR_FLOOR:g}")


def _unpack(batch_or_points, tags):
    if isinstance(batch_or_points, Batch):
        return batch_or_points.points, batch_or_points.tags
    return np.asarray(batch_or_points, dtype=np.float64), np.atleast_1d(np.asarray(tags, dtype=np.float64))


def rayleigh_quotient_of(
    problem, fn: Callable[[Array], tuple[Array, Array]], points: ArrayLike, tags: ArrayLike = ()
) -> float:
    """Quotient of a fixed trial function ``fn(points) -> (y, grad y)``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, problem.spatial_dim)
    y, gy = fn(pts)
    num, den = quotient_terms(problem, np.asarray(y), np.asarray(gy).reshape(problem.spatial_dim, -1), pts, tags)
    _check_denominator(den)
    return float(num / den)


def rayleigh_quotient(problem, params: NetworkParams, batch, tags=(), ansatz: Ansatz | None = None) -> float:
    """Rayleigh quotient of the network ansatz on a batch (no penalty)."""
    ansatz = ansatz or Ansatz.for_problem(problem)
    points, tags = _unpack(batch, tags)
    y, gy = ansatz.evaluate(params.layers(), points, tags)
    num, den = quotient_terms(problem, y, gy, points.reshape(-1, problem.spatial_dim), tags)
    _check_denominator(den)
    return float(num / den)


def _loss_value(num, den, gamma: float):
    return num / den + gamma * ad.square(den - 1.0)


def loss(problem, params: NetworkParams, batch, config: LossConfig | float = LossConfig(), tags=(), ansatz: Ansatz | None = None) -> float:
    """Penalized loss on a batch."""
    gamma = config.gamma if isinstance(config, LossConfig) else float(config)
    ansatz = ansatz or Ansatz.for_problem(problem)
    points, tags = _unpack(batch, tags)
    y, gy = ansatz.evaluate(params.layers(), points, tags)
    num, den = quotient_terms(problem, y, gy, points.reshape(-1, problem.spatial_dim), tags)
    _check_denominator(den)
    return float(_loss_value(num, den, gamma))


def loss_and_gradient(
    problem,
    params: NetworkParams,
    batch,
    config: LossConfig | float = LossConfig(),
    tags=(),
    ansatz: Ansatz | None = None,
    penalty_only: bool = False,
) -> tuple[float, Array, float]:
    """Loss, its gradient over the flat weights, and the denominator integral.

    With ``penalty_only`` the quotient term is dropped, which lets training
    recover from a numerically vanishing trial function.
    """
    gamma = config.gamma if isinstance(config, LossConfig) else float(config)
    ansatz = ansatz or Ansatz.for_problem(problem)
    points, tags = _unpack(batch, tags)
    points = points.reshape(-1, problem.spatial_dim)
    tape = ad.Tape()
    flat = tape.watch(params.flat)
    y, gy = ansatz.evaluate(unflatten(params.layout, flat), points, tags)
    num, den = quotient_terms(problem, y, gy, points, tags)
    if penalty_only:
        value = gamma * ad.square(den - 1.0)
    else:
        _check_denominator(den)
        value = _loss_value(num, den, gamma)
    return float(value.value), ad.grad_weights(value), float(den.value)


def evaluation_points(problem, n_points: int) -> Array:
    """Deterministic quadrature sample: the first ``n_points`` Sobol points after the origin."""
    return map_to_box(sobol_points(problem.spatial_dim, n_points, skip=1), problem.lower, problem.upper)


def estimate_eigenvalue(
    problem,
    params: NetworkParams,
    tags: ArrayLike = (),
    n_points: int = 2**16,
    ansatz: Ansatz | None = None,
    points: Array | None = None,
) -> EigenEstimate:
    """Pure Rayleigh quotient of the trained ansatz at ``tags`` on a large Sobol sample."""
    ansatz = ansatz or Ansatz.for_problem(problem)
    t = problem.check_tags(tags)
    pts = evaluation_points(problem, n_points) if points is None else points
    layers = params.layers()
    total_num = total_den = 0.0
    chunk = 2**14
    for start in range(0, len(pts), chunk):
        part = pts[start : start + chunk]
        y, gy = ansatz.evaluate(layers, part, t)
        num, den = quotient_terms(problem, y, gy, part, t)
        w = len(part) / len(pts)
        total_num += w * float(num)
        total_den += w * float(den)
    _check_denominator(total_den)

    def evaluate(x: ArrayLike) -> Array:
        return ansatz.evaluate(layers, np.asarray(x, dtype=np.float64), t)[0]

    return EigenEstimate(
        eigenvalue=total_num / total_den,
        tags=tuple(t.tolist()),
        quadrature_points=len(pts),
        rayleigh_numerator=total_num,
        rayleigh_denominator=total_den,
        evaluate=evaluate,
    )
