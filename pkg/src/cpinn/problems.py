"""Concrete Sturm-Liouville problem classes in reduced (dimensionless) units.

Each problem supplies the coefficient fields ``p``, ``q``, ``r`` of

    -div(p grad y) - q y = lambda r y

as functions of sample points and a tag vector, its domain box, how the
boundary condition is imposed, and the closed-form oracle for the lowest
eigenvalue.  For the magnetic problems the eigenvalue is the reduced
nucleation field ``h``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cpinn import oracles

__all__ = [
    "TagDomainError",
    "ProblemDefinition",
    "textbook_problem",
    "planar_defect_problem",
    "spherical_inclusion_problem",
    "coefficients_at",
    "get_problem",
    "PROBLEMS",
]

Array = NDArray[np.float64]
Coefficients = Callable[[Array, Array], tuple[Array, Array, Array]]

# slack for tags produced by floating-point grids at the box edges
_TAG_SLACK = 1e-12


class TagDomainError(ValueError):
    """A tag vector lies outside the problem's tag box."""


@dataclass(frozen=True)
class ProblemDefinition:
    name: str
    spatial_dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    ansatz_kind: str
    coefficients: Coefficients
    tag_names: tuple[str, ...] = ()
    tag_lower: tuple[float, ...] = ()
    tag_upper: tuple[float, ...] = ()
    window: Optional[str] = None
    eigenvalue_oracle: Optional[Callable[..., float]] = None
    eigenfunction_oracle: Optional[Callable[..., Array]] = field(default=None, repr=False)

    @property
    def tag_dim(self) -> int:
        return len(self.tag_names)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def check_tags(self, tags: ArrayLike) -> Array:
        t = np.atleast_1d(np.asarray(tags, dtype=np.float64))
        if t.shape != (self.tag_dim,):
            raise TagDomainError(f"{self.name} expects {self.tag_dim} tags, got {t.shape[0]}")
        lo = np.asarray(self.tag_lower) - _TAG_SLACK
        hi = np.asarray(self.tag_upper) + _TAG_SLACK
        if np.any(t < lo) or np.any(t > hi):
            raise TagDomainError(
                f"tags {t.tolist()} outside {self.name} tag box "
                f"{list(zip(self.tag_lower, self.tag_upper))}"
            )
        return t


def coefficients_at(problem: ProblemDefinition, points: ArrayLike, tags: ArrayLike = ()) -> tuple[Array, Array, Array]:
    """Evaluate ``(p, q, r)`` at ``points``.

    ``points`` is one point (a scalar in 1-D, a ``d``-vector otherwise), a
    1-D array of abscissae for 1-D problems, or an ``(n, d)`` array.  A single
    point yields scalars.
    """
    t = problem.check_tags(tags)
    x = np.asarray(points, dtype=np.float64)
    single = x.ndim == 0 or (x.ndim == 1 and problem.spatial_dim > 1)
    x = x.reshape(-1, problem.spatial_dim)
    p, q, r = (np.broadcast_to(c, (x.shape[0],)).astype(np.float64) for c in problem.coefficients(x, t))
    if single:
        return p[0], q[0], r[0]
    return p, q, r


# ----------------------------------------------------------------------------
# textbook: -y'' = lambda y on [0, 1], y(0) = y(1) = 0


def _textbook_coefficients(x: Array, t: Array) -> tuple[Array, Array, Array]:
    return np.ones(len(x)), np.zeros(len(x)), np.ones(len(x))


def _textbook_eigenfunction(x: Array, t: Array = ()) -> Array:
    return math.sqrt(2.0) * np.sin(math.pi * np.asarray(x)[..., 0])


def textbook_problem() -> ProblemDefinition:
    return ProblemDefinition(
        name="textbook",
        spatial_dim=1,
        lower=(0.0,),
        upper=(1.0,),
        ansatz_kind="windowed_dirichlet",
        window="quartic",
        coefficients=_textbook_coefficients,
        eigenvalue_oracle=lambda *_: math.pi**2,
        eigenfunction_oracle=_textbook_eigenfunction,
    )


# ----------------------------------------------------------------------------
# planar defect: p = 1/r0^2, q = -1 + dk / cosh^2(z), r = 1 on [-16, 16]


def _sech2(z: Array) -> Array:
    e = np.exp(-2.0 * np.abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def _planar_coefficients(x: Array, t: Array) -> tuple[Array, Array, Array]:
    r0, dk = t
    z = x[:, 0]
    n = len(z)
    return np.full(n, 1.0 / r0**2), -1.0 + dk * _sech2(z), np.ones(n)


def _planar_eigenfunction(x: Array, t: Array) -> Array:
    return oracles.planar_mode(t[0], t[1])(np.asarray(x)[..., 0])


def planar_defect_problem() -> ProblemDefinition:
    return ProblemDefinition(
        name="planar-defect",
        spatial_dim=1,
        lower=(-16.0,),
        upper=(16.0,),
        ansatz_kind="natural",
        coefficients=_planar_coefficients,
        tag_names=("r0", "dk"),
        tag_lower=(1.0, 0.0),
        tag_upper=(10.0, 1.0),
        eigenvalue_oracle=lambda r0, dk: oracles.nucleation_field_planar(r0, dk),
        eigenfunction_oracle=_planar_eigenfunction,
    )


# ----------------------------------------------------------------------------
# soft spherical inclusion of radius 1 in a hard matrix, box (-5, 5)^3


def _sphere_coefficients(x: Array, t: Array) -> tuple[Array, Array, Array]:
    r0, m, a = t
    inside = np.einsum("ij,ij->i", x, x) <= 1.0  # surface belongs to the inclusion
    p = np.where(inside, a, 1.0) / r0**2
    q = np.where(inside, 0.0, -1.0)
    r = np.where(inside, m, 1.0)
    return p, q, r


def _sphere_eigenfunction(x: Array, t: Array, form: str = "matching") -> Array:
    radius = np.linalg.norm(np.asarray(x), axis=-1)
    return oracles.sphere_radial_mode(radius, *t, form=form)


def spherical_inclusion_problem(form: str = "matching") -> ProblemDefinition:
    return ProblemDefinition(
        name="sphere",
        spatial_dim=3,
        lower=(-5.0, -5.0, -5.0),
        upper=(5.0, 5.0, 5.0),
        ansatz_kind="natural",
        coefficients=_sphere_coefficients,
        tag_names=("r0", "m", "a"),
        tag_lower=(1.0, 1.0, 1.0),
        tag_upper=(10.0, math.sqrt(2.0), 2.0),
        eigenvalue_oracle=lambda r0, m, a: oracles.nucleation_field_sphere(r0, m, a, form=form),
        eigenfunction_oracle=functools.partial(_sphere_eigenfunction, form=form),
    )


PROBLEMS: dict[str, Callable[[], ProblemDefinition]] = {
    "textbook": textbook_problem,
    "planar-defect": planar_defect_problem,
    "sphere": spherical_inclusion_problem,
}


def get_problem(name: str, form: str | None = None) -> ProblemDefinition:
    """Problem by name; ``form`` selects the sphere oracle variant."""
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    if name == "sphere" and form is not None:
        return spherical_inclusion_problem(form)
    return PROBLEMS[name]()
