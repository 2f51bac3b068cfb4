"""Ground-truth nucleation fields and eigenfunctions.

Closed forms for the planar defect, the transcendental equation for the
soft spherical inclusion (two variants of its cotangent argument), a Brent
root finder, and two independent numerical cross-checks: a shooting solver
for the 1-D equation and a radial finite-volume eigensolver for the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import odeint
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "BracketError",
    "ConvergenceError",
    "RootBracket",
    "brent_root",
    "nucleation_field_planar",
    "PlanarMode",
    "planar_mode",
    "eigenfunction_planar",
    "shooting_eigenvalue_1d",
    "SPHERE_FORMS",
    "sphere_residual",
    "nucleation_field_sphere",
    "sphere_radial_mode",
    "radial_fd_eigenvalue",
]

Array = NDArray[np.float64]

PLANAR_HALF_WIDTH = 16.0
SPHERE_FORMS = ("matching", "inverted-ratio")


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """Root iteration hit its iteration cap."""


# ----------------------------------------------------------------------------
# Brent's method


@dataclass(frozen=True)
class RootBracket:
    lower: float
    upper: float
    f_lower: float
    f_upper: float

    @classmethod
    def of(cls, f: Callable[[float], float], lower: float, upper: float) -> RootBracket:
        fl, fu = f(lower), f(upper)
        if fl * fu > 0:
            raise BracketError(f"no sign change on [{lower}, {upper}]: f={fl}, {fu}")
        return cls(lower, upper, fl, fu)


def brent_root(
    f: Callable[[float], float],
    bracket: RootBracket | tuple[float, float],
    tol: float = 1e-12,
    maxiter: int = 200,
) -> float:
    """Root of ``f`` inside ``bracket`` by Brent's method.

    Combines bisection with secant and inverse quadratic interpolation and
    stops once the bracket is narrower than ``tol`` (plus a few ulps).

    Raises:
        BracketError: ``f`` does not change sign over the bracket.
        ConvergenceError: no convergence within ``maxiter`` iterations.
    """
    if not isinstance(bracket, RootBracket):
        bracket = RootBracket.of(f, *bracket)
    a, b = bracket.lower, bracket.upper
    fa, fb = bracket.f_lower, bracket.f_upper
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]")
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if fb * fc > 0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        eps = 2.0 * np.finfo(float).eps * abs(b) + 0.5 * tol
        m = 0.5 * (c - b)
        if abs(m) <= eps or fb == 0.0:
            return b
        if abs(e) >= eps and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p, q = 2.0 * m * s, 1.0 - s
            else:
                q, r = fa / fc, fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(eps * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b += d if abs(d) > eps else math.copysign(eps, m)
        fb = f(b)
    raise ConvergenceError(f"Brent iteration did not converge in {maxiter} steps")


# ----------------------------------------------------------------------------
# planar defect


def nucleation_field_planar(r0: ArrayLike, dk: ArrayLike):
    """Reduced nucleation field of a sech^2 anisotropy defect."""
    r0 = np.asarray(r0, dtype=np.float64)
    dk = np.asarray(dk, dtype=np.float64)
    h = 1.0 - (-1.0 + np.sqrt(1.0 + 4.0 * r0**2 * dk)) ** 2 / (4.0 * r0**2)
    return float(h) if h.ndim == 0 else h


def _log_sech(z: Array) -> Array:
    a = np.abs(z)
    return math.log(2.0) - a - np.log1p(np.exp(-2.0 * a))


@dataclass(frozen=True)
class PlanarMode:
    """Lowest mode ``C * sech(z)**exponent`` normalized on ``[-16, 16]``."""

    h: float
    exponent: float
    norm: float
    localized: bool

    def __call__(self, z: ArrayLike) -> Array:
        return self.norm * np.exp(self.exponent * _log_sech(np.asarray(z, dtype=np.float64)))


def _gauss_legendre(f: Callable[[Array], Array], lo: float, hi: float, panels: int = 64, order: int = 32) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return float(np.dot(w, f(x)))


def planar_mode(r0: float, dk: float) -> PlanarMode:
    h = nucleation_field_planar(r0, dk)
    exponent = r0 * math.sqrt(max(1.0 - h, 0.0))
    unnormalized = PlanarMode(h, exponent, 1.0, dk > 0)
    mass = _gauss_legendre(lambda z: unnormalized(z) ** 2, -PLANAR_HALF_WIDTH, PLANAR_HALF_WIDTH)
    return PlanarMode(h, exponent, 1.0 / math.sqrt(mass), dk > 0)


def eigenfunction_planar(z: ArrayLike, r0: float, dk: float) -> tuple[Array, bool]:
    """Normalized analytic eigenfunction at ``z`` and whether the mode is localized.

    For ``dk == 0`` there is no bound state; the constant mode of the
    truncated domain is returned with ``localized=False``.
    """
    mode = planar_mode(r0, dk)
    return mode(z), mode.localized


def _shoot(hs: Array, r0: float, dk: float) -> Array:
    """Integrate from the far field z=-16 to z=0 for each h; returns phi(0), phi'(0)."""
    hs = np.atleast_1d(hs)
    kappa = r0 * np.sqrt(np.maximum(1.0 - hs, 0.0))
    y0 = np.concatenate([np.ones_like(hs), kappa])
    n = len(hs)

    def rhs(y: Array, z: float) -> Array:
        phi, dphi = y[:n], y[n:]
        return np.concatenate([dphi, r0**2 * (1.0 - hs - dk * _sech2(z)) * phi])

    sol = odeint(rhs, y0, [-PLANAR_HALF_WIDTH, 0.0], rtol=1e-12, atol=1e-30, mxstep=100000)
    return sol[-1, :n], sol[-1, n:]


def _sech2(z: float) -> float:
    e = math.exp(-2.0 * abs(z))
    return 4.0 * e / (1.0 + e) ** 2


def shooting_eigenvalue_1d(r0: float, dk: float, scan: int = 200) -> Optional[float]:
    """Lowest eigenvalue of the planar-defect equation by shooting.

    The solution decaying into the left far field is integrated to the
    centre; by symmetry the matching determinant against the mirrored
    right-hand solution is proportional to ``phi(0) * phi'(0)``.  The lowest
    sign change over the bound-state window ``1 - dk < h < 1`` is refined with
    Brent.  Returns ``None`` when no bound mode is found.
    """
    if dk <= 0:
        return None

    def determinant(hs: Array) -> Array:
        phi, dphi = _shoot(hs, r0, dk)
        return phi * dphi / (phi**2 + dphi**2)

    # scan uniformly in the decay rate so shallow modes near h = 1 are resolved
    kappa = np.linspace(r0 * math.sqrt(dk), 0.0, scan + 1)[:-1]
    hs = 1.0 - (kappa / r0) ** 2
    values = determinant(hs)
    flips = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    if len(flips) == 0:
        return None
    i = flips[0]
    return brent_root(lambda h: float(determinant(np.array([h]))[0]), (hs[i], hs[i + 1]), tol=1e-13)


# ----------------------------------------------------------------------------
# soft spherical inclusion


def _check_form(form: str) -> str:
    form = form.replace("_", "-")
    if form not in SPHERE_FORMS:
        raise ValueError(f"form must be one of {SPHERE_FORMS}, got {form!r}")
    return form


def _cot_ratio(m: float, a: float, form: str) -> float:
    # squared wavenumber per unit h inside the sphere, divided by r0^2
    return m / a if form == "matching" else a / m


def sphere_residual(h: float, r0: float, m: float, a: float, form: str = "matching") -> float:
    """Left-hand side of the matching condition, zero at the nucleation field."""
    form = _check_form(form)
    k = r0 * math.sqrt(_cot_ratio(m, a, form) * h)
    return r0 * math.sqrt(a * m * h) / math.tan(k) - a + 1.0 + r0 * math.sqrt(max(1.0 - h, 0.0))


def _check_sphere_tags(r0: float, m: float, a: float) -> None:
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if not (1.0 <= m <= math.sqrt(2.0) + 1e-12 and 1.0 <= a <= 2.0 + 1e-12):
        raise ValueError(f"material ratios outside 1 <= m <= sqrt(2), 1 <= a <= 2: m={m}, a={a}")


def nucleation_field_sphere(r0: float, m: float, a: float, form: str = "matching", scan: int = 200) -> float:
    """Smallest reduced nucleation field of a soft sphere, clipped to 1.

    ``form="matching"`` uses the cotangent argument ``r0*sqrt(m*h/a)`` from
    matching the radial solutions at the interface; ``"inverted-ratio"`` uses
    ``r0*sqrt(a*h/m)``.  Both coincide for ``a == m``.  Writing the condition
    in the cotangent argument ``k`` and scanning ``(0, min(pi, k(h=1)))``
    brackets the lowest branch only.  Without a bound state (small
    inclusions) ``h = 1``.
    """
    form = _check_form(form)
    _check_sphere_tags(r0, m, a)
    ratio = _cot_ratio(m, a, form)
    prefactor = a if form == "matching" else m  # r0*sqrt(a*m*h) == prefactor * k

    def h_of(k: float) -> float:
        return k * k / (ratio * r0 * r0)

    def g(k: float) -> float:
        h = min(h_of(k), 1.0)
        return prefactor * k / math.tan(k) - a + 1.0 + r0 * math.sqrt(1.0 - h)

    k_top = r0 * math.sqrt(ratio)
    if k_top < math.pi and g(k_top) > 0:
        return 1.0
    k_hi = min(k_top, math.pi * (1.0 - 1e-12))
    ks = np.linspace(0.0, k_hi, scan + 1)[1:]
    prev_k, prev_g = ks[0], g(ks[0])
    for k in ks[1:]:
        gk = g(k)
        if prev_g * gk <= 0:
            root = brent_root(g, RootBracket(prev_k, k, prev_g, gk), tol=1e-15)
            return min(h_of(root), 1.0)
        prev_k, prev_g = k, gk
    raise ConvergenceError("no sign change found while scanning for the lowest branch")


def sphere_radial_mode(radius: ArrayLike, r0: float, m: float, a: float, form: str = "matching") -> Array:
    """Unnormalized radial lowest mode, equal to 1 at the origin.

    Inside: ``sin(k r) / (k r)``; outside: continuous ``exp(-kappa (r-1)) / r``
    decay.  Normalize numerically over whatever domain is in use.
    """
    h = nucleation_field_sphere(r0, m, a, form=form)
    k = r0 * math.sqrt(_cot_ratio(m, a, _check_form(form)) * h)
    kappa = r0 * math.sqrt(max(1.0 - h, 0.0))
    r = np.asarray(radius, dtype=np.float64)
    inner = np.sinc(k * r / math.pi)
    outer = math.sin(k) / k * np.exp(-kappa * (r - 1.0)) / np.maximum(r, 1.0)
    return np.where(r <= 1.0, inner, outer)


def radial_fd_eigenvalue(r0: float, m: float, a: float, r_max: float = 16.0, nodes: int = 10_000) -> float:
    """Lowest eigenvalue of the radially symmetric sphere problem by finite volumes.

    Cell-centred discretization of ``-(a r^2 phi')' / r0^2 + k r^2 phi = h m r^2 phi``
    on ``(0, r_max]`` with ``phi(r_max) = 0``.  With ``r_max / nodes`` dividing
    1 the interface sits on a cell face, where the flux coefficient is the
    harmonic mean of the two exchange ratios.  Independent of the analytic
    matching condition; the result may exceed 1 when no bound state exists.
    """
    dr = r_max / nodes
    faces = np.arange(nodes + 1) * dr
    centres = 0.5 * (faces[:-1] + faces[1:])
    inside = centres <= 1.0
    a_cell = np.where(inside, a, 1.0)
    k_cell = np.where(inside, 0.0, 1.0)
    m_cell = np.where(inside, m, 1.0)
    a_face = 2.0 * a_cell[:-1] * a_cell[1:] / (a_cell[:-1] + a_cell[1:])
    flux = a_face * faces[1:-1] ** 2 / dr / r0**2  # interior faces
    volume = (faces[1:] ** 3 - faces[:-1] ** 3) / 3.0
    diag = k_cell * volume
    diag[:-1] += flux
    diag[1:] += flux
    diag[-1] += 2.0 * faces[-1] ** 2 / dr / r0**2  # Dirichlet at r_max, half-cell distance
    mass = m_cell * volume
    scale = 1.0 / np.sqrt(mass)
    d = diag * scale * scale
    e = -flux * scale[:-1] * scale[1:]
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0))
    return float(w[0])
