"""Gap-flattening chart and the transformed operator coefficients.

Around a base point z' the slab between the two boundary graphs maps onto a
flat cylinder of half-height equal to the local gap width at z'.  The
transformed Laplacian has a symmetric coefficient matrix whose off-diagonal
row couples the transverse direction to the lateral ones through the
boundary slopes; its entries carry the scale structure that the uniform
estimates quantify, and this module evaluates them exactly from the
polynomial profiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError
from .geometry import GapGeometry, base_radius

__all__ = [
    "GapChart",
    "CoefficientMatrix",
    "CoefficientBounds",
    "flatten",
    "unflatten",
    "coefficients",
    "coefficient_bounds_check",
]

_REL_TOL = 1e-9


@dataclass(frozen=True)
class GapChart:
    """Chart flattening the gap slab over a base point z'."""

    geom: GapGeometry
    base_point: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.base_point, dtype=float))
        if z.size != self.geom.n - 1:
            raise InputError(
                f"base point must have {self.geom.n - 1} components, got {z.size}"
            )
        object.__setattr__(self, "base_point", z)

    @property
    def width(self) -> float:
        """Gap width at the base point."""
        return self.geom.gap_width(self.base_point)

    @property
    def scale(self) -> float:
        """Contact scale at the base point."""
        return self.geom.contact_scale(self.base_point)


def _split(point, n):
    p = np.asarray(point, dtype=float)
    if p.size != n:
        raise InputError(f"point must have {n} components, got {p.size}")
    return p[:-1], float(p[-1])


def flatten(chart: GapChart, x) -> np.ndarray:
    """Map a point of the gap slab to the flat cylinder over the base point."""
    geom = chart.geom
    x_prime, x_n = _split(x, geom.n)
    r = base_radius(x_prime)
    if r > 2.0 * geom.patch_radius * (1.0 + _REL_TOL):
        raise DomainError(f"|x'|={r:.6g} outside the patch")
    bottom = float(geom.g.value(r))
    width = geom.gap_width(x_prime)
    tol = _REL_TOL * max(width, geom.epsilon)
    if x_n < bottom - tol or x_n > bottom + width + tol:
        raise DomainError(
            f"x_n={x_n:.6g} outside the gap slab [{bottom:.6g}, {bottom + width:.6g}]"
        )
    y_n = 2.0 * chart.width * ((x_n - bottom) / width - 0.5)
    return np.concatenate([x_prime, [y_n]])


def unflatten(chart: GapChart, y) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    geom = chart.geom
    y_prime, y_n = _split(y, geom.n)
    half = chart.width
    if abs(y_n) > half * (1.0 + _REL_TOL):
        raise DomainError(f"|y_n|={abs(y_n):.6g} exceeds the cylinder half-height {half:.6g}")
    r = base_radius(y_prime)
    if r > 2.0 * geom.patch_radius * (1.0 + _REL_TOL):
        raise DomainError(f"|y'|={r:.6g} outside the patch")
    bottom = float(geom.g.value(r))
    width = geom.gap_width(y_prime)
    x_n = bottom + width * (y_n / (2.0 * half) + 0.5)
    return np.concatenate([y_prime, [x_n]])


@dataclass(frozen=True)
class CoefficientMatrix:
    """Transformed-operator coefficients at one cylinder point."""

    matrix: np.ndarray
    mix: np.ndarray  # entries e^1..e^n of the coupling vector

    @property
    def diagonal(self):
        return np.diag(self.matrix)


def _mix_vector(chart: GapChart, y_prime, y_n):
    geom = chart.geom
    width_here = geom.gap_width(y_prime)
    half = chart.width
    grad_f = geom.f.grad(y_prime)
    grad_g = geom.g.grad(y_prime)
    lateral = (
        grad_g * (y_n - half) / width_here - grad_f * (y_n + half) / width_here
    )
    e_n = 2.0 * half / width_here
    return np.concatenate([lateral, [e_n]]), width_here


def coefficients(chart: GapChart, y) -> CoefficientMatrix:
    """Symmetric positive definite coefficient matrix at a cylinder point."""
    geom = chart.geom
    y_prime, y_n = _split(y, geom.n)
    half = chart.width
    if abs(y_n) > half * (1.0 + _REL_TOL):
        raise DomainError(f"|y_n|={abs(y_n):.6g} exceeds the cylinder half-height")
    if base_radius(y_prime) > 2.0 * geom.patch_radius * (1.0 + _REL_TOL):
        raise DomainError("|y'| outside the patch")

    e, width_here = _mix_vector(chart, y_prime, y_n)
    n = geom.n
    a = np.eye(n)
    a[-1, :-1] = e[:-1]
    a[:-1, -1] = e[:-1]
    a[-1, -1] = float(np.dot(e, e))
    a *= width_here / (2.0 * half)
    return CoefficientMatrix(matrix=a, mix=e)


@dataclass(frozen=True)
class CoefficientBounds:
    """Sampled ellipticity and mixing statistics over a local cylinder."""

    lam: float  # smallest sampled diagonal entry
    Lam: float  # largest sampled diagonal entry
    mix_ratio: float  # max |a^{nj}| / sqrt(contact scale), j < n
    holder_mix: float  # sampled C^mu seminorm of a^{nj}, scaled per the growth law
    mu: float
    base_point_radius: float
    epsilon: float
    samples: int

    def to_dict(self):
        return {
            "lambda_hat": self.lam,
            "Lambda_hat": self.Lam,
            "mix_ratio": self.mix_ratio,
            "holder_mix": self.holder_mix,
            "mu": self.mu,
            "base_point_radius": self.base_point_radius,
            "epsilon": self.epsilon,
            "samples": self.samples,
        }


def _sample_cylinder(rng, center, radius, half_height, count, dim):
    """Uniform samples of the cylinder B'(center, radius) x (-h, h)."""
    if dim == 1:
        offsets = rng.uniform(-radius, radius, size=(count, 1))
    else:
        direction = rng.normal(size=(count, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / dim)
        offsets = direction * radii
    y_prime = center[None, :] + offsets
    y_n = rng.uniform(-half_height, half_height, size=count)
    return y_prime, y_n


def _mix_rows(geom: GapGeometry, half, y_prime, y_n):
    """Vectorized a^{nj} (j < n) over sample batches."""
    r2 = np.sum(np.square(y_prime), axis=1)
    width = geom.epsilon + geom.diff.value(np.sqrt(r2))
    # profile gradients: 2 F'(r^2) x
    def dcoef(profile):
        acc = np.zeros_like(r2)
        for k in reversed(range(len(profile.coeffs))):
            acc = acc * r2 + (k + 1) * profile.coeffs[k]
        return 2.0 * acc

    gf = dcoef(geom.f)[:, None] * y_prime
    gg = dcoef(geom.g)[:, None] * y_prime
    lateral = (
        gg * ((y_n - half) / width)[:, None] - gf * ((y_n + half) / width)[:, None]
    )
    return (width / (2.0 * half))[:, None] * lateral, width


def coefficient_bounds_check(
    geom: GapGeometry,
    z_prime,
    sample_count: int = 4096,
    *,
    seed: int = 0,
    mu: float = 0.5,
    pair_count: int = 100_000,
) -> CoefficientBounds:
    """Sample the coefficient matrix over the local cylinder at z'.

    Deterministic given the seed.  The Holder seminorm is a Monte Carlo max of
    difference quotients, a consistent lower estimator of the sup-based
    seminorm, which is all the uniform-in-epsilon trend checks need.
    """
    z = np.atleast_1d(np.asarray(z_prime, dtype=float))
    if z.size != geom.n - 1:
        raise InputError(f"base point must have {geom.n - 1} components")
    if base_radius(z) >= geom.patch_radius:
        raise DomainError("bounds check requires |z'| < R")

    chart = GapChart(geom, z)
    half = chart.width
    eta = chart.scale
    radius = 0.25 * np.sqrt(eta)
    rng = np.random.default_rng(seed)
    dim = geom.n - 1

    y_prime, y_n = _sample_cylinder(rng, z, radius, half, sample_count, dim)
    rows, width = _mix_rows(geom, half, y_prime, y_n)

    diag_lateral = width / (2.0 * half)
    e_n = 2.0 * half / width
    lateral_sq = np.sum(np.square(rows / diag_lateral[:, None]), axis=1)
    a_nn = diag_lateral * (lateral_sq + np.square(e_n))

    lam = float(min(diag_lateral.min(), a_nn.min()))
    Lam = float(max(diag_lateral.max(), a_nn.max()))
    mix_ratio = float(np.abs(rows).max() / np.sqrt(eta)) if rows.size else 0.0

    # Holder seminorm over random point pairs.
    ya, yan = _sample_cylinder(rng, z, radius, half, pair_count, dim)
    yb, ybn = _sample_cylinder(rng, z, radius, half, pair_count, dim)
    ra, _ = _mix_rows(geom, half, ya, yan)
    rb, _ = _mix_rows(geom, half, yb, ybn)
    dist = np.sqrt(
        np.sum(np.square(ya - yb), axis=1) + np.square(yan - ybn)
    )
    good = dist > 1e-14
    quot = np.abs(ra - rb).max(axis=1)[good] / dist[good] ** mu
    holder = float(quot.max()) if quot.size else 0.0
    holder_scaled = holder * eta ** ((2.0 * mu - 1.0) / 2.0)

    return CoefficientBounds(
        lam=lam,
        Lam=Lam,
        mix_ratio=mix_ratio,
        holder_mix=holder_scaled,
        mu=mu,
        base_point_radius=base_radius(z),
        epsilon=geom.epsilon,
        samples=sample_count,
    )
