"""Gap-averaged potential and the dimension-reduced degenerate equation.

Averaging the potential across the gap produces a function of the base
variable alone.  It satisfies a divergence-form equation whose coefficient
is the local gap width (vanishing quadratically at the contact point as the
gap closes), driven by the wall datum and a flux term collecting what the
transverse variation of the full solution leaves behind.  This module
computes the average and the flux term from a discrete solve, solves the
degenerate model problem on its own radial grid, and carries the
closed-form log solution, the log comparison envelopes, and an oscillation
decay probe for the homogeneous problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import (
    DomainError,
    InputError,
    PreconditionError,
    UnsupportedInputError,
)
from .geometry import GapGeometry, Region, RegionKind
from .solver import DiscreteField

__all__ = [
    "ReducedField",
    "DegenerateProblem",
    "average_field",
    "transverse_flux",
    "weighted_sup",
    "solve_degenerate",
    "radial_oracle",
    "BarrierEnvelopes",
    "log_barrier_bounds",
    "sandwich_check",
    "HarnackReport",
    "harnack_decay",
    "radial_divergence_residual",
    "reduced_consistency",
]


@dataclass
class ReducedField:
    """Radial profile on the base: values over increasing radii."""

    radii: np.ndarray
    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.shape != self.values.shape:
            raise InputError("radii and values must align")

    def oscillation(self, region: Region | None = None) -> float:
        """sup - inf over a base disk (radial fields are even in the base)."""
        vals = self.values
        if region is not None:
            if region.kind != RegionKind.BASE_DISK:
                raise UnsupportedInputError("reduced fields support base disks only")
            lo = max(0.0, abs(region.center) - region.radius)
            hi = abs(region.center) + region.radius
            sel = (self.radii >= lo - 1e-12) & (self.radii <= hi * (1.0 + 1e-12))
            if not sel.any():
                raise DomainError("base disk contains no sample radii")
            vals = vals[sel]
        return float(vals.max() - vals.min())

    def interp(self, r):
        return np.interp(np.abs(np.asarray(r, dtype=float)), self.radii, self.values)


def _gap_station_data(field: DiscreteField, geom: GapGeometry):
    grid = field.grid
    if grid.kind != "gap":
        raise DomainError("gap averaging needs a gap grid")
    if geom is not None and grid.geom is not geom:
        raise InputError("field was solved on a different geometry")
    sel = grid.is_graph
    radii = grid.station_r[sel]
    vals = field.values[sel, :]
    return grid, radii, vals


def average_field(field: DiscreteField, geom: GapGeometry) -> ReducedField:
    """Transverse average of the field across the gap, per base radius."""
    grid, radii, vals = _gap_station_data(field, geom)
    n_t = vals.shape[1] - 1
    w = np.full(n_t + 1, 1.0 / n_t)
    w[0] *= 0.5
    w[-1] *= 0.5
    return ReducedField(radii=radii, values=vals @ w, epsilon=grid.geom.epsilon)


def transverse_flux(field: DiscreteField, geom: GapGeometry) -> ReducedField:
    """Flux term of the reduced equation, by transverse quadrature.

    The integrand weights the transverse derivative of the solution with the
    boundary slopes; it vanishes when either the transverse derivative or
    both slopes vanish.
    """
    grid, radii, _ = _gap_station_data(field, geom)
    closure = grid.closure
    _, gz = field.gradient_components()
    gz = gz[grid.is_graph, :]

    n_t = gz.shape[1] - 1
    t = np.linspace(0.0, 1.0, n_t + 1)
    w = np.full(n_t + 1, 1.0 / n_t)
    w[0] *= 0.5
    w[-1] *= 0.5

    g_slope = np.asarray(closure.outer_height_slope(radii))
    f_slope = np.asarray(closure.inclusion_height_slope(radii))
    width = np.asarray(closure.column_gap(radii))

    integrand = (t[None, :] - 1.0) * g_slope[:, None] - t[None, :] * f_slope[:, None]
    values = width * ((integrand * gz) @ w)
    return ReducedField(radii=radii, values=values, epsilon=grid.geom.epsilon)


def weighted_sup(field: ReducedField, power: float, radius: float | None = None) -> float:
    """sup of |value| / (epsilon + r^2)^power over the base sample."""
    sel = slice(None)
    if radius is not None:
        sel = field.radii <= radius * (1.0 + 1e-12)
    scale = (field.epsilon + np.square(field.radii[sel])) ** power
    return float(np.max(np.abs(field.values[sel]) / scale))


@dataclass(frozen=True)
class DegenerateProblem:
    """div[(eps I + A(x')) grad w] = div F + G on a base ball.

    The coefficient profile A is radial with A(r) comparable to r^2 (pass
    the gap-width profile of a geometry for the concrete reduced equation).
    F is the radial component of the flux field, G the source; sigma tags
    the weighted norms under which the data are finite.
    """

    epsilon: float
    base_dim: int
    radius: float
    coefficient: object = None  # callable r -> A(r); None means A = r^2
    flux: object = None  # callable r -> F(r); None means 0
    source: object = 0.0  # callable r -> G(r) or a constant
    boundary_value: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.radius <= 0.0:
            raise InputError("ball radius must be positive")
        if self.base_dim < 1:
            raise DomainError("base dimension must be at least 1")
        if self.sigma < 0.0:
            raise InputError("sigma must be nonnegative")

    def coefficient_at(self, r):
        r = np.asarray(r, dtype=float)
        if self.coefficient is None:
            a = np.square(r)
        else:
            a = np.asarray(self.coefficient(r), dtype=float)
        return self.epsilon + a

    def flux_at(self, r):
        if self.flux is None:
            return np.zeros_like(np.asarray(r, dtype=float))
        return np.asarray(self.flux(r), dtype=float)

    def source_at(self, r):
        if callable(self.source):
            return np.asarray(self.source(r), dtype=float)
        return np.full_like(np.asarray(r, dtype=float), float(self.source))

    def data_norms(self):
        """Discrete sups of the weighted data norms (flux, source)."""
        r = np.linspace(0.0, self.radius, 4001)
        eta = self.epsilon + np.square(r)
        nf = float(np.max(np.abs(self.flux_at(r)) / eta ** ((self.sigma + 1.0) / 2.0)))
        ng = float(np.max(np.abs(self.source_at(r)) / eta ** (self.sigma / 2.0)))
        return nf, ng


def _radial_grid(epsilon: float, radius: float, refine: int):
    """Graded radii: spacing max(sqrt(eps)/8, r/32) shrunk by the refine factor."""
    radii = [0.0]
    r = 0.0
    while r < radius:
        h = max(math.sqrt(epsilon) / 8.0, r / 32.0) / refine
        r = min(r + h, radius)
        radii.append(r)
    return np.array(radii)


def solve_degenerate(p: DegenerateProblem, *, refine: int = 96) -> ReducedField:
    """Flux-form solve of the degenerate problem on a graded radial grid.

    The scheme balances total fluxes across face midpoints, so the matrix is
    a symmetric M-matrix and the discrete solution inherits the comparison
    and maximum principles used by the barrier checks.
    """
    r = _radial_grid(p.epsilon, p.radius, refine)
    n = r.size
    m = p.base_dim
    faces = 0.5 * (r[:-1] + r[1:])
    h = np.diff(r)
    cond = p.coefficient_at(faces) * faces ** (m - 1) / h

    # control-volume source integrals via 3-point Simpson on [r-, r+]
    lo = np.concatenate([[0.0], faces])
    hi = np.concatenate([faces, [r[-1]]])
    mid = 0.5 * (lo + hi)

    def gdens(x):
        return p.source_at(x) * x ** (m - 1)

    src = (hi - lo) / 6.0 * (gdens(lo) + 4.0 * gdens(mid) + gdens(hi))

    fflux = p.flux_at(faces) * faces ** (m - 1)

    # flux balance, negated so the matrix is an M-matrix:
    # row 0:  cond0 (w0 - w1) = -(src0 + fflux0)        (zero flux at r = 0)
    # row k: -cond_{k-1} w_{k-1} + (cond_{k-1}+cond_k) w_k - cond_k w_{k+1}
    #         = -(src_k + fflux_k - fflux_{k-1})
    # row n-1: Dirichlet value on the ball boundary.
    main = np.zeros(n)
    lower = np.zeros(n - 1)
    upper = np.zeros(n - 1)
    rhs = np.zeros(n)

    main[0] = cond[0]
    upper[0] = -cond[0]
    rhs[0] = -(src[0] + fflux[0])

    main[1:-1] = cond[: n - 2] + cond[1 : n - 1]
    lower[: n - 2] = -cond[: n - 2]
    upper[1 : n - 1] = -cond[1 : n - 1]
    rhs[1:-1] = -(src[1:-1] + fflux[1:] - fflux[:-1])

    main[-1] = 1.0
    lower[-1] = 0.0
    rhs[-1] = p.boundary_value

    A = sp.diags([lower, main, upper], offsets=[-1, 0, 1], format="csc")
    w = spla.spsolve(A, rhs)
    return ReducedField(radii=r, values=w, epsilon=p.epsilon)


def radial_oracle(epsilon: float, base_dim: int, source: float, radius: float):
    """Closed-form solution for coefficient eps + r^2 and constant source.

    Integrating ((eps + r^2) r^(m-1) w')' = G0 r^(m-1) once gives the flux
    G0 r^m / m, and once more gives

        w(r) = (G0 / (2 m)) [ln(eps + r^2) - ln(eps + radius^2)],

    vanishing on the ball boundary.  Returns a callable.
    """
    if base_dim < 1:
        raise DomainError("base dimension must be at least 1")
    if radius <= 0.0 or epsilon <= 0.0:
        raise InputError("radius and epsilon must be positive")

    scale = source / (2.0 * base_dim)
    offset = math.log(epsilon + radius * radius)

    def w(r):
        r = np.asarray(r, dtype=float)
        return scale * (np.log(epsilon + np.square(r)) - offset)

    return w


@dataclass
class BarrierEnvelopes:
    """Log comparison envelopes for the constant-source reduced problem."""

    lower: object
    upper: object
    curvature_bound: float
    amplitude: float

    def evaluate(self, r):
        return np.asarray(self.lower(r)), np.asarray(self.upper(r))


def log_barrier_bounds(geom: GapGeometry, psi0: float, rho: float) -> BarrierEnvelopes:
    """Envelopes M psi0 ln(width) and psi0/M ln(width), matched at |x'| = rho.

    M bounds the base Laplacian of the width profile from both sides; it is
    computed exactly from the polynomial coefficients on a dense sample.
    For positive sources the steeper log is the lower envelope because the
    width shrinks toward contact.
    """
    if rho <= 0.0 or rho > 2.0 * geom.patch_radius:
        raise InputError("rho must lie in (0, 2R]")
    if psi0 == 0.0:
        zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
        return BarrierEnvelopes(lower=zero, upper=zero, curvature_bound=1.0, amplitude=0.0)

    m = geom.n - 1
    r = np.linspace(0.0, rho, 2001)
    lap = geom.diff.base_laplacian(r, m)
    lap_min = float(lap.min())
    lap_max = float(lap.max())
    if lap_min <= 0.0:
        raise InputError(
            "width profile is not uniformly convex on the ball; "
            f"base Laplacian reaches {lap_min:g}"
        )
    M = max(lap_max, 1.0 / lap_min)

    eps = geom.epsilon
    diff = geom.diff
    log_edge = math.log(eps + float(diff.value(rho)))

    def log_width(rr):
        rr = np.asarray(rr, dtype=float)
        return np.log(eps + diff.value(rr)) - log_edge

    hi_slope = psi0 / M
    lo_slope = psi0 * M
    if psi0 < 0.0:
        lo_slope, hi_slope = hi_slope, lo_slope

    return BarrierEnvelopes(
        lower=lambda rr: lo_slope * log_width(rr),
        upper=lambda rr: hi_slope * log_width(rr),
        curvature_bound=M,
        amplitude=psi0,
    )


def sandwich_check(field: ReducedField, envelopes: BarrierEnvelopes, *, slack=1e-6):
    """Verify lower - s <= w <= upper + s at every node; returns (ok, worst).

    The slack absorbs discretization error: for a pure-quadratic width the
    upper envelope coincides with the exact solution, so the discrete values
    straddle it at the solver-tolerance level.
    """
    lo, hi = envelopes.evaluate(field.radii)
    scale = max(1.0, float(np.max(np.abs(lo))), float(np.max(np.abs(hi))))
    s = slack * scale
    below = field.values - lo
    above = hi - field.values
    worst = float(min(below.min(), above.min()))
    return bool(worst >= -s), worst


@dataclass
class HarnackReport:
    beta: float
    per_harmonic: dict
    epsilon: float
    radius: float


def harnack_decay(
    p: DegenerateProblem,
    *,
    harmonics=(1, 2),
    n_angular: int = 96,
    refine: int = 4,
) -> HarnackReport:
    """Oscillation contraction of homogeneous solutions on the half ball.

    Solves div[(eps I + A) grad w] = 0 on the two-dimensional base disk with
    boundary data cos(k theta), then measures osc over the half-radius ball
    against the boundary oscillation.  The angular content makes this a
    genuine planar solve; symmetry of the data keeps a half disk sufficient.
    """
    if p.base_dim != 2:
        raise UnsupportedInputError("the decay probe runs on a 2-d base")
    if p.flux is not None or (not callable(p.source) and float(p.source) != 0.0):
        raise InputError("the decay probe needs the homogeneous problem")
    if p.radius <= math.sqrt(p.epsilon):
        raise PreconditionError(
            f"need radius > sqrt(epsilon); got {p.radius:g} <= {math.sqrt(p.epsilon):g}"
        )

    rho = p.radius
    inner = rho * 1e-3
    radii = [inner]
    r = inner
    while r < rho:
        h = max(math.sqrt(p.epsilon) / 8.0, r / 24.0) / refine
        r = min(r + h, rho)
        radii.append(r)
    radii = np.array(radii[::-1])  # transverse index runs outer -> inner
    theta = np.linspace(0.0, math.pi, n_angular + 1)

    rr = np.cos(theta)[:, None] * radii[None, :]
    zz = np.sin(theta)[:, None] * radii[None, :]

    def coeff(x, y):
        return p.coefficient_at(np.hypot(x, y))

    K, _, min_det = fem.assemble_stiffness(rr, zz, coeff)
    if min_det <= 0.0:
        raise InputError("decay-probe grid folds")

    ni, nj = rr.shape
    ids_outer = np.arange(ni) * nj
    node_r = np.hypot(rr, zz).reshape(-1)
    inner_mask = node_r <= rho / 2.0 * (1.0 + 1e-12)

    fixed = np.zeros(ni * nj, dtype=bool)
    fixed[ids_outer] = True
    free = ~fixed
    Kcsr = K.tocsr()
    Kff = Kcsr[free][:, free]

    per = {}
    for k in harmonics:
        datum = np.cos(k * theta)
        u = np.zeros(ni * nj)
        u[ids_outer] = datum
        rhs = -(Kcsr @ u)[free]
        x, _ = fem.solve_spd(Kff, rhs, rtol=1e-10, maxiter=8000)
        u[free] = x
        osc_boundary = float(datum.max() - datum.min())
        inner_vals = u[inner_mask]
        osc_inner = float(inner_vals.max() - inner_vals.min())
        per[k] = osc_inner / osc_boundary
    return HarnackReport(
        beta=max(per.values()), per_harmonic=per, epsilon=p.epsilon, radius=rho
    )


def radial_divergence_residual(radii, values, flux, source, width_at, base_dim):
    """Residual of div(width grad w) + div F = source on given radii.

    Flux-form evaluation on interior nodes; returns (residual, volumes).
    Reused by the manufactured-solution tests and the production
    consistency check.
    """
    r = np.asarray(radii, dtype=float)
    w = np.asarray(values, dtype=float)
    F = np.asarray(flux, dtype=float)
    g = np.asarray(source, dtype=float)
    m = base_dim

    faces = 0.5 * (r[:-1] + r[1:])
    h = np.diff(r)
    width_f = np.asarray(width_at(faces), dtype=float)
    slope = np.diff(w) / h
    F_f = 0.5 * (F[:-1] + F[1:])
    total = faces ** (m - 1) * (width_f * slope + F_f)

    vol = (faces[1:] ** m - faces[:-1] ** m) / m
    resid = np.diff(total) / vol - g[1:-1]
    return resid, vol


@dataclass
class ConsistencyReport:
    rel_residual: float
    residual_norm: float
    source_norm: float
    n_points: int


def reduced_consistency(field: DiscreteField, geom: GapGeometry) -> ConsistencyReport:
    """Residual of the gap average in the reduced equation.

    Assembles the average, the flux term, and the wall source from the
    discrete solve and measures how well they satisfy the reduced equation
    over the trusted patch, in the weighted L2 norm relative to the source.
    """
    grid = field.grid
    if grid.kind != "gap":
        raise DomainError("consistency check needs a gap solve")
    if field.bc is None or field.bc.kind != "neumann":
        raise InputError("consistency check needs a Neumann solve")

    ubar = average_field(field, geom)
    flux = transverse_flux(field, geom)
    closure = grid.closure

    sel = ubar.radii <= geom.patch_radius * (1.0 + 1e-12)
    r = ubar.radii[sel]
    vals = ubar.values[sel]
    F = flux.values[sel]

    from .solver import bump  # wall datum shapes live with the solver

    bc = field.bc
    base = bump(r / geom.patch_radius)
    if bc.shape == "power_bump":
        datum = bc.amplitude * r**bc.alpha * base
    elif bc.shape == "bump":
        datum = bc.amplitude * base
    else:
        datum = np.full_like(r, 0.0)
    g_slope = np.asarray(closure.outer_height_slope(r))
    psi = datum * np.sqrt(1.0 + np.square(g_slope))

    def width_at(x):
        return geom.epsilon + geom.diff.value(x)

    # column flux balance: lateral divergence of (width grad + flux term)
    # equals the negative of the outward wall flux density
    resid, vol = radial_divergence_residual(
        r, vals, F, -psi, width_at, geom.n - 1
    )
    rnorm = float(np.sqrt(np.sum(vol * np.square(resid))))
    snorm = float(np.sqrt(np.sum(vol * np.square(psi[1:-1]))))
    if snorm == 0.0:
        snorm = 1.0
    return ConsistencyReport(
        rel_residual=rnorm / snorm,
        residual_norm=rnorm,
        source_norm=snorm,
        n_points=int(r.size),
    )
