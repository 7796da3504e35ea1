"""Body-fitted solves of the insulated boundary-value problems.

The computational domain is the meridian section between the outer boundary
and the inclusion (the full plane section for n = 2, which by symmetry of
the supported data reduces to the same half-domain).  A single structured
block covers it: the lateral index follows the outer boundary from the
contact point around to the far axis, the transverse index crosses from the
outer boundary to the inclusion.  In the gap the transverse coordinate is
the flattened one, i.e. nodes sit at fixed fractions of the local width.

Dimensions: n = 2 solves the plane problem; n >= 3 assumes rotationally
symmetric data and solves the meridian problem with the r^(n-2) measure,
which the assembly absorbs into the quadrature weight (this also handles
the symmetry axis without special stencils).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .errors import (
    DomainError,
    InputError,
    ResourceError,
    UnsupportedInputError,
)
from .geometry import (
    GapGeometry,
    MeridianClosure,
    Region,
    RegionKind,
    build_closure,
    validate,
)

__all__ = [
    "ResolutionPolicy",
    "BoundaryData",
    "CurvilinearGrid",
    "LinearSystem",
    "DiscreteField",
    "GradientMax",
    "EnergyReport",
    "build_grid",
    "build_annulus_grid",
    "solve_neumann",
    "solve_dirichlet",
    "regauge",
    "gradient",
    "max_gradient",
    "max_transverse_derivative",
    "oscillation",
    "energy",
    "write_field",
    "read_field",
]

FIELD_MAGIC = b"GAPF"
FIELD_VERSION = 1


@dataclass(frozen=True)
class ResolutionPolicy:
    """Grid sizing knobs.

    n_gap is the minimum transverse interval count across the gap; lateral
    spacing starts at contact_factor * sqrt(epsilon) at the contact point and
    coarsens geometrically outward.
    """

    n_gap: int = 16
    max_transverse_spacing: float = 0.02
    contact_factor: float = 0.25
    growth: float = 1.1
    max_lateral_spacing: float = 0.02
    max_unknowns: int = 4_000_000
    rtilde_fraction: float = 0.5
    rtol: float = 1e-10
    maxiter: int = 8000
    preconditioner: str = "amg"

    def coarsened(self) -> "ResolutionPolicy":
        """Halved resolution, for Richardson consistency guards."""
        return replace(
            self,
            n_gap=max(4, self.n_gap // 2),
            max_transverse_spacing=2.0 * self.max_transverse_spacing,
            contact_factor=2.0 * self.contact_factor,
            max_lateral_spacing=2.0 * self.max_lateral_spacing,
        )


def bump(t):
    """C^2 compactly supported polynomial bump, equal to 1 at t = 0."""
    u = np.clip(np.abs(np.asarray(t, dtype=float)), 0.0, 1.0)
    return (1.0 - u * u) ** 3


@dataclass(frozen=True)
class BoundaryData:
    """Outer-boundary datum.

    Shapes: 'bump' peaks at the contact point with value amplitude;
    'power_bump' is amplitude * r^alpha * bump(r/R), vanishing at contact;
    'cosine' is amplitude * cos(harmonic * theta) on annulus grids;
    'constant' is the constant amplitude (Dirichlet only for nonzero values).
    Neumann bump-type data are balanced by a smooth cap term on the far side
    of the outer boundary so the total flux vanishes.
    """

    kind: str = "neumann"
    shape: str = "bump"
    amplitude: float = 1.0
    alpha: float | None = None
    harmonic: int = 1

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet"):
            raise InputError(f"unknown boundary kind {self.kind!r}")
        if self.shape not in ("bump", "power_bump", "cosine", "constant"):
            raise InputError(f"unknown boundary shape {self.shape!r}")
        if self.shape == "power_bump" and self.alpha is None:
            raise InputError("power_bump needs alpha")

    @property
    def gap_value(self) -> float:
        """Datum value at the contact point (phi at 0')."""
        if self.shape == "bump":
            return self.amplitude
        if self.shape == "power_bump":
            return 0.0
        return self.amplitude

    @property
    def label(self) -> str:
        extra = f"-a{self.alpha:g}" if self.shape == "power_bump" else ""
        return f"{self.kind}-{self.shape}-{self.amplitude:g}{extra}"


class CurvilinearGrid:
    """Structured body-fitted grid; row j = 0 lies on the outer boundary."""

    def __init__(
        self,
        rr,
        zz,
        *,
        kind,
        weight_exponent,
        geom=None,
        closure=None,
        policy=None,
        station_r=None,
        is_graph=None,
        lateral_angle=None,
        rtilde=None,
    ):
        self.rr = rr
        self.zz = zz
        self.kind = kind
        self.weight_exponent = int(weight_exponent)
        self.geom = geom
        self.closure = closure
        self.policy = policy or ResolutionPolicy()
        self.station_r = station_r
        self.is_graph = is_graph
        self.lateral_angle = lateral_angle
        self.rtilde = rtilde
        self._stiffness = None

    @property
    def shape(self):
        return self.rr.shape

    @property
    def n_nodes(self):
        return self.rr.size

    def weight(self, r, z):
        if self.weight_exponent == 0:
            return np.ones_like(np.asarray(r, dtype=float))
        return np.asarray(r, dtype=float) ** self.weight_exponent

    def stiffness(self):
        if self._stiffness is None:
            K, vol, min_det = fem.assemble_stiffness(self.rr, self.zz, self.weight)
            if min_det <= 0.0:
                raise InputError(
                    f"grid chart folds (min Jacobian {min_det:.3e}); "
                    "the closure geometry is too distorted"
                )
            self._stiffness = (K, vol)
        return self._stiffness

    def outer_boundary_ids(self):
        ni, nj = self.shape
        return np.arange(ni) * nj

    def region_mask(self, region: Region):
        """Boolean node mask for a region centered at the contact point."""
        ni, nj = self.shape
        if self.kind != "gap":
            raise UnsupportedInputError(
                "named regions require a gap grid (annulus grids have no contact)"
            )
        if region.center != 0.0:
            raise UnsupportedInputError(
                "solver regions must be centered at the contact point"
            )
        if region.kind == RegionKind.GAP_PATCH:
            if region.radius > 2.0 * self.geom.patch_radius * (1.0 + 1e-12):
                raise DomainError("gap patch radius exceeds the trusted patch 2R")
            sel = self.is_graph & (
                self.station_r <= region.radius * (1.0 + 1e-12)
            )
            return np.repeat(sel[:, None], nj, axis=1)
        if region.kind == RegionKind.OUTER_COMPLEMENT:
            sel = self.is_graph & (
                self.station_r <= region.radius * (1.0 + 1e-12)
            )
            return ~np.repeat(sel[:, None], nj, axis=1)
        raise UnsupportedInputError(f"region kind {region.kind!r} not node-resolved")

    def gauge_mask(self):
        if self.kind == "gap":
            return self.region_mask(Region.outer_complement(self.rtilde / 2.0))
        return np.ones(self.shape, dtype=bool)


def _graph_stations(geom: GapGeometry, policy: ResolutionPolicy):
    eps = geom.epsilon
    edge = 2.0 * geom.patch_radius
    h = policy.contact_factor * math.sqrt(eps)
    radii = [0.0]
    r = 0.0
    while r < edge:
        r = min(r + h, edge)
        radii.append(r)
        h = min(h * policy.growth, policy.max_lateral_spacing)
    rtilde = policy.rtilde_fraction * geom.patch_radius
    forced = [
        0.25 * math.sqrt(eps),
        rtilde / 2.0,
        rtilde,
        geom.patch_radius,
        edge,
    ]
    allr = np.array(sorted(set(radii) | set(forced)))
    keep = np.concatenate([[True], np.diff(allr) > 1e-13 * max(edge, 1.0)])
    out = allr[keep]
    out[0] = 0.0
    out[-1] = edge
    return out, h


def _arc_fractions(closure: MeridianClosure, policy: ResolutionPolicy, h_start):
    length = closure.outer_arc_length()
    fracs = [0.0]
    a = 0.0
    h = h_start
    while a < length:
        a = min(a + h, length)
        fracs.append(a / length)
        h = min(h * policy.growth, policy.max_lateral_spacing)
    return np.array(fracs[1:])


def build_grid(geom: GapGeometry, policy: ResolutionPolicy | None = None) -> CurvilinearGrid:
    """Body-fitted grid over the full meridian domain of a gap geometry."""
    policy = policy or ResolutionPolicy()
    report = validate(geom)
    if not report.ok:
        names = ", ".join(c.name for c in report.failures())
        raise InputError(f"geometry fails validation: {names}")
    closure = build_closure(geom)

    graph_r, h_last = _graph_stations(geom, policy)
    fracs = _arc_fractions(closure, policy, h_last)

    th_out0 = closure.outer_junction_angle
    th_in0 = closure.inclusion_junction_angle
    th_out = th_out0 + fracs * (math.pi - th_out0)
    th_in = th_in0 + fracs * (math.pi - th_in0)

    bottoms_r = np.concatenate([graph_r, closure.outer_radius * np.sin(th_out)])
    bottoms_z = np.concatenate(
        [
            np.asarray(closure.outer_height(graph_r)),
            closure.outer_center_z - closure.outer_radius * np.cos(th_out),
        ]
    )
    tops_r = np.concatenate([graph_r, closure.inclusion_radius * np.sin(th_in)])
    tops_z = np.concatenate(
        [
            np.asarray(closure.inclusion_height(graph_r)),
            closure.inclusion_center_z - closure.inclusion_radius * np.cos(th_in),
        ]
    )

    n_stations = bottoms_r.size
    is_graph = np.zeros(n_stations, dtype=bool)
    is_graph[: graph_r.size] = True
    station_r = np.concatenate([graph_r, np.full(fracs.size, np.nan)])

    lengths = np.hypot(tops_r - bottoms_r, tops_z - bottoms_z)
    n_t = max(policy.n_gap, int(math.ceil(lengths.max() / policy.max_transverse_spacing)))
    total = n_stations * (n_t + 1)
    if total > policy.max_unknowns:
        raise ResourceError(
            f"grid would need {total} nodes, above the cap {policy.max_unknowns}",
            required_nodes=total,
        )

    t = np.linspace(0.0, 1.0, n_t + 1)
    rr = bottoms_r[:, None] + t[None, :] * (tops_r - bottoms_r)[:, None]
    zz = bottoms_z[:, None] + t[None, :] * (tops_z - bottoms_z)[:, None]

    return CurvilinearGrid(
        rr,
        zz,
        kind="gap",
        weight_exponent=geom.n - 2,
        geom=geom,
        closure=closure,
        policy=policy,
        station_r=station_r,
        is_graph=is_graph,
        rtilde=policy.rtilde_fraction * geom.patch_radius,
    )


def build_annulus_grid(
    r_inner: float,
    r_outer: float,
    policy: ResolutionPolicy | None = None,
    *,
    n: int = 2,
    n_theta: int | None = None,
    n_r: int | None = None,
) -> CurvilinearGrid:
    """Concentric half-annulus grid (insulated inner circle, data outside).

    Explicit n_theta / n_r override the policy, for mesh-halving studies
    where the policy floors would otherwise break exact halving.
    """
    policy = policy or ResolutionPolicy()
    if n != 2:
        raise UnsupportedInputError("annulus grids are the planar oracle (n = 2)")
    if not 0.0 < r_inner < r_outer:
        raise InputError("need 0 < r_inner < r_outer")
    if n_theta is None:
        n_theta = max(24, int(math.ceil(math.pi * r_outer / policy.max_lateral_spacing)))
    if n_r is None:
        n_r = max(
            policy.n_gap,
            int(math.ceil((r_outer - r_inner) / policy.max_transverse_spacing)),
        )
    total = (n_theta + 1) * (n_r + 1)
    if total > policy.max_unknowns:
        raise ResourceError(
            f"grid would need {total} nodes, above the cap {policy.max_unknowns}",
            required_nodes=total,
        )
    theta = np.linspace(0.0, math.pi, n_theta + 1)
    rho = np.linspace(r_outer, r_inner, n_r + 1)
    rr = np.cos(theta)[:, None] * rho[None, :]
    zz = np.sin(theta)[:, None] * rho[None, :]
    return CurvilinearGrid(
        rr,
        zz,
        kind="annulus",
        weight_exponent=0,
        policy=policy,
        lateral_angle=theta,
    )


@dataclass
class LinearSystem:
    """Assembled system of one solve, kept for energy identities."""

    matrix: object
    load: np.ndarray  # raw surface load (before null-space projection)
    datum: np.ndarray  # datum values at the outer-boundary nodes
    projected: bool
    stats: fem.SolveStats | None = None

    @property
    def compatibility_residual(self) -> float:
        s = float(np.sum(self.load))
        norm = float(np.linalg.norm(self.load))
        return abs(s) / norm if norm > 0 else 0.0


@dataclass
class GradientMax:
    value: float
    location: tuple
    index: tuple


@dataclass
class EnergyReport:
    value: float
    boundary_pairing: float | None = None


class DiscreteField:
    """Nodal values on a grid, with the Neumann gauge applied when tagged."""

    def __init__(self, values, grid, *, gauge="none", system=None, bc=None):
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != grid.shape:
            raise InputError("field shape does not match the grid")
        self.grid = grid
        self.gauge = gauge
        self.system = system
        self.bc = bc
        self._grad = None

    def with_values(self, values) -> "DiscreteField":
        return DiscreteField(values, self.grid, gauge="none", system=self.system, bc=self.bc)

    def gradient_components(self):
        if self._grad is None:
            us = _diff(self.values, 0)
            ut = _diff(self.values, 1)
            rs = _diff(self.grid.rr, 0)
            rt = _diff(self.grid.rr, 1)
            zs = _diff(self.grid.zz, 0)
            zt = _diff(self.grid.zz, 1)
            det = rs * zt - rt * zs
            gr = (zt * us - zs * ut) / det
            gz = (-rt * us + rs * ut) / det
            self._grad = (gr, gz)
        return self._grad


def _diff(a, axis):
    """Second-order logical-space derivative (one-sided at the edges)."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    sl = [slice(None)] * a.ndim

    def take(s):
        sl2 = list(sl)
        sl2[axis] = s
        return a[tuple(sl2)]

    def put(s, val):
        sl2 = list(sl)
        sl2[axis] = s
        out[tuple(sl2)] = val

    put(slice(1, -1), 0.5 * (take(slice(2, None)) - take(slice(None, -2))))
    put(0, -1.5 * take(0) + 2.0 * take(1) - 0.5 * take(2))
    put(-1, 1.5 * take(-1) - 2.0 * take(-2) + 0.5 * take(-3))
    return out


def _datum_values(grid: CurvilinearGrid, bc: BoundaryData):
    """Datum at the outer-boundary nodes, before any flux balancing."""
    ids = grid.outer_boundary_ids()
    r = grid.rr.reshape(-1)[ids]
    z = grid.zz.reshape(-1)[ids]
    if bc.shape == "constant":
        return np.full(ids.size, bc.amplitude)
    if bc.shape == "cosine":
        if grid.kind != "annulus":
            raise UnsupportedInputError("cosine data need an annulus grid")
        return bc.amplitude * np.cos(bc.harmonic * grid.lateral_angle)
    if grid.kind != "gap":
        raise UnsupportedInputError("bump data need a gap geometry grid")
    # the bump lives on the contact-side patch; the arc region (where the
    # radial coordinate shrinks again toward the far axis) stays zero
    radius = np.abs(r)
    base = grid.is_graph * bump(radius / grid.geom.patch_radius)
    if bc.shape == "power_bump":
        return bc.amplitude * radius**bc.alpha * base
    return bc.amplitude * base


def _cap_values(grid: CurvilinearGrid):
    """Smooth far-cap shape used to balance the Neumann datum to zero mean."""
    ids = grid.outer_boundary_ids()
    r = grid.rr.reshape(-1)[ids]
    z = grid.zz.reshape(-1)[ids]
    closure = grid.closure
    theta = np.arctan2(np.abs(r), closure.outer_center_z - z)
    return bump((math.pi - theta) / (math.pi / 3.0))


def solve_neumann(geom, bc: BoundaryData, grid: CurvilinearGrid) -> DiscreteField:
    """Solve the insulated Neumann problem and gauge-normalize the result."""
    if bc.kind != "neumann":
        raise InputError("solve_neumann needs Neumann boundary data")
    if grid.kind == "gap" and geom is not None and grid.geom is not geom:
        raise InputError("grid was built for a different geometry")
    if bc.shape == "constant" and bc.amplitude != 0.0:
        raise InputError("constant Neumann data violate the zero-mean requirement")

    K, volumes = grid.stiffness()
    ids = grid.outer_boundary_ids()
    datum = _datum_values(grid, bc)
    load = fem.boundary_load(grid.rr, grid.zz, ids, datum, grid.weight)

    if grid.kind == "gap" and bc.shape in ("bump", "power_bump"):
        cap_shape = _cap_values(grid)
        cap_load = fem.boundary_load(grid.rr, grid.zz, ids, cap_shape, grid.weight)
        total_cap = float(np.sum(cap_load))
        if total_cap == 0.0:
            raise InputError("flux-balancing cap has no support on this grid")
        c = -float(np.sum(load)) / total_cap
        datum = datum + c * cap_shape
        load = load + c * cap_load

    policy = grid.policy
    x, stats = fem.solve_spd(
        K,
        load,
        project_constants=True,
        rtol=policy.rtol,
        maxiter=policy.maxiter,
        preconditioner=policy.preconditioner,
    )
    system = LinearSystem(matrix=K, load=load, datum=datum, projected=True, stats=stats)
    field = DiscreteField(x.reshape(grid.shape), grid, system=system, bc=bc)
    return regauge(field)


def regauge(field: DiscreteField) -> DiscreteField:
    """Fix the additive constant: zero weighted mean over the gauge region.

    A second correction pass keeps the residual mean at the 1e-10 level even
    for fields carrying a large additive constant.
    """
    grid = field.grid
    _, volumes = grid.stiffness()
    mask = grid.gauge_mask()
    w = volumes.reshape(grid.shape)[mask]
    wsum = float(np.sum(w))
    values = field.values - float(np.dot(w, field.values[mask]) / wsum)
    mean2 = float(np.dot(w, values[mask]) / wsum)
    if mean2 != 0.0:
        values = values - mean2
    return DiscreteField(
        values, grid, gauge="outer-mean-zero", system=field.system, bc=field.bc
    )


def solve_dirichlet(geom, bc: BoundaryData, grid: CurvilinearGrid) -> DiscreteField:
    """Solve the Dirichlet problem with the insulated inclusion."""
    if bc.kind != "dirichlet":
        raise InputError("solve_dirichlet needs Dirichlet boundary data")
    if grid.kind == "gap" and geom is not None and grid.geom is not geom:
        raise InputError("grid was built for a different geometry")

    K, volumes = grid.stiffness()
    ids = grid.outer_boundary_ids()
    datum = _datum_values(grid, bc)

    n = grid.n_nodes
    fixed = np.zeros(n, dtype=bool)
    fixed[ids] = True
    free = ~fixed
    u = np.zeros(n)
    u[ids] = datum

    Kcsr = K.tocsr()
    rhs = -(Kcsr @ u)[free]
    Kff = Kcsr[free][:, free]
    policy = grid.policy
    x, stats = fem.solve_spd(
        Kff,
        rhs,
        project_constants=False,
        rtol=policy.rtol,
        maxiter=policy.maxiter,
        preconditioner=policy.preconditioner,
    )
    u[free] = x
    system = LinearSystem(
        matrix=K, load=np.zeros(n), datum=datum, projected=False, stats=stats
    )
    return DiscreteField(u.reshape(grid.shape), grid, gauge="none", system=system, bc=bc)


def gradient(field: DiscreteField, where=None):
    """Gradient at a point (nearest node) or its max over a region.

    With a Region (or None for the whole domain) returns GradientMax with the
    argmax node; ties resolve to the smallest lexicographic grid index.
    """
    gr, gz = field.gradient_components()
    if where is None or isinstance(where, Region):
        mag = np.hypot(gr, gz)
        if isinstance(where, Region):
            mask = field.grid.region_mask(where)
            if not mask.any():
                raise DomainError("region contains no grid nodes")
            mag = np.where(mask, mag, -np.inf)
        flat = int(np.argmax(mag))
        idx = np.unravel_index(flat, mag.shape)
        return GradientMax(
            value=float(mag[idx]),
            location=(float(field.grid.rr[idx]), float(field.grid.zz[idx])),
            index=(int(idx[0]), int(idx[1])),
        )
    r0, z0 = float(where[0]), float(where[1])
    d2 = np.square(field.grid.rr - r0) + np.square(field.grid.zz - z0)
    idx = np.unravel_index(int(np.argmin(d2)), d2.shape)
    scale = max(
        np.abs(field.grid.rr).max(), np.abs(field.grid.zz).max()
    )
    if math.sqrt(float(d2[idx])) > 0.05 * scale:
        raise DomainError(f"point ({r0:g}, {z0:g}) lies outside the grid")
    return np.array([gr[idx], gz[idx]])


def max_gradient(field: DiscreteField, region: Region | None = None) -> GradientMax:
    return gradient(field, region)


def max_transverse_derivative(field: DiscreteField) -> float:
    """Max over nodes of the x_n-component of the gradient."""
    _, gz = field.gradient_components()
    return float(np.abs(gz).max())


def oscillation(field: DiscreteField, region: Region | None = None) -> float:
    """sup minus inf of the nodal values over a region."""
    if region is None:
        vals = field.values
    else:
        mask = field.grid.region_mask(region)
        if not mask.any():
            raise DomainError("region contains no grid nodes")
        vals = field.values[mask]
    return float(vals.max() - vals.min())


def energy(field: DiscreteField) -> EnergyReport:
    """Weighted Dirichlet energy; Neumann solves also report the boundary pairing."""
    K, _ = field.grid.stiffness()
    u = field.values.reshape(-1)
    value = float(u @ (K @ u))
    pairing = None
    if field.system is not None and field.system.projected:
        pairing = float(u @ field.system.load)
    return EnergyReport(value=value, boundary_pairing=pairing)


def write_field(field: DiscreteField, path):
    """Binary dump for replay: header, coordinates, values (little endian)."""
    ni, nj = field.grid.shape
    n = (field.grid.weight_exponent + 2) if field.grid.kind == "gap" else 2
    if field.grid.geom is not None:
        n = field.grid.geom.n
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<IIII", FIELD_VERSION, n, ni, nj))
        fh.write(field.grid.rr.astype("<f8").tobytes())
        fh.write(field.grid.zz.astype("<f8").tobytes())
        fh.write(field.values.astype("<f8").tobytes())


def read_field(path):
    """Read a binary dump; returns (n, rr, zz, values)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FIELD_MAGIC:
            raise InputError(f"bad field file magic {magic!r}")
        version, n, ni, nj = struct.unpack("<IIII", fh.read(16))
        if version != FIELD_VERSION:
            raise InputError(f"unsupported field file version {version}")
        count = ni * nj
        data = np.frombuffer(fh.read(3 * count * 8), dtype="<f8")
    rr = data[:count].reshape(ni, nj).copy()
    zz = data[count : 2 * count].reshape(ni, nj).copy()
    values = data[2 * count :].reshape(ni, nj).copy()
    return n, rr, zz, values
