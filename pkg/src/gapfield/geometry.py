"""Near-contact geometry.

The domain is a ball-like region whose boundary nearly touches a strictly
convex inclusion.  Near the contact point the two boundaries are graphs

    inclusion bottom:  x_n = epsilon + f(x')
    outer boundary:    x_n = g(x')

over the base plane, with f and g radial polynomials in |x'|^2.  Away from
the contact patch both surfaces are closed off by spheres joined through a
C^1 monotone blend, which fixes the global computational domain without
touching the profiles where the asymptotics happen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError

__all__ = [
    "RadialProfile",
    "OuterClosure",
    "GapGeometry",
    "GeometrySpec",
    "Region",
    "RegionKind",
    "ValidationCheck",
    "ValidationReport",
    "MeridianClosure",
    "gap_width",
    "contact_scale",
    "validate",
    "build_closure",
]


def base_radius(z_prime) -> float:
    """Euclidean length of a base point given as a scalar or a vector."""
    z = np.asarray(z_prime, dtype=float)
    if z.ndim == 0:
        return abs(float(z))
    return float(np.linalg.norm(z))


@dataclass(frozen=True)
class RadialProfile:
    """Radial polynomial sum_k c_k |x'|^(2k+2); the quadratic term is c_0."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if not coeffs:
            raise InputError("profile needs at least a quadratic coefficient")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def quadratic(self) -> float:
        return self.coeffs[0]

    def value(self, r):
        r2 = np.square(np.asarray(r, dtype=float))
        acc = np.zeros_like(r2)
        for c in reversed(self.coeffs):
            acc = r2 * (acc + c)
        return acc

    def slope(self, r):
        """d/dr of the profile along a ray."""
        r = np.asarray(r, dtype=float)
        r2 = np.square(r)
        acc = np.zeros_like(r2)
        for k in reversed(range(len(self.coeffs))):
            acc = acc * r2 + (k + 1) * self.coeffs[k]
        return 2.0 * r * acc

    def grad(self, x_prime):
        """Gradient vector at a base point x' (any base dimension)."""
        x = np.atleast_1d(np.asarray(x_prime, dtype=float))
        r2 = float(np.dot(x, x))
        acc = 0.0
        for k in reversed(range(len(self.coeffs))):
            acc = acc * r2 + (k + 1) * self.coeffs[k]
        return 2.0 * acc * x

    def base_laplacian(self, r, m: int):
        """Laplacian in R^m of the radial function, evaluated at radius r."""
        r2 = np.square(np.asarray(r, dtype=float))
        acc = np.zeros_like(r2)
        for k in reversed(range(len(self.coeffs))):
            p = 2 * (k + 1)
            acc = acc * r2 + self.coeffs[k] * p * (p + m - 2)
        return acc

    def minus(self, other: "RadialProfile") -> "RadialProfile":
        na, nb = len(self.coeffs), len(other.coeffs)
        n = max(na, nb)
        a = self.coeffs + (0.0,) * (n - na)
        b = other.coeffs + (0.0,) * (n - nb)
        return RadialProfile(tuple(x - y for x, y in zip(a, b)))


@dataclass(frozen=True)
class OuterClosure:
    """How the two boundary graphs are closed into a bounded domain.

    radius: radius of the sphere closing the outer boundary (the matrix).
    inclusion_radius: radius of the sphere closing the inclusion; when None
    it is chosen to match the slope of the inclusion profile at the edge of
    the trusted patch.
    """

    radius: float = 1.0
    inclusion_radius: float | None = None


@dataclass(frozen=True)
class GapGeometry:
    """The epsilon-gap configuration near the contact point.

    n is the ambient dimension; profiles are trusted on |x'| <= 2R where R
    is ``patch_radius``; kappa is the strict-convexity constant pinching
    f - g between kappa|x'|^2 and |x'|^2/kappa.
    """

    n: int
    epsilon: float
    f: RadialProfile
    g: RadialProfile
    patch_radius: float
    kappa: float = 1.0
    outer: OuterClosure = field(default_factory=OuterClosure)

    @property
    def diff(self) -> RadialProfile:
        return self.f.minus(self.g)

    def gap_width(self, z_prime) -> float:
        """epsilon + f(z') - g(z'); the local width of the gap."""
        r = base_radius(z_prime)
        if r > 2.0 * self.patch_radius * (1.0 + 1e-12):
            raise DomainError(
                f"base point at radius {r:.6g} is outside the trusted patch "
                f"|x'| <= {2 * self.patch_radius:.6g}"
            )
        return self.epsilon + float(self.diff.value(r))

    def contact_scale(self, z_prime) -> float:
        """epsilon + |z'|^2; comparable to the gap width by convexity."""
        r = base_radius(z_prime)
        if r > 2.0 * self.patch_radius * (1.0 + 1e-12):
            raise DomainError(
                f"base point at radius {r:.6g} is outside the trusted patch "
                f"|x'| <= {2 * self.patch_radius:.6g}"
            )
        return self.epsilon + r * r


def gap_width(geom: GapGeometry, z_prime) -> float:
    return geom.gap_width(z_prime)


def contact_scale(geom: GapGeometry, z_prime) -> float:
    return geom.contact_scale(z_prime)


@dataclass(frozen=True)
class GeometrySpec:
    """Geometry family with the gap distance left free, for sweeps."""

    n: int = 3
    f_coeffs: tuple = (1.0,)
    g_coeffs: tuple = (0.0,)
    patch_radius: float = 0.25
    kappa: float = 1.0
    outer: OuterClosure = field(default_factory=OuterClosure)

    def at_epsilon(self, epsilon: float) -> GapGeometry:
        return GapGeometry(
            n=self.n,
            epsilon=float(epsilon),
            f=RadialProfile(self.f_coeffs),
            g=RadialProfile(self.g_coeffs),
            patch_radius=self.patch_radius,
            kappa=self.kappa,
            outer=self.outer,
        )

    @property
    def label(self) -> str:
        fs = ",".join(f"{c:g}" for c in self.f_coeffs)
        gs = ",".join(f"{c:g}" for c in self.g_coeffs)
        return f"n{self.n}-f[{fs}]-g[{gs}]-R{self.patch_radius:g}-k{self.kappa:g}"


class RegionKind:
    GAP_PATCH = "gap_patch"
    BASE_DISK = "base_disk"
    FLAT_CYLINDER = "flat_cylinder"
    OUTER_COMPLEMENT = "outer_complement"


@dataclass(frozen=True)
class Region:
    """A named subregion used by oscillation and gradient queries."""

    kind: str
    radius: float
    center: float = 0.0

    def __post_init__(self):
        if self.radius <= 0.0:
            raise InputError(f"region radius must be positive, got {self.radius}")

    @staticmethod
    def gap_patch(radius: float, center: float = 0.0) -> "Region":
        return Region(RegionKind.GAP_PATCH, radius, center)

    @staticmethod
    def base_disk(radius: float, center: float = 0.0) -> "Region":
        return Region(RegionKind.BASE_DISK, radius, center)

    @staticmethod
    def outer_complement(radius: float) -> "Region":
        return Region(RegionKind.OUTER_COMPLEMENT, radius)


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    ok: bool
    worst_radius: float | None = None
    margin: float | None = None
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.ok]

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {
                    "name": c.name,
                    "ok": c.ok,
                    "worst_radius": c.worst_radius,
                    "margin": c.margin,
                    "message": c.message,
                }
                for c in self.checks
            ],
        }


VALIDATION_SAMPLES = 10_000


def validate(geom: GapGeometry) -> ValidationReport:
    """Check the geometric hypotheses on a dense radial sample.

    Profiles are radial polynomials, so sampling radii in [0, 2R] covers the
    full patch; 1e4 samples make violations of polynomial constraints
    non-pathological to find.
    """
    checks = []

    checks.append(
        ValidationCheck(
            "dimension", geom.n >= 2, message=f"ambient dimension n={geom.n}"
        )
    )
    checks.append(
        ValidationCheck(
            "gap-positive", geom.epsilon > 0.0, message=f"epsilon={geom.epsilon:g}"
        )
    )
    checks.append(
        ValidationCheck(
            "patch-radius", geom.patch_radius > 0.0, message=f"R={geom.patch_radius:g}"
        )
    )
    checks.append(
        ValidationCheck(
            "kappa-range",
            0.0 < geom.kappa <= 1.0,
            message=f"kappa={geom.kappa:g} must lie in (0, 1]",
        )
    )

    # f(0') = g(0') = 0 and vanishing gradients are structural for these
    # profiles; evaluate anyway so the report stands on its own.
    origin_ok = (
        abs(float(geom.f.value(0.0))) == 0.0
        and abs(float(geom.g.value(0.0))) == 0.0
        and abs(float(geom.f.slope(0.0))) == 0.0
        and abs(float(geom.g.slope(0.0))) == 0.0
    )
    checks.append(ValidationCheck("contact-at-origin", origin_ok, worst_radius=0.0))

    diff = geom.diff
    convex_ok = diff.quadratic > 0.0
    checks.append(
        ValidationCheck(
            "strict-convexity",
            convex_ok,
            worst_radius=0.0,
            margin=diff.quadratic,
            message="second derivative of f-g at the contact point must be positive",
        )
    )

    r = np.linspace(0.0, 2.0 * geom.patch_radius, VALIDATION_SAMPLES)
    d = diff.value(r)

    worst = int(np.argmin(d))
    checks.append(
        ValidationCheck(
            "ordering",
            bool(d[worst] >= 0.0),
            worst_radius=float(r[worst]),
            margin=float(d[worst]),
            message="f >= g on the patch",
        )
    )

    r2 = np.square(r)
    lower = d - geom.kappa * r2
    upper = r2 / geom.kappa - d
    wl = int(np.argmin(lower))
    wu = int(np.argmin(upper))
    checks.append(
        ValidationCheck(
            "pinch-lower",
            bool(lower[wl] >= -1e-14),
            worst_radius=float(r[wl]),
            margin=float(lower[wl]),
            message="kappa |x'|^2 <= f-g",
        )
    )
    checks.append(
        ValidationCheck(
            "pinch-upper",
            bool(upper[wu] >= -1e-14),
            worst_radius=float(r[wu]),
            margin=float(upper[wu]),
            message="f-g <= |x'|^2 / kappa",
        )
    )

    return ValidationReport(tuple(checks))


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _smoothstep_slope(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)


@dataclass(frozen=True)
class MeridianClosure:
    """Closed meridian curves for the full computational domain.

    The outer boundary and the inclusion are graphs over r in [0, 2R]
    (blended onto their closing spheres on [R, 2R]) and spherical arcs from
    r = 2R around to the symmetry axis.  Angles on the arcs are measured
    from the downward axis of each sphere.
    """

    geom: GapGeometry
    outer_center_z: float
    outer_radius: float
    outer_junction_angle: float
    inclusion_center_z: float
    inclusion_radius: float
    inclusion_junction_angle: float

    # -- graph region ------------------------------------------------------
    def _blend(self, r):
        R = self.geom.patch_radius
        return _smoothstep((np.asarray(r, dtype=float) - R) / R)

    def _blend_slope(self, r):
        R = self.geom.patch_radius
        return _smoothstep_slope((np.asarray(r, dtype=float) - R) / R) / R

    def _outer_sphere_z(self, r):
        return self.outer_center_z - np.sqrt(self.outer_radius**2 - np.square(r))

    def _inclusion_sphere_z(self, r):
        return self.inclusion_center_z - np.sqrt(
            self.inclusion_radius**2 - np.square(r)
        )

    def outer_height(self, r):
        """Blended outer-boundary graph on [0, 2R]."""
        w = self._blend(r)
        return (1.0 - w) * self.geom.g.value(r) + w * self._outer_sphere_z(r)

    def outer_height_slope(self, r):
        w = self._blend(r)
        dw = self._blend_slope(r)
        sph = self._outer_sphere_z(r)
        dsph = np.asarray(r, dtype=float) / np.sqrt(
            self.outer_radius**2 - np.square(r)
        )
        return (
            (1.0 - w) * self.geom.g.slope(r)
            + w * dsph
            + dw * (sph - self.geom.g.value(r))
        )

    def inclusion_height(self, r):
        """Blended inclusion-bottom graph (includes the epsilon offset)."""
        w = self._blend(r)
        nominal = self.geom.epsilon + self.geom.f.value(r)
        return (1.0 - w) * nominal + w * self._inclusion_sphere_z(r)

    def inclusion_height_slope(self, r):
        w = self._blend(r)
        dw = self._blend_slope(r)
        sph = self._inclusion_sphere_z(r)
        dsph = np.asarray(r, dtype=float) / np.sqrt(
            self.inclusion_radius**2 - np.square(r)
        )
        nominal = self.geom.epsilon + self.geom.f.value(r)
        return (1.0 - w) * self.geom.f.slope(r) + w * dsph + dw * (sph - nominal)

    def column_gap(self, r):
        return self.inclusion_height(r) - self.outer_height(r)

    # -- arc region ----------------------------------------------------------
    def outer_arc_point(self, theta):
        return (
            self.outer_radius * np.sin(theta),
            self.outer_center_z - self.outer_radius * np.cos(theta),
        )

    def inclusion_arc_point(self, theta):
        return (
            self.inclusion_radius * np.sin(theta),
            self.inclusion_center_z - self.inclusion_radius * np.cos(theta),
        )

    def outer_arc_length(self) -> float:
        return self.outer_radius * (math.pi - self.outer_junction_angle)

    def outer_angle_of(self, r, z) -> float:
        """Polar angle from the downward axis of the outer closing sphere."""
        return math.atan2(float(r), self.outer_center_z - float(z))

    @property
    def top_z(self) -> float:
        return self.outer_center_z + self.outer_radius

    @property
    def inclusion_top_z(self) -> float:
        return self.inclusion_center_z + self.inclusion_radius


def build_closure(geom: GapGeometry) -> MeridianClosure:
    """Close the two boundary graphs with spheres and sanity-check containment."""
    R = geom.patch_radius
    r_edge = 2.0 * R
    R_out = geom.outer.radius
    if R_out <= r_edge:
        raise InputError(
            f"outer closure radius {R_out:g} must exceed the patch extent {r_edge:g}"
        )

    g_edge = float(geom.g.value(r_edge))
    outer_center_z = g_edge + math.sqrt(R_out**2 - r_edge**2)
    outer_junction = math.asin(r_edge / R_out)

    rho_in = geom.outer.inclusion_radius
    if rho_in is None:
        t = float(geom.f.slope(r_edge))
        if t <= 0.0:
            raise InputError(
                "cannot slope-match an inclusion sphere: f must be increasing at "
                "the patch edge; supply outer.inclusion_radius explicitly"
            )
        rho_in = r_edge * math.sqrt(1.0 + 1.0 / (t * t))
    if rho_in <= r_edge:
        raise InputError(
            f"inclusion closure radius {rho_in:g} must exceed the patch extent "
            f"{r_edge:g}"
        )

    f_edge = geom.epsilon + float(geom.f.value(r_edge))
    inclusion_center_z = f_edge + math.sqrt(rho_in**2 - r_edge**2)
    inclusion_junction = math.asin(r_edge / rho_in)

    closure = MeridianClosure(
        geom=geom,
        outer_center_z=outer_center_z,
        outer_radius=R_out,
        outer_junction_angle=outer_junction,
        inclusion_center_z=inclusion_center_z,
        inclusion_radius=rho_in,
        inclusion_junction_angle=inclusion_junction,
    )

    margin = 0.01 * R_out
    if closure.inclusion_top_z + margin >= closure.top_z:
        raise InputError(
            "inclusion closure does not fit inside the outer closure "
            f"(top {closure.inclusion_top_z:g} vs {closure.top_z:g}); "
            "reduce outer.inclusion_radius or the patch radius"
        )
    zs = np.linspace(
        inclusion_center_z - rho_in + 1e-9, closure.inclusion_top_z - 1e-9, 200
    )
    half_in = np.sqrt(np.maximum(rho_in**2 - np.square(zs - inclusion_center_z), 0.0))
    half_out = np.sqrt(
        np.maximum(R_out**2 - np.square(zs - outer_center_z), 0.0)
    )
    if np.any(half_in + margin >= half_out):
        raise InputError(
            "inclusion closure is not laterally contained in the outer closure; "
            "adjust closure radii"
        )

    rs = np.linspace(0.0, r_edge, 400)
    gaps = closure.column_gap(rs)
    if np.any(gaps <= 0.0):
        k = int(np.argmin(gaps))
        raise InputError(
            f"blended boundaries overlap at r={rs[k]:.4g} (gap {gaps[k]:.3g}); "
            "the closure spheres pinch the gap region"
        )

    return closure
