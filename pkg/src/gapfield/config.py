"""Flat key-value experiment configuration.

The format is line-oriented ``key = value`` with dotted section prefixes
(``geometry.kappa = 1.0``), full-line or trailing ``#`` comments, and
comma-separated numeric lists.  Unknown keys are errors; parsing either
returns a fully validated plan or raises with a list of precise
(key, line, reason) records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InputError
from .geometry import GeometrySpec, OuterClosure, validate
from .solver import BoundaryData, ResolutionPolicy

__all__ = ["CertificateThresholds", "ExperimentPlan", "parse_config", "emit_config"]

DEFAULT_EPSILONS = (
    1e-2,
    5.623413251903491e-3,
    3.1622776601683794e-3,
    1.7782794100389228e-3,
    1e-3,
    5.623413251903491e-4,
    3.1622776601683794e-4,
    1.7782794100389228e-4,
    1e-4,
)


@dataclass(frozen=True)
class CertificateThresholds:
    osc_floor: float = 0.01
    grad_floor: float = 0.01
    envelope_factor: float = 2.0
    dirichlet_exponent_max: float = 0.2
    improved_exponent_max: float = 0.4


@dataclass(frozen=True)
class ExperimentPlan:
    geometry: GeometrySpec
    boundary: BoundaryData
    epsilons: tuple
    policy: ResolutionPolicy
    thresholds: CertificateThresholds
    output_dir: str = "out"
    seed: int = 1234


def _parse_float(s):
    v = float(s)
    if math.isnan(v) or math.isinf(v):
        raise ValueError("must be finite")
    return v


def _parse_float_list(s):
    parts = [p.strip() for p in s.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(_parse_float(p) for p in parts)


def _parse_int(s):
    return int(s, 10)


def _parse_str(s):
    return s


def _parse_float_or_auto(s):
    if s.lower() == "auto":
        return None
    return _parse_float(s)


# key -> (parser, default, required)
_SCHEMA = {
    "n": (_parse_int, 3, False),
    "seed": (_parse_int, 1234, False),
    "epsilons": (_parse_float_list, DEFAULT_EPSILONS, False),
    "geometry.f": (_parse_float_list, None, True),
    "geometry.g": (_parse_float_list, (0.0,), False),
    "geometry.patch_radius": (_parse_float, 0.25, False),
    "geometry.kappa": (_parse_float, 1.0, False),
    "geometry.outer_radius": (_parse_float, 1.0, False),
    "geometry.inclusion_radius": (_parse_float_or_auto, None, False),
    "boundary.kind": (_parse_str, None, True),
    "boundary.shape": (_parse_str, "bump", False),
    "boundary.amplitude": (_parse_float, 1.0, False),
    "boundary.alpha": (_parse_float, 0.8, False),
    "boundary.harmonic": (_parse_int, 1, False),
    "resolution.n_gap": (_parse_int, 16, False),
    "resolution.max_transverse_spacing": (_parse_float, 0.02, False),
    "resolution.contact_factor": (_parse_float, 0.25, False),
    "resolution.growth": (_parse_float, 1.1, False),
    "resolution.max_lateral_spacing": (_parse_float, 0.02, False),
    "resolution.max_unknowns": (_parse_int, 4_000_000, False),
    "resolution.rtilde_fraction": (_parse_float, 0.5, False),
    "resolution.rtol": (_parse_float, 1e-10, False),
    "resolution.maxiter": (_parse_int, 8000, False),
    "resolution.preconditioner": (_parse_str, "amg", False),
    "output.directory": (_parse_str, "out", False),
    "certificates.osc_floor": (_parse_float, 0.01, False),
    "certificates.grad_floor": (_parse_float, 0.01, False),
    "certificates.envelope_factor": (_parse_float, 2.0, False),
    "certificates.dirichlet_exponent_max": (_parse_float, 0.2, False),
    "certificates.improved_exponent_max": (_parse_float, 0.4, False),
}


def parse_config(text: str) -> ExperimentPlan:
    """Parse and validate a flat key-value document into a plan."""
    errors = []
    raw = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(("", lineno, "expected 'key = value'"))
            continue
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            errors.append((key, lineno, "unknown key"))
            continue
        if key in raw:
            errors.append((key, lineno, "duplicate key"))
            continue
        parser = _SCHEMA[key][0]
        try:
            raw[key] = parser(value)
            lines[key] = lineno
        except ValueError as exc:
            errors.append((key, lineno, f"bad value {value!r}: {exc}"))

    values = {}
    for key, (_, default, required) in _SCHEMA.items():
        if key in raw:
            values[key] = raw[key]
        elif required:
            errors.append((key, 0, "missing required key"))
        else:
            values[key] = default

    if errors:
        raise InputError(_format_errors(errors), details=errors)

    def err(key, reason):
        errors.append((key, lines.get(key, 0), reason))

    n = values["n"]
    if n < 2:
        err("n", "ambient dimension must be at least 2")

    eps = values["epsilons"]
    if any(e <= 0 for e in eps):
        err("epsilons", "epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        err("epsilons", "epsilons must be descending")

    kind = values["boundary.kind"]
    if kind not in ("neumann", "dirichlet"):
        err("boundary.kind", "must be 'neumann' or 'dirichlet'")
    shape = values["boundary.shape"]
    if shape not in ("bump", "power_bump", "cosine", "constant"):
        err("boundary.shape", "must be bump, power_bump, cosine, or constant")
    if shape == "power_bump":
        lo = 1.0 - 2.0 / n
        alpha = values["boundary.alpha"]
        if not (lo < alpha < 1.0):
            err(
                "boundary.alpha",
                f"alpha must lie in (1 - 2/n, 1) = ({lo:g}, 1) for n = {n}",
            )
    if shape == "cosine" and n != 2:
        err("boundary.shape", "cosine data require n = 2 (annulus oracle)")

    for key in (
        "certificates.osc_floor",
        "certificates.grad_floor",
        "certificates.envelope_factor",
        "certificates.dirichlet_exponent_max",
        "certificates.improved_exponent_max",
    ):
        if values[key] <= 0:
            err(key, "threshold must be positive")

    for key in (
        "geometry.patch_radius",
        "geometry.outer_radius",
        "resolution.max_transverse_spacing",
        "resolution.contact_factor",
        "resolution.growth",
        "resolution.max_lateral_spacing",
        "resolution.rtol",
    ):
        if values[key] <= 0:
            err(key, "must be positive")
    if values["resolution.n_gap"] < 4:
        err("resolution.n_gap", "needs at least 4 transverse intervals")

    if errors:
        raise InputError(_format_errors(errors), details=errors)

    geometry = GeometrySpec(
        n=n,
        f_coeffs=values["geometry.f"],
        g_coeffs=values["geometry.g"],
        patch_radius=values["geometry.patch_radius"],
        kappa=values["geometry.kappa"],
        outer=OuterClosure(
            radius=values["geometry.outer_radius"],
            inclusion_radius=values["geometry.inclusion_radius"],
        ),
    )

    # the geometry must validate at the extreme gap distances of the sweep
    for e in (eps[0], eps[-1]):
        report = validate(geometry.at_epsilon(e))
        if not report.ok:
            names = ", ".join(c.name for c in report.failures())
            err("geometry.f", f"geometry fails validation at epsilon={e:g}: {names}")
    if errors:
        raise InputError(_format_errors(errors), details=errors)

    boundary = BoundaryData(
        kind=kind,
        shape=shape,
        amplitude=values["boundary.amplitude"],
        alpha=values["boundary.alpha"] if shape == "power_bump" else None,
        harmonic=values["boundary.harmonic"],
    )

    policy = ResolutionPolicy(
        n_gap=values["resolution.n_gap"],
        max_transverse_spacing=values["resolution.max_transverse_spacing"],
        contact_factor=values["resolution.contact_factor"],
        growth=values["resolution.growth"],
        max_lateral_spacing=values["resolution.max_lateral_spacing"],
        max_unknowns=values["resolution.max_unknowns"],
        rtilde_fraction=values["resolution.rtilde_fraction"],
        rtol=values["resolution.rtol"],
        maxiter=values["resolution.maxiter"],
        preconditioner=values["resolution.preconditioner"],
    )

    thresholds = CertificateThresholds(
        osc_floor=values["certificates.osc_floor"],
        grad_floor=values["certificates.grad_floor"],
        envelope_factor=values["certificates.envelope_factor"],
        dirichlet_exponent_max=values["certificates.dirichlet_exponent_max"],
        improved_exponent_max=values["certificates.improved_exponent_max"],
    )

    return ExperimentPlan(
        geometry=geometry,
        boundary=boundary,
        epsilons=tuple(eps),
        policy=policy,
        thresholds=thresholds,
        output_dir=values["output.directory"],
        seed=values["seed"],
    )


def _format_errors(errors):
    lines = [f"{len(errors)} config error(s):"]
    for key, lineno, reason in errors:
        where = f"line {lineno}" if lineno else "missing"
        label = key or "<line>"
        lines.append(f"  {label} ({where}): {reason}")
    return "\n".join(lines)


def _fmt(v):
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(plan: ExperimentPlan) -> str:
    """Canonical re-emission; parse(emit(plan)) reproduces the plan."""
    g = plan.geometry
    b = plan.boundary
    p = plan.policy
    t = plan.thresholds
    pairs = [
        ("n", g.n),
        ("seed", plan.seed),
        ("epsilons", tuple(plan.epsilons)),
        ("geometry.f", tuple(g.f_coeffs)),
        ("geometry.g", tuple(g.g_coeffs)),
        ("geometry.patch_radius", g.patch_radius),
        ("geometry.kappa", g.kappa),
        ("geometry.outer_radius", g.outer.radius),
        ("geometry.inclusion_radius", g.outer.inclusion_radius),
        ("boundary.kind", b.kind),
        ("boundary.shape", b.shape),
        ("boundary.amplitude", b.amplitude),
        ("boundary.alpha", b.alpha if b.alpha is not None else 0.8),
        ("boundary.harmonic", b.harmonic),
        ("resolution.n_gap", p.n_gap),
        ("resolution.max_transverse_spacing", p.max_transverse_spacing),
        ("resolution.contact_factor", p.contact_factor),
        ("resolution.growth", p.growth),
        ("resolution.max_lateral_spacing", p.max_lateral_spacing),
        ("resolution.max_unknowns", p.max_unknowns),
        ("resolution.rtilde_fraction", p.rtilde_fraction),
        ("resolution.rtol", p.rtol),
        ("resolution.maxiter", p.maxiter),
        ("resolution.preconditioner", p.preconditioner),
        ("output.directory", plan.output_dir),
        ("certificates.osc_floor", t.osc_floor),
        ("certificates.grad_floor", t.grad_floor),
        ("certificates.envelope_factor", t.envelope_factor),
        ("certificates.dirichlet_exponent_max", t.dirichlet_exponent_max),
        ("certificates.improved_exponent_max", t.improved_exponent_max),
    ]
    return "\n".join(f"{k} = {_fmt(v)}" for k, v in pairs) + "\n"
