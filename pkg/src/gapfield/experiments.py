"""Gap-distance sweeps, scaling-law fits, and pass/fail certificates.

Each sweep point solves the boundary-value problem at one gap distance and
collects the blow-up metrics: the gradient maximum and its location, the
transverse-derivative maximum, oscillations over the fixed gap neighborhood
and over the shrinking core disk, the energy, and the envelope statistic
sup |grad u| sqrt(eps + |x'|^2).  A coarse companion solve provides a
Richardson consistency estimate; points whose gradient maximum moves by
more than 10% under coarsening are flagged and excluded from fits, since
blow-up quantities are the most discretization-sensitive outputs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SolverError, UnsupportedInputError
from .geometry import GapGeometry, GeometrySpec, Region
from .reduced import average_field
from .solver import (
    BoundaryData,
    ResolutionPolicy,
    build_grid,
    energy,
    max_gradient,
    max_transverse_derivative,
    oscillation,
    solve_dirichlet,
    solve_neumann,
)

__all__ = [
    "SweepRecord",
    "SweepResult",
    "FitResult",
    "CertificateResult",
    "sweep",
    "run_case",
    "fit_power_law",
    "fit_log_law",
    "lower_bound_certificate",
    "envelope_certificate",
    "boundedness_certificate",
    "improvement_certificate",
    "width_ratio_at_quarter_root",
]

RICHARDSON_TOLERANCE = 0.10

CSV_FIELDS = (
    "epsilon",
    "max_grad",
    "argmax_r",
    "argmax_z",
    "max_dn_u",
    "osc_gap",
    "osc_ubar_core",
    "energy",
    "envelope_stat",
    "flagged",
)


@dataclass
class SweepRecord:
    epsilon: float
    max_grad: float
    argmax_r: float
    argmax_z: float
    max_dn_u: float
    osc_gap: float
    osc_ubar_core: float
    energy: float
    envelope_stat: float
    flagged: bool
    geometry_id: str = ""
    bc_id: str = ""
    n_stations: int = 0
    n_transverse: int = 0
    iterations: int = 0
    rel_residual: float = 0.0
    boundary_pairing: float = float("nan")
    coarse_max_grad: float = float("nan")
    richardson: float = float("nan")

    def to_dict(self):
        out = {k: getattr(self, k) for k in CSV_FIELDS}
        out.update(
            geometry_id=self.geometry_id,
            bc_id=self.bc_id,
            n_stations=self.n_stations,
            n_transverse=self.n_transverse,
            iterations=self.iterations,
            rel_residual=self.rel_residual,
            boundary_pairing=self.boundary_pairing,
            coarse_max_grad=self.coarse_max_grad,
            richardson=self.richardson,
        )
        return out


@dataclass
class SweepResult:
    records: list
    failures: list  # (epsilon, message) pairs

    def __iter__(self):
        return iter(self.records)


def _solve_metrics(geom: GapGeometry, bc: BoundaryData, policy: ResolutionPolicy):
    grid = build_grid(geom, policy)
    if bc.kind == "neumann":
        fld = solve_neumann(geom, bc, grid)
    else:
        fld = solve_dirichlet(geom, bc, grid)

    rtilde = grid.rtilde
    gm = max_gradient(fld)
    dn = max_transverse_derivative(fld)
    osc_gap = oscillation(fld, Region.gap_patch(rtilde))
    ubar = average_field(fld, geom)
    core = Region.base_disk(0.25 * math.sqrt(geom.epsilon))
    osc_core = ubar.oscillation(core)
    en = energy(fld)

    gr, gz = fld.gradient_components()
    mask = grid.region_mask(Region.gap_patch(rtilde))
    eta = geom.epsilon + np.square(grid.rr)
    stat = float(np.max(np.hypot(gr, gz)[mask] * np.sqrt(eta[mask])))

    stats = fld.system.stats
    return {
        "max_grad": gm.value,
        "argmax_r": gm.location[0],
        "argmax_z": gm.location[1],
        "max_dn_u": dn,
        "osc_gap": osc_gap,
        "osc_ubar_core": osc_core,
        "energy": en.value,
        "envelope_stat": stat,
        "boundary_pairing": en.boundary_pairing
        if en.boundary_pairing is not None
        else float("nan"),
        "n_stations": grid.shape[0],
        "n_transverse": grid.shape[1],
        "iterations": stats.iterations if stats else 0,
        "rel_residual": stats.rel_residual if stats else 0.0,
    }, fld


def run_case(
    geom: GapGeometry,
    bc: BoundaryData,
    policy: ResolutionPolicy,
    *,
    guard: bool = True,
) -> SweepRecord:
    """One sweep point: fine solve plus the Richardson consistency guard."""
    fine, _ = _solve_metrics(geom, bc, policy)
    coarse_mg = float("nan")
    rich = float("nan")
    flagged = False
    if guard:
        coarse, _ = _solve_metrics(geom, bc, policy.coarsened())
        coarse_mg = coarse["max_grad"]
        denom = abs(fine["max_grad"])
        rich = abs(fine["max_grad"] - coarse_mg) / denom if denom > 0 else 0.0
        flagged = rich > RICHARDSON_TOLERANCE
    return SweepRecord(
        epsilon=geom.epsilon,
        flagged=flagged,
        coarse_max_grad=coarse_mg,
        richardson=rich,
        bc_id=bc.label,
        **fine,
    )


def default_workers() -> int:
    raw = os.environ.get("GAPFIELD_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    return max(1, cap) if cap else 1


def sweep(
    geometry: GeometrySpec,
    bc: BoundaryData,
    epsilons,
    policy: ResolutionPolicy | None = None,
    *,
    workers: int | None = None,
    guard: bool = True,
) -> SweepResult:
    """Run one record per gap distance; individual failures are collected."""
    policy = policy or ResolutionPolicy()
    eps = [float(e) for e in epsilons]
    if len(eps) < 4:
        raise InputError("sweep needs at least 4 gap distances")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputError("epsilons must be descending")
    cap = 0.25 * geometry.patch_radius**2
    if eps[0] > cap:
        raise InputError(
            f"largest epsilon {eps[0]:g} is not small next to the patch "
            f"(needs <= {cap:g})"
        )

    workers = workers if workers is not None else default_workers()
    workers = max(1, min(workers, len(eps)))

    def one(e):
        geom = geometry.at_epsilon(e)
        rec = run_case(geom, bc, policy, guard=guard)
        rec.geometry_id = geometry.label
        return rec

    records = []
    failures = []
    if workers == 1:
        for e in eps:
            try:
                records.append(one(e))
            except Exception as exc:  # noqa: BLE001 - per-point isolation
                failures.append((e, f"{type(exc).__name__}: {exc}"))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(one, e): e for e in eps}
            for fut, e in futures.items():
                try:
                    records.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    failures.append((e, f"{type(exc).__name__}: {exc}"))

    if not records:
        raise SolverError(
            "all sweep points failed: "
            + "; ".join(f"eps={e:g}: {msg}" for e, msg in failures)
        )
    records.sort(key=lambda r: -r.epsilon)
    failures.sort(key=lambda t: -t[0])
    return SweepResult(records=records, failures=failures)


@dataclass(frozen=True)
class FitResult:
    """Least-squares scaling law; parameter is the exponent or the slope."""

    model: str  # "power": metric ~ eps^(-parameter); "log": metric ~ parameter*ln(1/eps)
    parameter: float
    intercept: float
    stderr: float
    r_squared: float
    n_points: int
    metric: str = ""

    @property
    def exponent(self) -> float:
        return self.parameter

    @property
    def slope(self) -> float:
        return self.parameter

    def to_dict(self):
        return {
            "model": self.model,
            "parameter": self.parameter,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "metric": self.metric,
        }


def _select(records, metric):
    picker = metric if callable(metric) else (lambda r: getattr(r, metric))
    pairs = [(r.epsilon, picker(r)) for r in records if not r.flagged]
    name = metric if isinstance(metric, str) else getattr(metric, "__name__", "metric")
    return pairs, name


def _linfit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise InputError("fit abscissae are degenerate")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    dof = max(n - 2, 1)
    stderr = math.sqrt(ss_res / dof / sxx)
    return slope, intercept, stderr, max(0.0, min(1.0, r2))


def fit_power_law(records, metric) -> FitResult:
    """Fit metric ~ eps^(-p) by least squares in log-log coordinates."""
    pairs, name = _select(records, metric)
    if len(pairs) < 3:
        raise InputError("power-law fit needs at least 3 unflagged points")
    if any(v <= 0.0 for _, v in pairs):
        raise InputError(f"metric {name!r} must be positive for a power-law fit")
    x = np.log([e for e, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept, stderr, r2 = _linfit(x, y)
    return FitResult(
        model="power",
        parameter=-slope,
        intercept=intercept,
        stderr=stderr,
        r_squared=r2,
        n_points=len(pairs),
        metric=name,
    )


def fit_log_law(records, metric) -> FitResult:
    """Fit metric ~ slope * ln(1/eps) + intercept."""
    pairs, name = _select(records, metric)
    if len(pairs) < 3:
        raise InputError("log-law fit needs at least 3 unflagged points")
    x = np.log([1.0 / e for e, _ in pairs])
    y = np.array([v for _, v in pairs])
    slope, intercept, stderr, r2 = _linfit(x, y)
    return FitResult(
        model="log",
        parameter=slope,
        intercept=intercept,
        stderr=stderr,
        r_squared=r2,
        n_points=len(pairs),
        metric=name,
    )


@dataclass
class CertificateResult:
    name: str
    passed: bool
    margin: float
    threshold: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "threshold": self.threshold,
            "details": self.details,
        }


def width_ratio_at_quarter_root(geom: GapGeometry) -> float:
    """sup of gap width over the core disk, relative to the contact width."""
    r = 0.25 * math.sqrt(geom.epsilon)
    return geom.gap_width(r) / geom.gap_width(0.0)


def _variation(values):
    vals = [abs(v) for v in values]
    hi = max(vals)
    lo = min(vals)
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return math.inf
    return hi / lo


def lower_bound_certificate(
    records,
    phi0: float,
    *,
    osc_floor: float = 0.01,
    grad_floor: float = 0.01,
) -> CertificateResult:
    """Assertable form of the gradient lower bound.

    Requires the core oscillation of the gap average and the rescaled
    gradient maximum to stay above configured floors across the sweep.
    """
    if phi0 == 0.0:
        raise UnsupportedInputError(
            "lower-bound certificate needs a nonzero datum at the contact point"
        )
    osc_ratios = [r.osc_ubar_core / abs(phi0) for r in records]
    grad_ratios = [r.max_grad * math.sqrt(r.epsilon) / abs(phi0) for r in records]
    min_osc = min(osc_ratios)
    min_grad = min(grad_ratios)
    passed = min_osc >= osc_floor and min_grad >= grad_floor
    margin = min(min_osc / osc_floor, min_grad / grad_floor)
    return CertificateResult(
        name="lower-bound",
        passed=passed,
        margin=margin,
        threshold=max(osc_floor, grad_floor),
        details={
            "min_osc_ratio": min_osc,
            "min_grad_ratio": min_grad,
            "osc_floor": osc_floor,
            "grad_floor": grad_floor,
            "osc_ratios": osc_ratios,
            "grad_ratios": grad_ratios,
        },
    )


def envelope_certificate(records, *, factor: float = 2.0) -> CertificateResult:
    """Uniformity of the gradient envelope and of the transverse derivative."""
    var_env = _variation([r.envelope_stat for r in records])
    var_dn = _variation([r.max_dn_u for r in records])
    passed = var_env <= factor and var_dn <= factor
    worst = max(var_env, var_dn)
    margin = factor / worst if worst > 0 else math.inf
    return CertificateResult(
        name="envelope",
        passed=passed,
        margin=margin,
        threshold=factor,
        details={
            "envelope_variation": var_env,
            "dn_variation": var_dn,
            "constant_estimate": max(abs(r.envelope_stat) for r in records),
        },
    )


def boundedness_certificate(
    records, *, factor: float = 2.0, exponent_max: float = 0.2
) -> CertificateResult:
    """No blow-up across the sweep: bounded variation and a flat power fit."""
    var = _variation([r.max_grad for r in records])
    fit = fit_power_law(records, "max_grad")
    passed = var <= factor and fit.exponent < exponent_max
    margin = min(factor / var if var > 0 else math.inf, exponent_max - fit.exponent)
    return CertificateResult(
        name="boundedness",
        passed=passed,
        margin=margin,
        threshold=factor,
        details={
            "max_grad_variation": var,
            "fit": fit.to_dict(),
            "exponent_max": exponent_max,
        },
    )


def improvement_certificate(records, *, exponent_max: float = 0.4) -> CertificateResult:
    """Vanishing-datum improvement: damped exponent, statistically flat osc."""
    fit = fit_power_law(records, "max_grad")
    osc_fit = fit_log_law(records, "osc_gap")
    slope_ok = abs(osc_fit.slope) <= 2.0 * osc_fit.stderr
    passed = fit.exponent <= exponent_max and slope_ok
    margin = exponent_max - fit.exponent
    return CertificateResult(
        name="improvement",
        passed=passed,
        margin=margin,
        threshold=exponent_max,
        details={
            "fit": fit.to_dict(),
            "osc_fit": osc_fit.to_dict(),
            "osc_slope_within_2_stderr": slope_ok,
        },
    )
