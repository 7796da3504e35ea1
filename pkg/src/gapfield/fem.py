"""Conservative assembly and iterative solution on logically rectangular grids.

The discretization is a second-order conservative scheme in mapped
coordinates: bilinear elements on the logical rectangle with 2x2 Gauss
quadrature of the metric.  Fluxes balance element by element, so the
stiffness matrix is symmetric positive (semi)definite and the discrete
Green identity  u' K u = u' b  holds by construction for pure-flux data.

The solver is preconditioned conjugate gradients; for pure-Neumann systems
the null space of constants is removed by projecting the right-hand side
and every iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

__all__ = ["assemble_stiffness", "boundary_load", "SolveStats", "solve_spd"]

_GAUSS = 1.0 / math.sqrt(3.0)
_QPOINTS = [(-_GAUSS, -_GAUSS), (_GAUSS, -_GAUSS), (_GAUSS, _GAUSS), (-_GAUSS, _GAUSS)]


def _shape(xi, eta):
    vals = np.array(
        [
            0.25 * (1 - xi) * (1 - eta),
            0.25 * (1 + xi) * (1 - eta),
            0.25 * (1 + xi) * (1 + eta),
            0.25 * (1 - xi) * (1 + eta),
        ]
    )
    dxi = np.array(
        [-0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta)]
    )
    deta = np.array(
        [-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)]
    )
    return vals, dxi, deta


def assemble_stiffness(rr, zz, coeff):
    """Assemble the weighted stiffness matrix and lumped volume vector.

    rr, zz: node coordinates, shape (ni, nj); cells span consecutive indices.
    coeff: callable (r, z) -> weight evaluated at quadrature points (the
    axisymmetric measure, a degenerate coefficient, or 1).

    Returns (K, volumes, min_jacobian); volumes are the lumped weighted node
    volumes used for means and quadrature, min_jacobian diagnoses grid folds.
    """
    ni, nj = rr.shape
    ncell = (ni - 1) * (nj - 1)

    # Corner coordinates per cell, counterclockwise.
    xc = np.stack(
        [rr[:-1, :-1], rr[1:, :-1], rr[1:, 1:], rr[:-1, 1:]], axis=-1
    ).reshape(ncell, 4)
    yc = np.stack(
        [zz[:-1, :-1], zz[1:, :-1], zz[1:, 1:], zz[:-1, 1:]], axis=-1
    ).reshape(ncell, 4)

    kloc = np.zeros((ncell, 4, 4))
    vloc = np.zeros((ncell, 4))
    min_det = np.inf
    for xi, eta in _QPOINTS:
        vals, dxi, deta = _shape(xi, eta)
        x_xi = xc @ dxi
        x_eta = xc @ deta
        y_xi = yc @ dxi
        y_eta = yc @ deta
        det = x_xi * y_eta - x_eta * y_xi
        min_det = min(min_det, float(det.min()))
        xq = xc @ vals
        yq = yc @ vals
        w = coeff(xq, yq) * det
        # physical gradients of the four shape functions
        gx = (y_eta[:, None] * dxi[None, :] - y_xi[:, None] * deta[None, :]) / det[
            :, None
        ]
        gy = (-x_eta[:, None] * dxi[None, :] + x_xi[:, None] * deta[None, :]) / det[
            :, None
        ]
        kloc += w[:, None, None] * (
            gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
        )
        vloc += w[:, None] * vals[None, :]

    ii, jj = np.meshgrid(np.arange(ni - 1), np.arange(nj - 1), indexing="ij")
    base = (ii * nj + jj).reshape(ncell)
    corner = np.stack([base, base + nj, base + nj + 1, base + 1], axis=1)

    rows = np.repeat(corner, 4, axis=1).reshape(-1)
    cols = np.tile(corner, (1, 4)).reshape(-1)
    K = sp.coo_matrix(
        (kloc.reshape(-1), (rows, cols)), shape=(ni * nj, ni * nj)
    ).tocsr()

    volumes = np.zeros(ni * nj)
    np.add.at(volumes, corner.reshape(-1), vloc.reshape(-1))
    return K, volumes, min_det


def boundary_load(rr, zz, node_ids, values, coeff):
    """Surface load along a chain of boundary nodes.

    node_ids: flat indices of consecutive nodes tracing the boundary curve.
    values: datum value at each listed node (interpolated linearly along
    segments).  Returns the load vector entries accumulated into a full-size
    array.
    """
    n = rr.size
    out = np.zeros(n)
    r = rr.reshape(-1)[node_ids]
    z = zz.reshape(-1)[node_ids]
    v = np.asarray(values, dtype=float)
    gp = _GAUSS
    for s, wq in ((-gp, 1.0), (gp, 1.0)):
        na = 0.5 * (1 - s)
        nb = 0.5 * (1 + s)
        rq = na * r[:-1] + nb * r[1:]
        zq = na * z[:-1] + nb * z[1:]
        vq = na * v[:-1] + nb * v[1:]
        half_len = 0.5 * np.hypot(r[1:] - r[:-1], z[1:] - z[:-1])
        contrib = wq * half_len * coeff(rq, zq) * vq
        np.add.at(out, node_ids[:-1], contrib * na)
        np.add.at(out, node_ids[1:], contrib * nb)
    return out


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0
    rel_residual: float = 0.0
    preconditioner: str = "none"
    converged: bool = True
    history: list = field(default_factory=list)


def _make_preconditioner(K, singular, preference):
    n = K.shape[0]
    if preference == "lu":
        # complete factorization (the limit case of incomplete): needed when
        # extreme gap ratios push the conditioning beyond what AMG smooths
        try:
            Kp = K.tocsc()
            if singular:
                scale = float(np.mean(K.diagonal())) * 1e-12
                Kp = Kp + scale * sp.identity(n, format="csc")
            lu = spla.splu(Kp)
            return lu.solve, "lu"
        except Exception:
            pass
    if preference == "amg":
        try:
            import pyamg

            B = np.ones((n, 1)) if singular else None
            ml = pyamg.smoothed_aggregation_solver(K.tocsr(), B=B, max_coarse=64)
            M = ml.aspreconditioner(cycle="V")
            return (lambda x: M @ x), "amg"
        except Exception:
            pass
    if preference in ("amg", "ilu", "lu") and not singular:
        try:
            ilu = spla.spilu(K.tocsc(), drop_tol=1e-5, fill_factor=12)
            return ilu.solve, "ilu"
        except Exception:
            pass
    d = K.diagonal().copy()
    d[d <= 0] = 1.0
    inv = 1.0 / d
    return (lambda x: inv * x), "jacobi"


def solve_spd(
    K,
    b,
    *,
    project_constants=False,
    rtol=1e-10,
    maxiter=5000,
    preconditioner="amg",
):
    """Preconditioned CG for the symmetric positive (semi)definite system.

    With project_constants the constant null space is removed from the data
    and from every iterate, which is the gauge fix for pure-Neumann systems.
    Raises SolverError (carrying the residual history) on non-convergence.
    """
    b = np.asarray(b, dtype=float).copy()
    n = b.size

    def project(v):
        v -= v.sum() / n
        return v

    if project_constants:
        project(b)

    bnorm = float(np.linalg.norm(b))
    stats = SolveStats(preconditioner="none")
    if bnorm == 0.0:
        return np.zeros(n), stats

    apply_m, name = _make_preconditioner(K, project_constants, preconditioner)
    stats.preconditioner = name

    x = np.zeros(n)
    r = b.copy()
    z = apply_m(r)
    if project_constants:
        z = project(np.asarray(z, dtype=float).copy())
    p = z.copy()
    rz = float(r @ z)
    tol = rtol * bnorm

    for it in range(1, maxiter + 1):
        Kp = K @ p
        denom = float(p @ Kp)
        if denom <= 0.0:
            raise SolverError(
                f"CG breakdown at iteration {it} (curvature {denom:.3e})",
                history=stats.history,
            )
        alpha = rz / denom
        x += alpha * p
        r -= alpha * Kp
        if project_constants:
            project(r)
        rnorm = float(np.linalg.norm(r))
        stats.history.append(rnorm)
        if rnorm <= tol:
            stats.iterations = it
            stats.residual = rnorm
            stats.rel_residual = rnorm / bnorm
            return x, stats
        z = apply_m(r)
        if project_constants:
            z = project(np.asarray(z, dtype=float).copy())
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    stats.iterations = maxiter
    stats.residual = stats.history[-1] if stats.history else math.inf
    stats.rel_residual = stats.residual / bnorm
    stats.converged = False
    raise SolverError(
        f"CG did not converge in {maxiter} iterations "
        f"(relative residual {stats.rel_residual:.3e})",
        history=stats.history,
    )
