"""Gauss-Newton hyperbolic multilateration on range differences.

Unknown: 2D position p.  Measurements: ``rstd_m[i] = c * RSTD_i`` for each
neighbour i.  Residuals ``u_i(p) = rstd_m[i] - h_i(p)`` with
``h_i(p) = |p - p_i| - |p - p_0|``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularGeometryError, UnderdeterminedError
from .geometry import BsLayout, distance_diffs

_COND_LIMIT = 1e12
_MAX_HALVINGS = 10


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50
    step_tol: float = 1e-3
    initial_point: tuple[float, float] | str = "auto"
    damping_floor: float = 1e-9
    backtracking: bool = True
    # Iterates are projected onto the disk of this radius (meters) around the
    # anchors' centroid; None leaves the search unbounded.
    max_radius: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if not self.step_tol > 0:
            raise DomainError("step_tol must be > 0")
        if self.max_radius is not None and not self.max_radius > 0:
            raise DomainError("max_radius must be > 0 or None")


@dataclass(frozen=True)
class SolveResult:
    estimate: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool
    # residual norm at the start point and after every accepted step
    residual_history: tuple[float, ...] = ()


def _anchors(layout) -> np.ndarray:
    if isinstance(layout, BsLayout):
        return layout.positions
    return np.asarray(layout, dtype=float)


def residual(p, rstd_m, layout) -> np.ndarray:
    anchors = _anchors(layout)
    rstd_m = np.asarray(rstd_m, dtype=float)
    if rstd_m.shape[-1:] != (len(anchors) - 1,):
        raise DomainError(f"expected {len(anchors) - 1} range differences, got {rstd_m.shape}")
    return rstd_m - distance_diffs(p, anchors)


def jacobian(p, layout) -> np.ndarray:
    """Rows ``(p - p_i)/|p - p_i| - (p - p_0)/|p - p_0|`` of dh/dp."""
    anchors = _anchors(layout)
    p = np.asarray(p, dtype=float)
    rel = p - anchors
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist == 0.0):
        raise SingularGeometryError("Jacobian undefined: point coincides with a BS")
    unit = rel / dist[:, None]
    return unit[1:] - unit[0]


def _initial_point(layout, opts: SolverOptions) -> np.ndarray:
    if not isinstance(opts.initial_point, str):
        return np.asarray(opts.initial_point, dtype=float)
    if opts.initial_point != "auto":
        raise DomainError(f"unknown initial_point {opts.initial_point!r}")
    anchors = _anchors(layout)
    if isinstance(layout, BsLayout):
        scale = layout.d_cell
    else:
        scale = float(np.max(np.linalg.norm(anchors[1:] - anchors[0], axis=1)))
    # The centroid of a symmetric layout is the serving BS itself, where h is not differentiable.
    return anchors.mean(axis=0) + scale / 10.0


def _normal_step(H: np.ndarray, u: np.ndarray, damping_floor: float) -> np.ndarray:
    """Solve ``(H^T H + lam I) d = H^T u`` in closed form (2x2)."""
    a = H[:, 0] @ H[:, 0]
    b = H[:, 0] @ H[:, 1]
    d = H[:, 1] @ H[:, 1]
    trace = a + d
    det = a * d - b * b
    # eigenvalues of the symmetric 2x2 normal matrix
    disc = np.sqrt(max((a - d) ** 2 / 4.0 + b * b, 0.0))
    lam_max = trace / 2.0 + disc
    lam_min = trace / 2.0 - disc
    if lam_min <= 0.0 or lam_max / lam_min > _COND_LIMIT:
        lam = damping_floor * trace
        a += lam
        d += lam
        det = a * d - b * b
    if not (np.isfinite(det) and det > 0.0) or det <= 1e-300:
        raise SingularGeometryError("normal matrix singular even after damping")
    g0 = H[:, 0] @ u
    g1 = H[:, 1] @ u
    return np.array([(d * g0 - b * g1) / det, (a * g1 - b * g0) / det])


def _projector(anchors: np.ndarray, radius: float | None):
    if radius is None:
        return lambda q: q
    centre = anchors.mean(axis=0)

    def project(q):
        off = q - centre
        r = float(np.hypot(off[0], off[1]))
        return q if r <= radius else centre + off * (radius / r)

    return project


def solve(rstd_m, layout, opts: SolverOptions | None = None) -> SolveResult:
    """Estimate the UE position from range differences ``rstd_m`` (meters).

    Damped Gauss-Newton with a halving line search on the residual norm: the
    full step is tried first and halved (at most 10 times) while the residual
    grows.  Stops once the Gauss-Newton step is shorter than ``step_tol`` or
    when no step length reduces the residual.  With ``opts.max_radius`` set,
    each candidate is projected onto the search disk, and a candidate that
    barely moves (pinned on the boundary) also ends the iteration.
    """
    opts = opts or SolverOptions()
    anchors = _anchors(layout)
    if len(anchors) < 3:
        raise UnderdeterminedError("need at least 3 BSs (2 range differences) for a 2D fix")
    rstd_m = np.asarray(rstd_m, dtype=float)
    if rstd_m.shape != (len(anchors) - 1,):
        raise DomainError(f"expected {len(anchors) - 1} range differences, got {rstd_m.shape}")

    project = _projector(anchors, opts.max_radius)
    p = project(_initial_point(layout, opts))
    u = residual(p, rstd_m, anchors)
    cost = float(u @ u)
    history = [float(np.sqrt(cost))]
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        step = _normal_step(jacobian(p, anchors), u, opts.damping_floor)
        step_norm = float(np.hypot(step[0], step[1]))
        beta = 1.0
        p_new = project(p + step)
        u_new = residual(p_new, rstd_m, anchors)
        cost_new = float(u_new @ u_new)
        if opts.backtracking:
            halvings = 0
            while not cost_new <= cost and halvings < _MAX_HALVINGS:
                beta *= 0.5
                halvings += 1
                p_new = project(p + beta * step)
                u_new = residual(p_new, rstd_m, anchors)
                cost_new = float(u_new @ u_new)
            if not cost_new <= cost:
                # no descent along the Gauss-Newton direction: residual is stationary
                converged = step_norm < opts.step_tol
                break
        moved = float(np.hypot(*(p_new - p)))
        p, u, cost = p_new, u_new, cost_new
        history.append(float(np.sqrt(cost)))
        if step_norm < opts.step_tol or (opts.max_radius is not None and moved < opts.step_tol):
            converged = True
            break
    return SolveResult(p, it, float(np.sqrt(cost)), converged, tuple(history))


def solve_many(rstd_m, layout, opts: SolverOptions | None = None) -> np.ndarray:
    """Solve each row of ``rstd_m``; returns an (n, 2) array of estimates."""
    rstd_m = np.atleast_2d(np.asarray(rstd_m, dtype=float))
    return np.array([solve(r, layout, opts).estimate for r in rstd_m])
