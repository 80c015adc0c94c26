"""Constraint maps onto the level set.

Three maps take a point near the surface back onto it: the gradient-flow
limit (``theta``), its skew-perturbed variant (``theta_skew``), and the
nearest-point projection (``pi_nearest``, identity mobility only).
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import FlowDiverged, MaxIters, NonUnique, NotSkewSymmetric

DIVERGENCE_PATIENCE = 10
SKEW_TOL = 1e-12


@dataclass(frozen=True)
class FlowConfig:
    """Inner-solver settings shared by the constraint maps.

    The ODE step starts at ``dt0`` and is multiplied by ``growth`` each
    iteration; integration stops once |xi| < ``eps_tol``. ``gd_step`` and
    ``gd_tol`` drive the gradient descent used by the nearest-point map.
    """

    dt0: float = 0.1
    growth: float = 1.05
    eps_tol: float = 1e-7
    max_iters: int = 10_000
    gd_step: float = 0.1
    gd_tol: float = 1e-7

    def __post_init__(self):
        if self.dt0 <= 0 or self.eps_tol <= 0 or self.max_iters < 1:
            raise ValueError("dt0, eps_tol must be positive and max_iters >= 1")
        if self.growth < 1.0:
            raise ValueError("growth must be >= 1")

    def with_tolerance(self, eps_tol=None, gd_tol=None):
        kw = {}
        if eps_tol is not None:
            kw["eps_tol"] = eps_tol
        if gd_tol is not None:
            kw["gd_tol"] = gd_tol
        return replace(self, **kw)


@dataclass(frozen=True)
class FlowResult:
    point: np.ndarray
    iters: int
    final_xi_norm: float
    trace: Optional[List[Tuple[float, float]]] = None  # (time, |xi|^2 / 2)


def _rk3_step(v, y, dt):
    # Bogacki-Shampine third-order stages (non-adaptive, no embedded pair).
    k1 = v(y)
    k2 = v(y + 0.5 * dt * k1)
    k3 = v(y + 0.75 * dt * k2)
    return y + dt * (2.0 * k1 + 3.0 * k2 + 4.0 * k3) / 9.0


def _integrate_to_levelset(model, velocity, x, cfg, record_trace):
    y = np.array(x, dtype=float)
    xi_norm = model.xi_norm(y)
    trace = [(0.0, 0.5 * xi_norm**2)] if record_trace else None
    if xi_norm < cfg.eps_tol:
        return FlowResult(point=y, iters=0, final_xi_norm=xi_norm, trace=trace)
    dt = cfg.dt0
    t = 0.0
    increases = 0
    for it in range(1, cfg.max_iters + 1):
        y = _rk3_step(velocity, y, dt)
        t += dt
        new_norm = model.xi_norm(y)
        if record_trace:
            trace.append((t, 0.5 * new_norm**2))
        if new_norm < cfg.eps_tol:
            return FlowResult(point=y, iters=it, final_xi_norm=new_norm, trace=trace)
        if new_norm > xi_norm or not np.isfinite(new_norm):
            increases += 1
            if increases >= DIVERGENCE_PATIENCE or not np.isfinite(new_norm):
                raise FlowDiverged(
                    f"|xi| stopped decreasing after {it} iterations (|xi| = {new_norm:.3e})"
                )
        else:
            increases = 0
        xi_norm = new_norm
        dt *= cfg.growth
    raise FlowDiverged(f"stop criterion not met within {cfg.max_iters} iterations")


def theta(model, field, x, cfg=None, record_trace=False):
    """Limit of the descent flow y' = -a grad(|xi|^2 / 2), mapping x onto the surface."""
    cfg = cfg or FlowConfig()

    def velocity(y):
        G = np.asarray(model.grad_xi(y), dtype=float).reshape(model.d, model.k)
        gF = G @ np.atleast_1d(model.xi(y))
        return -(np.asarray(field.a(y), dtype=float) @ gF)

    return _integrate_to_levelset(model, velocity, x, cfg, record_trace)


def theta_skew(model, field, x, A, cfg=None, record_trace=False):
    """Limit of y' = -(a - A) grad(|xi|^2 / 2) for a skew-symmetric A."""
    cfg = cfg or FlowConfig()
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(A + A.T)) > SKEW_TOL:
        raise NotSkewSymmetric("A + A^T != 0")

    def velocity(y):
        G = np.asarray(model.grad_xi(y), dtype=float).reshape(model.d, model.k)
        gF = G @ np.atleast_1d(model.xi(y))
        return -((np.asarray(field.a(y), dtype=float) - A) @ gF)

    return _integrate_to_levelset(model, velocity, x, cfg, record_trace)


def _pi_chart_descent(model, x, cfg):
    th0 = float(np.atleast_1d(model.chart.angle(x))[0])
    return _descent_from(model, x, th0, cfg)


def _pi_kkt_newton(model, x, cfg, theta_result):
    from . import findiff  # local import to avoid cycle at module load

    d, k = model.d, model.k
    y = np.array(theta_result.point, dtype=float)
    G = np.asarray(model.grad_xi(y), dtype=float).reshape(d, k)
    lam = np.linalg.lstsq(G, y - x, rcond=None)[0]

    def residual(y, lam):
        G = np.asarray(model.grad_xi(y), dtype=float).reshape(d, k)
        return np.concatenate([y - x - G @ lam, np.atleast_1d(model.xi(y))]), G

    res, G = residual(y, lam)
    for it in range(1, cfg.max_iters + 1):
        if np.linalg.norm(res) < cfg.gd_tol:
            return y, it - 1
        h = findiff.step_size(y)
        J = np.zeros((d + k, d + k))
        # d/dy of (y - x - grad_xi(y) lam) needs the Hessians of xi
        Gl_jac = findiff.jacobian(
            lambda z: np.asarray(model.grad_xi(z), dtype=float).reshape(d, k) @ lam, y, h
        )
        J[:d, :d] = np.eye(d) - Gl_jac
        J[:d, d:] = -G
        J[d:, :d] = G.T
        step = np.linalg.solve(J, -res)
        # Armijo backtracking on the residual norm
        t = 1.0
        base = np.linalg.norm(res)
        for _ in range(30):
            y_new = y + t * step[:d]
            lam_new = lam + t * step[d:]
            res_new, G_new = residual(y_new, lam_new)
            if np.linalg.norm(res_new) <= (1.0 - 1e-4 * t) * base:
                break
            t *= 0.5
        y, lam, res, G = y_new, lam_new, res_new, G_new
    raise MaxIters(f"projection Newton did not converge in {cfg.max_iters} iterations")


def pi_nearest(model, x, cfg=None, field=None, check_unique=False):
    """Nearest point of the surface under the Euclidean distance.

    Chart-bearing models run gradient descent on the parametrized squared
    distance; chartless models run damped Newton on the stationarity system
    y = x + grad_xi(y) lam, xi(y) = 0, started from the descent-flow limit.
    Models with an exact projector (spheres, linear) use it directly.
    """
    cfg = cfg or FlowConfig()
    x = np.asarray(x, dtype=float)
    if model.nearest_point is not None:
        y = np.asarray(model.nearest_point(x), dtype=float)
        return FlowResult(point=y, iters=0, final_xi_norm=model.xi_norm(y))
    if model.chart is not None and model.chart.n_params == 1:
        y, th, iters, dist = _pi_chart_descent(model, x, cfg)
        if check_unique:
            # Descents started a quarter/half turn away land in competing
            # basins; two distinct minimizers at the smallest distance mean
            # x sits on the cut locus.
            candidates = [(dist, y)]
            for shift in (0.5 * np.pi, np.pi, 1.5 * np.pi):
                try:
                    y2, _, _, dist2 = _descent_from(model, x, th + shift, cfg)
                except MaxIters:
                    continue
                candidates.append((dist2, y2))
            best = min(d for d, _ in candidates)
            tied = [p for d, p in candidates if abs(d - best) < 1e-9]
            for p in tied[1:]:
                if np.linalg.norm(p - tied[0]) > 1e-6:
                    raise NonUnique(f"two projections at equal distance from {x}")
            y = tied[0]
        return FlowResult(point=y, iters=iters, final_xi_norm=model.xi_norm(y))
    if field is None:
        raise ValueError("chartless projection needs the field to seed Newton")
    seed = theta(model, field, x, cfg)
    y, iters = _pi_kkt_newton(model, x, cfg, seed)
    return FlowResult(point=y, iters=iters, final_xi_norm=model.xi_norm(y))


def _descent_from(model, x, th0, cfg):
    chart = model.chart
    th = float(th0)
    for it in range(1, cfg.max_iters + 1):
        p = chart.to_point([th])
        tangent = chart.jac([th])[:, 0]
        grad = 2.0 * float((p - x) @ tangent)
        if abs(grad) < cfg.gd_tol:
            return p, th, it - 1, float(np.sum((p - x) ** 2))
        th -= cfg.gd_step * grad
    raise MaxIters(f"gradient descent did not converge in {cfg.max_iters} iterations")
