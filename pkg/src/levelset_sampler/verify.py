"""Executable checks of the structural identities behind the schemes.

Each check samples points (on the surface via the chart, or in the tube),
evaluates an identity with independent numerics on both sides, and reports
the worst errors. ``corruption`` deliberately perturbs the quantity under
test so that tolerances can be demonstrated to bite (negative controls).

Pass criteria use the mixed form ||diff|| <= tol * max(||reference||, 1),
so "relative" degrades gracefully to absolute when the reference vanishes.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import findiff, flows, geometry
from .flows import FlowConfig

FIRST_ORDER_STEP = 1e-5
SECOND_ORDER_SCALE = 1e-3
# Flow maps are resolved far below the finite-difference increments so the
# quotients see the map, not the solver tolerance.
TIGHT = dict(eps_tol=1e-10, gd_tol=1e-10)


@dataclass
class CheckResult:
    name: str
    max_abs_error: float
    max_rel_error: float
    points_tested: int
    tolerance: float
    passed: bool

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return (
            f"{self.name:<28s} {flag}  max_abs={self.max_abs_error:.3e} "
            f"max_rel={self.max_rel_error:.3e}  tol={self.tolerance:.1e} "
            f"points={self.points_tested}"
        )


def _result(name, diffs, refs, tol, points):
    diffs = np.asarray(diffs, dtype=float)
    refs = np.asarray(refs, dtype=float)
    rel = diffs / np.maximum(refs, 1.0)
    return CheckResult(
        name=name,
        max_abs_error=float(diffs.max()) if diffs.size else 0.0,
        max_rel_error=float(rel.max()) if rel.size else 0.0,
        points_tested=points,
        tolerance=tol,
        passed=bool(np.all(rel <= tol)),
    )


def _tube_points(model, n, rng):
    if model.sample_tube is None:
        raise ValueError("model has no tube sampler")
    return model.sample_tube(rng, n)


def _chart_params(model, n, rng, margin=0.05):
    chart = model.chart
    lows = np.asarray(chart.lows)
    highs = np.asarray(chart.highs)
    span = highs - lows
    pts = []
    while len(pts) < n:
        p = rng.uniform(lows + margin * span, highs - margin * span)
        x = chart.to_point(p)
        if model.in_tube is None or model.in_tube(x):
            pts.append((p, x))
    return pts


def check_p_identities(model, field, sample_count=1000, seed=0, corruption=0.0):
    """P^2 = P, a P^T = P a, P^T grad_xi = 0 at tube-sampled points."""
    tol = 1e-10
    rng = np.random.default_rng(seed)
    pts = _tube_points(model, sample_count, rng)
    diffs, refs = [], []
    for x in pts:
        pd = geometry.eval_projection(model, field, x)
        P = pd.P + corruption
        a = np.asarray(field.a(x), dtype=float)
        G = np.asarray(model.grad_xi(x), dtype=float).reshape(model.d, model.k)
        r1 = np.max(np.abs(P @ P - P))
        r2 = np.max(np.abs(a @ P.T - P @ a))
        r3 = np.max(np.abs(P.T @ G))
        diffs.append(max(r1, r2, r3))
        refs.append(1.0)
    return _result("p-identities", diffs, refs, tol, sample_count)


def _corrupt(out, y, corruption):
    # linear term perturbs Jacobians, quadratic term perturbs Hessians
    y = np.asarray(y, dtype=float)
    return out + corruption * (y + float(y @ y) * np.ones_like(out))


def _theta_map(model, field, cfg, corruption):
    def mapped(y):
        out = flows.theta(model, field, y, cfg).point
        if corruption:
            out = _corrupt(out, y, corruption)
        return out

    return mapped


def check_theta_jacobian(model, field, cfg=None, sample_count=100, seed=0, corruption=0.0):
    """Finite-difference Jacobian of the descent-flow limit equals P on the surface."""
    tol = 1e-4
    cfg = (cfg or FlowConfig()).with_tolerance(**TIGHT)
    rng = np.random.default_rng(seed)
    mapped = _theta_map(model, field, cfg, corruption)
    diffs, refs = [], []
    for _, x in _chart_params(model, sample_count, rng):
        J = findiff.jacobian(mapped, x, FIRST_ORDER_STEP)
        P = geometry.eval_projection(model, field, x).P
        diffs.append(np.max(np.abs(J - P)))
        refs.append(1.0)
    return _result("theta-jacobian", diffs, refs, tol, sample_count)


def _contracted_hessian(mapped, x, a, d):
    h2 = SECOND_ORDER_SCALE * math.sqrt(1.0 + float(np.linalg.norm(x)))
    out = np.empty(d)
    for i in range(d):
        comp = lambda y, i=i: float(mapped(y)[i])
        H = findiff.hessian(comp, x, h2, richardson=True)
        out[i] = float(np.sum(a * H))
    return out


def check_theta_hessian_contraction(
    model, field, cfg=None, sample_count=100, seed=0, corruption=0.0
):
    """a_lr d2(Theta_i)/dx_l dx_r = d(Pa)_il/dx_l - P_il da_lr/dx_r on the surface."""
    tol = 1e-3
    cfg = (cfg or FlowConfig()).with_tolerance(**TIGHT)
    rng = np.random.default_rng(seed)
    mapped = _theta_map(model, field, cfg, corruption)
    diffs, refs = [], []
    for _, x in _chart_params(model, sample_count, rng):
        a = np.asarray(field.a(x), dtype=float)
        lhs = _contracted_hessian(mapped, x, a, model.d)
        pd = geometry.eval_projection(model, field, x)
        div_pa = geometry.eval_pa_divergence(model, field, x)
        if field.div_a is not None:
            div_a = np.asarray(field.div_a(x), dtype=float)
        else:
            h = findiff.step_size(x)
            div_a = np.zeros(model.d)
            for j in range(model.d):
                div_a += findiff.partial(field.a, x, j, h)[:, j]
        rhs = div_pa - pd.P @ div_a
        diffs.append(np.max(np.abs(lhs - rhs)))
        refs.append(np.max(np.abs(rhs)))
    return _result("theta-hessian", diffs, refs, tol, sample_count)


def check_pi_derivatives(model, field, cfg=None, sample_count=100, seed=0, corruption=0.0):
    """Jacobian of the nearest-point map is P; its contracted Hessian adds
    the log det Psi term. Identity mobility only."""
    tol_jac, tol_hess = 1e-4, 1e-3
    cfg = (cfg or FlowConfig()).with_tolerance(**TIGHT)
    rng = np.random.default_rng(seed)

    def mapped(y):
        out = flows.pi_nearest(model, y, cfg, field=field).point
        if corruption:
            out = _corrupt(out, y, corruption)
        return out

    jdiffs, jrefs, hdiffs, hrefs = [], [], [], []
    skipped = 0
    for _, x in _chart_params(model, sample_count, rng):
        if not field.is_identity_at(x):
            raise geometry.RequiresIdentityMetric("projection checks need a = id")
        try:
            J = findiff.jacobian(mapped, x, FIRST_ORDER_STEP)
        except flows.NonUnique:
            skipped += 1
            continue
        pd = geometry.eval_projection(model, field, x)
        jdiffs.append(np.max(np.abs(J - pd.P)))
        jrefs.append(1.0)
        a = np.asarray(field.a(x), dtype=float)
        lhs = _contracted_hessian(mapped, x, a, model.d)
        div_pa = geometry.eval_pa_divergence(model, field, x)
        logdet = lambda y: float(
            np.linalg.slogdet(geometry.eval_psi(model, field, y))[1]
        )
        h = findiff.step_size(x)
        grad_logdet = np.array(
            [findiff.richardson_partial(logdet, x, j, h) for j in range(model.d)]
        )
        rhs = div_pa + 0.5 * (pd.Pa @ grad_logdet)
        hdiffs.append(np.max(np.abs(lhs - rhs)))
        hrefs.append(np.max(np.abs(rhs)))
    first = _result("pi-jacobian", jdiffs, jrefs, tol_jac, sample_count - skipped)
    second = _result("pi-hessian", hdiffs, hrefs, tol_hess, sample_count - skipped)
    return [first, second]


def check_surface_measure_ratio(model, field, sample_count=100, seed=0, corruption=0.0):
    """Chart-tangent area ratio between the two metrics equals
    (det a)^{-1/2} sqrt(det Psi / det(grad_xi^T grad_xi))."""
    tol = 1e-8
    rng = np.random.default_rng(seed)
    diffs, refs = [], []
    for p, x in _chart_params(model, sample_count, rng):
        J = model.chart.jac(p)
        a = np.asarray(field.a(x), dtype=float)
        a_inv = np.linalg.inv(a)
        lhs = math.sqrt(
            np.linalg.det(J.T @ a_inv @ J) / np.linalg.det(J.T @ J)
        )
        if corruption:
            lhs *= 1.0 + corruption
        G = np.asarray(model.grad_xi(x), dtype=float).reshape(model.d, model.k)
        psi = geometry.eval_psi(model, field, x)
        rhs = (
            np.linalg.det(a) ** -0.5
            * math.sqrt(np.linalg.det(psi) / np.linalg.det(G.T @ G))
        )
        diffs.append(abs(lhs - rhs))
        refs.append(abs(rhs))
    return _result("surface-measure", diffs, refs, tol, sample_count)


def check_appendix_identity(model, field, sample_count=100, seed=0, corruption=0.0):
    """Identity tying the a^{-1}-derivative contraction of Pa to log-det terms.

    (1/2)(Pa)_ir (Pa)_jl d(a^{-1})_jl/dx_r
      = (Pa)_ir [ -(1/2) d ln det a /dx_r + dP_lr/dx_l + (1/2) d ln det Psi /dx_r ]
    """
    tol = 1e-6
    rng = np.random.default_rng(seed)
    pts = _tube_points(model, sample_count, rng)
    diffs, refs = [], []
    for x in pts:
        h = findiff.step_size(x)
        pd = geometry.eval_projection(model, field, x)
        Pa = pd.Pa
        a_inv = lambda y: np.linalg.inv(np.asarray(field.a(y), dtype=float))
        logdet_a = lambda y: float(np.linalg.slogdet(np.asarray(field.a(y)))[1])
        logdet_psi = lambda y: float(
            np.linalg.slogdet(geometry.eval_psi(model, field, y))[1]
        )
        d = model.d
        w_lhs = np.empty(d)
        w_rhs = np.empty(d)
        div_P = np.zeros(d)
        for l in range(d):
            dP = findiff.richardson_partial(
                lambda y: geometry.eval_projection(model, field, y).P, x, l, h
            )
            div_P += dP[l, :]
        for r in range(d):
            da_inv = findiff.richardson_partial(a_inv, x, r, h)
            w_lhs[r] = 0.5 * float(np.sum(Pa * da_inv))
            w_rhs[r] = (
                -0.5 * findiff.richardson_partial(logdet_a, x, r, h)
                + div_P[r]
                + 0.5 * findiff.richardson_partial(logdet_psi, x, r, h)
            )
        lhs = Pa @ w_lhs + corruption
        rhs = Pa @ w_rhs
        diffs.append(np.max(np.abs(lhs - rhs)))
        refs.append(np.max(np.abs(rhs)))
    return _result("appendix-identity", diffs, refs, tol, sample_count)


def check_generator_kills_constraints(model, field, sample_count=100, seed=0, corruption=0.0):
    """The sampling generator annihilates every constraint component on the surface."""
    tol = 1e-5
    rng = np.random.default_rng(seed)
    diffs, refs = [], []
    for _, x in _chart_params(model, sample_count, rng):
        worst = 0.0
        for alpha in range(model.k):
            f = lambda y, a=alpha: float(np.atleast_1d(model.xi(y))[a])
            val = geometry.generator_apply(model, field, f, x) + corruption
            worst = max(worst, abs(val))
        diffs.append(worst)
        refs.append(1.0)
    return _result("generator-constraints", diffs, refs, tol, sample_count)


def run_checks(selector, model_builders, sample_count=None, corruption=0.0, seed=0):
    """Run the named checks over built-in models; returns CheckResult list.

    ``model_builders`` maps model names to (model, field) pairs. Selectors:
    all, p-identities, theta-derivatives, pi-derivatives, surface-measure,
    appendix-identity, generator.
    """
    results = []
    want = lambda name: selector in ("all", name)
    n_pts = sample_count
    if want("p-identities"):
        n = n_pts or 1000
        for key in ("ellipse", "sphere_id", "sphere_precond", "linear"):
            if key in model_builders:
                m, f = model_builders[key]
                r = check_p_identities(m, f, n, seed=seed, corruption=corruption)
                r.name = f"p-identities[{key}]"
                results.append(r)
    if want("theta-derivatives"):
        n = n_pts or 100
        for key in ("ellipse", "sphere_precond"):
            if key in model_builders:
                m, f = model_builders[key]
                r = check_theta_jacobian(m, f, sample_count=n, seed=seed, corruption=corruption)
                r.name = f"theta-jacobian[{key}]"
                results.append(r)
                r = check_theta_hessian_contraction(
                    m, f, sample_count=n, seed=seed, corruption=corruption
                )
                r.name = f"theta-hessian[{key}]"
                results.append(r)
    if want("pi-derivatives") and "ellipse" in model_builders:
        n = n_pts or 100
        m, f = model_builders["ellipse"]
        results.extend(
            check_pi_derivatives(m, f, sample_count=n, seed=seed, corruption=corruption)
        )
    if want("surface-measure"):
        n = n_pts or 100
        for key in ("ellipse", "sphere_precond"):
            if key in model_builders:
                m, f = model_builders[key]
                r = check_surface_measure_ratio(m, f, n, seed=seed, corruption=corruption)
                r.name = f"surface-measure[{key}]"
                results.append(r)
    if want("appendix-identity") and "sphere_precond" in model_builders:
        n = n_pts or 100
        m, f = model_builders["sphere_precond"]
        results.append(check_appendix_identity(m, f, n, seed=seed, corruption=corruption))
    if want("generator"):
        n = n_pts or 100
        for key in ("ellipse", "sphere_precond"):
            if key in model_builders:
                m, f = model_builders[key]
                r = check_generator_kills_constraints(
                    m, f, n, seed=seed, corruption=corruption
                )
                r.name = f"generator[{key}]"
                results.append(r)
    return results
