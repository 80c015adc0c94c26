import numpy as np
import pytest

from levelset_sampler import (
    DiffusionField,
    eval_mean_curvature_id,
    eval_pa_divergence,
    eval_projection,
    eval_psi,
    generator_apply,
    make_ellipse,
    make_sphere,
)
from levelset_sampler.errors import (
    NotPositiveDefinite,
    RankDeficient,
    RequiresIdentityMetric,
)


def test_psi_unit_sphere_identity(sphere_id):
    model, field = sphere_id
    psi = eval_psi(model, field, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(psi, [[1.0]], atol=1e-14)


def test_psi_ellipse_vertex(ellipse):
    model, field = ellipse
    psi = eval_psi(model, field, np.array([3.0, 0.0]))
    assert np.allclose(psi, [[1.0 / 9.0]], atol=1e-14)


def test_psi_preconditioned_sphere_is_squared_radius(sphere_precond):
    model, field = sphere_precond
    rng = np.random.default_rng(0)
    for x in model.sample_tube(rng, 20):
        rho2 = float(x @ x)
        psi = eval_psi(model, field, x)
        assert np.allclose(psi, [[rho2**2]], rtol=1e-12)


def test_psi_rank_deficient(ellipse):
    model, field = ellipse
    with pytest.raises(RankDeficient):
        eval_psi(model, field, np.array([0.0, 0.0]))


def test_psi_not_positive_definite(ellipse):
    model, _ = ellipse
    bad = DiffusionField(
        sigma=lambda x: np.eye(2),
        a=lambda x: np.diag([1.0, -1.0]),
        U=lambda x: 0.0,
        grad_U=lambda x: np.zeros(2),
        beta=1.0,
    )
    with pytest.raises(NotPositiveDefinite):
        eval_psi(model, bad, np.array([0.0, 1.0]))


def test_projection_sphere(sphere_id):
    model, field = sphere_id
    pd = eval_projection(model, field, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(pd.P, np.diag([0.0, 1.0, 1.0]), atol=1e-14)


def test_projection_ellipse_vertex(ellipse):
    model, field = ellipse
    pd = eval_projection(model, field, np.array([3.0, 0.0]))
    assert np.allclose(pd.P, np.diag([0.0, 1.0]), atol=1e-14)
    assert np.allclose(pd.Pa, np.diag([0.0, 1.0]), atol=1e-14)


def test_projection_linear_is_schur_block(linear):
    model, field, (a_tilde, _) = linear
    rng = np.random.default_rng(1)
    for x in model.sample_tube(rng, 10):
        pd = eval_projection(model, field, x)
        expected = np.zeros((3, 3))
        expected[1:, 1:] = a_tilde
        assert np.allclose(pd.Pa, expected, atol=1e-12)


def test_projection_identities_random_points(ellipse, sphere_precond, linear):
    rng = np.random.default_rng(2)
    cases = [ellipse, sphere_precond, linear[:2]]
    for model, field in cases:
        for x in model.sample_tube(rng, 200):
            pd = eval_projection(model, field, x)
            a = field.a(x)
            G = np.asarray(model.grad_xi(x)).reshape(model.d, model.k)
            assert np.max(np.abs(pd.P @ pd.P - pd.P)) < 1e-10
            assert np.max(np.abs(a @ pd.P.T - pd.P @ a)) < 1e-10
            assert np.max(np.abs(pd.P.T @ G)) < 1e-10


def test_pa_divergence_constant_mobility_vanishes(linear):
    model, field, _ = linear
    x = np.array([0.1, -0.7, 1.3])
    assert np.allclose(eval_pa_divergence(model, field, x, use_analytic=False), 0.0, atol=1e-9)


def test_pa_divergence_ellipse_closed_form(ellipse):
    model, field = ellipse
    c2, c4, c6 = 9.0, 81.0, 729.0
    for th in np.linspace(0.1, 2 * np.pi, 7):
        x = model.chart.to_point([th])
        fd = eval_pa_divergence(model, field, x, use_analytic=False)
        den = (x[0] ** 2 + c4 * x[1] ** 2) ** 2
        expected = np.array(
            [
                (c4 * (c2 - 2.0) * x[0] * x[1] ** 2 - c2 * x[0] ** 3) / den,
                (c2 * (1.0 - 2.0 * c2) * x[0] ** 2 * x[1] - c6 * x[1] ** 3) / den,
            ]
        )
        assert np.allclose(fd, expected, rtol=1e-6, atol=1e-9)
        assert np.allclose(field.div_pa(x), expected, rtol=1e-14)


def test_pa_divergence_ellipse_vertex_value(ellipse):
    # drift of the unconstrained discretization at the major vertex
    model, field = ellipse
    x = np.array([3.0, 0.0])
    fd = eval_pa_divergence(model, field, x, use_analytic=False)
    assert np.allclose(fd, [-3.0, 0.0], atol=1e-7)


def test_pa_divergence_sphere_precond_formula(sphere_precond):
    model, field = sphere_precond
    eps = model.fast_params[0]
    rng = np.random.default_rng(3)
    for x in model.sample_tube(rng, 10):
        r2 = x[0] ** 2 + x[1] ** 2
        expected = np.array(
            [
                -(1 + eps) * x[0] + eps * x[0] * x[2] ** 2 / r2,
                -(1 + eps) * x[1] + eps * x[1] * x[2] ** 2 / r2,
                -2 * eps * x[2],
            ]
        )
        assert np.allclose(eval_pa_divergence(model, field, x, use_analytic=False), expected, rtol=1e-5, atol=1e-8)
        assert np.allclose(field.div_pa(x), expected, rtol=1e-12)


def _ellipse_curvature_oracle(c, th):
    # plane-curve curvature of (c cos t, sin t) against the outward unit normal
    kappa = c / (c**2 * np.sin(th) ** 2 + np.cos(th) ** 2) ** 1.5
    n = np.array([np.cos(th) / c, np.sin(th)])
    return -kappa * n / np.linalg.norm(n)


def test_mean_curvature_unit_sphere(sphere_id):
    model, field = sphere_id
    x = np.array([0.6, 0.64, np.sqrt(1 - 0.6**2 - 0.64**2)])
    H = eval_mean_curvature_id(model, field, x)
    assert np.allclose(H, -2.0 * x, rtol=1e-6)


def test_mean_curvature_unit_circle():
    model, field = make_ellipse(1.0)
    x = np.array([np.cos(0.3), np.sin(0.3)])
    H = eval_mean_curvature_id(model, field, x)
    assert np.allclose(H, -x, rtol=1e-6)


def test_mean_curvature_ellipse_matches_curvature_oracle(ellipse):
    model, field = ellipse
    for th in [np.pi / 2, 0.4, 1.1, 2.9, 4.4]:
        x = model.chart.to_point([th])
        H = eval_mean_curvature_id(model, field, x)
        assert np.allclose(H, _ellipse_curvature_oracle(3.0, th), rtol=1e-5, atol=1e-8)
        pd = eval_projection(model, field, x)
        assert np.max(np.abs(pd.P @ H)) < 1e-8


def test_mean_curvature_requires_identity(sphere_precond):
    model, field = sphere_precond
    with pytest.raises(RequiresIdentityMetric):
        eval_mean_curvature_id(model, field, np.array([1.0, 0.0, 0.0]))


def test_generator_kills_constraint_components(ellipse, sphere_precond):
    for model, field in (ellipse, sphere_precond):
        rng = np.random.default_rng(4)
        lo = np.asarray(model.chart.lows)
        hi = np.asarray(model.chart.highs)
        for _ in range(10):
            p = rng.uniform(lo + 0.1, hi - 0.1)
            x = model.chart.to_point(p)
            f = lambda y: float(model.xi(y)[0])
            assert abs(generator_apply(model, field, f, x)) < 1e-5


def test_generator_constant_function(ellipse):
    model, field = ellipse
    val = generator_apply(model, field, lambda y: 4.2, np.array([0.0, 1.0]))
    assert val == 0.0


def test_generator_coordinate_observable(ellipse):
    # beta^{-1} * second row divergence of P at the minor vertex
    model, field = ellipse
    val = generator_apply(model, field, lambda y: float(y[1]), np.array([0.0, 1.0]))
    assert np.isclose(val, -1.0 / 9.0, rtol=1e-5)
