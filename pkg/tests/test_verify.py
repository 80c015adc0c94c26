import numpy as np
import pytest

from levelset_sampler import FlowConfig, eval_projection, findiff, flows
from levelset_sampler.verify import (
    check_appendix_identity,
    check_generator_kills_constraints,
    check_p_identities,
    check_pi_derivatives,
    check_surface_measure_ratio,
    check_theta_hessian_contraction,
    check_theta_jacobian,
    run_checks,
)


def test_p_identities_pass_on_builtins(ellipse, sphere_id, sphere_precond, linear):
    for model, field in (ellipse, sphere_id, sphere_precond, linear[:2]):
        res = check_p_identities(model, field, sample_count=300, seed=1)
        assert res.passed, str(res)
        assert res.max_abs_error < 1e-10


def test_p_identities_negative_control(sphere_precond):
    model, field = sphere_precond
    res = check_p_identities(model, field, sample_count=50, corruption=1e-3)
    assert not res.passed


def test_theta_jacobian_ellipse(ellipse):
    model, field = ellipse
    res = check_theta_jacobian(model, field, sample_count=30, seed=2)
    assert res.passed, str(res)


def test_theta_jacobian_sphere_precond(sphere_precond):
    model, field = sphere_precond
    res = check_theta_jacobian(model, field, sample_count=15, seed=3)
    assert res.passed, str(res)


def test_theta_jacobian_negative_control(ellipse):
    model, field = ellipse
    res = check_theta_jacobian(model, field, sample_count=5, corruption=1e-3)
    assert not res.passed


def test_theta_hessian_contraction_ellipse(ellipse):
    model, field = ellipse
    res = check_theta_hessian_contraction(model, field, sample_count=15, seed=4)
    assert res.passed, str(res)


def test_theta_hessian_contraction_linear_trivial(linear):
    model, field, _ = linear
    # constant projector and mobility: both sides vanish
    from levelset_sampler import geometry

    x = np.array([0.0, 0.3, -0.8])
    div_pa = geometry.eval_pa_divergence(model, field, x, use_analytic=False)
    assert np.allclose(div_pa, 0.0, atol=1e-9)


def test_theta_hessian_negative_control(ellipse):
    model, field = ellipse
    res = check_theta_hessian_contraction(model, field, sample_count=5, corruption=0.05)
    assert not res.passed


def test_pi_derivatives_ellipse(ellipse):
    model, field = ellipse
    first, second = check_pi_derivatives(model, field, sample_count=20, seed=5)
    assert first.passed, str(first)
    assert second.passed, str(second)


def test_pi_derivatives_circle_against_closed_form():
    # on the unit circle the projection is x / |x|; its Jacobian at the
    # surface is the tangential projector
    from levelset_sampler import make_ellipse

    model, field = make_ellipse(1.0)
    rng = np.random.default_rng(6)
    for th in rng.uniform(0, 2 * np.pi, 10):
        x = np.array([np.cos(th), np.sin(th)])
        J = findiff.jacobian(lambda y: y / np.linalg.norm(y), x, 1e-6)
        P = eval_projection(model, field, x).P
        assert np.allclose(J, P, atol=1e-8)


def test_pi_derivatives_negative_control(ellipse):
    model, field = ellipse
    first, second = check_pi_derivatives(model, field, sample_count=5, corruption=1e-3)
    assert not first.passed


def test_theta_and_pi_jacobians_agree(ellipse):
    # shared claim of the two derivative checks on the surface
    model, field = ellipse
    cfg = FlowConfig(eps_tol=1e-10, gd_tol=1e-10)
    rng = np.random.default_rng(7)
    for th in rng.uniform(0, 2 * np.pi, 10):
        x = model.chart.to_point([th])
        Jt = findiff.jacobian(lambda y: flows.theta(model, field, y, cfg).point, x, 1e-5)
        Jp = findiff.jacobian(lambda y: flows.pi_nearest(model, y, cfg).point, x, 1e-5)
        assert np.max(np.abs(Jt - Jp)) < 2e-4


def test_surface_measure_ratio_identity(ellipse):
    model, field = ellipse
    res = check_surface_measure_ratio(model, field, sample_count=50, seed=8)
    assert res.passed
    assert res.max_abs_error < 1e-12  # both measures coincide for a = id


def test_surface_measure_ratio_scaled_mobility(ellipse):
    from dataclasses import replace

    model, field = ellipse
    scaled = replace(
        field, a=lambda x: 4.0 * np.eye(2), sigma=lambda x: 2.0 * np.eye(2), div_pa=None
    )
    res = check_surface_measure_ratio(model, scaled, sample_count=30, seed=9)
    assert res.passed
    # hand value: (det a)^{-1/2} = 1/4 and sqrt(det Psi ratio) = 2
    from levelset_sampler import eval_psi

    x = model.chart.to_point([0.7])
    G = model.grad_xi(x)
    lhs = 0.25 * np.sqrt(
        np.linalg.det(eval_psi(model, scaled, x)) / np.linalg.det(G.T @ G)
    )
    assert np.isclose(lhs, 0.5, rtol=1e-12)


def test_surface_measure_ratio_sphere_precond(sphere_precond):
    model, field = sphere_precond
    res = check_surface_measure_ratio(model, field, sample_count=50, seed=10)
    assert res.passed, str(res)


def test_surface_measure_negative_control(sphere_precond):
    model, field = sphere_precond
    res = check_surface_measure_ratio(model, field, sample_count=10, corruption=1e-6)
    assert not res.passed


def test_appendix_identity_sphere(sphere_precond):
    model, field = sphere_precond
    res = check_appendix_identity(model, field, sample_count=40, seed=11)
    assert res.passed, str(res)


def test_appendix_identity_reduces_for_identity_mobility(ellipse):
    model, field = ellipse
    res = check_appendix_identity(model, field, sample_count=20, seed=12)
    assert res.passed


def test_appendix_identity_negative_control(sphere_precond):
    model, field = sphere_precond
    res = check_appendix_identity(model, field, sample_count=10, corruption=1e-4)
    assert not res.passed


def test_generator_check_and_control(ellipse):
    model, field = ellipse
    res = check_generator_kills_constraints(model, field, sample_count=20, seed=13)
    assert res.passed
    res = check_generator_kills_constraints(model, field, sample_count=5, corruption=1e-3)
    assert not res.passed


def test_run_checks_selector(ellipse):
    results = run_checks("p-identities", {"ellipse": ellipse}, sample_count=50)
    assert len(results) == 1
    assert results[0].passed
    assert run_checks("no-such-check", {"ellipse": ellipse}) == []
