import numpy as np
import pytest

from levelset_sampler import (
    BuiltinSpec,
    build,
    eval_pa_divergence,
    eval_projection,
    make_ellipse,
    make_linear,
    make_sphere,
)
from levelset_sampler import findiff
from levelset_sampler.dynamics import drift
from levelset_sampler.errors import NotPositiveDefinite, UnknownModel


def _all_builtins(ellipse, sphere_id, sphere_precond, linear):
    return [ellipse, sphere_id, sphere_precond, linear[:2]]


def test_grad_xi_matches_finite_differences(ellipse, sphere_id, sphere_precond, linear):
    rng = np.random.default_rng(0)
    for model, field in _all_builtins(ellipse, sphere_id, sphere_precond, linear):
        for x in model.sample_tube(rng, 25):
            G = np.asarray(model.grad_xi(x)).reshape(model.d, model.k)
            fd = findiff.jacobian(lambda y: np.atleast_1d(model.xi(y)), x).T
            assert np.allclose(G, fd, atol=1e-6)


def test_chart_points_lie_on_surface(ellipse, sphere_precond):
    for model, _ in (ellipse, sphere_precond):
        rng = np.random.default_rng(1)
        lo, hi = np.asarray(model.chart.lows), np.asarray(model.chart.highs)
        for _ in range(50):
            p = rng.uniform(lo, hi)
            x = model.chart.to_point(p)
            assert model.xi_norm(x) <= 1e-12


def test_chart_angle_roundtrip(ellipse):
    model, _ = ellipse
    for th in np.linspace(0.01, 2 * np.pi - 0.01, 17):
        x = model.chart.to_point([th])
        assert np.isclose(model.chart.angle(x), th, atol=1e-12)


def test_chart_jacobian(ellipse, sphere_precond):
    for model, _ in (ellipse, sphere_precond):
        rng = np.random.default_rng(2)
        lo, hi = np.asarray(model.chart.lows), np.asarray(model.chart.highs)
        for _ in range(10):
            p = rng.uniform(lo + 0.1, hi - 0.1)
            J = model.chart.jac(p)
            fd = findiff.jacobian(lambda q: model.chart.to_point(q), p)
            assert np.allclose(J, fd, atol=1e-7)


def test_sphere_field_consistency(sphere_precond):
    model, field = sphere_precond
    rng = np.random.default_rng(3)
    for x in model.sample_tube(rng, 25):
        sigma = field.sigma(x)
        assert np.max(np.abs(field.a(x) - sigma @ sigma.T)) < 1e-12


def test_sphere_projected_sigma_drops_radial_column(sphere_precond):
    model, field = sphere_precond
    rng = np.random.default_rng(4)
    for x in model.sample_tube(rng, 10):
        x = x / np.linalg.norm(x)
        pd = eval_projection(model, field, x)
        sigma = field.sigma(x)
        Ps = pd.P @ sigma
        assert np.max(np.abs(Ps[:, 0])) < 1e-12
        assert np.allclose(Ps[:, 1:], sigma[:, 1:], atol=1e-12)
        assert np.allclose(pd.Pa, field.a(x) - np.outer(x, x), atol=1e-12)


def test_sphere_div_a_matches_finite_differences(sphere_precond):
    model, field = sphere_precond
    rng = np.random.default_rng(5)
    for x in model.sample_tube(rng, 10):
        fd = np.zeros(3)
        h = findiff.step_size(x)
        for j in range(3):
            fd += findiff.partial(field.a, x, j, h)[:, j]
        assert np.allclose(field.div_a(x), fd, rtol=1e-6, atol=1e-8)


def test_ellipse_div_pa_override_matches_fd_on_chart(ellipse):
    model, field = ellipse
    rng = np.random.default_rng(6)
    for th in rng.uniform(0, 2 * np.pi, 100):
        x = model.chart.to_point([th])
        fd = eval_pa_divergence(model, field, x, use_analytic=False)
        assert np.allclose(field.div_pa(x), fd, rtol=1e-4, atol=1e-6)


def test_linear_identity_mobility_reduces_to_identity():
    _, _, (a_tilde, sigma_tilde) = make_linear(4, 2, np.eye(4))
    assert np.allclose(a_tilde, np.eye(2))
    assert np.allclose(sigma_tilde, np.eye(2))


def test_linear_schur_hand_value():
    _, _, (a_tilde, _) = make_linear(2, 1, np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(a_tilde, [[1.5]], atol=1e-14)


def test_linear_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        make_linear(2, 1, np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sphere_parameter_validation():
    with pytest.raises(UnknownModel):
        make_sphere(4, precond=True, eps=0.1)
    with pytest.raises(UnknownModel):
        make_sphere(3, precond=True, eps=None)
    with pytest.raises(UnknownModel):
        make_sphere(4, precond=False, eps=0.1)


def test_builtin_spec_validation():
    with pytest.raises(UnknownModel):
        BuiltinSpec(id="torus")
    with pytest.raises(ValueError):
        BuiltinSpec(id="ellipse", c=-1.0)
    with pytest.raises(ValueError):
        BuiltinSpec(id="sphere_precond", eps=-0.5)
    model, field = build(BuiltinSpec(id="ellipse", c=2.0))
    assert model.d == 2 and field.beta == 1.0


def test_preconditioning_removes_drift_stiffness():
    # max drift over the surface is O(1/eps) for the identity mobility but
    # O(1) for the adapted one
    thetas = np.linspace(-1.2, 1.2, 13)
    phis = np.linspace(0.0, 2 * np.pi, 7, endpoint=False)

    def max_drift(make, eps):
        model, field = make(eps)
        worst = 0.0
        for th in thetas:
            for ph in phis:
                x = model.chart.to_point([th, ph])
                worst = max(worst, float(np.linalg.norm(drift(model, field, x))))
        return worst

    ident = lambda eps: make_sphere(3, precond=False, eps=eps)
    precond = lambda eps: make_sphere(3, precond=True, eps=eps)
    ratio_id = max_drift(ident, 1e-3) / max_drift(ident, 1e-1)
    ratio_pre = max_drift(precond, 1e-3) / max_drift(precond, 1e-1)
    assert 50.0 < ratio_id < 200.0
    assert ratio_pre < 2.0
