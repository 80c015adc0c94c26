"""Built-in model/field pairs: linear constraint, spheres, and the ellipse."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NotPositiveDefinite, UnknownModel
from .geometry import Chart, DiffusionField, ManifoldModel

TWO_PI = 2.0 * np.pi

# Spherical-angle tube excludes the polar axis, where the azimuthal angle
# degenerates: grad(theta) divides by sqrt(x1^2 + x2^2).
POLE_CUTOFF = 0.99


def _const_zero(x):
    return 0.0


def make_ellipse(c=3.0, beta=1.0):
    """Planar ellipse x1^2/c^2 + x2^2 = 1 with identity mobility and U = 0.

    The field carries the closed-form row divergence of Pa used by the
    unconstrained discretization and by cross-checks against finite
    differences.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    c2, c4, c6 = c**2, c**4, c**6
    eye = np.eye(2)

    def xi(x):
        return np.array([0.5 * (x[0] ** 2 / c2 + x[1] ** 2 - 1.0)])

    def grad_xi(x):
        return np.array([[x[0] / c2], [x[1]]])

    def to_point(params):
        th = float(np.atleast_1d(params)[0])
        return np.array([c * np.cos(th), np.sin(th)])

    def chart_jac(params):
        th = float(np.atleast_1d(params)[0])
        return np.array([[-c * np.sin(th)], [np.cos(th)]])

    def angle(x):
        return float(np.arctan2(x[1], x[0] / c) % TWO_PI)

    def div_pa(x):
        den = (x[0] ** 2 + c4 * x[1] ** 2) ** 2
        return np.array(
            [
                (c4 * (c2 - 2.0) * x[0] * x[1] ** 2 - c2 * x[0] ** 3) / den,
                (c2 * (1.0 - 2.0 * c2) * x[0] ** 2 * x[1] - c6 * x[1] ** 3) / den,
            ]
        )

    def sample_tube(rng, n):
        th = rng.uniform(0.0, TWO_PI, size=n)
        scale = 1.0 + rng.uniform(-0.15, 0.15, size=n)
        pts = np.column_stack([c * np.cos(th), np.sin(th)]) * scale[:, None]
        return pts

    chart = Chart(
        n_params=1,
        lows=(0.0,),
        highs=(TWO_PI,),
        to_point=to_point,
        jac=chart_jac,
        angle=angle,
        angle_domain=(0.0, TWO_PI),
    )
    model = ManifoldModel(
        d=2,
        k=1,
        xi=xi,
        grad_xi=grad_xi,
        chart=chart,
        sample_tube=sample_tube,
        fast_tag="ellipse",
        fast_params=(c,),
        name="ellipse",
    )
    field = DiffusionField(
        sigma=lambda x: eye,
        a=lambda x: eye,
        U=_const_zero,
        grad_U=lambda x: np.zeros(2),
        beta=beta,
        div_a=lambda x: np.zeros(2),
        div_pa=div_pa,
    )
    return model, field


def sphere_angle_gradient(x):
    """Ambient gradient of the polar angle theta = asin(x3 / |x|)."""
    rho2 = x[0] ** 2 + x[1] ** 2 + x[2] ** 2
    r = np.sqrt(x[0] ** 2 + x[1] ** 2)
    return np.array([-x[0] * x[2] / r, -x[1] * x[2] / r, r]) / rho2


def _sphere_sigma_columns(x, eps):
    rho2 = x[0] ** 2 + x[1] ** 2 + x[2] ** 2
    s1 = np.array([x[0], x[1], x[2]])
    s2 = np.array([x[1], -x[0], 0.0])
    s3 = np.sqrt(eps) * rho2 * sphere_angle_gradient(x)
    return np.column_stack([s1, s2, s3])


def make_sphere(d=3, precond=False, eps=None, beta=1.0):
    """Unit sphere |x| = 1 in R^d.

    With ``eps`` set (d must be 3) the potential is theta^2 / (2 eps) in the
    polar angle. ``precond`` additionally replaces the identity mobility by
    the angle-adapted sigma whose columns are the radial direction, the
    azimuthal direction, and sqrt(eps) rho^2 grad(theta); this removes the
    1/eps stiffness from the drift.
    """
    if d < 2:
        raise UnknownModel("sphere needs d >= 2")
    if precond and (d != 3 or eps is None):
        raise UnknownModel("preconditioned sphere is defined for d = 3 with eps set")
    if eps is not None and d != 3:
        raise UnknownModel("angle potential requires d = 3")

    def xi(x):
        return np.array([0.5 * (float(np.dot(x, x)) - 1.0)])

    def grad_xi(x):
        return np.asarray(x, dtype=float).reshape(d, 1)

    chart = None
    in_tube = None
    sample_tube = None
    if d == 3:

        def to_point(params):
            th, ph = float(params[0]), float(params[1])
            return np.array(
                [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)]
            )

        def chart_jac(params):
            th, ph = float(params[0]), float(params[1])
            return np.array(
                [
                    [-np.sin(th) * np.cos(ph), -np.cos(th) * np.sin(ph)],
                    [-np.sin(th) * np.sin(ph), np.cos(th) * np.cos(ph)],
                    [np.cos(th), 0.0],
                ]
            )

        def angle(x):
            return float(np.arcsin(x[2] / np.linalg.norm(x)))

        chart = Chart(
            n_params=2,
            lows=(-np.pi / 2, 0.0),
            highs=(np.pi / 2, TWO_PI),
            to_point=to_point,
            jac=chart_jac,
            angle=angle,
            angle_domain=(-np.pi / 2, np.pi / 2),
        )

        def in_tube(x):
            rho = np.linalg.norm(x)
            return rho > 0 and abs(x[2]) <= POLE_CUTOFF * rho

        def sample_tube(rng, n):
            th = rng.uniform(-1.4, 1.4, size=n)
            ph = rng.uniform(0.0, TWO_PI, size=n)
            scale = 1.0 + rng.uniform(-0.15, 0.15, size=n)
            pts = np.column_stack(
                [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)]
            )
            return pts * scale[:, None]

    if eps is None:
        U = _const_zero
        grad_U = lambda x: np.zeros(d)
    else:

        def U(x):
            th = np.arcsin(x[2] / np.linalg.norm(x))
            return th**2 / (2.0 * eps)

        def grad_U(x):
            th = np.arcsin(x[2] / np.linalg.norm(x))
            return (th / eps) * sphere_angle_gradient(x)

    if not precond:
        eye = np.eye(d)
        model = ManifoldModel(
            d=d,
            k=1,
            xi=xi,
            grad_xi=grad_xi,
            chart=chart,
            in_tube=in_tube,
            sample_tube=sample_tube,
            nearest_point=lambda x: np.asarray(x) / np.linalg.norm(x),
            name="sphere_id",
        )
        field = DiffusionField(
            sigma=lambda x: eye,
            a=lambda x: eye,
            U=U,
            grad_U=grad_U,
            beta=beta,
            div_a=lambda x: np.zeros(d),
        )
        return model, field

    def sigma(x):
        return _sphere_sigma_columns(np.asarray(x, dtype=float), eps)

    def a_mat(x):
        r2 = x[0] ** 2 + x[1] ** 2
        x3sq = x[2] ** 2
        return np.array(
            [
                [
                    r2 + eps * x[0] ** 2 * x3sq / r2,
                    eps * x[0] * x[1] * x3sq / r2,
                    (1.0 - eps) * x[0] * x[2],
                ],
                [
                    eps * x[0] * x[1] * x3sq / r2,
                    r2 + eps * x[1] ** 2 * x3sq / r2,
                    (1.0 - eps) * x[1] * x[2],
                ],
                [
                    (1.0 - eps) * x[0] * x[2],
                    (1.0 - eps) * x[1] * x[2],
                    x3sq + eps * r2,
                ],
            ]
        )

    def div_a(x):
        r2 = x[0] ** 2 + x[1] ** 2
        return np.array(
            [
                (3.0 - eps) * x[0] + eps * x[0] * x[2] ** 2 / r2,
                (3.0 - eps) * x[1] + eps * x[1] * x[2] ** 2 / r2,
                (4.0 - 2.0 * eps) * x[2],
            ]
        )

    def div_pa(x):
        # Pa = a - x x^T holds exactly for this sigma, so the row divergence
        # is div_a minus (d + 1) x.
        return div_a(x) - 4.0 * np.asarray(x, dtype=float)

    model = ManifoldModel(
        d=3,
        k=1,
        xi=xi,
        grad_xi=grad_xi,
        chart=chart,
        in_tube=in_tube,
        sample_tube=sample_tube,
        fast_tag="sphere_precond",
        fast_params=(eps,),
        name="sphere_precond",
    )
    field = DiffusionField(
        sigma=sigma,
        a=a_mat,
        U=U,
        grad_U=grad_U,
        beta=beta,
        div_a=div_a,
        div_pa=div_pa,
    )
    return model, field


def make_linear(d, k, a_mat, beta=1.0, U=None, grad_U=None):
    """Linear constraint pinning the first k coordinates to zero.

    Returns the model, the field with constant mobility ``a_mat``, and the
    reduced pair (a_tilde, sigma_tilde) where a_tilde is the Schur complement
    A22 - A21 A11^{-1} A12 and sigma_tilde its lower Cholesky factor.
    """
    if not (1 <= k < d):
        raise ValueError("need 1 <= k < d")
    a_mat = np.asarray(a_mat, dtype=float)
    try:
        np.linalg.cholesky(a_mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("constant mobility must be SPD") from exc
    A11 = a_mat[:k, :k]
    A12 = a_mat[:k, k:]
    A21 = a_mat[k:, :k]
    A22 = a_mat[k:, k:]
    a_tilde = A22 - A21 @ np.linalg.solve(A11, A12)
    sigma_tilde = np.linalg.cholesky(a_tilde)
    sigma = np.linalg.cholesky(a_mat)
    G = np.zeros((d, k))
    G[:k, :k] = np.eye(k)

    def nearest_point(x):
        y = np.array(x, dtype=float)
        y[:k] = 0.0
        return y

    def sample_tube(rng, n):
        pts = rng.normal(size=(n, d))
        pts[:, :k] = rng.uniform(-0.2, 0.2, size=(n, k))
        return pts

    model = ManifoldModel(
        d=d,
        k=k,
        xi=lambda x: np.asarray(x, dtype=float)[:k],
        grad_xi=lambda x: G,
        sample_tube=sample_tube,
        nearest_point=nearest_point,
        name="linear",
    )
    if U is None:
        U = _const_zero
        grad_U = lambda x: np.zeros(d)
    field = DiffusionField(
        sigma=lambda x: sigma,
        a=lambda x: a_mat,
        U=U,
        grad_U=grad_U,
        beta=beta,
        div_a=lambda x: np.zeros(d),
        div_pa=lambda x: np.zeros(d),
    )
    return model, field, (a_tilde, sigma_tilde)


BUILTIN_IDS = ("linear", "sphere_id", "sphere_precond", "ellipse")


@dataclass
class BuiltinSpec:
    """Validated parameters selecting one of the built-in model families."""

    id: str
    d: int = 3
    k: int = 1
    c: float = 3.0
    eps: Optional[float] = None
    beta: float = 1.0
    a: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.id not in BUILTIN_IDS:
            raise UnknownModel(f"unknown model id {self.id!r}")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def build(spec):
    """Construct (model, field) from a :class:`BuiltinSpec`."""
    if spec.id == "ellipse":
        return make_ellipse(c=spec.c, beta=spec.beta)
    if spec.id == "sphere_id":
        return make_sphere(d=spec.d, precond=False, eps=spec.eps, beta=spec.beta)
    if spec.id == "sphere_precond":
        return make_sphere(d=3, precond=True, eps=spec.eps, beta=spec.beta)
    if spec.id == "linear":
        a = spec.a if spec.a is not None else np.eye(spec.d)
        model, field, _ = make_linear(spec.d, spec.k, a, beta=spec.beta)
        return model, field
    raise UnknownModel(spec.id)
