"""Pointwise differential geometry of a level set under a diffusion metric.

Everything here is a pure function of a :class:`ManifoldModel` (the constraint
map and its Jacobian), a :class:`DiffusionField` (the noise coefficients and
the potential), and an evaluation point.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import findiff
from .errors import NotPositiveDefinite, RankDeficient, RequiresIdentityMetric

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Chart:
    """Parametrization of the constraint surface used by built-in models.

    ``to_point`` maps parameters to ambient points; ``angle`` extracts the
    scalar coordinate used for histogramming (equal to the single parameter
    for one-dimensional surfaces).
    """

    n_params: int
    lows: Tuple[float, ...]
    highs: Tuple[float, ...]
    to_point: Callable[[np.ndarray], np.ndarray]
    angle: Callable[[np.ndarray], float]
    angle_domain: Tuple[float, float]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class ManifoldModel:
    """Level-set description: constraint map, its Jacobian, and bookkeeping.

    ``grad_xi`` returns the d x k matrix of partials (column alpha is the
    ambient gradient of the alpha-th constraint component). ``r_tube``
    declares the validity region |xi(x)| <= r_tube; ``in_tube`` may tighten
    it further (built-in spheres exclude the polar axis).
    """

    d: int
    k: int
    xi: Callable[[np.ndarray], np.ndarray]
    grad_xi: Callable[[np.ndarray], np.ndarray]
    chart: Optional[Chart] = None
    r_tube: float = 0.5
    in_tube: Optional[Callable[[np.ndarray], bool]] = None
    sample_tube: Optional[Callable] = None  # (rng, n) -> (n, d)
    nearest_point: Optional[Callable] = None  # closed-form metric projection
    fast_tag: Optional[str] = None
    fast_params: Tuple[float, ...] = ()
    name: str = ""

    def xi_norm(self, x):
        return float(np.linalg.norm(np.atleast_1d(self.xi(x))))

    def contains(self, x):
        if self.in_tube is not None and not self.in_tube(x):
            return False
        return self.xi_norm(x) <= self.r_tube


@dataclass(frozen=True)
class DiffusionField:
    """Noise matrix sigma, mobility a = sigma sigma^T, potential, and beta.

    ``div_a`` and ``div_pa`` are optional analytic row divergences
    (components sum_j d a_ij / dx_j); finite differences are used when they
    are absent.
    """

    sigma: Callable[[np.ndarray], np.ndarray]
    a: Callable[[np.ndarray], np.ndarray]
    U: Callable[[np.ndarray], float]
    grad_U: Callable[[np.ndarray], np.ndarray]
    beta: float
    div_a: Optional[Callable[[np.ndarray], np.ndarray]] = None
    div_pa: Optional[Callable[[np.ndarray], np.ndarray]] = None
    min_eig: float = 1e-10

    def is_identity_at(self, x, tol=1e-12):
        a = np.asarray(self.a(x), dtype=float)
        return np.max(np.abs(a - np.eye(a.shape[0]))) <= tol


@dataclass(frozen=True)
class ProjectionData:
    """Projection matrix P, Gram matrix Psi, and their product Pa at a point."""

    P: np.ndarray
    Psi: np.ndarray
    Pa: np.ndarray
    at_point: np.ndarray
    psi_chol: tuple = dc_field(repr=False, default=None)


def _checked_grad_xi(model, x):
    G = np.asarray(model.grad_xi(x), dtype=float).reshape(model.d, model.k)
    svals = np.linalg.svd(G, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] < RANK_RTOL * svals[0]:
        raise RankDeficient(
            f"grad_xi nearly rank deficient at {x}: singular values {svals}"
        )
    return G


def eval_psi(model, field, x):
    """Gram matrix of the constraint gradients under the mobility a.

    Returns the k x k SPD matrix grad_xi^T a grad_xi.
    """
    x = np.asarray(x, dtype=float)
    G = _checked_grad_xi(model, x)
    a = np.asarray(field.a(x), dtype=float)
    psi = G.T @ a @ G
    psi = 0.5 * (psi + psi.T)
    try:
        cho_factor(psi, lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefinite(f"Gram matrix not SPD at {x}") from exc
    return psi


def eval_projection(model, field, x):
    """Tangential projector P = id - a grad_xi Psi^{-1} grad_xi^T and Pa."""
    x = np.asarray(x, dtype=float)
    G = _checked_grad_xi(model, x)
    a = np.asarray(field.a(x), dtype=float)
    aG = a @ G
    psi = G.T @ aG
    psi = 0.5 * (psi + psi.T)
    try:
        chol = cho_factor(psi, lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefinite(f"Gram matrix not SPD at {x}") from exc
    # W = Psi^{-1} grad_xi^T, so P = id - aG W and Pa = a P^T
    W = cho_solve(chol, G.T)
    P = np.eye(model.d) - aG @ W
    Pa = a @ P.T
    return ProjectionData(P=P, Psi=psi, Pa=Pa, at_point=x, psi_chol=chol)


def eval_pa_divergence(model, field, x, h_fd=None, use_analytic=True):
    """Row divergence of Pa: the vector with components sum_j d(Pa)_ij/dx_j.

    Uses the field's analytic override when present, otherwise central
    differences of :func:`eval_projection`.
    """
    x = np.asarray(x, dtype=float)
    if use_analytic and field.div_pa is not None:
        return np.asarray(field.div_pa(x), dtype=float)
    if h_fd is None:
        h_fd = findiff.step_size(x)
    div = np.zeros(model.d)
    for j in range(model.d):
        dPa = findiff.partial(lambda y: eval_projection(model, field, y).Pa, x, j, h_fd)
        div += dPa[:, j]
    return div


def xi_hessians(model, x, h_fd=None):
    """Hessians of each constraint component, via differences of grad_xi."""
    x = np.asarray(x, dtype=float)
    if h_fd is None:
        h_fd = findiff.step_size(x)
    tensors = []
    for alpha in range(model.k):
        col = lambda y, a=alpha: np.asarray(model.grad_xi(y), dtype=float).reshape(
            model.d, model.k
        )[:, a]
        coarse = findiff.jacobian(col, x, h_fd)
        fine = findiff.jacobian(col, x, h_fd / 2.0)
        H = (4.0 * fine - coarse) / 3.0
        tensors.append(0.5 * (H + H.T))
    return np.stack(tensors, axis=0)


def eval_mean_curvature_id(model, field, x, h_fd=None):
    """Mean curvature vector of the surface for the identity mobility.

    H = -[Psi^{-1}_{ag} P_ij d2_ij xi_a] grad xi_g; normal to the surface.
    """
    x = np.asarray(x, dtype=float)
    if not field.is_identity_at(x):
        raise RequiresIdentityMetric(f"mobility is not the identity at {x}")
    pd = eval_projection(model, field, x)
    G = _checked_grad_xi(model, x)
    hess = xi_hessians(model, x, h_fd)
    contracted = np.array([np.sum(pd.P * hess[alpha]) for alpha in range(model.k)])
    coeff = cho_solve(pd.psi_chol, contracted)
    return -G @ coeff


def generator_apply(model, field, f, x, grad_f=None, hess_f=None, beta=None, h_fd=None):
    """Apply the sampling generator of the constrained diffusion to f at x.

    L f = -(Pa grad U) . grad f + (1/beta) div(Pa) . grad f
          + (1/beta) Pa : hess f
    with derivatives of f falling back to finite differences.
    """
    x = np.asarray(x, dtype=float)
    if beta is None:
        beta = field.beta
    pd = eval_projection(model, field, x)
    gU = np.asarray(field.grad_U(x), dtype=float)
    div_pa = eval_pa_divergence(model, field, x, h_fd=h_fd)
    gf = np.asarray(grad_f(x), dtype=float) if grad_f is not None else findiff.gradient(f, x, h_fd)
    Hf = np.asarray(hess_f(x), dtype=float) if hess_f is not None else findiff.hessian(f, x, h_fd)
    first = -float((pd.Pa @ gU) @ gf)
    second = float(div_pa @ gf) / beta
    third = float(np.sum(pd.Pa * Hf)) / beta
    return first + second + third
