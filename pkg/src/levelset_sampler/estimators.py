"""Statistical post-processing: densities, distances, and error-law sweeps."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from .dynamics import ChainReport, SchemeConfig, run_chain
from .errors import DomainMismatch, UnknownModel
from .flows import FlowConfig

TWO_PI = 2.0 * math.pi
QUAD_TOL = 1e-12


@dataclass
class AngleHistogram:
    """Binned empirical distribution of the chart angle."""

    bins: int
    counts: np.ndarray
    domain: Tuple[float, float]

    @classmethod
    def from_report(cls, report):
        if report.angle_counts is None:
            raise DomainMismatch("chain report carries no angle counts")
        return cls(
            bins=len(report.angle_counts),
            counts=np.asarray(report.angle_counts),
            domain=report.angle_domain,
        )

    @property
    def width(self):
        return (self.domain[1] - self.domain[0]) / self.bins

    @property
    def centers(self):
        return self.domain[0] + (np.arange(self.bins) + 0.5) * self.width

    def probabilities(self):
        total = self.counts.sum()
        return self.counts / total

    def density(self):
        return self.probabilities() / self.width


def _mu2_weight_ellipse(theta, c):
    return math.sqrt(c**2 * math.sin(theta) ** 2 + math.cos(theta) ** 2)


def _sphere_weight(theta, beta, eps):
    return math.exp(-beta * theta**2 / (2.0 * eps)) * math.cos(theta)


def _unnormalized(model_id, measure, c, beta, eps):
    if model_id == "ellipse":
        if measure == "mu1":
            return (lambda t: 1.0), (0.0, TWO_PI)
        if measure == "mu2":
            return (lambda t: _mu2_weight_ellipse(t, c)), (0.0, TWO_PI)
    if model_id in ("sphere_id", "sphere_precond"):
        # mu1 = mu2 on the unit sphere; the angle marginal is the same
        if measure in ("mu1", "mu2"):
            if eps is None:
                raise UnknownModel("sphere reference density needs eps")
            return (lambda t: _sphere_weight(t, beta, eps)), (-np.pi / 2, np.pi / 2)
    raise UnknownModel(f"no reference density for ({model_id!r}, {measure!r})")


@lru_cache(maxsize=None)
def _norm_const(model_id, measure, c, beta, eps):
    w, (lo, hi) = _unnormalized(model_id, measure, c, beta, eps)
    val, _ = quad(w, lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400)
    return val


def reference_density(model_id, measure, theta, c=3.0, beta=1.0, eps=None):
    """Normalized angle density of the target measure for a built-in model."""
    w, _ = _unnormalized(model_id, measure, c, beta, eps)
    Z = _norm_const(model_id, measure, c, beta, eps)
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    vals = np.array([w(t) for t in theta_arr]) / Z
    return vals if np.ndim(theta) else float(vals[0])


def reference_domain(model_id, c=3.0, beta=1.0, eps=None):
    _, dom = _unnormalized(model_id, "mu1", c, beta, eps)
    return dom


def reference_bin_probs(model_id, measure, bins, c=3.0, beta=1.0, eps=None):
    """Exact per-bin probabilities of the reference measure."""
    w, (lo, hi) = _unnormalized(model_id, measure, c, beta, eps)
    Z = _norm_const(model_id, measure, c, beta, eps)
    edges = np.linspace(lo, hi, bins + 1)
    probs = np.empty(bins)
    for b in range(bins):
        val, _ = quad(w, edges[b], edges[b + 1], epsabs=QUAD_TOL, epsrel=QUAD_TOL)
        probs[b] = val / Z
    return probs


def tv_distance(p, q):
    """Total-variation distance between two probability vectors."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def density_distance(hist, model_id, measure, c=3.0, beta=1.0, eps=None):
    """TV distance between a binned empirical density and the binned reference."""
    dom = reference_domain(model_id, c=c, beta=beta, eps=eps)
    if not np.allclose(hist.domain, dom, atol=1e-12):
        raise DomainMismatch(f"histogram domain {hist.domain} != model domain {dom}")
    ref = reference_bin_probs(model_id, measure, hist.bins, c=c, beta=beta, eps=eps)
    return tv_distance(hist.probabilities(), ref)


def reference_average(model_id, measure, f_of_angle, c=3.0, beta=1.0, eps=None):
    """Quadrature mean of an angle observable under the target measure."""
    w, (lo, hi) = _unnormalized(model_id, measure, c, beta, eps)
    Z = _norm_const(model_id, measure, c, beta, eps)
    val, _ = quad(
        lambda t: f_of_angle(t) * w(t), lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400
    )
    return val / Z


@dataclass
class SweepCell:
    h: float
    T: float
    n: int
    fhats: List[float]
    bias: float
    mse: float
    variance: float


@dataclass
class ConvergenceReport:
    f_bar: float
    replicas: int
    cells: List[SweepCell]
    bias_slope: Optional[float]
    mse_slope: Optional[float]


def _fit_slope(xs, ys):
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0.0):
        return None  # log-log fit undefined for exact zeros
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(ys), 1)[0])


def _run_replica(args):
    model, field, cfg, observable, x0, burn_in = args
    rep = run_chain(model, field, cfg, observables=(observable,), x0=x0, burn_in=burn_in)
    return rep.averages[observable]


def error_sweep(
    model,
    field,
    kind,
    observable,
    h_list,
    T_list,
    replicas,
    f_bar,
    seed0=0,
    x0=None,
    flow=None,
    beta=None,
    burn_in=0.01,
    threads=1,
    A=None,
    eps_soft=None,
):
    """Replica chains on the (h, T) grid; bias and MSE against ``f_bar``.

    The bias-vs-h slope is fitted at the largest T, the MSE-vs-1/T slope at
    the smallest h. Replica r of any cell uses seed ``seed0 + r``; results
    are aggregated in replica order regardless of scheduling.
    """
    if replicas < 8:
        raise ValueError("need at least 8 replicas per cell")
    flow = flow or FlowConfig()
    cells = []
    for h in sorted(h_list, reverse=True):
        for T in sorted(T_list):
            n = int(round(T / h))
            jobs = []
            for r in range(replicas):
                cfg = SchemeConfig(
                    kind=kind,
                    h=h,
                    n=n,
                    seed=seed0 + r,
                    beta=beta,
                    A=A,
                    eps_soft=eps_soft,
                    flow=flow,
                )
                jobs.append((model, field, cfg, observable, x0, burn_in))
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as ex:
                    fhats = list(ex.map(_run_replica, jobs))
            else:
                fhats = [_run_replica(j) for j in jobs]
            arr = np.asarray(fhats)
            cells.append(
                SweepCell(
                    h=h,
                    T=T,
                    n=n,
                    fhats=fhats,
                    bias=float(np.mean(arr) - f_bar),
                    mse=float(np.mean((arr - f_bar) ** 2)),
                    variance=float(np.var(arr, ddof=1)),
                )
            )
    T_max = max(T_list)
    h_min = min(h_list)
    bias_cells = [c for c in cells if c.T == T_max]
    mse_cells = [c for c in cells if c.h == h_min]
    bias_slope = (
        _fit_slope([c.h for c in bias_cells], [abs(c.bias) for c in bias_cells])
        if len(bias_cells) >= 2
        else None
    )
    mse_slope = (
        _fit_slope([1.0 / c.T for c in mse_cells], [c.mse for c in mse_cells])
        if len(mse_cells) >= 2
        else None
    )
    return ConvergenceReport(
        f_bar=f_bar,
        replicas=replicas,
        cells=cells,
        bias_slope=bias_slope,
        mse_slope=mse_slope,
    )


@dataclass
class SoftRow:
    eps: float
    h: float
    n: int
    average: float
    abs_error: float
    stderr: float


def soft_convergence_check(
    model,
    field,
    observable,
    eps_list,
    T,
    replicas,
    f_bar,
    seed0=0,
    x0=None,
    h_over_eps=0.1,
    beta=None,
    burn_in=0.01,
    threads=1,
):
    """Long-run soft-scheme averages for each eps; h is tied to eps.

    Returns one row per eps with the replica-mean average, its absolute
    error against ``f_bar``, and the replica standard error.
    """
    rows = []
    for eps in sorted(eps_list, reverse=True):
        h = eps * h_over_eps
        n = int(round(T / h))
        jobs = []
        for r in range(replicas):
            cfg = SchemeConfig(
                kind="soft", h=h, n=n, seed=seed0 + r, beta=beta, eps_soft=eps
            )
            jobs.append((model, field, cfg, observable, x0, burn_in))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                fhats = np.asarray(list(ex.map(_run_replica, jobs)))
        else:
            fhats = np.asarray([_run_replica(j) for j in jobs])
        avg = float(np.mean(fhats))
        rows.append(
            SoftRow(
                eps=eps,
                h=h,
                n=n,
                average=avg,
                abs_error=abs(avg - f_bar),
                stderr=float(np.std(fhats, ddof=1) / math.sqrt(replicas)),
            )
        )
    return rows
