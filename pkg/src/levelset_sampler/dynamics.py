"""One-step kernels for the five sampling schemes and the chain runner.

Constrained kinds advance by an unconstrained half step followed by a
constraint map back onto the level set; ``em_intrinsic`` discretizes the
intrinsic diffusion directly (and drifts off the surface); ``soft`` replaces
the constraint by a stiff restoring force.
"""

import time
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import findiff, flows
from .errors import ChainAborted, LevelsetError, StiffnessBlowup
from .flows import FlowConfig
from .noise import GaussianNoise

KINDS = ("theta", "theta_skew", "pi", "em_intrinsic", "soft")

# Codes shared with the compiled kernels.
OBSERVABLE_CODES = {"const1": 0, "x1": 1, "x2": 2, "x3": 3, "x1sq": 4, "x2sq": 5, "angle": 6}

NOISE_CHUNK = 1 << 16


def observable_fn(name, model):
    if name == "const1":
        return lambda x: 1.0
    if name == "x1":
        return lambda x: float(x[0])
    if name == "x2":
        return lambda x: float(x[1])
    if name == "x3":
        return lambda x: float(x[2])
    if name == "x1sq":
        return lambda x: float(x[0]) ** 2
    if name == "x2sq":
        return lambda x: float(x[1]) ** 2
    if name == "angle":
        if model.chart is None:
            raise LevelsetError("angle observable needs a chart")
        return model.chart.angle
    raise LevelsetError(f"unknown observable {name!r}")


def resolve_observables(observables, model):
    """Accept names or callables; return (names, fns, codes-or-None)."""
    names, fns, codes = [], [], []
    for i, obs in enumerate(observables):
        if isinstance(obs, str):
            names.append(obs)
            fns.append(observable_fn(obs, model))
            codes.append(OBSERVABLE_CODES.get(obs))
        else:
            names.append(getattr(obs, "__name__", f"obs{i}"))
            fns.append(obs)
            codes.append(None)
    return names, fns, codes


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection plus everything needed to reproduce a chain."""

    kind: str
    h: float
    n: int
    seed: int
    beta: Optional[float] = None  # None: use the field's beta
    A: Optional[np.ndarray] = None
    eps_soft: Optional[float] = None
    flow: FlowConfig = dc_field(default_factory=FlowConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.h <= 0 or self.n < 1:
            raise ValueError("h must be positive and n >= 1")
        if (self.A is not None) != (self.kind == "theta_skew"):
            raise ValueError("A is required exactly for the theta_skew kind")
        if (self.eps_soft is not None) != (self.kind == "soft"):
            raise ValueError("eps_soft is required exactly for the soft kind")
        if self.eps_soft is not None and self.eps_soft <= 0:
            raise ValueError("eps_soft must be positive")


@dataclass
class ChainState:
    x: np.ndarray
    step_index: int = 0
    cum_flow_iters: int = 0


def effective_beta(field, cfg):
    return cfg.beta if cfg.beta is not None else field.beta


def drift(model, field, x, beta=None, h_fd=None):
    """Unconstrained drift b = -a grad U + (1/beta) div_a."""
    x = np.asarray(x, dtype=float)
    if beta is None:
        beta = field.beta
    a = np.asarray(field.a(x), dtype=float)
    b = -(a @ np.asarray(field.grad_U(x), dtype=float))
    if field.div_a is not None:
        b += np.asarray(field.div_a(x), dtype=float) / beta
    else:
        if h_fd is None:
            h_fd = findiff.step_size(x)
        div = np.zeros(model.d)
        for j in range(model.d):
            da = findiff.partial(field.a, x, j, h_fd)
            div += da[:, j]
        b += div / beta
    return b


def _half_step(model, field, cfg, x, eta, beta, extra_drift=None):
    b = drift(model, field, x, beta=beta)
    if extra_drift is not None:
        b = b + extra_drift
    sigma = np.asarray(field.sigma(x), dtype=float)
    return x + b * cfg.h + np.sqrt(2.0 * cfg.h / beta) * (sigma @ np.asarray(eta))


def _eta_for(cfg, model, state, eta):
    if eta is not None:
        return np.asarray(eta, dtype=float)
    return GaussianNoise(cfg.seed, model.d).single(state.step_index)


def step_theta(state, model, field, cfg, eta=None):
    beta = effective_beta(field, cfg)
    eta = _eta_for(cfg, model, state, eta)
    half = _half_step(model, field, cfg, state.x, eta, beta)
    res = flows.theta(model, field, half, cfg.flow)
    return ChainState(
        x=res.point,
        step_index=state.step_index + 1,
        cum_flow_iters=state.cum_flow_iters + res.iters,
    )


def step_theta_skew(state, model, field, cfg, eta=None):
    beta = effective_beta(field, cfg)
    eta = _eta_for(cfg, model, state, eta)
    extra = np.asarray(cfg.A, dtype=float) @ np.asarray(field.grad_U(state.x), dtype=float)
    half = _half_step(model, field, cfg, state.x, eta, beta, extra_drift=extra)
    res = flows.theta_skew(model, field, half, cfg.A, cfg.flow)
    return ChainState(
        x=res.point,
        step_index=state.step_index + 1,
        cum_flow_iters=state.cum_flow_iters + res.iters,
    )


def step_pi(state, model, field, cfg, eta=None):
    beta = effective_beta(field, cfg)
    eta = _eta_for(cfg, model, state, eta)
    half = _half_step(model, field, cfg, state.x, eta, beta)
    res = flows.pi_nearest(model, half, cfg.flow, field=field)
    return ChainState(
        x=res.point,
        step_index=state.step_index + 1,
        cum_flow_iters=state.cum_flow_iters + res.iters,
    )


def step_em_intrinsic(state, model, field, cfg, eta=None):
    from .geometry import eval_pa_divergence, eval_projection

    beta = effective_beta(field, cfg)
    eta = _eta_for(cfg, model, state, eta)
    x = state.x
    pd = eval_projection(model, field, x)
    div_pa = eval_pa_divergence(model, field, x)
    b = -(pd.Pa @ np.asarray(field.grad_U(x), dtype=float)) + div_pa / beta
    Psig = pd.P @ np.asarray(field.sigma(x), dtype=float)
    x_new = x + b * cfg.h + np.sqrt(2.0 * cfg.h / beta) * (Psig @ eta)
    return ChainState(
        x=x_new, step_index=state.step_index + 1, cum_flow_iters=state.cum_flow_iters
    )


def soft_blowup_radius(model, cfg, beta):
    """Instability threshold for the soft chain.

    The soft dynamics equilibrates at |xi| ~ sqrt(eps/beta), so excursions up
    to a 12-sigma envelope beyond the tube are statistics, not blowup; only
    growth past that indicates the step size is too large for eps.
    """
    return model.r_tube + 12.0 * np.sqrt(cfg.eps_soft / beta)


def step_soft(state, model, field, cfg, eta=None):
    beta = effective_beta(field, cfg)
    eta = _eta_for(cfg, model, state, eta)
    x = state.x
    G = np.asarray(model.grad_xi(x), dtype=float).reshape(model.d, model.k)
    grad_F = G @ np.atleast_1d(model.xi(x))
    a = np.asarray(field.a(x), dtype=float)
    extra = -(a @ grad_F) / cfg.eps_soft
    half = _half_step(model, field, cfg, x, eta, beta, extra_drift=extra)
    if model.xi_norm(half) > soft_blowup_radius(model, cfg, beta):
        raise StiffnessBlowup(
            f"soft chain left the tube at step {state.step_index}"
        )
    return ChainState(
        x=half, step_index=state.step_index + 1, cum_flow_iters=state.cum_flow_iters
    )


_STEPPERS = {
    "theta": step_theta,
    "theta_skew": step_theta_skew,
    "pi": step_pi,
    "em_intrinsic": step_em_intrinsic,
    "soft": step_soft,
}


@dataclass
class ChainReport:
    """Trajectory statistics of one chain (or a merge of several)."""

    kind: str
    h: float
    n: int
    seed: int
    beta: float
    averages: Dict[str, float]
    max_xi: float
    total_flow_iters: int
    steps_counted: int
    final_x: np.ndarray
    angle_counts: Optional[np.ndarray] = None
    angle_domain: Optional[Tuple[float, float]] = None
    samples: Optional[np.ndarray] = None  # columns: step, x..., |xi|, flow_iters
    waivers: Tuple[str, ...] = ()
    wall_time: float = 0.0

    @property
    def mean_flow_iters(self):
        return self.total_flow_iters / self.n

    @staticmethod
    def merge(reports):
        """Combine reports of independent chains; order-independent."""
        reports = sorted(reports, key=lambda r: r.seed)
        total_steps = sum(r.steps_counted for r in reports)
        names = reports[0].averages.keys()
        averages = {
            k: sum(r.averages[k] * r.steps_counted for r in reports) / total_steps
            for k in names
        }
        counts = None
        if reports[0].angle_counts is not None:
            counts = np.sum([r.angle_counts for r in reports], axis=0)
        return ChainReport(
            kind=reports[0].kind,
            h=reports[0].h,
            n=sum(r.n for r in reports),
            seed=reports[0].seed,
            beta=reports[0].beta,
            averages=averages,
            max_xi=max(r.max_xi for r in reports),
            total_flow_iters=sum(r.total_flow_iters for r in reports),
            steps_counted=total_steps,
            final_x=reports[-1].final_x,
            angle_counts=counts,
            angle_domain=reports[0].angle_domain,
            waivers=reports[0].waivers,
            wall_time=sum(r.wall_time for r in reports),
        )


def _angle_bin(angle, lo, width, bins):
    idx = int((angle - lo) / width)
    if idx < 0:
        return 0
    if idx >= bins:
        return bins - 1
    return idx


def run_chain(
    model,
    field,
    cfg,
    observables=("const1",),
    x0=None,
    burn_in=0.0,
    angle_bins=100,
    record_samples=False,
    use_fast=True,
):
    """Run ``cfg.n`` steps of the configured kernel from ``x0``.

    Averages follow the running-average convention over the pre-step states
    x^(0) .. x^(n-1); with ``burn_in`` in (0, 1) the first ``burn_in * n``
    of those states are discarded. Fully deterministic given the seed.
    """
    t0 = time.perf_counter()
    beta = effective_beta(field, cfg)
    if x0 is None:
        if model.chart is None:
            raise LevelsetError("x0 is required for models without a chart")
        x0 = model.chart.to_point([0.5 * (lo + hi) for lo, hi in zip(model.chart.lows, model.chart.highs)])
    x0 = np.asarray(x0, dtype=float)
    names, fns, codes = resolve_observables(observables, model)
    skip = int(burn_in * cfg.n)
    waivers = ()
    if model.name == "linear":
        waivers = ("level set is non-compact: ergodicity assumptions waived",)

    if use_fast and model.fast_tag is not None and all(c is not None for c in codes):
        from . import _fast

        if _fast.supports(model, field, cfg):
            out = _fast.run_chain_fast(
                model, field, cfg, beta, x0, codes, skip, angle_bins, record_samples
            )
            if out is not None:
                averages = dict(zip(names, out["averages"]))
                return ChainReport(
                    kind=cfg.kind,
                    h=cfg.h,
                    n=cfg.n,
                    seed=cfg.seed,
                    beta=beta,
                    averages=averages,
                    max_xi=out["max_xi"],
                    total_flow_iters=out["total_flow_iters"],
                    steps_counted=cfg.n - skip,
                    final_x=out["final_x"],
                    angle_counts=out["angle_counts"],
                    angle_domain=out["angle_domain"],
                    samples=out["samples"],
                    waivers=waivers,
                    wall_time=time.perf_counter() - t0,
                )

    stepper = _STEPPERS[cfg.kind]
    noise = GaussianNoise(cfg.seed, model.d)
    state = ChainState(x=x0)
    sums = np.zeros(len(fns))
    counts = None
    domain = None
    if model.chart is not None:
        domain = model.chart.angle_domain
        counts = np.zeros(angle_bins, dtype=np.int64)
        width = (domain[1] - domain[0]) / angle_bins
    max_xi = model.xi_norm(x0)
    samples = np.empty((cfg.n, model.d + 3)) if record_samples else None
    prev_iters = 0
    for start in range(0, cfg.n, NOISE_CHUNK):
        m = min(NOISE_CHUNK, cfg.n - start)
        etas = noise.steps(start, m)
        for i in range(m):
            l = start + i
            x = state.x
            if l >= skip:
                for j, fn in enumerate(fns):
                    sums[j] += fn(x)
                if counts is not None:
                    ang = model.chart.angle(x)
                    counts[_angle_bin(ang, domain[0], width, angle_bins)] += 1
            if record_samples:
                xin = model.xi_norm(x)
                samples[l, 0] = l
                samples[l, 1 : 1 + model.d] = x
                samples[l, 1 + model.d] = xin
                samples[l, 2 + model.d] = state.cum_flow_iters - prev_iters
            prev_iters = state.cum_flow_iters
            try:
                state = stepper(state, model, field, cfg, eta=etas[i])
            except LevelsetError as exc:
                raise ChainAborted(l, exc) from exc
            max_xi = max(max_xi, model.xi_norm(state.x))
    averages = dict(zip(names, sums / (cfg.n - skip)))
    return ChainReport(
        kind=cfg.kind,
        h=cfg.h,
        n=cfg.n,
        seed=cfg.seed,
        beta=beta,
        averages=averages,
        max_xi=max_xi,
        total_flow_iters=state.cum_flow_iters,
        steps_counted=cfg.n - skip,
        final_x=state.x,
        angle_counts=counts,
        angle_domain=domain,
        samples=samples,
        waivers=waivers,
        wall_time=time.perf_counter() - t0,
    )
