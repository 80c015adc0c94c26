"""Compiled chain kernels for the built-in models.

These mirror the generic steppers in :mod:`dynamics` op-for-op (same
Runge-Kutta stages, same stop criteria, same accumulation order) so that a
fast chain and a generic chain agree to rounding on matched noise. Noise is
generated in chunks by the counter-based source and consumed in order, so
results are independent of the chunk size.
"""

import math

import numpy as np
from numba import njit

from .noise import GaussianNoise

TWO_PI = 2.0 * math.pi

STATUS_OK = 0
STATUS_FLOW_DIVERGED = 1
STATUS_MAX_ITERS = 2
STATUS_BLOWUP = 3

_DIVERGENCE_PATIENCE = 10


@njit(cache=True, nogil=True, inline="always")
def _ellipse_xi(x0, x1, c2):
    return 0.5 * (x0 * x0 / c2 + x1 * x1 - 1.0)


@njit(cache=True, nogil=True)
def _ellipse_flow(x0, x1, c2, skew, dt0, growth, eps_tol, max_iters):
    """Descent flow y' = -xi (I - A) grad_xi to |xi| < eps_tol; returns status."""
    y0, y1 = x0, x1
    xin = abs(_ellipse_xi(y0, y1, c2))
    if xin < eps_tol:
        return y0, y1, 0, STATUS_OK
    dt = dt0
    inc = 0
    for it in range(1, max_iters + 1):
        xi = _ellipse_xi(y0, y1, c2)
        g0 = y0 / c2
        g1 = y1
        k1_0 = -xi * (g0 - skew * g1)
        k1_1 = -xi * (skew * g0 + g1)
        z0 = y0 + 0.5 * dt * k1_0
        z1 = y1 + 0.5 * dt * k1_1
        xi = _ellipse_xi(z0, z1, c2)
        g0 = z0 / c2
        g1 = z1
        k2_0 = -xi * (g0 - skew * g1)
        k2_1 = -xi * (skew * g0 + g1)
        z0 = y0 + 0.75 * dt * k2_0
        z1 = y1 + 0.75 * dt * k2_1
        xi = _ellipse_xi(z0, z1, c2)
        g0 = z0 / c2
        g1 = z1
        k3_0 = -xi * (g0 - skew * g1)
        k3_1 = -xi * (skew * g0 + g1)
        y0 = y0 + dt * (2.0 * k1_0 + 3.0 * k2_0 + 4.0 * k3_0) / 9.0
        y1 = y1 + dt * (2.0 * k1_1 + 3.0 * k2_1 + 4.0 * k3_1) / 9.0
        new_norm = abs(_ellipse_xi(y0, y1, c2))
        if new_norm < eps_tol:
            return y0, y1, it, STATUS_OK
        if new_norm > xin or not math.isfinite(new_norm):
            inc += 1
            if inc >= _DIVERGENCE_PATIENCE or not math.isfinite(new_norm):
                return y0, y1, it, STATUS_FLOW_DIVERGED
        else:
            inc = 0
        xin = new_norm
        dt *= growth
    return y0, y1, max_iters, STATUS_FLOW_DIVERGED


@njit(cache=True, nogil=True)
def _ellipse_pi(x0, x1, c, gd_step, gd_tol, max_iters):
    """Gradient descent on the parametrized squared distance; returns iters."""
    th = math.atan2(x1, x0 / c)
    for it in range(1, max_iters + 1):
        p0 = c * math.cos(th)
        p1 = math.sin(th)
        grad = 2.0 * ((p0 - x0) * (-c * math.sin(th)) + (p1 - x1) * math.cos(th))
        if abs(grad) < gd_tol:
            return p0, p1, it - 1, STATUS_OK
        th -= gd_step * grad
    return c * math.cos(th), math.sin(th), max_iters, STATUS_MAX_ITERS


@njit(cache=True, nogil=True, inline="always")
def _obs_value_2d(code, x0, x1, c):
    if code == 0:
        return 1.0
    if code == 1:
        return x0
    if code == 2:
        return x1
    if code == 4:
        return x0 * x0
    if code == 5:
        return x1 * x1
    # angle
    ang = math.atan2(x1, x0 / c) % TWO_PI
    return ang


@njit(cache=True, nogil=True)
def _ellipse_chain_chunk(
    mode,  # 0: theta/theta_skew, 1: pi, 2: em_intrinsic, 3: soft
    x0,
    x1,
    c,
    skew,
    h,
    beta,
    eps_soft,
    r_tube,
    dt0,
    growth,
    eps_tol,
    max_iters,
    gd_step,
    gd_tol,
    eta,
    l_start,
    skip,
    obs_codes,
    obs_sums,
    hist,
    record,
    samples,
    prev_step_iters,
):
    c2 = c * c
    c4 = c2 * c2
    c6 = c4 * c2
    bins = hist.shape[0]
    width = TWO_PI / bins
    noise_scale = math.sqrt(2.0 * h / beta)
    max_xi = 0.0
    total_iters = 0
    step_iters = prev_step_iters
    m = eta.shape[0]
    for i in range(m):
        l = l_start + i
        if l >= skip:
            for j in range(obs_codes.shape[0]):
                obs_sums[j] += _obs_value_2d(obs_codes[j], x0, x1, c)
            ang = math.atan2(x1, x0 / c) % TWO_PI
            idx = int(ang / width)
            if idx >= bins:
                idx = bins - 1
            if idx < 0:
                idx = 0
            hist[idx] += 1
        xin = abs(_ellipse_xi(x0, x1, c2))
        if xin > max_xi:
            max_xi = xin
        if record:
            samples[l, 0] = l
            samples[l, 1] = x0
            samples[l, 2] = x1
            samples[l, 3] = xin
            samples[l, 4] = step_iters
        if mode == 0:
            h0 = x0 + noise_scale * eta[i, 0]
            h1 = x1 + noise_scale * eta[i, 1]
            x0, x1, iters, status = _ellipse_flow(
                h0, h1, c2, skew, dt0, growth, eps_tol, max_iters
            )
            if status != STATUS_OK:
                return x0, x1, max_xi, total_iters, status, l, step_iters
            total_iters += iters
            step_iters = iters
        elif mode == 1:
            h0 = x0 + noise_scale * eta[i, 0]
            h1 = x1 + noise_scale * eta[i, 1]
            x0, x1, iters, status = _ellipse_pi(h0, h1, c, gd_step, gd_tol, max_iters)
            if status != STATUS_OK:
                return x0, x1, max_xi, total_iters, status, l, step_iters
            total_iters += iters
            step_iters = iters
        elif mode == 2:
            den = x0 * x0 + c4 * x1 * x1
            p11 = c4 * x1 * x1 / den
            p12 = -c2 * x0 * x1 / den
            p22 = x0 * x0 / den
            den2 = den * den
            b0 = (c4 * (c2 - 2.0) * x0 * x1 * x1 - c2 * x0 * x0 * x0) / den2 / beta
            b1 = (c2 * (1.0 - 2.0 * c2) * x0 * x0 * x1 - c6 * x1 * x1 * x1) / den2 / beta
            n0 = p11 * eta[i, 0] + p12 * eta[i, 1]
            n1 = p12 * eta[i, 0] + p22 * eta[i, 1]
            x0 = x0 + b0 * h + noise_scale * n0
            x1 = x1 + b1 * h + noise_scale * n1
        else:
            xi = _ellipse_xi(x0, x1, c2)
            e0 = -(xi * x0 / c2) / eps_soft
            e1 = -(xi * x1) / eps_soft
            x0 = x0 + e0 * h + noise_scale * eta[i, 0]
            x1 = x1 + e1 * h + noise_scale * eta[i, 1]
            if abs(_ellipse_xi(x0, x1, c2)) > r_tube:
                return x0, x1, max_xi, total_iters, STATUS_BLOWUP, l, step_iters
        xin = abs(_ellipse_xi(x0, x1, c2))
        if xin > max_xi:
            max_xi = xin
    return x0, x1, max_xi, total_iters, STATUS_OK, -1, step_iters


@njit(cache=True, nogil=True, inline="always")
def _sphere_angle_grad(x0, x1, x2):
    rho2 = x0 * x0 + x1 * x1 + x2 * x2
    r = math.sqrt(x0 * x0 + x1 * x1)
    return -x0 * x2 / r / rho2, -x1 * x2 / r / rho2, r / rho2


@njit(cache=True, nogil=True)
def _sphere_flow(x0, x1, x2, dt0, growth, eps_tol, max_iters):
    """Radial descent flow y' = -xi (2 xi + 1) y for the sphere constraint."""
    y0, y1, y2 = x0, x1, x2
    xi = 0.5 * (y0 * y0 + y1 * y1 + y2 * y2 - 1.0)
    xin = abs(xi)
    if xin < eps_tol:
        return y0, y1, y2, 0, STATUS_OK
    dt = dt0
    inc = 0
    for it in range(1, max_iters + 1):
        xi = 0.5 * (y0 * y0 + y1 * y1 + y2 * y2 - 1.0)
        f = -xi * (2.0 * xi + 1.0)
        k1_0, k1_1, k1_2 = f * y0, f * y1, f * y2
        z0, z1, z2 = y0 + 0.5 * dt * k1_0, y1 + 0.5 * dt * k1_1, y2 + 0.5 * dt * k1_2
        xi = 0.5 * (z0 * z0 + z1 * z1 + z2 * z2 - 1.0)
        f = -xi * (2.0 * xi + 1.0)
        k2_0, k2_1, k2_2 = f * z0, f * z1, f * z2
        z0, z1, z2 = y0 + 0.75 * dt * k2_0, y1 + 0.75 * dt * k2_1, y2 + 0.75 * dt * k2_2
        xi = 0.5 * (z0 * z0 + z1 * z1 + z2 * z2 - 1.0)
        f = -xi * (2.0 * xi + 1.0)
        k3_0, k3_1, k3_2 = f * z0, f * z1, f * z2
        y0 = y0 + dt * (2.0 * k1_0 + 3.0 * k2_0 + 4.0 * k3_0) / 9.0
        y1 = y1 + dt * (2.0 * k1_1 + 3.0 * k2_1 + 4.0 * k3_1) / 9.0
        y2 = y2 + dt * (2.0 * k1_2 + 3.0 * k2_2 + 4.0 * k3_2) / 9.0
        new_norm = abs(0.5 * (y0 * y0 + y1 * y1 + y2 * y2 - 1.0))
        if new_norm < eps_tol:
            return y0, y1, y2, it, STATUS_OK
        if new_norm > xin or not math.isfinite(new_norm):
            inc += 1
            if inc >= _DIVERGENCE_PATIENCE or not math.isfinite(new_norm):
                return y0, y1, y2, it, STATUS_FLOW_DIVERGED
        else:
            inc = 0
        xin = new_norm
        dt *= growth
    return y0, y1, y2, max_iters, STATUS_FLOW_DIVERGED


@njit(cache=True, nogil=True)
def _sphere_precond_theta_chunk(
    x0,
    x1,
    x2,
    eps,
    h,
    beta,
    dt0,
    growth,
    eps_tol,
    max_iters,
    eta,
    l_start,
    skip,
    obs_codes,
    obs_sums,
    hist,
    hist_lo,
    hist_width,
    record,
    samples,
    prev_step_iters,
):
    sqrt_eps = math.sqrt(eps)
    noise_scale = math.sqrt(2.0 * h / beta)
    bins = hist.shape[0]
    max_xi = 0.0
    total_iters = 0
    step_iters = prev_step_iters
    m = eta.shape[0]
    for i in range(m):
        l = l_start + i
        rho = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
        theta = math.asin(x2 / rho)
        if l >= skip:
            for j in range(obs_codes.shape[0]):
                code = obs_codes[j]
                if code == 0:
                    obs_sums[j] += 1.0
                elif code == 1:
                    obs_sums[j] += x0
                elif code == 2:
                    obs_sums[j] += x1
                elif code == 3:
                    obs_sums[j] += x2
                elif code == 4:
                    obs_sums[j] += x0 * x0
                elif code == 5:
                    obs_sums[j] += x1 * x1
                else:
                    obs_sums[j] += theta
            idx = int((theta - hist_lo) / hist_width)
            if idx >= bins:
                idx = bins - 1
            if idx < 0:
                idx = 0
            hist[idx] += 1
        xi = 0.5 * (rho * rho - 1.0)
        xin = abs(xi)
        if xin > max_xi:
            max_xi = xin
        if record:
            samples[l, 0] = l
            samples[l, 1] = x0
            samples[l, 2] = x1
            samples[l, 3] = x2
            samples[l, 4] = xin
            samples[l, 5] = step_iters
        # drift b = -theta rho^2 grad(theta) + div_a / beta
        g0, g1, g2 = _sphere_angle_grad(x0, x1, x2)
        rho2 = rho * rho
        r2 = x0 * x0 + x1 * x1
        b0 = -theta * rho2 * g0 + ((3.0 - eps) * x0 + eps * x0 * x2 * x2 / r2) / beta
        b1 = -theta * rho2 * g1 + ((3.0 - eps) * x1 + eps * x1 * x2 * x2 / r2) / beta
        b2 = -theta * rho2 * g2 + ((4.0 - 2.0 * eps) * x2) / beta
        # noise sigma @ eta with columns x, (x1, -x0, 0), sqrt(eps) rho^2 grad(theta)
        e0, e1, e2 = eta[i, 0], eta[i, 1], eta[i, 2]
        n0 = x0 * e0 + x1 * e1 + sqrt_eps * rho2 * g0 * e2
        n1 = x1 * e0 - x0 * e1 + sqrt_eps * rho2 * g1 * e2
        n2 = x2 * e0 + sqrt_eps * rho2 * g2 * e2
        h0 = x0 + b0 * h + noise_scale * n0
        h1 = x1 + b1 * h + noise_scale * n1
        h2 = x2 + b2 * h + noise_scale * n2
        x0, x1, x2, iters, status = _sphere_flow(
            h0, h1, h2, dt0, growth, eps_tol, max_iters
        )
        if status != STATUS_OK:
            return x0, x1, x2, max_xi, total_iters, status, l, step_iters
        total_iters += iters
        step_iters = iters
        xin = abs(0.5 * (x0 * x0 + x1 * x1 + x2 * x2 - 1.0))
        if xin > max_xi:
            max_xi = xin
    return x0, x1, x2, max_xi, total_iters, STATUS_OK, -1, step_iters


_ELLIPSE_MODES = {"theta": 0, "theta_skew": 0, "pi": 1, "em_intrinsic": 2, "soft": 3}

NOISE_CHUNK = 1 << 16


def supports(model, field, cfg):
    if model.fast_tag == "ellipse":
        return cfg.kind in _ELLIPSE_MODES
    if model.fast_tag == "sphere_precond":
        return cfg.kind == "theta"
    return False


def _raise_status(status, step):
    from .errors import ChainAborted, FlowDiverged, MaxIters, StiffnessBlowup

    cause = {
        STATUS_FLOW_DIVERGED: FlowDiverged("constraint flow diverged"),
        STATUS_MAX_ITERS: MaxIters("projection iteration cap reached"),
        STATUS_BLOWUP: StiffnessBlowup("soft chain left the tube"),
    }[status]
    raise ChainAborted(step, cause)


def run_chain_fast(model, field, cfg, beta, x0, codes, skip, angle_bins, record_samples):
    """Chunked driver around the compiled kernels. Returns accumulators."""
    noise = GaussianNoise(cfg.seed, model.d)
    obs_codes = np.array(codes, dtype=np.int64)
    obs_sums = np.zeros(len(codes))
    hist = np.zeros(angle_bins, dtype=np.int64)
    samples = (
        np.empty((cfg.n, model.d + 3)) if record_samples else np.empty((0, model.d + 3))
    )
    fl = cfg.flow
    max_xi = 0.0
    total_iters = 0
    step_iters = 0
    if model.fast_tag == "ellipse":
        c = model.fast_params[0]
        mode = _ELLIPSE_MODES[cfg.kind]
        skew = 0.0
        if cfg.kind == "theta_skew":
            skew = float(np.asarray(cfg.A)[0, 1])
        eps_soft = cfg.eps_soft if cfg.eps_soft is not None else 0.0
        blow_radius = model.r_tube
        if cfg.kind == "soft":
            blow_radius = model.r_tube + 12.0 * math.sqrt(eps_soft / beta)
        x0_, x1_ = float(x0[0]), float(x0[1])
        for start in range(0, cfg.n, NOISE_CHUNK):
            m = min(NOISE_CHUNK, cfg.n - start)
            eta = noise.steps(start, m)
            x0_, x1_, mx, iters, status, fail, step_iters = _ellipse_chain_chunk(
                mode,
                x0_,
                x1_,
                c,
                skew,
                cfg.h,
                beta,
                eps_soft,
                blow_radius,
                fl.dt0,
                fl.growth,
                fl.eps_tol,
                fl.max_iters,
                fl.gd_step,
                fl.gd_tol,
                eta,
                start,
                skip,
                obs_codes,
                obs_sums,
                hist,
                record_samples,
                samples,
                step_iters,
            )
            max_xi = max(max_xi, mx)
            total_iters += iters
            if status != STATUS_OK:
                _raise_status(status, fail)
        final_x = np.array([x0_, x1_])
        domain = (0.0, TWO_PI)
    elif model.fast_tag == "sphere_precond":
        eps = model.fast_params[0]
        lo, hi = model.chart.angle_domain
        width = (hi - lo) / angle_bins
        x0_, x1_, x2_ = float(x0[0]), float(x0[1]), float(x0[2])
        for start in range(0, cfg.n, NOISE_CHUNK):
            m = min(NOISE_CHUNK, cfg.n - start)
            eta = noise.steps(start, m)
            x0_, x1_, x2_, mx, iters, status, fail, step_iters = _sphere_precond_theta_chunk(
                x0_,
                x1_,
                x2_,
                eps,
                cfg.h,
                beta,
                fl.dt0,
                fl.growth,
                fl.eps_tol,
                fl.max_iters,
                eta,
                start,
                skip,
                obs_codes,
                obs_sums,
                hist,
                lo,
                width,
                record_samples,
                samples,
                step_iters,
            )
            max_xi = max(max_xi, mx)
            total_iters += iters
            if status != STATUS_OK:
                _raise_status(status, fail)
        final_x = np.array([x0_, x1_, x2_])
        domain = (lo, hi)
    else:
        return None
    return {
        "averages": obs_sums / (cfg.n - skip),
        "max_xi": max_xi,
        "total_flow_iters": total_iters,
        "final_x": final_x,
        "angle_counts": hist,
        "angle_domain": domain,
        "samples": samples if record_samples else None,
    }
