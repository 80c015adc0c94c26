"""Batch driver: TOML run configs in, CSV/JSON artifacts out.

Subcommands: run, density, sweep, verify. Exit codes: 0 ok, 1 verification
failure, 2 config error, 3 runtime abort.
"""

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import tomli

from . import __version__, estimators, verify
from .dynamics import run_chain, SchemeConfig
from .errors import ChainAborted, ConfigError, LevelsetError
from .flows import FlowConfig
from .models import BuiltinSpec, build, make_ellipse, make_linear, make_sphere

_NUM = (int, float)

# section -> key -> allowed types; unknown keys are rejected
_SCHEMAS = {
    "model": {"id": (str,), "c": _NUM, "d": (int,), "k": (int,), "eps": _NUM, "beta": _NUM, "a": (list,)},
    "scheme": {
        "kind": (str,),
        "h": _NUM,
        "n": (int,),
        "seed": (int,),
        "beta": _NUM,
        "skew": _NUM,
        "A": (list,),
        "eps_soft": _NUM,
    },
    "flow": {
        "dt0": _NUM,
        "growth": _NUM,
        "eps_tol": _NUM,
        "max_iters": (int,),
        "gd_step": _NUM,
        "gd_tol": _NUM,
    },
    "run": {"observables": (list,), "burn_in": _NUM, "bins": (int,), "start": (list,)},
    "sweep": {
        "observable": (str,),
        "h_list": (list,),
        "T_list": (list,),
        "replicas": (int,),
        "measure": (str,),
        "burn_in": _NUM,
        "start": (list,),
    },
}


def load_config(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = tomli.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    for section, content in cfg.items():
        if section not in _SCHEMAS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, value in content.items():
            if key not in _SCHEMAS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if not isinstance(value, _SCHEMAS[section][key]) or isinstance(value, bool):
                raise ConfigError(f"bad type for {section}.{key}")
    return cfg, hashlib.sha256(raw).hexdigest()


def _build_model(cfg):
    mc = cfg.get("model", {})
    if "id" not in mc:
        raise ConfigError("model.id is required")
    spec = BuiltinSpec(
        id=mc["id"],
        d=mc.get("d", 3 if mc["id"].startswith("sphere") else 2),
        k=mc.get("k", 1),
        c=float(mc.get("c", 3.0)),
        eps=mc.get("eps"),
        beta=float(mc.get("beta", 1.0)),
        a=np.asarray(mc["a"], dtype=float) if "a" in mc else None,
    )
    try:
        return spec, build(spec)
    except (ValueError, LevelsetError) as exc:
        raise ConfigError(str(exc)) from exc


def _scheme_config(cfg, model, seed_override=None):
    sc = cfg.get("scheme", {})
    for key in ("kind", "h", "n", "seed"):
        if key not in sc:
            raise ConfigError(f"scheme.{key} is required")
    fl = cfg.get("flow", {})
    try:
        flow = FlowConfig(**fl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad flow config: {exc}") from exc
    A = None
    if "A" in sc:
        A = np.asarray(sc["A"], dtype=float)
    elif "skew" in sc:
        s = float(sc["skew"])
        A = np.array([[0.0, s], [-s, 0.0]])
    if A is not None and sc["kind"] != "theta_skew":
        raise ConfigError("skew matrix given but kind is not theta_skew")
    seed = seed_override if seed_override is not None else sc["seed"]
    try:
        return SchemeConfig(
            kind=sc["kind"],
            h=float(sc["h"]),
            n=int(sc["n"]),
            seed=int(seed),
            beta=float(sc["beta"]) if "beta" in sc else None,
            A=A,
            eps_soft=float(sc["eps_soft"]) if "eps_soft" in sc else None,
            flow=flow,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _start_point(cfg, section, model):
    start = cfg.get(section, {}).get("start")
    return np.asarray(start, dtype=float) if start is not None else None


def _report_dict(cfg_hash, scheme, report):
    return {
        "version": __version__,
        "config_hash": cfg_hash,
        "seed": scheme.seed,
        "platform": {
            "system": platform.system(),
            "machine": platform.machine(),
            "python": platform.python_version(),
        },
        "kind": report.kind,
        "h": report.h,
        "n": report.n,
        "beta": report.beta,
        "averages": report.averages,
        "max_xi": report.max_xi,
        "mean_flow_iters": report.mean_flow_iters,
        "waivers": list(report.waivers),
        "wall_time": report.wall_time,
    }


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_run(config_path, out_dir, seed=None, threads=1):
    cfg, cfg_hash = load_config(config_path)
    _, (model, field) = _build_model(cfg)
    scheme = _scheme_config(cfg, model, seed_override=seed)
    rc = cfg.get("run", {})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        report = run_chain(
            model,
            field,
            scheme,
            observables=tuple(rc.get("observables", ["const1"])),
            x0=_start_point(cfg, "run", model),
            burn_in=float(rc.get("burn_in", 0.0)),
            angle_bins=int(rc.get("bins", 100)),
            record_samples=True,
        )
    except ChainAborted as exc:
        _write_json(
            out / "report.json",
            {
                "version": __version__,
                "config_hash": cfg_hash,
                "seed": scheme.seed,
                "aborted": {"step": exc.step_index, "cause": str(exc.cause)},
                "partial": True,
                "wall_time": time.perf_counter() - t0,
            },
        )
        raise
    d = model.d
    fmt = ["%d"] + ["%.17g"] * (d + 1) + ["%d"]
    header = "step," + ",".join(f"x{i+1}" for i in range(d)) + ",xi_norm,flow_iters"
    np.savetxt(
        out / "samples.csv", report.samples, fmt=fmt, delimiter=",",
        header=header, comments="",
    )
    _write_json(out / "report.json", _report_dict(cfg_hash, scheme, report))
    return report


def cmd_density(config_path, out_dir, seed=None, threads=1):
    cfg, cfg_hash = load_config(config_path)
    spec, (model, field) = _build_model(cfg)
    scheme = _scheme_config(cfg, model, seed_override=seed)
    rc = cfg.get("run", {})
    if model.chart is None:
        raise ConfigError("density command needs a chart-bearing model")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_chain(
        model,
        field,
        scheme,
        observables=tuple(rc.get("observables", ["const1"])),
        x0=_start_point(cfg, "run", model),
        burn_in=float(rc.get("burn_in", 0.0)),
        angle_bins=int(rc.get("bins", 100)),
    )
    hist = estimators.AngleHistogram.from_report(report)
    params = dict(c=spec.c, beta=spec.beta, eps=spec.eps)
    centers = hist.centers
    emp = hist.density()
    ref1 = estimators.reference_density(spec.id, "mu1", centers, **params)
    ref2 = estimators.reference_density(spec.id, "mu2", centers, **params)
    np.savetxt(
        out / "density.csv",
        np.column_stack([centers, emp, ref1, ref2]),
        fmt="%.17g",
        delimiter=",",
        header="bin_center,empirical,mu1,mu2",
        comments="",
    )
    tvs = {
        "tv_mu1": estimators.density_distance(hist, spec.id, "mu1", **params),
        "tv_mu2": estimators.density_distance(hist, spec.id, "mu2", **params),
    }
    payload = _report_dict(cfg_hash, scheme, report)
    payload.update(tvs)
    _write_json(out / "tv.json", payload)
    return tvs


# observable -> function of the chart angle, per model family, used to get
# quadrature references for sweeps
def _angle_observable(model_id, name, c):
    if model_id == "ellipse":
        table = {
            "const1": lambda t: 1.0,
            "x1": lambda t: c * np.cos(t),
            "x2": np.sin,
            "x1sq": lambda t: (c * np.cos(t)) ** 2,
            "x2sq": lambda t: np.sin(t) ** 2,
            "angle": lambda t: t,
        }
    else:
        # sphere marginals: the azimuth integrates out by symmetry
        table = {
            "const1": lambda t: 1.0,
            "x1": lambda t: 0.0,
            "x2": lambda t: 0.0,
            "x3": np.sin,
            "x1sq": lambda t: 0.5 * np.cos(t) ** 2,
            "x2sq": lambda t: 0.5 * np.cos(t) ** 2,
            "angle": lambda t: t,
        }
    if name not in table:
        raise ConfigError(f"no quadrature reference for observable {name!r}")
    return table[name]


def cmd_sweep(config_path, out_dir, seed=None, threads=1):
    cfg, cfg_hash = load_config(config_path)
    spec, (model, field) = _build_model(cfg)
    sw = cfg.get("sweep", {})
    for key in ("observable", "h_list", "T_list", "replicas"):
        if key not in sw:
            raise ConfigError(f"sweep.{key} is required")
    sc = cfg.get("scheme", {})
    if "kind" not in sc:
        raise ConfigError("scheme.kind is required")
    measure = sw.get("measure", "mu2" if sc["kind"] == "pi" else "mu1")
    obs = sw["observable"]
    params = dict(c=spec.c, beta=spec.beta, eps=spec.eps)
    f_bar = estimators.reference_average(
        spec.id, measure, _angle_observable(spec.id, obs, spec.c), **params
    )
    fl = cfg.get("flow", {})
    try:
        flow = FlowConfig(**fl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad flow config: {exc}") from exc
    try:
        report = estimators.error_sweep(
            model,
            field,
            sc["kind"],
            obs,
            [float(h) for h in sw["h_list"]],
            [float(T) for T in sw["T_list"]],
            int(sw["replicas"]),
            f_bar,
            seed0=int(seed if seed is not None else sc.get("seed", 0)),
            x0=_start_point(cfg, "sweep", model),
            flow=flow,
            burn_in=float(sw.get("burn_in", 0.01)),
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for cell in report.cells:
        for r, fhat in enumerate(cell.fhats):
            rows.append((cell.h, cell.T, r, fhat))
    np.savetxt(
        out / "sweep.csv",
        np.asarray(rows),
        fmt=["%.17g", "%.17g", "%d", "%.17g"],
        delimiter=",",
        header="h,T,replica,fhat",
        comments="",
    )
    _write_json(
        out / "slopes.json",
        {
            "version": __version__,
            "config_hash": cfg_hash,
            "f_bar": report.f_bar,
            "bias_slope": report.bias_slope,
            "mse_slope": report.mse_slope,
            "cells": [
                {"h": c.h, "T": c.T, "bias": c.bias, "mse": c.mse, "variance": c.variance}
                for c in report.cells
            ],
        },
    )
    return report


def _verify_models():
    a = np.array([[2.0, 0.5, 0.3], [0.5, 1.5, 0.2], [0.3, 0.2, 1.0]])
    linear_model, linear_field, _ = make_linear(3, 1, a)
    return {
        "ellipse": make_ellipse(3.0),
        "sphere_id": make_sphere(3, precond=False),
        "sphere_precond": make_sphere(3, precond=True, eps=0.01),
        "linear": (linear_model, linear_field),
    }


def cmd_verify(selector="all", corruption=0.0, sample_count=None, seed=0):
    results = verify.run_checks(
        selector, _verify_models(), sample_count=sample_count,
        corruption=corruption, seed=seed,
    )
    if not results:
        raise ConfigError(f"unknown check selector {selector!r}")
    for res in results:
        print(res)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="levelset-sampler", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "density", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default=".")
    v = sub.add_parser("verify")
    v.add_argument("selector", nargs="?", default="all")
    v.add_argument("--corrupt", type=float, default=0.0)
    v.add_argument("--points", type=int, default=None)
    v.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cmd_run(args.config, args.out_dir, seed=args.seed, threads=args.threads)
            return 0
        if args.command == "density":
            cmd_density(args.config, args.out_dir, seed=args.seed, threads=args.threads)
            return 0
        if args.command == "sweep":
            cmd_sweep(args.config, args.out_dir, seed=args.seed, threads=args.threads)
            return 0
        return cmd_verify(
            args.selector, corruption=args.corrupt,
            sample_count=args.points, seed=args.seed,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ChainAborted as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
