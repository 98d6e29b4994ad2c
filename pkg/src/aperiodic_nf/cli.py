"""Command line front end driven by a YAML run configuration.

Example configuration::

    spec:
      n: 1
      center: [1.0]
      caps: {K_max: 8, D_I: 4, D_xi: 3}
      h_poly: {about: origin, terms: [{m: [2], c: 0.5}]}
      f: [{k: [1], m: [0], p: 0, re: 0.5}, {k: [1], m: [0], p: 1, re: 0.25}]
      eps: 1.0e-4
      mu: 1.0e-4
      domain: {delta: 0.1, sigma: 1.0, xi_window: 1.0}
    task: normalize
    normalize: {r: 2, K: 6, module: []}

``f`` is a series literal (records ``k, m, p, re, im``); it is taken as a real
series, i.e. the listed terms are completed by their conjugates. Reports are
written as JSON with sorted keys, tables as CSV.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any

import numpy as np
import yaml

from . import dynamics, estimator, resonance
from .ftseries import Caps, DomainParams, action_polynomial, from_records, to_records
from .normalizer import HamiltonianSpec, SmallDivisorError, normalize

TASKS = ("normalize", "estimate", "geometry", "simulate", "pipeline")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


# ----------------------------------------------------------------------
# validation helpers


def _get(tree: dict, path: str, kind=None, default: Any = ..., check=None, what=""):
    node: Any = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is ...:
                raise ConfigError(f"{path}: missing required field")
            return default
        node = node[part]
    if kind is not None:
        try:
            if kind is int and (isinstance(node, bool) or float(node) != int(node)):
                raise TypeError
            node = kind(node)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected {kind.__name__}, got {node!r}") from None
    if check is not None and not check(node):
        raise ConfigError(f"{path}: {what or 'value out of range'} (got {node!r})")
    return node


def _vector(tree, path, n, default: Any = ...):
    v = _get(tree, path, default=default)
    if v is default and default is not ...:
        return v
    try:
        arr = np.asarray(v, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a list of numbers") from None
    if arr.shape != (n,):
        raise ConfigError(f"{path}: expected {n} components, got {arr.size}")
    return arr


def _module(tree, path, n) -> resonance.ResonanceModule:
    basis = _get(tree, path, default=[])
    try:
        basis = [tuple(int(x) for x in b) for b in basis]
        return resonance.ResonanceModule(n, tuple(basis))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class RunConfig:
    raw: dict
    spec: HamiltonianSpec
    task: str

    @property
    def n(self) -> int:
        return self.spec.n


def load_config(path) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config: file not found: {path}")
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: not parseable: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return data


def build_spec(raw: dict) -> HamiltonianSpec:
    n = _get(raw, "spec.n", int, check=lambda v: v >= 1, what="must be >= 1")
    center = _vector(raw, "spec.center", n)
    caps = Caps(_get(raw, "spec.caps.K_max", int, check=lambda v: v >= 0),
                _get(raw, "spec.caps.D_I", int, check=lambda v: v >= 0),
                _get(raw, "spec.caps.D_xi", int, check=lambda v: v >= 0))
    about = _get(raw, "spec.h_poly.about", str, default="center",
                 check=lambda v: v in ("center", "origin"), what="must be center or origin")
    terms = _get(raw, "spec.h_poly.terms")
    try:
        pairs = [(t["m"], float(t["c"])) for t in terms]
        h = action_polynomial(pairs, n, caps, center, about_origin=about == "origin")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"spec.h_poly.terms: {exc}") from None
    recs = _get(raw, "spec.f")
    try:
        f = from_records(recs, caps=caps, center=center, n=n, real=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"spec.f: {exc}") from None
    eps = _get(raw, "spec.eps", float, check=lambda v: v >= 0, what="must be >= 0")
    mu = _get(raw, "spec.mu", float, check=lambda v: v >= 0, what="must be >= 0")
    try:
        dom = DomainParams(_get(raw, "spec.domain.delta", float),
                           _get(raw, "spec.domain.sigma", float),
                           xi_window=_get(raw, "spec.domain.xi_window", float, default=1.0))
    except ValueError as exc:
        raise ConfigError(f"spec.domain: {exc}") from None
    C_f = _get(raw, "spec.C_f", float, default=None)
    try:
        return HamiltonianSpec(h, f, eps, mu, dom, C_f)
    except ValueError as exc:
        raise ConfigError(f"spec: {exc}") from None


def parse(raw: dict, task: str | None = None) -> RunConfig:
    task = task or _get(raw, "task", str)
    if task not in TASKS:
        raise ConfigError(f"task: must be one of {', '.join(TASKS)} (got {task!r})")
    return RunConfig(raw, build_spec(raw), task)


# ----------------------------------------------------------------------
# tasks


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def task_normalize(cfg: RunConfig, out: str) -> dict:
    raw, n = cfg.raw, cfg.n
    r = _get(raw, "normalize.r", int, check=lambda v: v >= 1, what="must be >= 1")
    K = _get(raw, "normalize.K", int, check=lambda v: v >= 1, what="must be >= 1")
    module = _module(raw, "normalize.module", n)
    alpha = _get(raw, "normalize.alpha", float, default=None)
    max_order = _get(raw, "normalize.max_order", int, default=None)
    res = normalize(cfg.spec, r, K, module, alpha=alpha, max_order=max_order)
    rep = res.to_report()
    write_json(rep, os.path.join(out, "normalize_report.json"))
    write_json({"chi": [to_records(c) for c in res.chi], "Z": [to_records(z) for z in res.Z]},
               os.path.join(out, "normal_form.json"))
    rep["_result"] = res
    return rep


def _convexity(cfg: RunConfig, section: str):
    raw, n = cfg.raw, cfg.n
    lower = _vector(raw, f"{section}.box.lower", n, default=None)
    upper = _vector(raw, f"{section}.box.upper", n, default=None)
    if lower is None or upper is None:
        sample = cfg.spec.center[None, :]
    else:
        pts = _get(raw, f"{section}.points", int, default=11, check=lambda v: v >= 1)
        sample = resonance.action_grid(lower, upper, pts)
    return resonance.convexity_constants(cfg.spec, sample)


def task_estimate(cfg: RunConfig, out: str, normal=None) -> dict:
    raw, spec = cfg.raw, cfg.spec
    conv = None
    M = _get(raw, "estimate.M", float, default=None)
    m = _get(raw, "estimate.m", float, default=None)
    if M is None or m is None:
        conv = _convexity(cfg, "estimate")
        M = conv.M if M is None else M
        m = conv.m if m is None else m
    if not (M >= m > 0):
        raise ConfigError(f"estimate: need M >= m > 0 (got M={M}, m={m})")
    rho = _get(raw, "estimate.rho", float, default=spec.dom.delta)
    sigma = _get(raw, "estimate.sigma", float, default=spec.dom.sigma)
    T = _get(raw, "estimate.T", float, default=1.0, check=lambda v: v > 0)
    C_f = _get(raw, "estimate.C_f", float, default=spec.C_f)
    plan = estimator.nekhoroshev_plan(rho, sigma, M, m, C_f, spec.n, spec.eps, spec.mu, T)
    rep = {"plan": plan.to_dict(),
           "convexity": None if conv is None else {"m": conv.m, "M": conv.M,
                                                    "convex": conv.convex}}
    sw = _get(raw, "estimate.sweep", default=None)
    if sw is not None:
        eps_list = _get(raw, "estimate.sweep.eps")
        mu_list = _get(raw, "estimate.sweep.mu")
        pairs = [(float(e), float(u)) for e in eps_list for u in mu_list]
        rows = estimator.sweep(pairs, rho, sigma, M, m, C_f, spec.n, T)
        estimator.write_sweep_csv(rows, os.path.join(out, "sweep.csv"))
        rep["sweep_rows"] = len(rows)
    if normal is not None:
        r, K = normal.r, normal.K
        ac = estimator.analytic_constants(spec.C_f, spec.n, spec.eps, spec.mu, normal.alpha,
                                          spec.dom.delta, spec.dom.sigma, K, r)
        chk = estimator.delta_threshold(r, normal.alpha, spec.dom.delta, spec.dom.sigma,
                                        ac.lam, K)
        bound = (estimator.remainder_bound(spec.eps, ac.F_tilde, chk.Delta, r)
                 if 0 < chk.Delta < 1 else math.inf)
        rep["normal_form_constants"] = ac.to_dict()
        rep["Delta"] = chk.Delta
        rep["smallness_ok"] = chk.smallness_ok
        rep["kappa_ok"] = chk.kappa_ok
        rep["remainder_bound"] = bound
    write_json(rep, os.path.join(out, "estimate_report.json"))
    rep["_plan"] = plan
    return rep


def task_geometry(cfg: RunConfig, out: str) -> dict:
    raw, n, spec = cfg.raw, cfg.n, cfg.spec
    module = _module(raw, "geometry.module", n)
    alpha = _get(raw, "geometry.alpha", float, check=lambda v: v > 0, what="must be > 0")
    N = _get(raw, "geometry.N", int, check=lambda v: v >= 1, what="must be >= 1")
    delta = _get(raw, "geometry.delta", float, default=spec.dom.delta)
    grid = _get(raw, "geometry.grid", default=None)
    if grid is not None:
        sample = np.asarray(grid, dtype=float).reshape(-1, n)
    else:
        lower = _vector(raw, "geometry.box.lower", n)
        upper = _vector(raw, "geometry.box.upper", n)
        pts = _get(raw, "geometry.points", int, default=11, check=lambda v: v >= 1)
        sample = resonance.action_grid(lower, upper, pts)
    conv = resonance.convexity_constants(spec, sample)
    report = resonance.check_nonresonance(spec, sample, module, alpha, N, delta, conv.M)
    report.to_csv(os.path.join(out, "nonresonance.csv"))
    rep = {"nonresonance": report.to_dict(),
           "module": {"basis": [list(b) for b in module.basis],
                      "check": resonance.check_module(module.basis, n).reason},
           "convexity": {"m": conv.m, "M": conv.M, "convex": conv.convex},
           "samples": len(sample)}
    write_json(rep, os.path.join(out, "geometry_report.json"))
    return rep


def task_simulate(cfg: RunConfig, out: str, plan=None) -> dict:
    raw, n, spec = cfg.raw, cfg.n, cfg.spec
    I0 = _vector(raw, "simulate.init.I", n)
    phi0 = _vector(raw, "simulate.init.phi", n)
    span = _get(raw, "simulate.t_span")
    if not (isinstance(span, list) and len(span) == 2):
        raise ConfigError("simulate.t_span: expected [t0, t1]")
    step = _get(raw, "simulate.step", float, check=lambda v: v > 0, what="must be > 0")
    thin = _get(raw, "simulate.thin", int, default=1, check=lambda v: v >= 1)
    module = _module(raw, "simulate.module", n) if "module" in raw.get("simulate", {}) else None
    traj = dynamics.integrate(spec, (I0, phi0), (float(span[0]), float(span[1])), step,
                              thin=thin, module=module)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    rep = {"max_drift": traj.max_drift, "steps": traj.steps, "halvings": traj.halvings,
           "final_I": traj.I[-1], "final_phi": traj.phi[-1],
           "energy_spread": float(traj.energy.max() - traj.energy.min())}
    if plan is not None:
        C1 = _get(raw, "estimate.C1", float, default=None)
        rep["drift_report"] = dynamics.drift_report(traj, plan, module, C1)
    write_json(rep, os.path.join(out, "simulate_report.json"))
    return rep


def task_pipeline(cfg: RunConfig, out: str) -> dict:
    nrep = task_normalize(cfg, out)
    res = nrep.pop("_result")
    erep = task_estimate(cfg, out, normal=res)
    plan = erep.pop("_plan")
    srep = task_simulate(cfg, out, plan=plan)
    flags = erep["smallness_ok"] and erep["kappa_ok"]
    bound = erep["remainder_bound"]
    rep = {"remainder_norm": res.remainder_norm, "remainder_bound": bound,
           "flags_hold": flags,
           "remainder_within_bound": bool(res.remainder_norm <= bound) if flags else None,
           "drift": srep.get("drift_report")}
    write_json(rep, os.path.join(out, "pipeline_report.json"))
    return rep


def run(config_path, task: str | None = None, out: str | None = None,
        seed: int | None = None) -> int:
    """Execute one task; returns the process exit status."""
    try:
        raw = load_config(config_path)
        cfg = parse(raw, task)
        out = out or _get(raw, "output.dir", str, default="out")
        os.makedirs(out, exist_ok=True)
        if seed is not None:
            np.random.seed(seed)
        fn = {"normalize": task_normalize, "estimate": task_estimate,
              "geometry": task_geometry, "simulate": task_simulate,
              "pipeline": task_pipeline}[cfg.task]
        rep = fn(cfg, out)
        rep.pop("_result", None)
        rep.pop("_plan", None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SmallDivisorError, dynamics.IntegrationError, ValueError, RuntimeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_clean({"task": cfg.task, "out": out, "seed": seed}), sort_keys=True))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="aperiodic-nf", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--task", choices=TASKS, help="override the task named in the config")
    ap.add_argument("--out", help="output directory (default: output.dir or ./out)")
    ap.add_argument("--seed", type=int, help="seed for randomized components")
    args = ap.parse_args(argv)
    return run(args.config, args.task, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
