"""Command-line driver: INI config in, CSV files plus a metadata sidecar out.

    adaptexp <subcommand> [--config FILE] [--seed N] [--out DIR] [--threads K]

Every random draw is keyed by ``(seed, subcommand, ...)`` through
:class:`adaptexp.montecarlo.Stream`, so outputs depend on the config and seed
only; ``--threads`` changes speed, never results.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .errors import ConfigError, ContractViolation, ConvergenceError, DomainError, NoInformationError, RegimeError
from .model import ArmModel, Family, GaussianLocalPrior, LocalParam, fisher_info, local_theta
from .montecarlo import Stream, concat_blocks
from .policy import Alternating, Fixed, ThompsonBeta, Ucb, check_policy

SUBCOMMANDS = (
    "alloc-dist",
    "risk-curve",
    "bayes-risk",
    "regret",
    "limit-sim",
    "evalue-trace",
    "evalue-size",
    "gro-curve",
    "ba-capacity",
)

DEFAULT_REPS = {
    "alloc-dist": 10_000,
    "risk-curve": 10_000,
    "bayes-risk": 10_000,
    "regret": 10_000,
    "limit-sim": 1_000,
    "evalue-trace": 1,
    "evalue-size": 2_000,
    "gro-curve": 10_000,
    "ba-capacity": 1,
}

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_MODEL, EXIT_NUMERIC = 0, 1, 2, 3, 4


# Schema: section -> key -> (kind, default). Kinds: int, float, bool, str,
# "choice:a|b", "floats", "ints", "opt_float" (empty means unset).


def _grid(lo, hi, k):
    return tuple(round(float(v), 12) for v in np.linspace(lo, hi, k))


SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "subcommand": ("choice:|" + "|".join(SUBCOMMANDS), ""),
        "seed": ("int", 0),
        "reps": ("opt_int", None),
    },
    "model": {
        "family": ("choice:bernoulli|gaussian", "bernoulli"),
        "theta0": ("float", 0.1),
        "theta0_arm0": ("opt_float", None),
    },
    "policy": {
        "kind": ("choice:ts|ucb|fixed|alternating", "ts"),
        "prior_alpha": ("float", 1.0),
        "prior_beta": ("float", 1.0),
        "pi1": ("float", 0.5),
        "ucb_log_j_over_n": ("bool", False),
    },
    "experiment": {
        "n": ("ints", (1000,)),
        "t": ("floats", (0.25, 0.5, 0.75)),
        "h1": ("float", 0.0),
        "h0": ("float", 0.0),
        "h1_grid": ("floats", _grid(-0.5, 0.5, 11)),
    },
    "prior": {
        "mu1": ("float", 0.0),
        "nu2_1": ("float", 0.04),
        "mu0": ("float", 0.0),
        "nu2_0": ("float", 0.04),
    },
    "estimator": {
        "kind": ("choice:shrinkage|mle|prior-mean", "shrinkage"),
        "mu0": ("float", 0.0),
        "nu2": ("float", 0.04),
    },
    "regret": {
        "kind": ("choice:in-sample|out-of-sample|both", "both"),
        "decision": ("choice:empirical-best-arm", "empirical-best-arm"),
    },
    "eprocess": {
        "kind": ("choice:gaussian-arm1|gaussian-both|two-point|gaussian-grid", "gaussian-arm1"),
        "nu2": ("float", 1.0),
        "nu2_0": ("float", 1.0),
        "K": ("float", 1.0),
        "alpha": ("float", 0.05),
        "theta0_arm0": ("floats", (0.0, 0.02, 0.05, 0.1)),
        "h0_grid": ("floats", ()),
        "t_grid": ("floats", _grid(0.05, 1.0, 20)),
    },
    "limit": {
        "steps": ("int", 1024),
        "rule": ("choice:ts|ucb|constant", "ts"),
        "pi1": ("float", 0.5),
        "nu2": ("float", 1e6),
        "paths": ("int", 10),
    },
    "ba": {
        "q": ("float", 1.0),
        "info": ("float", 1.0),
        "K": ("float", 1.0),
        "m": ("int", 201),
        "tol": ("float", 1e-9),
        "max_iter": ("int", 100_000),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: ``values[section][key]`` for every schema key."""

    values: dict = field(compare=True)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def subcommand(self) -> str:
        return self.values["run"]["subcommand"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def reps(self) -> int:
        r = self.values["run"]["reps"]
        return DEFAULT_REPS.get(self.subcommand, 1) if r is None else r

    def models(self):
        m = self.values["model"]
        fam = Family(m["family"])
        m1 = ArmModel(fam, m["theta0"])
        t0 = m["theta0"] if m["theta0_arm0"] is None else m["theta0_arm0"]
        return (m1, ArmModel(fam, t0))

    def policy(self):
        p = self.values["policy"]
        k = p["kind"]
        if k == "ts":
            return ThompsonBeta(p["prior_alpha"], p["prior_beta"])
        if k == "ucb":
            return Ucb(log_j_over_n=p["ucb_log_j_over_n"])
        if k == "fixed":
            return Fixed(p["pi1"])
        return Alternating()

    def echo(self) -> str:
        """INI text listing every key, defaults included; parses back to ``self``."""
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for key, (kind, _) in keys.items():
                lines.append(f"{key} = {_format(kind, self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)


def _format(kind, v) -> str:
    if v is None:
        return ""
    if kind in ("floats", "ints"):
        return ", ".join(repr(x) for x in v)
    if kind == "bool":
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(kind: str, raw: str, key: str, line):
    raw = raw.strip()
    if kind.startswith("choice:"):
        options = kind[len("choice:"):].split("|")
        if raw not in options:
            raise ConfigError(f"expected one of {[o for o in options if o]}, got {raw!r}", key, line)
        return raw
    try:
        if kind == "int":
            return int(raw)
        if kind == "opt_int":
            return None if raw == "" else int(raw)
        if kind == "float":
            return float(raw)
        if kind == "opt_float":
            return None if raw == "" else float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind == "str":
            return raw
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind}", key, line) from None
    raise AssertionError(kind)


def _line_index(text: str) -> dict:
    """``(section, key) -> line`` and ``(section, None) -> line`` for error messages."""
    out = {}
    sec = None
    for i, ln in enumerate(text.splitlines(), start=1):
        s = ln.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            out.setdefault((sec, m.group(1).strip().lower()), i)
    return out


def parse_config(text: str, subcommand: str | None = None) -> RunConfig:
    """Parse and validate an INI document against :data:`SCHEMA`.

    ``subcommand`` (from the command line) fills ``run.subcommand``; a
    conflicting value in the document is an error.
    """
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), empty_lines_in_values=False)
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as e:
        raise ConfigError("duplicate key", f"{e.section}.{e.option}", e.lineno) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError("duplicate section", e.section, e.lineno) from None
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside any [section]", None, e.lineno) from None
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None

    schema_lower = {sec: {k.lower(): k for k in keys} for sec, keys in SCHEMA.items()}
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError("unknown section", sec, lines.get((sec, None)))
        for key_l, raw in cp.items(sec):
            line = lines.get((sec, key_l))
            if key_l not in schema_lower[sec]:
                raise ConfigError("unknown key", f"{sec}.{key_l}", line)
            key = schema_lower[sec][key_l]
            values[sec][key] = _parse_value(SCHEMA[sec][key][0], raw, f"{sec}.{key}", line)

    if subcommand is not None:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        doc = values["run"]["subcommand"]
        if doc and doc != subcommand:
            raise ConfigError(f"config is for {doc!r}, not {subcommand!r}", "run.subcommand", lines.get(("run", "subcommand")))
        values["run"]["subcommand"] = subcommand
    if values["run"]["reps"] is None and values["run"]["subcommand"]:
        values["run"]["reps"] = DEFAULT_REPS[values["run"]["subcommand"]]
    cfg = RunConfig(values)
    _validate(cfg, lines)
    return cfg


_USES_LOCAL_H = ("alloc-dist", "risk-curve", "regret", "evalue-trace", "gro-curve")


def _validate(cfg: RunConfig, lines: dict) -> None:
    def fail(msg, sec, key):
        raise ConfigError(msg, f"{sec}.{key}", lines.get((sec, key.lower())))

    v = cfg.values
    if v["run"]["seed"] < 0:
        fail("seed must be non-negative", "run", "seed")
    if v["run"]["reps"] is not None and v["run"]["reps"] < 1:
        fail("reps must be >= 1", "run", "reps")
    try:
        m1, m0 = cfg.models()
    except DomainError as e:
        key = "theta0_arm0" if v["model"]["theta0_arm0"] is not None and "theta0_arm0" in str(e) else "theta0"
        fail(str(e), "model", key)
    for key in ("prior_alpha", "prior_beta"):
        if not v["policy"][key] > 0:
            fail("Beta prior parameters must be positive", "policy", key)
    if not 0.0 <= v["policy"]["pi1"] <= 1.0:
        fail(f"pi1 must lie in [0, 1], got {v['policy']['pi1']}", "policy", "pi1")
    try:
        check_policy(cfg.policy(), (m1, m0))
    except ValueError as e:
        fail(str(e), "policy", "kind")
    ex = v["experiment"]
    if not ex["n"] or any(n < 1 for n in ex["n"]):
        fail("n must be a non-empty list of positive integers", "experiment", "n")
    if any(not 0.0 <= t <= 1.0 for t in ex["t"]):
        fail("t values must lie in [0, 1]", "experiment", "t")
    if any(b <= a for a, b in zip(ex["h1_grid"], ex["h1_grid"][1:])):
        fail("h1_grid must be strictly increasing", "experiment", "h1_grid")
    if v["run"]["subcommand"] in _USES_LOCAL_H:
        for n in ex["n"]:
            checks = [("h0", m0, ex["h0"])]
            if v["run"]["subcommand"] == "risk-curve":
                checks += [("h1_grid", m1, h) for h in ex["h1_grid"]]
            else:
                checks.append(("h1", m1, ex["h1"]))
            for key, m, h in checks:
                try:
                    local_theta(m, h, n)
                except DomainError as e:
                    fail(str(e), "experiment", key)
    for key in ("nu2_1", "nu2_0"):
        if v["prior"][key] < 0:
            fail("prior variances must be non-negative", "prior", key)
    if not v["estimator"]["nu2"] > 0:
        fail("estimator nu2 must be positive (use inf for the flat prior)", "estimator", "nu2")
    ep = v["eprocess"]
    for key in ("nu2", "nu2_0", "K"):
        if not ep[key] > 0:
            fail(f"{key} must be positive", "eprocess", key)
    if not 0.0 < ep["alpha"] < 1.0:
        fail("alpha must lie in (0, 1)", "eprocess", "alpha")
    if any(not 0.0 <= t <= 1.0 for t in ep["theta0_arm0"]):
        fail("arm-0 parameter overrides must lie in [0, 1]", "eprocess", "theta0_arm0")
    if any(not 0.0 <= t <= 1.0 for t in ep["t_grid"]):
        fail("t_grid values must lie in [0, 1]", "eprocess", "t_grid")
    lim = v["limit"]
    if lim["steps"] < 1:
        fail("steps must be positive", "limit", "steps")
    if not 0.0 <= lim["pi1"] <= 1.0:
        fail("pi1 must lie in [0, 1]", "limit", "pi1")
    if not lim["nu2"] > 0:
        fail("nu2 must be positive", "limit", "nu2")
    if lim["paths"] < 0:
        fail("paths must be non-negative", "limit", "paths")
    ba = v["ba"]
    if ba["q"] < 0:
        fail("q must be non-negative", "ba", "q")
    if not ba["info"] > 0:
        fail("info must be positive", "ba", "info")
    if ba["K"] < 0:
        fail("K must be non-negative", "ba", "K")
    if ba["m"] < 2:
        fail("m must be at least 2", "ba", "m")
    if not ba["tol"] > 0:
        fail("tol must be positive", "ba", "tol")
    if ba["max_iter"] < 1:
        fail("max_iter must be positive", "ba", "max_iter")


# Subcommands. Each returns {filename: (header, rows)}.


def _local(cfg):
    ex = cfg["experiment"]
    return LocalParam(ex["h1"], ex["h0"])


def _estimator(cfg):
    from .inference import GaussianPrior, PriorMeanEstimator, ShrinkageEstimator, mle

    e = cfg["estimator"]
    if e["kind"] == "mle":
        return mle
    prior = GaussianPrior(e["mu0"], e["nu2"])
    return ShrinkageEstimator(prior) if e["kind"] == "shrinkage" else PriorMeanEstimator(prior)


def _espec(cfg):
    from .evalid import GaussianMixtureArm1, GaussianMixtureBoth, TwoPoint, gaussian_weight_grid

    ep = cfg["eprocess"]
    k = ep["kind"]
    if k == "gaussian-arm1":
        return GaussianMixtureArm1(ep["nu2"])
    if k == "gaussian-both":
        return GaussianMixtureBoth(ep["nu2"], ep["nu2_0"])
    if k == "two-point":
        return TwoPoint(ep["K"])
    return gaussian_weight_grid(ep["nu2"])


def run_alloc_dist(cfg, stream, threads):
    from .experiment import map_batches

    models, kind, h = cfg.models(), cfg.policy(), _local(cfg)
    ts = cfg["experiment"]["t"]
    out = {}
    samples = {}
    for n in cfg["experiment"]["n"]:
        theta = (local_theta(models[0], h.h1, n), local_theta(models[1], h.h0, n))
        parts = map_batches(lambda b, s: b.q(ts)[0], models, lambda size, s: theta, kind, n, cfg.reps, stream.child(n), threads)
        q1 = concat_blocks(parts)
        samples[n] = q1
        rows = [(n, r, t, float(q1[r, k])) for r in range(q1.shape[0]) for k, t in enumerate(ts)]
        out[f"alloc_n{n}.csv"] = (("n", "rep", "t", "q1"), rows)
    ns = cfg["experiment"]["n"]
    if len(ns) > 1:
        rows = []
        for a, b in zip(ns, ns[1:]):
            for k, t in enumerate(ts):
                rows.append((a, b, t, float(stats.ks_2samp(samples[a][:, k], samples[b][:, k]).statistic)))
        out["alloc_ks.csv"] = (("n_a", "n_b", "t", "ks"), rows)
    return out


def run_risk_curve(cfg, stream, threads):
    from .inference import risk_curve

    models, kind = cfg.models(), cfg.policy()
    est = cfg["estimator"]["kind"]
    rows = []
    for n in cfg["experiment"]["n"]:
        rc = risk_curve(_estimator(cfg), models, cfg["experiment"]["h1_grid"], cfg["experiment"]["h0"], kind, n, cfg.reps, stream.child(n), threads)
        for h1, e in zip(rc.h1, rc.estimates):
            rows.append((float(h1), e.mean, e.std_error, n, kind.name, est))
    return {"risk_curve.csv": (("h1", "risk_mean", "risk_se", "n", "policy", "estimator"), rows)}


def run_bayes_risk(cfg, stream, threads):
    from .inference import bayes_risk

    models, kind = cfg.models(), cfg.policy()
    p = cfg["prior"]
    prior = GaussianLocalPrior(p["mu1"], p["nu2_1"], p["mu0"], p["nu2_0"])
    rows = []
    for n in cfg["experiment"]["n"]:
        e = bayes_risk(_estimator(cfg), models, prior, kind, n, cfg.reps, stream.child(n), threads)
        lo, hi = e.ci()
        rows.append((n, kind.name, cfg["estimator"]["kind"], e.mean, e.std_error, lo, hi, e.reps))
    return {"bayes_risk.csv": (("n", "policy", "estimator", "risk_mean", "risk_se", "ci_low", "ci_high", "reps"), rows)}


def run_regret(cfg, stream, threads):
    from .inference import in_sample_regret, out_of_sample_regret

    models, kind, h = cfg.models(), cfg.policy(), _local(cfg)
    which = cfg["regret"]["kind"]
    rows = []
    for n in cfg["experiment"]["n"]:
        if which in ("in-sample", "both"):
            e = in_sample_regret(models, h, kind, n, cfg.reps, stream.child("in-sample", n), threads)
            rows.append((n, kind.name, h.h1, h.h0, "in-sample", e.mean, e.std_error, e.reps, 0))
        if which in ("out-of-sample", "both"):
            r = out_of_sample_regret(models, h, kind, n, cfg.reps, stream.child("out-of-sample", n), cfg["regret"]["decision"], threads)
            rows.append((n, kind.name, h.h1, h.h0, "out-of-sample", r.estimate.mean, r.estimate.std_error, r.estimate.reps, r.fallbacks))
    return {"regret.csv": (("n", "policy", "h1", "h0", "regret", "mean", "se", "reps", "fallbacks"), rows)}


def run_limit_sim(cfg, stream, threads):
    from .diffusion import ConstantRule, LimitGrid, LimitThompson, LimitUcb, quadratic_variation, run_limit_experiment, simulate_signals

    lim = cfg["limit"]
    m1, m0 = cfg.models()
    infos = (fisher_info(m1), fisher_info(m0))
    grid = LimitGrid.from_steps(lim["steps"])
    rule = {"ts": lambda: LimitThompson(lim["nu2"]), "ucb": LimitUcb, "constant": lambda: ConstantRule(lim["pi1"])}[lim["rule"]]()
    sig = simulate_signals(_local(cfg), infos, grid, stream, reps=cfg.reps)
    path = run_limit_experiment(rule, sig)
    rows = []
    for r in range(min(lim["paths"], cfg.reps)):
        for t, q1, q0, x1, x0 in path.rows(r):
            rows.append((r, float(t), float(q1), float(q0), float(x1), float(x0)))
    qv = quadratic_variation(path.x[1])
    summary = []
    for k in np.unique(np.clip(np.floor(np.asarray(cfg["experiment"]["t"]) * grid.num_steps + 1e-9).astype(int), 0, grid.num_steps)):
        q1 = path.q[1, :, k]
        summary.append((float(path.t[k]), float(q1.mean()), float(q1.std(ddof=1) / math.sqrt(q1.size)) if q1.size > 1 else 0.0, float(np.abs(qv[:, k] - q1).mean())))
    return {
        "limit_paths.csv": (("rep", "t", "q1", "q0", "x1", "x0"), rows),
        "limit_summary.csv": (("t", "q1_mean", "q1_se", "qv_abs_err"), summary),
    }


def run_evalue_trace(cfg, stream, threads):
    from .evalid import evalue, p_process
    from .experiment import TRAJECTORY_COLUMNS, run_experiment, score_path, trajectory_rows

    models, kind, h, spec = cfg.models(), cfg.policy(), _local(cfg), _espec(cfg)
    m1, m0 = models
    infos = (fisher_info(m1), fisher_info(m0))
    rows, dump = [], []
    for n in cfg["experiment"]["n"]:
        for r in range(cfg.reps):
            traj = run_experiment(models, h, kind, n, stream.child(n, r))
            sp = score_path(traj, models)
            c1 = sp.alloc.arm1_counts
            c0 = np.arange(n + 1) - c1
            e = evalue(spec, sp.z[1][c1], sp.z[0][c0], c1 / n, c0 / n, infos)
            p = p_process(e)
            for j in range(n + 1):
                rows.append((n, r, j / n, float(c1[j] / n), float(e[j]), float(p[j])))
            dump.extend((n, r) + tuple(row) for row in trajectory_rows(traj, models))
    return {
        "evalue_trace.csv": (("n", "rep", "t", "q1", "evalue", "p_value"), rows),
        "trajectories.csv": (("n", "rep") + TRAJECTORY_COLUMNS, dump),
    }


def run_evalue_size(cfg, stream, threads):
    from .evalid import anytime_size

    models, kind, spec = cfg.models(), cfg.policy(), _espec(cfg)
    ep = cfg["eprocess"]
    size_rows, mean_rows = [], []
    for n in cfg["experiment"]["n"]:
        res = anytime_size(spec, models, kind, n, ep["h0_grid"], ep["alpha"], cfg.reps, stream.child(n), ep["theta0_arm0"], ep["t_grid"], threads)
        for (th1, th0), e, means in zip(res.configs, res.exceed, res.means):
            size_rows.append((kind.name, n, float(th1), float(th0), res.threshold, e.mean, e.std_error, e.reps))
            for t, m in zip(res.t_grid, means):
                mean_rows.append((kind.name, n, float(th0), float(t), m.mean, m.std_error))
    return {
        "evalue_size.csv": (("policy", "n", "theta1", "theta0_arm0", "threshold", "size", "size_se", "reps"), size_rows),
        "evalue_means.csv": (("policy", "n", "theta0_arm0", "t", "evalue_mean", "evalue_se"), mean_rows),
    }


def run_gro_curve(cfg, stream, threads):
    from .evalid import gro_score

    models, kind, h, spec = cfg.models(), cfg.policy(), _local(cfg), _espec(cfg)
    ts = list(cfg["experiment"]["t"])
    rows = []
    for n in cfg["experiment"]["n"]:
        for t, e in zip(ts, gro_score(spec, models, h, kind, n, ts, cfg.reps, stream.child(n), threads)):
            rows.append((n, kind.name, t, e.mean, e.std_error))
    return {"gro_curve.csv": (("n", "policy", "t", "gro_mean", "gro_se"), rows)}


def run_ba_capacity(cfg, stream, threads):
    from .evalid import ChannelSpec, blahut_arimoto

    b = cfg["ba"]
    res = blahut_arimoto(ChannelSpec(b["q"], b["info"], b["K"], b["m"]), b["tol"], b["max_iter"])
    rows = [(float(h), float(w)) for h, w in zip(res.grid, res.weights)]
    return {"ba_capacity.csv": (("h", "weight"), rows, ("capacity", res.capacity))}


RUNNERS = {
    "alloc-dist": run_alloc_dist,
    "risk-curve": run_risk_curve,
    "bayes-risk": run_bayes_risk,
    "regret": run_regret,
    "limit-sim": run_limit_sim,
    "evalue-trace": run_evalue_trace,
    "evalue-size": run_evalue_size,
    "gro-curve": run_gro_curve,
    "ba-capacity": run_ba_capacity,
}


def run(subcommand: str, cfg: RunConfig, out_dir, threads: int = 1) -> list[Path]:
    """Run one subcommand and write its CSVs plus ``metadata.json`` into ``out_dir``.

    Files are written under temporary names and renamed only after every
    output succeeded; on failure nothing new is left behind.
    """
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if not cfg.subcommand:
        cfg = parse_config(cfg.echo(), subcommand)
    elif cfg.subcommand != subcommand:
        raise ConfigError(f"config is for {cfg.subcommand!r}, not {subcommand!r}", "run.subcommand")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    stream = Stream(cfg.seed).child(subcommand)
    tables = RUNNERS[subcommand](cfg, stream, threads)
    tmp: list[tuple[Path, Path]] = []
    try:
        for name, table in tables.items():
            final = out_dir / name
            part = out_dir / (name + ".part")
            _write_csv(part, table)
            tmp.append((part, final))
        meta = {
            "subcommand": subcommand,
            "seed": cfg.seed,
            "version": __version__,
            "wall_time_s": round(time.time() - start, 3),
            "threads": threads,
            "outputs": sorted(tables),
            "config": cfg.echo(),
        }
        part = out_dir / "metadata.json.part"
        part.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        tmp.append((part, out_dir / "metadata.json"))
    except BaseException:
        for part, _ in tmp:
            part.unlink(missing_ok=True)
        raise
    for part, final in tmp:
        os.replace(part, final)
    return [final for _, final in tmp]


def _write_csv(path: Path, table) -> None:
    header, rows = table[0], table[1]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        if len(table) > 2:
            w.writerow(table[2])
        w.writerow(header)
        w.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaptexp", description="Simulate adaptive experiments and write CSV results.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="INI config file (defaults are used for missing keys)")
    ap.add_argument("--seed", type=int, help="master seed; overrides run.seed")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads; affects speed only")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", "run.seed")
            text = _override_seed(text, args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = parse_config(text, args.subcommand)
        written = run(args.subcommand, cfg, args.out, args.threads)
    except ConfigError as e:
        print(f"adaptexp: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"adaptexp: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (DomainError, NoInformationError, ContractViolation, RegimeError) as e:
        print(f"adaptexp: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_MODEL
    except ConvergenceError as e:
        print(f"adaptexp: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"adaptexp: {e}", file=sys.stderr)
        return EXIT_ERROR
    for p in written:
        print(p)
    return EXIT_OK


def _override_seed(text: str, seed: int) -> str:
    """Replace or insert ``run.seed`` in the document."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error:
        return text  # let parse_config report the problem
    if not cp.has_section("run"):
        return text + f"\n[run]\nseed = {seed}\n"
    out, in_run, done = [], False, False
    for ln in text.splitlines():
        s = ln.strip()
        if s.startswith("["):
            if in_run and not done:
                out.append(f"seed = {seed}")
                done = True
            in_run = s.lower().startswith("[run]")
        elif in_run and re.match(r"^seed\s*[=:]", s, re.IGNORECASE):
            out.append(f"seed = {seed}")
            done = True
            continue
        out.append(ln)
    if in_run and not done:
        out.append(f"seed = {seed}")
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    sys.exit(main())
