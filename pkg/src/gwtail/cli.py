"""Command-line driver: scales tables, tail comparisons, K laws, simulation, verify."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analytic, scales, simulate, tail, verify
from .errors import ConfigError, GWError
from .offspring import new_distribution

DEFAULT_OFFSPRING = {2: 0.5, 3: 0.5}
DEFAULT_EPS = [0.2, 0.1, 0.05, 0.02, 0.01]


@dataclass
class ExperimentConfig:
    offspring: dict = field(default_factory=lambda: dict(DEFAULT_OFFSPRING))
    eps_grid: list = field(default_factory=lambda: list(DEFAULT_EPS))
    d: int = 0
    depth: int = 25
    trials: int = 10**6
    seed: int = 1
    threads: int = 1
    output_path: str | None = None
    analytic: dict = field(default_factory=dict)
    eps: float = 0.3  # condition-sim threshold
    profile: str = "full"  # verify budgets: full or light

    def dist(self):
        return new_distribution(self.offspring)

    def analytic_config(self):
        return analytic.AnalyticConfig(**self.analytic)

    def resolved(self):
        out = asdict(self)
        out["offspring"] = {str(k): v for k, v in sorted(self.offspring.items())}
        out.pop("output_path")
        return out


def _eps_grid(spec):
    if isinstance(spec, dict):
        if set(spec) != {"start", "stop", "num"}:
            raise ConfigError("geometric eps_grid needs exactly start, stop, num")
        start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        if num < 1 or start <= 0 or stop <= 0:
            raise ConfigError("geometric eps_grid needs positive start, stop and num")
        grid = [float(v) for v in np.geomspace(start, stop, num)]
    elif isinstance(spec, (list, tuple)):
        grid = [float(v) for v in spec]
    else:
        raise ConfigError("eps_grid must be a list or {start, stop, num}")
    if not grid:
        raise ConfigError("eps_grid is empty")
    if any(not 0 < e < 1 for e in grid):
        raise ConfigError("eps_grid values must lie in (0, 1)")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("eps_grid must be strictly decreasing")
    return grid


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read a YAML config, apply flag overrides, and validate everything up front."""
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**raw)
    try:
        cfg.offspring = {int(k): float(v) for k, v in dict(cfg.offspring).items()}
        cfg.dist()
        cfg.analytic_config()
    except (GWError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid config: {e}") from e
    cfg.eps_grid = _eps_grid(cfg.eps_grid)
    for name in ("depth", "trials", "threads"):
        if int(getattr(cfg, name)) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if cfg.d not in (-1, 0, 1):
        raise ConfigError("d must be -1, 0 or 1")
    if not 0 < float(cfg.eps) < 1:
        raise ConfigError("eps must lie in (0, 1)")
    if cfg.profile not in ("full", "light"):
        raise ConfigError("profile must be full or light")
    return cfg


def header(cmd, cfg):
    body = json.dumps(cfg.resolved(), sort_keys=True, separators=(",", ":"))
    return f"# gwtail {__version__} {cmd} seed={cfg.seed} config={body}"


def _f(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(head, columns, rows):
    buf = io.StringIO()
    buf.write(head + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_f(r.get(c)) for c in columns])
    return buf.getvalue()


# ------------------------------------------------------------- subcommands
def cmd_scales_table(cfg) -> str:
    dist, acfg = cfg.dist(), cfg.analytic_config()
    rows = []
    extra = [j for j in dist.support.tolist() if j > dist.mu]
    for eps in cfg.eps_grid:
        sc = scales.compute_scales(dist, acfg, eps, cfg.d, require_n=False)
        row = {k: getattr(sc, k) for k in (
            "eps", "kappa", "y", "u1", "sigma1_sq", "b_u1", "H", "gamma", "ceil_gamma",
            "frac_gamma", "omega", "log_omega", "d", "n", "N",
        )}
        for j in extra:
            row[f"Phi_{j}"] = sc.Phi.get(j)
        row["regime"] = str(scales.classify_regime(sc))
        rows.append(row)
    cols = list(rows[0])
    return _csv(header("scales-table", cfg), cols, rows)


def cmd_tail_compare(cfg) -> str:
    dist, acfg = cfg.dist(), cfg.analytic_config()
    rows = []
    for i, eps in enumerate(cfg.eps_grid):
        inv = tail.tail_sum_numeric(dist, acfg, eps, 1)
        row = {"eps": eps, "log_inv": inv.log_value, "err_inv": float(inv.abs_err_log)}
        if dist.mu >= 2:
            asy = tail.tail_W_asymptotic(dist, acfg, eps)
            row["log_asym"] = asy.log_value
            row["rel_gap"] = abs(asy.log_value - inv.log_value) / abs(inv.log_value)
        expected = cfg.trials * math.exp(inv.log_value)
        row["mc_expected_accepts"] = expected
        if expected >= 100:
            exp = simulate.run_conditional(
                dist, eps, cfg.depth, cfg.trials, cfg.seed + i, cfg=acfg, threads=cfg.threads, preflight=False
            )
            row["log_mc"] = exp.acceptance_logprob.log_value
            row["se_mc"] = exp.acceptance_logprob.abs_err_log
        rows.append(row)
    cols = ["eps", "log_asym", "log_inv", "err_inv", "rel_gap", "mc_expected_accepts", "log_mc", "se_mc"]
    return _csv(header("tail-compare", cfg), cols, rows)


def cmd_k_distribution(cfg) -> str:
    dist, acfg = cfg.dist(), cfg.analytic_config()
    rows = []
    for eps in cfg.eps_grid:
        sc = scales.compute_scales(dist, acfg, eps, 0, require_n=False)
        kd = tail.conditional_K_pmf(dist, acfg, eps)
        cg = sc.ceil_gamma
        pair = kd.mass([cg, cg + 1])
        for k in sorted(kd.pmf):
            rows.append({
                "eps": eps, "k": k, "pmf": kd.pmf[k], "flag": kd.flags[k], "ceil_gamma": cg,
                "mass_two": pair, "regime": str(scales.classify_regime(sc)), "method": kd.method,
            })
    cols = ["eps", "k", "pmf", "flag", "ceil_gamma", "mass_two", "regime", "method"]
    return _csv(header("k-distribution", cfg), cols, rows)


def cmd_condition_sim(cfg):
    """Returns (json text, excess csv text)."""
    dist, acfg = cfg.dist(), cfg.analytic_config()
    exp = simulate.run_conditional(
        dist, cfg.eps, cfg.depth, cfg.trials, cfg.seed, cfg=acfg, threads=cfg.threads,
        preflight=True, allow_empty=True,
    )
    rec = {"comment": header("condition-sim", cfg), "config": cfg.resolved(), "seed": cfg.seed}
    rec.update(exp.to_dict())
    rec["excess_samples"] = [float(v) for v in exp.excess_samples]
    text = json.dumps(rec, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(header("condition-sim", cfg) + "\n")
    buf.write("excess\n")
    for v in exp.excess_samples:
        buf.write(repr(float(v)) + "\n")
    return text, buf.getvalue()


def cmd_verify(cfg):
    """Returns (report text, all passed)."""
    prof = verify.FULL if cfg.profile == "full" else verify.LIGHT
    res = verify.run_checks(prof, cfg.seed, cfg.analytic_config())
    return verify.format_report(res, header("verify", cfg)), all(r.passed for r in res)


# ------------------------------------------------------------------ main
def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--threads", type=int)

    p = argparse.ArgumentParser(prog="gwtail", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("scales-table", parents=[common], help="eps-indexed scales, one row per eps")
    sub.add_parser("tail-compare", parents=[common], help="asymptotic vs inversion vs Monte Carlo")
    sub.add_parser("k-distribution", parents=[common], help="conditional law of K near ceil(gamma)")
    cs = sub.add_parser("condition-sim", parents=[common], help="rejection simulation given W_hat < eps")
    cs.add_argument("--eps", type=float)
    cs.add_argument("--depth", type=int)
    cs.add_argument("--trials", type=int)
    v = sub.add_parser("verify", parents=[common], help="run all checks")
    v.add_argument("--profile", choices=["full", "light"])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    over = {"seed": args.seed, "threads": args.threads, "output_path": args.out}
    for k in ("eps", "depth", "trials", "profile"):
        over[k] = getattr(args, k, None)
    try:
        cfg = load_config(args.config, over)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        if args.cmd == "scales-table":
            _write(cmd_scales_table(cfg), cfg.output_path)
        elif args.cmd == "tail-compare":
            _write(cmd_tail_compare(cfg), cfg.output_path)
        elif args.cmd == "k-distribution":
            _write(cmd_k_distribution(cfg), cfg.output_path)
        elif args.cmd == "condition-sim":
            text, exc = cmd_condition_sim(cfg)
            _write(text, cfg.output_path)
            if cfg.output_path is not None:
                out = Path(cfg.output_path)
                Path(out.with_name(out.stem + "_excess.csv")).write_text(exc)
        elif args.cmd == "verify":
            text, ok = cmd_verify(cfg)
            _write(text, cfg.output_path)
            return 0 if ok else 1
    except GWError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
