"""Command-line front end: configuration parsing, seeded experiment runs,
and CSV/JSON/figure persistence.

Every run writes into a fresh timestamped subdirectory of the output
directory, never touching earlier runs, and finishes by atomically writing a
manifest with sha256 digests of all outputs. Identical configs (including
seed) reproduce identical output digests regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

import grushin
from grushin.asymptotics import (
    degenerate_bounds,
    estimate_delta0,
    max_prob_check,
    off_diagonal_experiment,
    on_diagonal_experiment,
    taylor_experiment,
)
from grushin.density import HORIZON_T, UNIT_HORIZON, estimate_density
from grushin.functionals import GrushinParams
from grushin.paths import RngStream
from grushin.variational import PhiProblem, c_gamma, c_gamma_upper_bound, minimize_phi

COMMANDS = ("density", "rate", "cgamma", "on-diag", "off-diag", "degenerate", "taylor", "bounds-check")

OUT_DIR_ENV = "GRUSHIN_OUT_DIR"

#: fixed, documented CSV headers per command
CSV_HEADERS = {
    "density": ("T", "value", "stderr"),
    "on-diag": ("T", "value", "stderr"),
    "off-diag": ("T", "value", "stderr"),
    "taylor": ("a", "value", "stderr"),
    "bounds-check": (
        "a",
        "value",
        "stderr",
        "ci_low",
        "ci_high",
        "upper_ge",
        "lower_ge",
        "series_prob",
        "stay_bound",
        "passes",
    ),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    d: int = 1
    dprime: int = 1
    gamma: float = 1.0
    x: tuple = (0.0,)
    xi: tuple = (0.0,)
    y: tuple = (0.0,)
    eta: tuple = (0.0,)
    T: float = 1.0
    T_list: tuple | None = None
    a: float = 1.0
    a_list: tuple | None = None
    samples: int = 100_000
    grid: int = 256
    seed: int = 0
    shift: bool | None = None
    formula: str = HORIZON_T
    max_order: int = 2
    delta0: float | None = None
    out_dir: str = "runs"
    format: str = "csv"
    workers: int = 1
    plot: bool = True

    @property
    def params(self) -> GrushinParams:
        return GrushinParams(self.d, self.dprime, self.gamma)

    def to_file_text(self) -> str:
        """key = value lines that parse back to this config (minus command)."""
        lines = ["# experiment configuration"]
        for f in dataclasses.fields(self):
            if f.name == "command":
                continue
            val = getattr(self, f.name)
            if val is None:
                continue
            if isinstance(val, tuple):
                val = ",".join(format(v, ".17g") if isinstance(v, float) else str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = format(val, ".17g")
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunManifest:
    config: RunConfig
    version: str
    wall_time: float
    run_dir: str
    files: tuple  # of (relative path, sha256 hex digest)
    passed: bool


def _vec(text: str) -> tuple:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grushin",
        description="Monte Carlo experiments for the degenerate diffusion: "
        "density estimation, rate functions, and short-time asymptotics.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("--d", type=int, help="first-block dimension")
    parser.add_argument("--dprime", type=int, help="second-block dimension")
    parser.add_argument("--gamma", type=float, help="degeneracy exponent")
    parser.add_argument("--x", type=_vec, help="start of the first block (comma-separated)")
    parser.add_argument("--xi", type=_vec, help="end of the first block")
    parser.add_argument("--y", type=_vec, help="start of the second block")
    parser.add_argument("--eta", type=_vec, help="end of the second block")
    parser.add_argument("--T", type=float, help="time horizon")
    parser.add_argument("--T-list", dest="T_list", type=_vec, help="decreasing horizons")
    parser.add_argument("--a", type=float, help="scalar level (rate: target gap)")
    parser.add_argument("--a-list", dest="a_list", type=_vec, help="levels for taylor/bounds-check")
    parser.add_argument("--samples", type=int, help="Monte Carlo sample count")
    parser.add_argument("--grid", type=int, help="time-grid subinterval count")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--shift", dest="shift", action="store_true", default=None,
                        help="force importance-sampling drift on")
    parser.add_argument("--no-shift", dest="shift", action="store_false",
                        help="force importance-sampling drift off")
    parser.add_argument("--formula", choices=(HORIZON_T, UNIT_HORIZON), help="density estimator form")
    parser.add_argument("--max-order", dest="max_order", type=int, help="top even order of the taylor fit")
    parser.add_argument("--delta0", type=float, help="tail exponent override for degenerate bounds")
    parser.add_argument("--out-dir", dest="out_dir", help=f"output root (default ${OUT_DIR_ENV} or ./runs)")
    parser.add_argument("--format", choices=("csv", "json"), help="primary result format")
    parser.add_argument("--workers", type=int, help="MC worker threads (never changes results)")
    parser.add_argument("--plot", dest="plot", action="store_true", default=None, help="render figures")
    parser.add_argument("--no-plot", dest="plot", action="store_false")
    return parser


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, text: str):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    if name in ("x", "xi", "y", "eta", "T_list", "a_list"):
        return tuple(float(p) for p in text.split(","))
    if name in ("d", "dprime", "samples", "grid", "seed", "max_order", "workers"):
        return int(text)
    if name in ("gamma", "T", "a", "delta0"):
        return float(text)
    if name in ("shift", "plot"):
        low = text.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{name} must be true or false, got {text!r}")
        return low == "true"
    return text


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    if cfg.gamma <= 0:
        raise ConfigError(f"gamma must be positive, got {cfg.gamma}")
    if cfg.d < 1:
        raise ConfigError(f"d must be >= 1, got {cfg.d}")
    if cfg.dprime < 1:
        raise ConfigError(f"dprime must be >= 1, got {cfg.dprime}")
    if cfg.T <= 0:
        raise ConfigError(f"T must be positive, got {cfg.T}")
    if cfg.samples < 1:
        raise ConfigError(f"samples must be >= 1, got {cfg.samples}")
    if cfg.grid < 1:
        raise ConfigError(f"grid must be >= 1, got {cfg.grid}")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if cfg.a < 0:
        raise ConfigError(f"a must be nonnegative, got {cfg.a}")
    if cfg.T_list is not None:
        if any(t <= 0 for t in cfg.T_list):
            raise ConfigError(f"T_list entries must be positive, got {cfg.T_list}")
        if any(t2 >= t1 for t1, t2 in zip(cfg.T_list, cfg.T_list[1:])):
            raise ConfigError(f"T_list must be strictly decreasing, got {cfg.T_list}")
    if cfg.a_list is not None and any(a <= 0 for a in cfg.a_list):
        raise ConfigError(f"a_list entries must be positive, got {cfg.a_list}")
    if cfg.delta0 is not None and cfg.delta0 <= 0:
        raise ConfigError(f"delta0 must be positive, got {cfg.delta0}")
    for name in ("x", "xi"):
        if len(getattr(cfg, name)) != cfg.d:
            raise ConfigError(f"{name} must have d = {cfg.d} components, got {getattr(cfg, name)}")
    for name in ("y", "eta"):
        if len(getattr(cfg, name)) != cfg.dprime:
            raise ConfigError(
                f"{name} must have dprime = {cfg.dprime} components, got {getattr(cfg, name)}"
            )
    return cfg


def parse_config(argv) -> RunConfig:
    """RunConfig from flags plus an optional key = value config file;
    flags override file values."""
    parser = _build_parser()
    ns = parser.parse_args(argv)

    values = {}
    if ns.config:
        for key, text in _read_config_file(ns.config).items():
            values[key] = _coerce(key, text)
    for f in dataclasses.fields(RunConfig):
        if f.name == "command":
            continue
        flag_val = getattr(ns, f.name, None)
        if flag_val is not None:
            values[f.name] = tuple(flag_val) if isinstance(flag_val, (list, tuple)) else flag_val
    if "out_dir" not in values:
        values["out_dir"] = os.environ.get(OUT_DIR_ENV, "runs")

    # default endpoint dimensions follow d / dprime when not given explicitly
    d = values.get("d", 1)
    dp = values.get("dprime", 1)
    for name, dim in (("x", d), ("xi", d), ("y", dp), ("eta", dp)):
        values.setdefault(name, (0.0,) * dim)
    return _validate(RunConfig(command=ns.command, **values))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_default(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True, default=_json_default)
        fh.write("\n")


def _dispatch(cfg: RunConfig):
    """Run the configured experiment.

    Returns (summary dict, csv rows or None, figure renderer or None, passed).
    """
    rng = RngStream(cfg.seed)
    params = cfg.params
    summary = {"command": cfg.command, "seed": cfg.seed, "n_samples": cfg.samples, "grid_n": cfg.grid}

    if cfg.command == "density":
        est = estimate_density(
            params, cfg.T, (cfg.x, cfg.y), (cfg.xi, cfg.eta), cfg.samples, cfg.grid,
            rng, formula=cfg.formula, chunk_size=min(65536, cfg.samples), n_workers=cfg.workers,
        )
        summary.update(T=cfg.T, value=est.mean, stderr=est.stderr, formula=est.formula,
                       tail_ratio=est.tail_ratio)
        rows = [(cfg.T, est.mean, est.stderr)]
        return summary, rows, None, True

    if cfg.command == "rate":
        res = minimize_phi(PhiProblem(cfg.x, cfg.xi, cfg.a, cfg.gamma, cfg.grid))
        summary.update(m=res.m, grad_norm=res.grad_norm, iterations=res.iterations,
                       converged=res.converged, a=cfg.a)
        return summary, None, None, res.converged

    if cfg.command == "cgamma":
        value = c_gamma(cfg.gamma, cfg.grid)
        bound = c_gamma_upper_bound(cfg.gamma)
        summary.update(c_gamma=value, beta_bound=bound, gamma=cfg.gamma)
        return summary, None, None, value <= bound * (1 + 1e-9)

    if cfg.command == "on-diag":
        t_list = cfg.T_list if cfg.T_list is not None else (cfg.T,)
        report = on_diagonal_experiment(
            params, cfg.x, t_list, cfg.samples, cfg.grid, rng, n_workers=cfg.workers
        )
        summary.update(fitted_limit=report.fitted_limit, theory_value=report.theory_value,
                       fit_method=report.fit_method, passes=report.passes)

        def render(path):
            from grushin.plots import plot_report
            plot_report(report, path, "on-diagonal scaled density", "T^s p_T")

        return summary, list(report.rows), render, report.passes

    if cfg.command == "off-diag":
        t_list = cfg.T_list if cfg.T_list is not None else (cfg.T,)
        report = off_diagonal_experiment(
            params, (cfg.x, cfg.y), (cfg.xi, cfg.eta), t_list, cfg.samples, cfg.grid,
            rng, use_shift=cfg.shift, n_workers=cfg.workers,
        )
        summary.update(fitted_limit=report.fitted_limit, theory_value=report.theory_value,
                       fit_method=report.fit_method, passes=report.passes,
                       notes=list(report.notes))

        def render(path):
            from grushin.plots import plot_report
            plot_report(report, path, "off-diagonal log-density scale", "T log p_T")

        return summary, list(report.rows), render, report.passes

    if cfg.command == "degenerate":
        if cfg.delta0 is not None:
            delta0 = cfg.delta0
            summary.update(delta0_source="override")
        else:
            est = estimate_delta0(cfg.samples, cfg.grid, rng)
            delta0 = est.value
            summary.update(delta0_source="tail-regression", delta0_n_tail=est.n_tail,
                           delta0_low_confidence=est.low_confidence)
        gap = float(np.linalg.norm(np.asarray(cfg.eta) - np.asarray(cfg.y)))
        bounds = degenerate_bounds(params, gap, delta0)
        summary.update(lower_const=bounds.lower_const, upper_const=bounds.upper_const,
                       delta0_est=bounds.delta0_est, eps_delta0=bounds.eps_delta0,
                       eta_minus_y=gap, lower_bound=bounds.lower_bound(gap),
                       upper_bound=bounds.upper_bound(gap))
        return summary, None, None, bounds.lower_const <= bounds.upper_const < 0

    if cfg.command == "taylor":
        a_list = cfg.a_list if cfg.a_list is not None else (0.2, 0.4, 0.6, 0.8, 1.0)
        fit = taylor_experiment(
            params, cfg.x, cfg.xi, a_list, cfg.max_order, cfg.samples, cfg.grid, rng
        )
        summary.update(f0_exact=fit.f0_exact, max_order=fit.max_order,
                       evenness_residual=fit.evenness_residual)
        for order, coeff, err in fit.even_coeffs:
            summary[f"coeff_a{order}"] = coeff
            summary[f"coeff_a{order}_stderr"] = err
        rows = list(zip(fit.a_values, fit.f_values, fit.f_stderrs))

        def render(path):
            from grushin.plots import plot_taylor
            plot_taylor(fit, path)

        return summary, rows, render, fit.evenness_residual == 0.0

    if cfg.command == "bounds-check":
        a_list = cfg.a_list if cfg.a_list is not None else (0.75, 1.0, 1.5)
        report = max_prob_check(cfg.T, cfg.x, a_list, cfg.samples, cfg.grid, rng)
        summary.update(passes=report.passes)
        rows = [
            (
                r.a,
                r.prob_ge,
                0.5 * (r.ci_high - r.ci_low),
                r.ci_low,
                r.ci_high,
                r.upper_ge,
                r.lower_ge,
                r.series_prob,
                r.stay_bound,
                r.passes,
            )
            for r in report.rows
        ]

        def render(path):
            from grushin.plots import plot_max_prob
            plot_max_prob(report, path)

        return summary, rows, render, report.passes

    raise ConfigError(f"command must be one of {COMMANDS}, got {cfg.command!r}")


def _make_run_dir(out_dir: str, command: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S")
    for suffix in range(1000):
        name = f"{command}-{stamp}" if suffix == 0 else f"{command}-{stamp}-{suffix}"
        path = os.path.join(out_dir, name)
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            continue
    raise OSError(f"could not create a fresh run directory under {out_dir}")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def run(cfg: RunConfig) -> RunManifest:
    """Dispatch the experiment and persist results, figures, and manifest."""
    start = time.monotonic()
    summary, rows, render, passed = _dispatch(cfg)
    run_dir = _make_run_dir(cfg.out_dir, cfg.command)

    outputs = []
    if rows is not None and cfg.command in CSV_HEADERS:
        csv_path = os.path.join(run_dir, "rows.csv")
        _write_csv(csv_path, CSV_HEADERS[cfg.command], rows)
        outputs.append("rows.csv")
    if cfg.format == "csv" and rows is None:
        csv_path = os.path.join(run_dir, "result.csv")
        keys = sorted(k for k, v in summary.items() if not isinstance(v, (list, tuple)))
        _write_csv(csv_path, keys, [[summary[k] for k in keys]])
        outputs.append("result.csv")
    _write_json(os.path.join(run_dir, "result.json"), summary)
    outputs.append("result.json")
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# command: {cfg.command}\n")
        fh.write(cfg.to_file_text())
    outputs.append("config.txt")
    if cfg.plot and render is not None:
        fig_path = os.path.join(run_dir, "figure.png")
        render(fig_path)
        outputs.append("figure.png")

    files = tuple((name, _sha256(os.path.join(run_dir, name))) for name in outputs)
    manifest = RunManifest(
        config=cfg,
        version=grushin.__version__,
        wall_time=time.monotonic() - start,
        run_dir=run_dir,
        files=files,
        passed=passed,
    )
    payload = {
        "version": manifest.version,
        "wall_time": manifest.wall_time,
        "run_dir": run_dir,
        "passed": passed,
        "files": {name: digest for name, digest in files},
        "config": {
            f.name: (list(v) if isinstance(v := getattr(cfg, f.name), tuple) else v)
            for f in dataclasses.fields(cfg)
        },
    }
    tmp = os.path.join(run_dir, "manifest.json.tmp")
    _write_json(tmp, payload)
    os.replace(tmp, os.path.join(run_dir, "manifest.json"))
    return manifest


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 2 on bad flags; map to the error exit code
        return 0 if exc.code in (0, None) else 1
    try:
        manifest = run(cfg)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"run dir: {manifest.run_dir}")
    print(f"passed: {manifest.passed}")
    return 0 if manifest.passed else 2


if __name__ == "__main__":
    sys.exit(main())
