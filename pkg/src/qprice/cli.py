"""Command-line front end: config-driven experiments with reproducible CSV output.

Experiments are described by INI-style config files (see ``configs/`` for the
bundled ones) and run as::

    qprice <subcommand> --config FILE [--seed N] [--out DIR] [--threads N]
                        [--set section.key=value ...]

Every run writes one or more CSV files plus a ``.meta.json`` sidecar holding
the fully resolved config, the seed, and the package version.  Reruns with
the same config and seed produce byte-identical CSV regardless of the thread
count.  Exit status: 0 on success, 2 on a config error, 3 on an I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    bias_variance_diagnostic,
    compute_regret,
    estimate_psi_curve,
    run_coupling,
    service_study,
)
from .joining import ExponentialJoining, InterarrivalLaw, JoiningModel, PolynomialJoining
from .service import Deterministic, Exponential, Gamma, ServiceDistribution
from .sgd import SgdConfig, log_schedule, power_schedule, run_sgd, sqrt_schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

KINDS = ("psi-grid", "sgd", "coupling", "grad-check", "bias-var", "regret", "service-study")


class ConfigError(Exception):
    """Invalid or missing config field; message names the offending field."""


# --------------------------------------------------------------------------
# config handling


def _parse_sets(sets: list[str]) -> dict[tuple[str, str], str]:
    out = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, _, field = key.partition(".")
        out[(section.strip(), field.strip())] = value.strip()
    return out


def load_config(path: str | Path, sets: list[str] | None = None) -> dict[str, dict[str, str]]:
    """Parse an experiment config and apply --set overrides.

    Returns the config as a plain nested dict of strings; resolution of
    defaults and types happens at use time so the resolved form can be dumped
    and reloaded losslessly.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(str(path))
    if not read:
        raise OSError(f"cannot read config file {path}")
    cfg = {s: dict(parser.items(s)) for s in parser.sections()}
    for (section, field), value in _parse_sets(sets or []).items():
        cfg.setdefault(section, {})[field] = value
    return cfg


def dump_config(cfg: dict[str, dict[str, str]]) -> str:
    parser = configparser.ConfigParser()
    for section in sorted(cfg):
        parser[section] = dict(sorted(cfg[section].items()))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _get(cfg: dict, section: str, field: str, conv, default=None, check=None, describe=""):
    try:
        raw = cfg[section][field]
    except KeyError:
        if default is not None:
            return default
        raise ConfigError(f"[{section}] {field} is required") from None
    try:
        value = conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {field} must be a {conv.__name__}, got {raw!r}") from None
    if check is not None and not check(value):
        raise ConfigError(f"[{section}] {field} must be {describe}, got {raw}")
    return value


def _get_floats(cfg: dict, section: str, field: str) -> list[float]:
    raw = _get(cfg, section, field, str)
    try:
        return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"[{section}] {field} must be a list of numbers, got {raw!r}") from None


def build_model(cfg: dict) -> JoiningModel:
    family = _get(cfg, "model", "family", str).lower()
    kwargs = dict(
        theta1=_get(cfg, "model", "theta1", float, check=lambda v: v > 0, describe="positive"),
        theta2=_get(cfg, "model", "theta2", float, check=lambda v: v > 0, describe="positive"),
        lambda_max=_get(cfg, "model", "lambda_max", float, check=lambda v: v > 0, describe="positive"),
    )
    if family == "exponential":
        return ExponentialJoining(**kwargs)
    if family == "polynomial":
        return PolynomialJoining(**kwargs)
    raise ConfigError(f"[model] family must be exponential or polynomial, got {family!r}")


def build_service(cfg: dict) -> ServiceDistribution:
    kind = _get(cfg, "service", "kind", str).lower()
    pos = (lambda v: v > 0, "positive")
    if kind == "exponential":
        return Exponential(rate=_get(cfg, "service", "rate", float, check=pos[0], describe=pos[1]))
    if kind == "gamma":
        return Gamma(
            shape=_get(cfg, "service", "shape", float, check=pos[0], describe=pos[1]),
            rate=_get(cfg, "service", "rate", float, check=pos[0], describe=pos[1]),
        )
    if kind == "deterministic":
        return Deterministic(value=_get(cfg, "service", "value", float, check=lambda v: v >= 0, describe=">= 0"))
    raise ConfigError(f"[service] kind must be exponential, gamma or deterministic, got {kind!r}")


def build_grid(cfg: dict) -> np.ndarray:
    start = _get(cfg, "grid", "start", float)
    stop = _get(cfg, "grid", "stop", float)
    step = _get(cfg, "grid", "step", float, check=lambda v: v > 0, describe="positive")
    if stop <= start:
        raise ConfigError(f"[grid] stop must exceed start, got [{start}, {stop}]")
    return np.arange(start, stop + 0.5 * step, step)


def build_sgd_config(cfg: dict) -> SgdConfig:
    window = _get(cfg, "sgd", "window", str, default="log").lower()
    c = _get(cfg, "sgd", "window_c", float, check=lambda v: v > 0, describe="positive")
    if window == "log":
        schedule = log_schedule(c)
    elif window == "sqrt":
        schedule = sqrt_schedule(c)
    elif window == "power":
        e = _get(cfg, "sgd", "window_e", float, check=lambda v: 0 < v, describe="positive")
        schedule = power_schedule(c, e)
    else:
        raise ConfigError(f"[sgd] window must be log, sqrt or power, got {window!r}")
    try:
        return SgdConfig(
            p_lo=_get(cfg, "sgd", "p_lo", float, default=0.01),
            p_hi=_get(cfg, "sgd", "p_hi", float),
            p0=_get(cfg, "sgd", "p0", float),
            eta0=_get(cfg, "sgd", "eta0", float),
            alpha=_get(
                cfg, "sgd", "alpha", float,
                check=lambda v: 0.5 < v <= 1.0, describe="in (0.5, 1]",
            ),
            window_schedule=schedule,
            max_iterations=_get(cfg, "sgd", "iterations", int, check=lambda v: v >= 1, describe=">= 1"),
        )
    except ValueError as exc:
        raise ConfigError(f"[sgd] {exc}") from None


# --------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_sidecar(csv_path: Path, cfg: dict, seed: int) -> None:
    meta = {
        "config": {s: dict(sorted(v.items())) for s, v in sorted(cfg.items())},
        "seed": seed,
        "version": __version__,
    }
    csv_path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# experiment runners (one per subcommand)


def _run_psi_grid(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    service = build_service(cfg)
    grid = build_grid(cfg)
    n_eff = _get(cfg, "grid", "n_eff", int, check=lambda v: v >= 1, describe=">= 1")
    curve = estimate_psi_curve(model, service, grid, n_eff, np.random.default_rng(seed), threads)
    path = out_dir / f"{name}_psi.csv"
    write_csv(path, ["price", "psi_hat"], [[p, v] for p, v in zip(curve.grid, curve.psi_hat)])
    write_sidecar(path, cfg, seed)
    print(
        f"psi-grid: argmax p*={curve.argmax_price:g} psi*={curve.argmax_value:.6g} "
        f"(refined p*={curve.refined_price:.6g}) -> {path}"
    )
    return [path]


def _sgd_traces(cfg, seed, model, service):
    sgd_cfg = build_sgd_config(cfg)
    n_seeds = _get(cfg, "sgd", "seeds", int, default=1, check=lambda v: v >= 1, describe=">= 1")
    return sgd_cfg, [
        run_sgd(sgd_cfg, model, service, np.random.default_rng([seed, i])) for i in range(n_seeds)
    ]


def _run_sgd(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    service = build_service(cfg)
    psi_star = _get(cfg, "sgd", "psi_star", float, default=math.nan)
    _, traces = _sgd_traces(cfg, seed, model, service)
    paths = []
    for i, trace in enumerate(traces):
        rows = []
        cum_regret = 0.0
        for it in trace.iterations:
            cum_regret += psi_star * it.duration - it.price * it.count
            rows.append(
                [it.k, it.price, it.t_star, it.duration, it.count, it.a_hat,
                 it.grad_a_hat, it.psi_grad_hat, it.revenue, it.sim_time, cum_regret]
            )
        path = out_dir / f"{name}_sgd_{i}.csv"
        write_csv(
            path,
            ["k", "price", "T_star", "T_k", "N_k", "a_hat", "grad_a_hat",
             "psi_grad_hat", "revenue", "cum_sim_time", "cum_regret"],
            rows,
        )
        write_sidecar(path, cfg, seed)
        paths.append(path)
        print(f"sgd run {i}: final price {trace.final_price:.6g} -> {path}")
    return paths


def _run_coupling(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    service = build_service(cfg)
    report = run_coupling(
        model,
        service,
        price=_get(cfg, "coupling", "price", float),
        w1_0=_get(cfg, "coupling", "w1", float, check=lambda v: v >= 0, describe=">= 0"),
        w2_0=_get(cfg, "coupling", "w2", float, check=lambda v: v >= 0, describe=">= 0"),
        n_steps=_get(cfg, "coupling", "steps", int, check=lambda v: v >= 1, describe=">= 1"),
        replications=_get(cfg, "coupling", "replications", int, check=lambda v: v >= 1, describe=">= 1"),
        rng=np.random.default_rng(seed),
    )
    path = out_dir / f"{name}_coupling.csv"
    write_csv(
        path,
        ["n", "workload_gap", "interarrival_gap", "arrival_time_gap"],
        [[n, a, b, c] for n, (a, b, c) in enumerate(
            zip(report.workload_gap, report.interarrival_gap, report.arrival_time_gap), start=1)],
    )
    write_sidecar(path, cfg, seed)
    coupled = int((report.coupling_steps >= 0).sum())
    print(
        f"coupling: decay rate {report.decay_rate:.4f}, {coupled}/{len(report.coupling_steps)} "
        f"paths coupled, max post-coupling drift {report.post_coupling_drift.max():.3g} -> {path}"
    )
    return [path]


def _run_grad_check(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    n_points = _get(cfg, "grad-check", "points", int, default=200, check=lambda v: v >= 1, describe=">= 1")
    p_max = _get(cfg, "grad-check", "p_max", float, default=30.0)
    w_max = _get(cfg, "grad-check", "w_max", float, default=15.0)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_points):
        p = rng.uniform(0.1, p_max)
        w = rng.uniform(0.01, w_max)
        z = rng.uniform(0.005, 0.995)
        law = InterarrivalLaw(model, p, w)
        if abs(z - law.branch_point()) < 1e-4:
            continue
        hp = 1e-6 * max(1.0, p)
        hw = 1e-6 * max(1.0, w)
        fd_p = (
            InterarrivalLaw(model, p + hp, w).inverse_cdf(z)
            - InterarrivalLaw(model, p - hp, w).inverse_cdf(z)
        ) / (2 * hp)
        fd_w = (
            InterarrivalLaw(model, p, w + hw).inverse_cdf(z)
            - InterarrivalLaw(model, p, w - hw).inverse_cdf(z)
        ) / (2 * hw)
        ap = law.partial_p_inverse(z)
        aw = law.partial_w_inverse(z)
        rows.append(
            [p, w, z, ap, fd_p, abs(ap - fd_p) / max(1e-300, abs(fd_p)),
             aw, fd_w, abs(aw - fd_w) / max(1e-300, abs(fd_w))]
        )
    path = out_dir / f"{name}_gradcheck.csv"
    write_csv(
        path,
        ["price", "workload", "seed", "partial_p", "fd_p", "rel_err_p",
         "partial_w", "fd_w", "rel_err_w"],
        rows,
    )
    write_sidecar(path, cfg, seed)
    worst_p = max(r[5] for r in rows)
    worst_w = max(r[8] for r in rows)
    print(f"grad-check: {len(rows)} points, worst rel err p {worst_p:.3g}, w {worst_w:.3g} -> {path}")
    return [path]


def _run_bias_var(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    service = build_service(cfg)
    windows = _get_floats(cfg, "bias-var", "windows")
    reps_raw = _get_floats(cfg, "bias-var", "replications")
    reps = [int(r) for r in reps_raw] if len(reps_raw) > 1 else int(reps_raw[0])
    rows, oracle = bias_variance_diagnostic(
        model,
        service,
        price=_get(cfg, "bias-var", "price", float),
        window_sizes=windows,
        replications=reps,
        rng=np.random.default_rng(seed),
        burn_in_arrivals=_get(cfg, "bias-var", "burn_in", int, default=20_000),
        oracle_step=_get(cfg, "bias-var", "oracle_step", float, default=0.2),
        oracle_arrivals=_get(cfg, "bias-var", "oracle_arrivals", int, default=200_000),
        oracle_replications=_get(cfg, "bias-var", "oracle_replications", int, default=5),
    )
    path = out_dir / f"{name}_biasvar.csv"
    write_csv(
        path,
        ["t_star", "replications", "mean_grad", "std_error", "bias_proxy",
         "second_moment", "oracle_grad", "oracle_se"],
        [[r.t_star, r.replications, r.mean_grad, r.std_error, r.bias_proxy,
          r.second_moment, oracle.value, oracle.std_error] for r in rows],
    )
    write_sidecar(path, cfg, seed)
    print(f"bias-var: oracle grad {oracle.value:.4f} (se {oracle.std_error:.4f}) -> {path}")
    return [path]


def _run_regret(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    service = build_service(cfg)
    grid = build_grid(cfg)
    n_eff = _get(cfg, "grid", "n_eff", int, check=lambda v: v >= 1, describe=">= 1")
    # oracle substream index sits far above any per-trace index
    curve = estimate_psi_curve(model, service, grid, n_eff, np.random.default_rng([seed, 2**31]), threads)
    _, traces = _sgd_traces(cfg, seed, model, service)
    paths = []
    for i, trace in enumerate(traces):
        report = compute_regret(trace, curve)
        rows = [
            [it.k, it.t_star, it.duration, inc, cum, comp, cum / comp]
            for it, inc, cum, comp in zip(
                trace.iterations, report.increments, report.cumulative, report.comparator)
        ]
        path = out_dir / f"{name}_regret_{i}.csv"
        write_csv(
            path,
            ["k", "T_star", "T_k", "increment", "cum_regret", "comparator", "ratio"],
            rows,
        )
        write_sidecar(path, cfg, seed)
        paths.append(path)
    print(
        f"regret: oracle p*={curve.argmax_price:g} psi*={curve.argmax_value:.6g}, "
        f"{len(traces)} trace(s) -> {out_dir}"
    )
    return paths


def _run_service_study(cfg, seed, out_dir, threads, name):
    model = build_model(cfg)
    sweep = _get(cfg, "service-study", "sweep", str).lower()
    values = _get_floats(cfg, "service-study", "values")
    if sweep == "exp-mean":
        services = [Exponential(rate=1.0 / m) for m in values]
    elif sweep == "gamma-var":
        services = [Gamma(shape=1.0 / v, rate=1.0 / v) for v in values]
    else:
        raise ConfigError(f"[service-study] sweep must be exp-mean or gamma-var, got {sweep!r}")
    grid = build_grid(cfg)
    n_eff = _get(cfg, "grid", "n_eff", int, check=lambda v: v >= 1, describe=">= 1")
    results = service_study(model, services, grid, n_eff, np.random.default_rng(seed), threads)
    path = out_dir / f"{name}_service_study.csv"
    write_csv(
        path,
        ["sweep_value", "service_kind", "p_star", "refined_p_star", "psi_star"],
        [[v, svc.kind, c.argmax_price, c.refined_price, c.argmax_value]
         for v, (svc, c) in zip(values, results)],
    )
    write_sidecar(path, cfg, seed)
    for v, (_, c) in zip(values, results):
        print(f"service-study {sweep}={v:g}: p*={c.argmax_price:g} psi*={c.argmax_value:.6g}")
    return [path]


_RUNNERS = {
    "psi-grid": _run_psi_grid,
    "sgd": _run_sgd,
    "coupling": _run_coupling,
    "grad-check": _run_grad_check,
    "bias-var": _run_bias_var,
    "regret": _run_regret,
    "service-study": _run_service_study,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qprice",
        description="Queue-pricing experiments: simulation, gradient estimation, online pricing.",
    )
    parser.add_argument("kind", choices=KINDS, help="experiment to run")
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for grid evaluation")
    parser.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override a config field (repeatable)",
    )
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.set)
        declared = _get(cfg, "experiment", "kind", str, default=args.kind)
        if declared != args.kind:
            raise ConfigError(
                f"[experiment] kind is {declared!r} but the {args.kind!r} subcommand was invoked"
            )
        seed = args.seed if args.seed is not None else _get(cfg, "experiment", "seed", int, default=0)
        if seed < 0:
            raise ConfigError(f"seed must be >= 0, got {seed}")
        name = _get(cfg, "experiment", "name", str, default=Path(args.config).stem)
        out_dir = Path(args.out if args.out is not None else _get(cfg, "output", "path", str, default="out"))
        out_dir.mkdir(parents=True, exist_ok=True)
        _RUNNERS[args.kind](cfg, seed, out_dir, max(1, args.threads), name)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
