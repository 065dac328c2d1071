"""Command-line front end: config parsing, experiment orchestration, reports.

Exit codes: 0 when every assertion of the subcommand passes, 1 on assertion
failure, 2 on configuration errors.  Given the same config and seed, every
subcommand produces byte-identical CSV/JSON payloads; wall-clock metadata
goes to a separate run_meta.txt excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .acceptance import AcceptanceContext, run_all
from .config import ConfigError, ExperimentConfig, load_config
from .moments import (
    ModelError,
    limit_mean_excess,
    limit_var_excess,
    limit_var_isolated,
    mean_excess,
    mean_isolated,
    swapped_truncation_means,
    var_excess,
    var_isolated,
    variance_ratio,
)
from .quadrature import QuadratureError
from .reports import write_csv, write_json, write_run_meta
from .simulator import SimulationError, dump_realization, simulate_graph
from .stats import (
    StatRequest,
    StatsError,
    covariance_field,
    exceedance_fraction,
    ks_normality,
    martingale_identity_oracle,
    random_filtration_space,
    replicate,
    replicate_many,
    variance_density_convergence,
    variance_lower_bound,
)

_MOMENT_FIELDS = ("quantity", "R", "n", "lam_n", "value", "error_bound", "config_hash", "base_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcmlab",
        description="Random connection model laboratory: simulation, quadrature moments, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": "replicate counting statistics and summarize them",
        "moments": "evaluate closed-form and limiting moments by quadrature",
        "clt-test": "KS normality check of the standardized isolated count",
        "truncation-demo": "coupling identity and swapped-truncation degeneracy",
        "variance-growth": "variance density against its limit; optional lower bound",
        "covariance-field": "lattice covariance field of the component statistic",
        "martingale-check": "exact martingale variance identity on random finite spaces",
        "verify-all": "run the full acceptance suite",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="override run.base_seed")
        p.add_argument("--workers", type=int, default=None, help="override run.workers")
        p.add_argument("--out-dir", default=None, help="override output.dir")
        p.add_argument("--format", choices=("csv", "json", "both"), default=None,
                       help="override output.format")
        if name == "simulate":
            p.add_argument("--dump-realization", default=None, metavar="PATH",
                           help="write one raw realization (points + edges) as text")
        if name == "variance-growth":
            p.add_argument("--lower-bound", action="store_true",
                           help="also produce the quadratic lower-bound certificate (d=2)")
    return parser


def _effective(args) -> ExperimentConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.base_seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.out_dir is not None:
        overrides.append(f"output.dir={args.out_dir}")
    if args.format is not None:
        overrides.append(f"output.format={args.format}")
    return load_config(args.config, overrides)


def _emit(cfg: ExperimentConfig, stem: str, fieldnames, rows, extra=None):
    out = Path(cfg.out_dir)
    payload = {
        "base_seed": cfg.base_seed,
        "config_hash": cfg.config_hash(),
        "rows": rows,
    }
    if extra:
        payload.update(extra)
    written = []
    if "csv" in cfg.formats:
        written.append(write_csv(out / f"{stem}.csv", fieldnames, rows))
    if "json" in cfg.formats:
        written.append(write_json(out / f"{stem}.json", payload))
    return written


def _workers(cfg: ExperimentConfig):
    return cfg.workers if cfg.workers > 0 else None


# -- subcommand handlers --------------------------------------------------------


def cmd_moments(cfg: ExperimentConfig, args) -> int:
    rows = []
    h = cfg.config_hash()

    def add(quantity, result, R=None, n=None, lam_n=None):
        rows.append(
            {
                "quantity": quantity,
                "R": R,
                "n": n,
                "lam_n": lam_n,
                "value": result.value,
                "error_bound": result.error,
                "config_hash": h,
                "base_seed": cfg.base_seed,
            }
        )

    add("limit_var_isolated", limit_var_isolated(cfg.lam, cfg.g, cfg.d, cfg.spec))
    for R in cfg.R_list:
        add("limit_mean_excess", limit_mean_excess(cfg.lam, cfg.g, R, cfg.d, cfg.spec), R=R)
        add("limit_var_excess", limit_var_excess(cfg.lam, cfg.g, R, cfg.d, cfg.spec), R=R)
        add("variance_ratio", variance_ratio(cfg.lam, cfg.g, R, cfg.d, cfg.spec), R=R)
    for n in cfg.n_list:
        model = cfg.model(n)
        add("mean_isolated", mean_isolated(model, cfg.spec), n=n, lam_n=model.lam_n)
        add("var_isolated", var_isolated(model, cfg.spec), n=n, lam_n=model.lam_n)
        for R in cfg.R_list:
            add("mean_excess", mean_excess(model, R, cfg.spec), R=R, n=n, lam_n=model.lam_n)
            add("var_excess", var_excess(model, R, cfg.spec), R=R, n=n, lam_n=model.lam_n)
    _emit(cfg, "moments", _MOMENT_FIELDS, rows)
    write_run_meta(cfg.out_dir, "moments", h)
    return 0


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    R = cfg.R_list[0]
    rows = []
    bias = 0.0
    for n in cfg.n_list:
        model = cfg.model(n)
        reqs = [
            StatRequest(name="isolated", kind="isolated"),
            StatRequest(name="near_isolated", kind="near_isolated", r0=R / n),
            StatRequest(name="excess", kind="excess", r0=R / n),
        ]
        out = replicate_many(model, reqs, cfg.m, cfg.base_seed, cfg.policy, _workers(cfg))
        for name in ("isolated", "near_isolated", "excess"):
            sample = out[name]
            bias = max(bias, sample.bias_bound)
            rows.append(
                {
                    "statistic": name,
                    "R": R,
                    "n": n,
                    "lam_n": model.lam_n,
                    "m": sample.m,
                    "mean": sample.mean,
                    "se_mean": sample.se_mean,
                    "variance": sample.variance,
                    "config_hash": cfg.config_hash(),
                    "base_seed": cfg.base_seed,
                }
            )
    fields = ("statistic", "R", "n", "lam_n", "m", "mean", "se_mean", "variance",
              "config_hash", "base_seed")
    _emit(cfg, "simulate", fields, rows, extra={"bias_bound": bias})
    if getattr(args, "dump_realization", None):
        model = cfg.model(cfg.n_list[0])
        graph = simulate_graph(
            model.g_n, model.lam_n, model.d, model.K,
            np.random.SeedSequence(entropy=cfg.base_seed, spawn_key=(0,)),
            cfg.policy, min_reach=R / cfg.n_list[0], min_margin=R / cfg.n_list[0],
        )
        dump_realization(graph, args.dump_realization)
    write_run_meta(cfg.out_dir, "simulate", cfg.config_hash())
    return 0


def cmd_clt_test(cfg: ExperimentConfig, args) -> int:
    rows = []
    all_ok = True
    bias = 0.0
    for n in cfg.n_list:
        model = cfg.model(n)
        sample = replicate(
            model,
            StatRequest(name="isolated", kind="isolated"),
            cfg.m,
            cfg.base_seed,
            cfg.policy,
            _workers(cfg),
        )
        bias = max(bias, sample.bias_bound)
        ks = ks_normality(sample)
        ok = ks < cfg.ks_threshold
        all_ok = all_ok and ok
        rows.append(
            {
                "n": n,
                "lam_n": model.lam_n,
                "m": sample.m,
                "ks_distance": ks,
                "threshold": cfg.ks_threshold,
                "passed": ok,
                "config_hash": cfg.config_hash(),
                "base_seed": cfg.base_seed,
            }
        )
    fields = ("n", "lam_n", "m", "ks_distance", "threshold", "passed", "config_hash", "base_seed")
    _emit(cfg, "clt_test", fields, rows, extra={"bias_bound": bias})
    write_run_meta(cfg.out_dir, "clt-test", cfg.config_hash())
    return 0 if all_ok else 1


def cmd_truncation_demo(cfg: ExperimentConfig, args) -> int:
    R = cfg.R_list[0]
    rows = []
    coupling_ok = True
    bias = 0.0
    for n in cfg.n_list:
        model = cfg.model(n)
        reqs = [
            StatRequest(name="I", kind="isolated"),
            StatRequest(name="J", kind="near_isolated", r0=R / n),
            StatRequest(name="L", kind="excess", r0=R / n),
            StatRequest(name="C", kind="coupling", R=R),
        ]
        out = replicate_many(model, reqs, min(cfg.m, 500), cfg.base_seed, cfg.policy, _workers(cfg))
        bias = max(bias, out["I"].bias_bound)
        exact = bool(np.all(out["C"].values == 1.0))
        additive = bool(
            np.all(out["J"].values == out["I"].values + out["L"].values)
        )
        coupling_ok = coupling_ok and exact and additive
        rows.append(
            {
                "section": "coupling",
                "n": n,
                "R": R,
                "value": 1.0 if (exact and additive) else 0.0,
                "note": "1 when J == I(coupled cut graph) and J == I + L on every replication",
            }
        )

    diam = cfg.K.diameter
    if R > diam:
        for row in swapped_truncation_means(
            cfg.lam, cfg.g, R, cfg.K, cfg.d, cfg.n_list, cfg.density_rule, cfg.spec
        ):
            rows.append(
                {
                    "section": "swapped_mean_density",
                    "n": row.n,
                    "R": R,
                    "value": row.value,
                    "note": "normalized mean when truncation is applied after scaling",
                }
            )
    else:
        rows.append(
            {
                "section": "swapped_mean_density",
                "n": None,
                "R": R,
                "value": None,
                "note": f"skipped: needs R > diam(K) = {diam:g}",
            }
        )

    n_big = max(cfg.n_list)
    model = cfg.model(n_big)
    sigma = math.sqrt(max(var_isolated(model, cfg.spec).value, 1e-300))
    for R_c in cfg.R_list:
        sample = replicate(
            model,
            StatRequest(name="L", kind="excess", r0=R_c / n_big),
            min(cfg.m, 3000),
            cfg.base_seed,
            cfg.policy,
            _workers(cfg),
        )
        center = mean_excess(model, R_c, cfg.spec).value
        rows.append(
            {
                "section": "collapse_fraction",
                "n": n_big,
                "R": R_c,
                "value": exceedance_fraction(sample, center, sigma, 0.25),
                "note": "P(|L - EL| / sd(I) >= 0.25); falls as R grows",
            }
        )

    fields = ("section", "n", "R", "value", "note")
    _emit(cfg, "truncation_demo", fields, rows, extra={"bias_bound": bias})
    write_run_meta(cfg.out_dir, "truncation-demo", cfg.config_hash())
    return 0 if coupling_ok else 1


def cmd_variance_growth(cfg: ExperimentConfig, args) -> int:
    limit = limit_var_isolated(cfg.lam, cfg.g, cfg.d, cfg.spec).value
    rows = [
        {
            "kind": "density",
            "n": row.n,
            "lam_n": row.lam_n,
            "value": row.density,
            "se": row.density_se,
            "limit": row.limit,
            "gap": row.gap,
        }
        for row in variance_density_convergence(
            cfg.model(),
            cfg.n_list,
            cfg.m,
            cfg.base_seed,
            limit,
            policy=cfg.policy,
            workers=_workers(cfg),
        )
    ]
    ok = True
    extra = {}
    if getattr(args, "lower_bound", False):
        if cfg.d != 2:
            raise ConfigError("--lower-bound needs model.d = 2")
        cert, bound_rows = variance_lower_bound(
            cfg.lam,
            cfg.g,
            cfg.r,
            [int(n) for n in cfg.n_list],
            m_mu=max(cfg.m, 2000),
            m_var=cfg.m,
            base_seed=cfg.base_seed,
            policy=cfg.policy,
            workers=_workers(cfg),
        )
        for row in bound_rows:
            ok = ok and row.var >= row.bound
            rows.append(
                {
                    "kind": "lower_bound",
                    "n": row.n,
                    "lam_n": cfg.lam,
                    "value": row.var,
                    "se": row.var_se,
                    "limit": row.bound,
                    "gap": row.var - row.bound,
                }
            )
        extra = {
            "certificate": {
                "mu_hat": cert.mu_hat,
                "mu_se": cert.mu_se,
                "M": cert.M,
                "alpha": cert.alpha,
                "gamma": cert.gamma,
                "r": cert.r,
                "support_radius": cert.R,
            }
        }
    fields = ("kind", "n", "lam_n", "value", "se", "limit", "gap")
    _emit(cfg, "variance_growth", fields, rows, extra=extra)
    write_run_meta(cfg.out_dir, "variance-growth", cfg.config_hash())
    return 0 if ok else 1


def cmd_covariance_field(cfg: ExperimentConfig, args) -> int:
    model = cfg.model()
    supp = model.g_n.support_radius
    if supp is None:
        raise ConfigError("covariance-field needs a bounded-support connection function")
    z_max = int(math.ceil(cfg.r * supp)) + 1
    field = covariance_field(
        model, cfg.r, z_max, cfg.m, cfg.base_seed, policy=cfg.policy, workers=_workers(cfg)
    )
    rows = [
        {
            "offset": " ".join(str(z) for z in off),
            "cov": float(c),
            "se": float(s),
        }
        for off, c, s in zip(field.offsets, field.cov, field.se)
    ]
    ok = field.total > 3.0 * field.total_se
    _emit(
        cfg,
        "covariance_field",
        ("offset", "cov", "se"),
        rows,
        extra={
            "total": field.total,
            "total_se": field.total_se,
            "positive_by_3se": ok,
            "lattice_side": field.lattice_side,
            "dependence_range": field.dependence_range,
        },
    )
    write_run_meta(cfg.out_dir, "covariance-field", cfg.config_hash())
    return 0 if ok else 1


def cmd_martingale_check(cfg: ExperimentConfig, args) -> int:
    rng = np.random.default_rng(cfg.base_seed)
    rows = []
    worst = 0.0
    for k in range(100):
        report = martingale_identity_oracle(random_filtration_space(rng))
        worst = max(worst, report.abs_diff)
        rows.append(
            {
                "space": k,
                "variance": report.variance,
                "telescoped": report.telescoped,
                "abs_diff": report.abs_diff,
            }
        )
    ok = worst < 1e-12
    _emit(
        cfg,
        "martingale_check",
        ("space", "variance", "telescoped", "abs_diff"),
        rows,
        extra={"worst_abs_diff": worst, "passed": ok},
    )
    write_run_meta(cfg.out_dir, "martingale-check", cfg.config_hash())
    return 0 if ok else 1


def cmd_verify_all(cfg: ExperimentConfig, args) -> int:
    ctx = AcceptanceContext(
        base_seed=cfg.base_seed,
        workers=_workers(cfg),
        spec=cfg.spec,
        policy=cfg.policy,
    )
    results = run_all(ctx, echo=print)
    rows = [
        {
            "criterion": r.cid,
            "name": r.name,
            "passed": r.passed,
            "runtime_s": round(r.runtime, 3),
        }
        for r in results
    ]
    _emit(
        cfg,
        "verify_all",
        ("criterion", "name", "passed", "runtime_s"),
        rows,
        extra={"details": {r.cid: r.details for r in results}},
    )
    write_run_meta(cfg.out_dir, "verify-all", cfg.config_hash())
    return 0 if all(r.passed for r in results) else 1


_HANDLERS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "clt-test": cmd_clt_test,
    "truncation-demo": cmd_truncation_demo,
    "variance-growth": cmd_variance_growth,
    "covariance-field": cmd_covariance_field,
    "martingale-check": cmd_martingale_check,
    "verify-all": cmd_verify_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, SimulationError, StatsError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
