"""Command-line entry point.

Subcommands:
  preset <a|b|c|d>   run a built-in case and write its result rows
  sweep --config F   run a factorial sweep from a flat JSON config
  verify             ordering suite + tail-eigenvalue concentration check
  risk               evaluate one estimator point on one drawn instance

Exit codes: 0 success, 1 validation error, 2 numerical failure
(ill-conditioned Gram without --jitter), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, config_from_dict, load_config, save_config
from .estimators import EstimatorKind, SingularDesignError
from .harness import resolve_workers, run_preset, run_sweep, write_results
from .presets import CASES, theorem_check_env
from .risk import conditional_expected_risk, lemma_approx_risk, mc_expected_risk
from .spectra import SpectrumSpec
from .synth import derive_rng, sample_design
from .theory import eigen_band_check, lambda_prime, verify_theorem_orderings

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--mc-draws", type=int, default=None)
    parser.add_argument("--out", default=None, help="output path for result rows")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: OVERADAPT_WORKERS or all cores)")
    parser.add_argument("--jitter", action="store_true",
                        help="rescue near-singular Grams with a recorded diagonal boost")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overadapt",
        description="Pretrain/fine-tune linear-regression risk laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_preset = sub.add_parser("preset", help="run a built-in simulation case")
    p_preset.add_argument("case", choices=sorted(CASES))
    p_preset.add_argument("--full", action="store_true",
                          help="full dimension p=10000 (default p=2000)")
    p_preset.add_argument("--plot", default=None, metavar="PREFIX",
                          help="write PREFIX-tradeoff.svg and PREFIX-ft.svg")
    p_preset.add_argument("--methods", nargs="+", default=None,
                          choices=("analytic", "monte_carlo", "lemma_approx"))
    p_preset.add_argument("--tau-grid", type=float, nargs="+", default=None)
    p_preset.add_argument("--lambda", dest="lam", type=float, default=None,
                          help="override the trade-off ridge level")
    _add_common(p_preset)

    p_sweep = sub.add_parser("sweep", help="factorial sweep from a config file")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--save-config", default=None,
                         help="write the fully populated config back out")
    p_sweep.add_argument("--lambda", dest="lam", type=float, default=None,
                         help="replace the config's ridge grid with one level")
    _add_common(p_sweep)

    p_verify = sub.add_parser("verify", help="ordering and concentration suites")
    p_verify.add_argument("--p", type=int, default=2000)
    p_verify.add_argument("--n", type=int, default=40)
    p_verify.add_argument("--trials", type=int, default=200,
                          help="trials for the eigenvalue band check")
    _add_common(p_verify)

    p_risk = sub.add_parser("risk", help="single-point risk evaluation")
    p_risk.add_argument("--estimator", required=True,
                        choices=("pretrained", "ridgeless_ft", "ridge_ft", "ensemble"))
    p_risk.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p_risk.add_argument("--tau", type=float, default=1.0)
    p_risk.add_argument("--method", choices=("analytic", "monte_carlo", "lemma_approx"),
                        default="analytic")
    p_risk.add_argument("--case", choices=sorted(CASES), default=None,
                        help="take the environment from a preset case")
    p_risk.add_argument("--config", default=None,
                        help="take the environment from a config file")
    _add_common(p_risk)

    return parser


def _cmd_preset(args) -> int:
    overrides = {"master_seed": args.seed}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.mc_draws is not None:
        overrides["mc_draws"] = args.mc_draws
    if args.jitter:
        overrides["jitter"] = True
    result = run_preset(
        args.case, overrides=overrides, full=args.full, workers=args.workers,
        methods=args.methods, tau_grid=args.tau_grid, tradeoff_lambda=args.lam,
    )
    if result.meta["failures"]:
        print(f"flagged failures: {result.meta['failures']}", file=sys.stderr)
    out = args.out or f"preset_{args.case}.{args.format}"
    write_results(result.rows, out, args.format)
    print(f"wrote {len(result.rows)} rows to {out}")
    if args.plot:
        from .svgplot import render_tradeoff_svg

        tradeoff_rows = [r for r in result.rows
                         if r.estimator != "ensemble" or r.lam == result.tradeoff_lambda]
        render_tradeoff_svg(tradeoff_rows, f"{args.plot}-tradeoff.svg", mode="tradeoff",
                            ensemble_lambda=result.tradeoff_lambda)
        ft_rows = [r for r in result.rows
                   if r.estimator != "ensemble" or r.lam == result.ft_lambda]
        render_tradeoff_svg(ft_rows, f"{args.plot}-ft.svg", mode="ft_curve",
                            ensemble_lambda=result.ft_lambda, ft_lambda=result.ft_lambda)
        print(f"wrote {args.plot}-tradeoff.svg and {args.plot}-ft.svg")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.replicates is not None:
        config.replicates = args.replicates
    if args.mc_draws is not None:
        config.mc_draws = args.mc_draws
    if args.seed:
        config.master_seed = args.seed
    if args.jitter:
        config.jitter = True
    if args.lam is not None:
        config.lambda_grid = [args.lam]
    config.validate()
    if args.save_config:
        save_config(config, args.save_config)
    result = run_sweep(config, workers=args.workers)
    for seed, err in result.failures:
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    out = args.out or config.out or f"sweep.{args.format}"
    fmt = args.format if args.out else (config.format or args.format)
    write_results(result.rows, out, fmt)
    print(f"wrote {len(result.rows)} rows to {out} "
          f"({result.meta['workers']} workers, {len(result.failures)} flagged)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    env = theorem_check_env(p=args.p, n=args.n)
    seeds = args.replicates or 20
    lam_star = lambda_prime(env)
    report = verify_theorem_orderings(env, seeds=seeds, master_seed=args.seed)
    print(f"lambda' = {lam_star!r}")
    for item in ("item1", "item2", "item3"):
        print(f"{item}: rate {report.rates[item]:.3f} over {seeds} seeds")
    spec = SpectrumSpec(k_star=1, gamma=1e-2, p=200 * args.n + 1, p_tilde=200 * args.n + 1)
    band = eigen_band_check(spec, n=args.n, trials=args.trials,
                            rng=derive_rng(args.seed, "eigen", 0))
    print(f"eigen band: {band.inside}/{band.trials} inside "
          f"[{band.band[0]:.3g}, {band.band[1]:.3g}] x scale (regime_ok={band.regime_ok})")
    if args.out:
        payload = report.to_dict()
        payload["eigen_band"] = band.to_dict()
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        print(f"wrote {args.out}")
    ok = all(report.rates[i] >= 0.9 for i in ("item1", "item2", "item3"))
    ok = ok and band.rate >= 0.95
    return EXIT_OK if ok else EXIT_NUMERICAL


def _cmd_risk(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = config_from_dict({"case": args.case or "a"})
    env = config.environment()
    kind = {
        "pretrained": EstimatorKind.pretrained,
        "ridgeless_ft": EstimatorKind.ridgeless,
        "ridge_ft": lambda: EstimatorKind.ridge(args.lam),
        "ensemble": lambda: EstimatorKind.ensemble(args.lam, args.tau),
    }[args.estimator]()
    X = sample_design(env.spectrum_pre, env.pretrain_samples,
                      derive_rng(args.seed, "design_pre", 0), env.coord_dist)
    Xt = sample_design(env.spectrum_ft, env.n,
                       derive_rng(args.seed, "design_ft", 0), env.coord_dist)
    if args.method == "analytic":
        report = conditional_expected_risk(X, Xt, env, kind, jitter=args.jitter)
    elif args.method == "lemma_approx":
        report = lemma_approx_risk(Xt, env, kind, jitter=args.jitter)
    else:
        draws = args.mc_draws or 2000
        report = mc_expected_risk(X, Xt, env, kind, draws,
                                  derive_rng(args.seed, "mc", 0), jitter=args.jitter)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "preset": _cmd_preset,
        "sweep": _cmd_sweep,
        "verify": _cmd_verify,
        "risk": _cmd_risk,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SingularDesignError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
