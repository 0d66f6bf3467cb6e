#!/usr/bin/env python3

import argparse
import json
import os
import sys
import time
import warnings
from typing import Optional
warnings.filterwarnings("ignore")

from dotenv import load_dotenv
from pydantic import ValidationError

from config import defaults
from config.classes import BiasMseConfig, GeneratorFamily, LogSymmetricParams, OptimOptions, PowerConfig
from core import lsdist
from core.diagnostics import gcs_residuals, qq_envelope
from core.errors import NumericalError, TobitError
from core.inference import compare_models, fit, run_tests
from evaluation.monte_carlo import render_table, report_to_csv, run_study
from utils.functions import (
    describe_response,
    load_config,
    load_dataset,
    parse_family,
    parse_restriction,
    substream,
    write_csv,
    write_json,
)

# Load environment variables
load_dotenv()


class UsageError(TobitError, ValueError):
    pass


def _threads(args) -> Optional[int]:
    if args.threads:
        return args.threads
    value = os.getenv(defaults.THREADS_ENV)
    if value is None:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        raise UsageError(f"{defaults.THREADS_ENV} must be an integer")


def _seed(args) -> int:
    return defaults.DEFAULT_SEED if args.seed is None else args.seed


def _emit(text: str, args, config: Optional[dict] = None) -> None:
    """
    Write text to --output or stdout.

    CSV carries no room for the resolved config, so it goes to a companion
    <output>.config.json file, or to stderr when writing to stdout.
    """
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as file:
            file.write(text)
        print(f"✅ wrote {args.output}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    if config is None or args.format != "csv":
        return
    if args.output:
        companion = args.output + ".config.json"
        write_json(config, companion)
        print(f"✅ wrote {companion}", file=sys.stderr)
    else:
        print(f"🧾 config {json.dumps(config, sort_keys=True)}", file=sys.stderr)


def _family(args) -> GeneratorFamily:
    kind = args.family
    if args.xi:
        xi = [float(x) for x in args.xi.split(",")]
    else:
        xi = list(defaults.EXTRA_PARAMETER_START.get(kind, ()))
        if xi:
            print(f"⚠️ --xi not given, using {xi} for {kind}", file=sys.stderr)
    return GeneratorFamily(kind=kind, xi=xi)


def _free_extra(args, family: GeneratorFamily):
    if args.free_xi is None:
        return None
    if args.free_xi == "none":
        return (False,) * family.n_extra
    positions = {int(p) for p in args.free_xi.split(",")}
    if not positions <= set(range(1, family.n_extra + 1)):
        raise UsageError(f"--free-xi positions must lie in 1..{family.n_extra}")
    return tuple(j + 1 in positions for j in range(family.n_extra))


def _options(args) -> OptimOptions:
    return OptimOptions(max_iterations=args.max_iterations, gradient_tolerance=args.gradient_tolerance)


def _load(args):
    data, notes = load_dataset(args.data, gamma=args.gamma, gamma_scale=args.gamma_scale,
                               response_scale=args.response_scale, intercept=not args.no_intercept)
    for note in notes:
        print(f"⚠️ {note}", file=sys.stderr)
    return data, notes


def _resolved(args, data, family, free_extra, notes) -> dict:
    return {
        "data": args.data,
        "family": family.model_dump(mode="json"),
        "free_extra": list(free_extra) if free_extra is not None else list(defaults.DEFAULT_FREE_EXTRA[family.kind.value]),
        "gamma": data.gamma,
        "gamma_scale": args.gamma_scale,
        "response_scale": args.response_scale,
        "intercept": not args.no_intercept,
        "covariates": data.covariate_names,
        "seed": _seed(args),
        "optim": _options(args).model_dump(),
        "notes": notes,
    }


def _fit(args):
    data, notes = _load(args)
    family = _family(args)
    free_extra = _free_extra(args, family)
    result = fit(data, family, free_extra, options=_options(args),
                 penalize_fixed_extra=args.penalize_fixed_extra)
    return data, family, free_extra, notes, result


def _report_fit(result) -> None:
    if result.converged:
        print(f"✅ converged in {result.optim.iterations} iterations, loglik {result.loglik:.6f}", file=sys.stderr)
    else:
        print(f"❌ did not converge: {result.optim.message} "
              f"(gradient norm {result.optim.final_gradient_norm:.3e})", file=sys.stderr)
    for flag in result.warning_flags:
        print(f"⚠️ {flag}", file=sys.stderr)


# Commands

def cmd_fit(args) -> int:
    data, family, free_extra, notes, result = _fit(args)
    _report_fit(result)
    config = _resolved(args, data, family, free_extra, notes)
    if args.format == "csv":
        rows = [{"parameter": n, "estimate": e, "se": s}
                for n, e, s in zip(result.parameter_names, result.estimates, result.se)]
        _emit(write_csv(rows, ["parameter", "estimate", "se"]), args, config)
    else:
        _emit(write_json({"config": config, "fit": result.model_dump(mode="json")}), args)
    return defaults.EXIT_OK if result.converged else defaults.EXIT_NUMERICAL


def cmd_test(args) -> int:
    data, notes = _load(args)
    family = _family(args)
    free_extra = _free_extra(args, family)
    restriction = parse_restriction(args.restrict)
    results = run_tests(data, family, restriction, kind=args.kind, free_extra=free_extra, options=_options(args))
    for r in results:
        print(f"📊 {r.kind} = {r.statistic:.6f} on {r.df} df, p = {r.p_value:.4g}", file=sys.stderr)
        for flag in r.warning_flags:
            print(f"⚠️ {flag}", file=sys.stderr)
    config = {**_resolved(args, data, family, free_extra, notes), "restriction": restriction, "kind": args.kind}
    if args.format == "csv":
        rows = [{"kind": r.kind, "statistic": r.statistic, "df": r.df, "p_value": r.p_value} for r in results]
        _emit(write_csv(rows, ["kind", "statistic", "df", "p_value"]), args, config)
    else:
        payload = {"config": config, "tests": [r.model_dump(mode="json", by_alias=True) for r in results]}
        _emit(write_json(payload), args)
    return defaults.EXIT_OK


def cmd_residuals(args) -> int:
    data, family, free_extra, notes, result = _fit(args)
    _report_fit(result)
    if not result.converged:
        return defaults.EXIT_NUMERICAL
    report = gcs_residuals(result, data, censoring_adjustment=args.adjust_censored)
    print(f"📊 KS against EXP(1): D = {report.ks_statistic:.4f}, p = {report.ks_pvalue:.4g}", file=sys.stderr)
    config = {**_resolved(args, data, family, free_extra, notes), "adjust_censored": args.adjust_censored}
    if args.format == "json":
        _emit(write_json({"config": config, "residuals": report.model_dump(mode="json")}), args)
    else:
        rows = [{"index": i, "residual": r, "censored": c}
                for i, (r, c) in enumerate(zip(report.residuals, report.censored_flags))]
        _emit(write_csv(rows, ["index", "residual", "censored"]), args, config)
    return defaults.EXIT_OK


def cmd_envelope(args) -> int:
    data, family, free_extra, notes, result = _fit(args)
    _report_fit(result)
    if not result.converged:
        return defaults.EXIT_NUMERICAL
    print(f"🔁 simulating {args.replications} envelope replications", file=sys.stderr)
    band = qq_envelope(result, data, replications=args.replications, level=args.level, seed=_seed(args),
                       workers=_threads(args), options=_options(args))
    print(f"📊 {100 * band.observed_inside:.1f}% of residuals inside the {100 * args.level:g}% band", file=sys.stderr)
    config = {**_resolved(args, data, family, free_extra, notes),
              "replications": args.replications, "level": args.level}
    if args.format == "json":
        _emit(write_json({"config": config, "envelope": band.model_dump(mode="json")}), args)
    else:
        rows = [
            {"index": i, "residual": band.observed[i], "censored": band.observed_censored[i],
             "theoretical_q": band.theoretical_quantiles[i], "lower": band.lower[i],
             "median": band.median[i], "upper": band.upper[i]}
            for i in range(len(band.observed))
        ]
        _emit(write_csv(rows, ["index", "residual", "censored", "theoretical_q", "lower", "median", "upper"]), args,
              config)
    return defaults.EXIT_OK


def cmd_simulate(args) -> int:
    model = PowerConfig if args.study == "power" else BiasMseConfig
    config = load_config(args.config, model)
    if args.replications:
        config = config.model_copy(update={"replications": args.replications})
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    workers = _threads(args) or config.workers or 1
    print(f"🔁 running {args.study} study for {config.family.label}", file=sys.stderr)
    start = time.perf_counter()
    report = run_study(config, workers=workers)
    print(render_table(report), file=sys.stderr)
    print(f"⏱️ {args.study} study finished in {time.perf_counter() - start:.1f} s with {workers} worker(s)",
          file=sys.stderr)
    if args.format == "json":
        _emit(write_json(report.model_dump(mode="json")), args)
    else:
        resolved = {**config.model_dump(mode="json"), "config_file": args.config, "study": args.study,
                    "workers": workers}
        _emit(report_to_csv(report), args, resolved)
    return defaults.EXIT_OK


def cmd_sample(args) -> int:
    family = _family(args)
    phi = family.fixed_phi or args.phi
    if family.fixed_phi is not None and args.phi is not None:
        print(f"⚠️ {family.kind.value} fixes phi at {family.fixed_phi:g}; --phi ignored", file=sys.stderr)
    if phi is None:
        raise UsageError("--phi is required for this family")
    params = LogSymmetricParams(eta=args.eta, phi=phi, family=family)
    seed = _seed(args)
    draws = lsdist.ls_sample(params, substream(seed), args.n)
    config = {"params": params.model_dump(mode="json"), "seed": seed, "n": args.n}
    if args.format == "json":
        _emit(write_json({**config, "t": draws.tolist()}), args)
    else:
        _emit(write_csv(({"t": float(t)} for t in draws), ["t"]), args, config)
    return defaults.EXIT_OK


def cmd_compare(args) -> int:
    data, notes = _load(args)
    families = [parse_family(text) for text in args.families]
    fits = compare_models(data, families, options=_options(args), penalize_fixed_extra=args.penalize_fixed_extra)
    bic_rank = {id(f): i + 1 for i, f in enumerate(sorted(fits, key=lambda f: (not f.converged, f.bic)))}
    rows = [
        {"rank_aic": i + 1, "rank_bic": bic_rank[id(f)], "family": f.theta_hat.family.label,
         "loglik": f.loglik, "aic": f.aic, "bic": f.bic, "k": f.k, "converged": f.converged}
        for i, f in enumerate(fits)
    ]
    for row in rows:
        print(f"📊 {row['rank_aic']}. {row['family']}: AIC {row['aic']:.2f}, BIC {row['bic']:.2f}", file=sys.stderr)
    config = {"data": args.data, "gamma": data.gamma, "families": args.families, "notes": notes,
              "penalize_fixed_extra": args.penalize_fixed_extra}
    if args.format == "csv":
        _emit(write_csv(rows, list(rows[0])), args, config)
    else:
        payload = {
            "config": config,
            "ranking": rows,
            "fits": [f.model_dump(mode="json") for f in fits],
        }
        _emit(write_json(payload), args)
    return defaults.EXIT_OK


def cmd_describe(args) -> int:
    data, notes = _load(args)
    summary = describe_response(data)
    config = {"data": args.data, "gamma": data.gamma, "response_scale": args.response_scale, "notes": notes}
    if args.format == "csv":
        _emit(write_csv([summary], list(summary)), args, config)
    else:
        _emit(write_json({**config, "summary": summary}), args)
    return defaults.EXIT_OK


# Parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Base RNG seed")
    common.add_argument("--threads", type=int, default=None,
                        help=f"Worker count (falls back to ${defaults.THREADS_ENV})")
    common.add_argument("--output", default=None, help="Write output to this file instead of stdout")
    common.add_argument("--format", choices=["json", "csv"], default=None)

    data_args = argparse.ArgumentParser(add_help=False)
    data_args.add_argument("data", help="CSV with columns y, censored and covariates")
    data_args.add_argument("--gamma", type=float, default=None, help="Censoring point")
    data_args.add_argument("--gamma-scale", choices=["log", "natural"], default="log")
    data_args.add_argument("--response-scale", choices=["log", "natural"], default="log")
    data_args.add_argument("--no-intercept", action="store_true")
    data_args.add_argument("--max-iterations", type=int, default=500)
    data_args.add_argument("--gradient-tolerance", type=float, default=1e-8)
    data_args.add_argument("--penalize-fixed-extra", action="store_true",
                           help="Count fixed extra parameters in AIC/BIC")

    family_args = argparse.ArgumentParser(add_help=False)
    family_args.add_argument("--family", choices=list(defaults.FAMILY_NAMES), default="normal")
    family_args.add_argument("--xi", default=None, help="Extra parameter values, comma separated")
    family_args.add_argument("--free-xi", default=None,
                             help="1-based positions of estimated extras, or 'none'")

    parser = argparse.ArgumentParser(prog="tobitls", description="Tobit log-symmetric regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, data_args, family_args], help="Maximum likelihood fit")
    p.set_defaults(handler=cmd_fit, default_format="json")

    p = sub.add_parser("test", parents=[common, data_args, family_args], help="LR / gradient tests")
    p.add_argument("--restrict", required=True, help="name=value[,name=value]")
    p.add_argument("--kind", choices=["lr", "gr", "both"], default="both")
    p.set_defaults(handler=cmd_test, default_format="json")

    p = sub.add_parser("residuals", parents=[common, data_args, family_args], help="GCS residuals")
    p.add_argument("--adjust-censored", action="store_true", help="Add 1 to censored residuals")
    p.set_defaults(handler=cmd_residuals, default_format="csv")

    p = sub.add_parser("envelope", parents=[common, data_args, family_args], help="Simulated QQ envelope")
    p.add_argument("--replications", type=int, default=defaults.ENVELOPE_REPLICATIONS)
    p.add_argument("--level", type=float, default=defaults.ENVELOPE_LEVEL)
    p.set_defaults(handler=cmd_envelope, default_format="csv")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo study from a JSON config")
    p.add_argument("config", help="Study configuration (JSON)")
    p.add_argument("--study", choices=["bias-mse", "power"], required=True)
    p.add_argument("--replications", type=int, default=None, help="Override the configured replications")
    p.set_defaults(handler=cmd_simulate, default_format="csv")

    p = sub.add_parser("sample", parents=[common, family_args], help="Draw from a log-symmetric law")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--phi", type=float, default=None)
    p.set_defaults(handler=cmd_sample, default_format="csv")

    p = sub.add_parser("compare", parents=[common, data_args], help="Rank families by AIC / BIC")
    p.add_argument("--families", nargs="+", required=True, help="kind[:xi1[:xi2]] ...")
    p.set_defaults(handler=cmd_compare, default_format="json")

    p = sub.add_parser("describe", parents=[common, data_args], help="Descriptive summary of the response")
    p.set_defaults(handler=cmd_describe, default_format="json")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.format = args.format or args.default_format
    try:
        return args.handler(args)
    except NumericalError as e:
        print(f"❌ {e}", file=sys.stderr)
        return defaults.EXIT_NUMERICAL
    except (TobitError, ValidationError, ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return defaults.EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
