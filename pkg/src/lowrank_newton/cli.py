"""Command line harness.

Every flag can also come from a JSON file given with ``--config``; keys use the
flag names with dashes or underscores. Flags on the command line win.

Exit codes: 0 on success, 2 when some subsets or baseline solves failed,
1 on a hard error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from . import driver
from .matrixeq import ChebyshevConfig
from .newton import NewtonConfig, baseline_sweep, total_steps
from .partition import split
from .problem import MODELS, ModelConfig, build_problem, poisson_ratio

DEFAULTS = {
    "model": "burgers-fsi-1d",
    "nf": 200,
    "ns": 200,
    "v_in": 1.0,
    "rho_f": 12.5,
    "nu_f": 0.04,
    "lambda_s": 200000.0,
    "mu_min": 20000.0,
    "mu_max": 60000.0,
    "num_params": 200,
    "mu_values": None,
    "subsets": 8,
    "rank": 10,
    "newton_tol": 1e-4,
    "baseline_tol": 1e-12,
    "newton_max_iter": 50,
    "cheb_max_iter": 100,
    "cheb_tol": 1e-9,
    "trunc_tol": 1e-14,
    "safety": 1.1,
    "workers": 1,
    "seed": 42,
    "warm_start": True,
    "out": "results.csv",
    "summary": None,
}

EXIT_OK, EXIT_HARD, EXIT_PARTIAL = 0, 1, 2


def _load_config(path):
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise click.BadParameter("config file must hold a JSON object", param_hint="--config")
    out = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in DEFAULTS:
            raise click.BadParameter(f"unknown config key {key!r}", param_hint="--config")
        out[name] = value
    return out


def _resolve(flags, overrides=None):
    """Merge built-in defaults, command defaults, config file and explicit flags."""
    opts = dict(DEFAULTS)
    opts.update(overrides or {})
    opts.update(_load_config(flags.pop("config", None)))
    opts.update({k: v for k, v in flags.items() if v is not None})
    return opts


def _model(opts):
    cfg = ModelConfig(
        model=opts["model"], nf=int(opts["nf"]), ns=int(opts["ns"]), v_in=float(opts["v_in"]),
        rho_f=float(opts["rho_f"]), nu_f=float(opts["nu_f"]), lambda_s=float(opts["lambda_s"]),
        mu_min=float(opts["mu_min"]), mu_max=float(opts["mu_max"]),
        num_params=int(opts["num_params"]), mu_values=opts["mu_values"],
    )
    cfg.validate()
    return build_problem(cfg), cfg.parameters()


def _cheb(opts):
    return ChebyshevConfig(
        max_iter=int(opts["cheb_max_iter"]), residual_tol=float(opts["cheb_tol"]),
        trunc_tol=float(opts["trunc_tol"]), safety=float(opts["safety"]), seed=int(opts["seed"]),
    )


def _config_echo(opts, S):
    echo = {k: v for k, v in opts.items() if k != "mu_values"}
    echo["num_params"] = S.m1
    echo["poisson_ratio_range"] = [
        poisson_ratio(opts["lambda_s"], float(S.values[-1])),
        poisson_ratio(opts["lambda_s"], float(S.values[0])),
    ]
    return echo


def model_options(f):
    opts = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False), help="JSON file with flag values."),
        click.option("--model", type=click.Choice(MODELS), help="Model preset."),
        click.option("--nf", type=int, help="Fluid cells."),
        click.option("--ns", type=int, help="Solid cells."),
        click.option("--v-in", type=float, help="Inflow velocity."),
        click.option("--rho-f", type=float, help="Fluid density [12.5]."),
        click.option("--nu-f", type=float, help="Kinematic fluid viscosity [0.04]."),
        click.option("--lambda-s", type=float, help="First Lame parameter [200000]."),
        click.option("--mu-min", type=float, help="Smallest shear modulus [20000]."),
        click.option("--mu-max", type=float, help="Largest shear modulus [60000]."),
        click.option("--num-params", type=int, help="Number of shear moduli [200]."),
        click.option("--seed", type=int, help="Seed of the Krylov start vector [42]."),
        click.option("--workers", type=int, help="Concurrent subset pipelines [1]."),
        click.option("-v", "--verbose", is_flag=True, default=None, help="Log progress."),
    ]
    return functools.reduce(lambda acc, opt: opt(acc), reversed(opts), f)


def method_options(f):
    opts = [
        click.option("--subsets", "-K", type=int, help="Number of parameter subsets [8]."),
        click.option("--rank", "-R", type=int, help="Rank budget per subset [10]."),
        click.option("--newton-tol", type=float, help="Median Newton accuracy [1e-4]."),
        click.option("--cheb-max-iter", type=int, help="Chebyshev iteration cap [100]."),
        click.option("--cheb-tol", type=float, help="Relative Chebyshev residual target [1e-9]."),
        click.option("--trunc-tol", type=float, help="Relative truncation tolerance [1e-14]."),
        click.option("--safety", type=float, help="Widening factor for c [1.1]."),
    ]
    return functools.reduce(lambda acc, opt: opt(acc), reversed(opts), f)


def output_options(f):
    f = click.option("--summary", type=click.Path(dir_okay=False), help="JSON summary path.")(f)
    return click.option("--out", type=click.Path(dir_okay=False), help="CSV output path.")(f)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(**kwargs):
        verbose = kwargs.pop("verbose", None)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        try:
            code = fn(**kwargs)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_HARD)
        sys.exit(code or EXIT_OK)

    return wrapper


@click.group()
def main():
    """Low-rank Newton solves for shear-modulus-dependent coupled flow problems."""


@main.command()
@model_options
@method_options
@output_options
@_guard
def run(**flags):
    """Subset low-rank method over the whole parameter set."""
    opts = _resolve(flags)
    P, S = _model(opts)
    _, report = driver.run_algorithm1(
        P, S, opts["subsets"], opts["newton_tol"], opts["rank"], _cheb(opts),
        opts["workers"], opts["newton_max_iter"],
    )
    driver.export_csv(report.rows(), opts["out"])
    if opts["summary"]:
        driver.write_summary({"config": _config_echo(opts, S), **report.summary()}, opts["summary"])
    click.echo(
        f"N={P.n_dof} m={S.m1} K={opts['subsets']} newton_steps={report.total_newton_steps} "
        f"max_rel_residual={driver._nanmax(report.rel_residual):.3e} -> {opts['out']}"
    )
    return EXIT_PARTIAL if report.failed_subsets else EXIT_OK


@main.command()
@model_options
@click.option("--newton-tol", type=float, help="Newton accuracy [1e-12].")
@click.option("--warm-start/--no-warm-start", default=None, help="Start each solve from the previous solution [on].")
@output_options
@_guard
def baseline(**flags):
    """Newton solves for every parameter, one after the other."""
    opts = _resolve(flags, {"newton_tol": DEFAULTS["baseline_tol"]})
    P, S = _model(opts)
    results = baseline_sweep(P, S, NewtonConfig(opts["newton_tol"], opts["newton_max_iter"]),
                             warm_start=opts["warm_start"])
    driver.export_csv(driver.baseline_rows(S, results), opts["out"])
    failed = [i for i, r in enumerate(results) if not r.converged]
    if opts["summary"]:
        driver.write_summary({
            "config": _config_echo(opts, S),
            "total_newton_steps": total_steps(results),
            "failed": failed,
        }, opts["summary"])
    click.echo(f"N={P.n_dof} m={S.m1} newton_steps={total_steps(results)} -> {opts['out']}")
    return EXIT_PARTIAL if failed else EXIT_OK


@main.command()
@model_options
@method_options
@click.option("--baseline-tol", type=float, help="Baseline Newton accuracy [1e-12].")
@click.option("--warm-start/--no-warm-start", default=None, help="Warm-started baseline [on].")
@output_options
@_guard
def compare(**flags):
    """Baseline and subset method side by side in one CSV."""
    opts = _resolve(flags)
    P, S = _model(opts)
    rep = driver.compare(
        P, S, NewtonConfig(opts["baseline_tol"], opts["newton_max_iter"]), opts["subsets"],
        opts["newton_tol"], opts["rank"], _cheb(opts), opts["workers"], opts["warm_start"],
    )
    driver.export_csv(rep.rows, opts["out"])
    summary = rep.summary()
    if opts["summary"]:
        driver.write_summary({"config": _config_echo(opts, S), **summary}, opts["summary"])
    click.echo(
        f"baseline steps={rep.baseline_steps} algorithm1 steps={rep.algorithm1.total_newton_steps} "
        f"ratio={summary['step_ratio']:.2f} -> {opts['out']}"
    )
    partial = rep.algorithm1.failed_subsets or summary["baseline"]["failed"]
    return EXIT_PARTIAL if partial else EXIT_OK


@main.command()
@model_options
@click.option("--subsets", "-K", type=int, help="Number of parameter subsets [8].")
@click.option("--newton-tol", type=float, help="Median Newton accuracy [1e-4].")
@click.option("--out", type=click.Path(dir_okay=False), help="CSV output path.")
@_guard
def svd(**flags):
    """Singular values of the exact subset updates."""
    opts = _resolve(flags, {"out": "singular_values.csv"})
    P, S = _model(opts)
    sigmas = driver.export_singular_values(P, S, split(S, opts["subsets"]), opts["out"],
                                           opts["newton_tol"])
    for k, sv in enumerate(sigmas):
        ratio = sv[min(9, sv.size - 1)] / sv[0] if sv.size and sv[0] > 0 else 0.0
        click.echo(f"subset {k}: sigma_1={sv[0] if sv.size else 0:.3e} sigma_10/sigma_1={ratio:.3e}")
    return EXIT_OK


@main.command()
@model_options
@method_options
@_guard
def spectrum(**flags):
    """Print the Chebyshev interval (d, c) of every subset."""
    opts = _resolve(flags)
    P, S = _model(opts)
    click.echo("subset,d,c")
    for k, d, c in driver.spectrum_table(P, S, opts["subsets"], opts["newton_tol"], _cheb(opts)):
        click.echo(f"{k},{d:.17g},{c:.17g}")
    return EXIT_OK


if __name__ == "__main__":
    main()
