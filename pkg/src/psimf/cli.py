"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. The PSIMF_SEED environment variable overrides the config-file seed
but is itself overridden by an explicit --seed flag.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from .embed import BasisSpec
from .errors import (
    DegenerateCovariance,
    EmptyRecord,
    EmptyTruncation,
    FactorizationFailure,
    NotSymmetric,
    ParseError,
    PartitionMismatch,
    SingularGram,
    SingularSystem,
    TimeOutOfRange,
)
from .harness import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    emit_report,
    export_csv,
    ingest_csv,
    run_experiment,
)
from .selinf import TestConfig, run_psimf
from .simkit import KernelSpec, MeanSpec, MisspecProcessSpec, SamplingPlan, generate_dataset

CONFIG_ERRORS = (ValueError, KeyError, json.JSONDecodeError)
DATA_ERRORS = (ParseError, TimeOutOfRange, EmptyRecord, OSError)
NUMERICAL_ERRORS = (
    FactorizationFailure,
    SingularSystem,
    SingularGram,
    DegenerateCovariance,
    NotSymmetric,
    PartitionMismatch,
    EmptyTruncation,
)


def _fail(code: int, exc: BaseException):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _resolve_seed(flag_seed, config_seed: int) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("PSIMF_SEED")
    if env is not None:
        return int(env)
    return config_seed


@click.group()
def main():
    """Post-clustering selective inference for longitudinal data."""


@main.command()
@click.option("--n", default=100, show_default=True)
@click.option("--m", default=1, show_default=True)
@click.option("--r", default=15, show_default=True)
@click.option("--noise-var", default=0.1, show_default=True)
@click.option("--kernel", default="rational_quadratic", show_default=True,
              type=click.Choice(["rational_quadratic", "periodic", "truncated_local_periodic", "rbf"]))
@click.option("--length-scale", default=1.0, show_default=True)
@click.option("--separation", default=0.0, show_default=True,
              help="Two-group mean +/-separation (0 = global null).")
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def simulate(n, m, r, noise_var, kernel, length_scale, separation, seed, out):
    """Generate a synthetic dataset and write it as CSV."""
    try:
        seed = _resolve_seed(seed, 0)
        plan = SamplingPlan(n=n, m=m, r=r, noise_var=noise_var, seed=seed)
        spec = KernelSpec(kernel, length_scale=length_scale)
        if separation != 0.0:
            mean = MeanSpec.two_group(separation, -separation, n // 2)
        else:
            mean = MeanSpec.zero(n)
    except CONFIG_ERRORS as exc:
        _fail(2, exc)
    try:
        data = generate_dataset(spec, mean, plan)
        export_csv(data, out)
    except NUMERICAL_ERRORS as exc:
        _fail(4, exc)
    except DATA_ERRORS as exc:
        _fail(3, exc)
    click.echo(f"wrote {out}: n={data.n}, m={data.m}")


@main.command()
@click.argument("data_path", type=click.Path(exists=True))
@click.option("--q", default=3, show_default=True)
@click.option("--rho", default=0.99, show_default=True)
@click.option("--ridge", default=0.01, show_default=True)
@click.option("--mc-samples", default=1000, show_default=True)
@click.option("--clusterer", default="kmeans2", show_default=True,
              type=click.Choice(["kmeans2", "hclust2"]))
@click.option("--linkage", default="ward", show_default=True,
              type=click.Choice(["ward", "complete", "average"]))
@click.option("--normalize-time", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Optional JSON report path.")
def test(data_path, q, rho, ridge, mc_samples, clusterer, linkage, normalize_time, seed, out):
    """Run the selective test on a CSV dataset."""
    try:
        basis = BasisSpec(q=q, rho=rho, ridge=ridge)
        config = TestConfig(
            mc_samples=mc_samples,
            seed=_resolve_seed(seed, 0),
            clusterer=clusterer,
            linkage=linkage,
        )
    except CONFIG_ERRORS as exc:
        _fail(2, exc)
    try:
        data = ingest_csv(data_path, normalize_time=normalize_time)
    except DATA_ERRORS as exc:
        _fail(3, exc)
    try:
        report = run_psimf(data, basis, config)
    except NUMERICAL_ERRORS as exc:
        _fail(4, exc)
    except CONFIG_ERRORS as exc:
        _fail(2, exc)
    payload = {
        "p_selective": report.p_selective,
        "p_wald": report.p_wald,
        "statistic": report.statistic,
        "scale": report.scale,
        "dof": report.dof,
        "n_in_truncation": report.n_in_truncation,
        "effective_sample_size": report.effective_sample_size,
        "cluster_sizes": [len(report.partition.c1), len(report.partition.c2)],
    }
    click.echo(json.dumps(payload, indent=2))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)


@main.command()
@click.argument("kind", type=click.Choice(["type1", "power-n", "power-sep", "robustness"]))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; flags override its entries.")
@click.option("--replicates", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--mc-samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--paper-scale", is_flag=True,
              help="Use the large published protocol instead of desk-scale defaults.")
@click.option("--format", "fmt", default="json", type=click.Choice(["json", "csv"]), show_default=True)
@click.option("--out", required=True, type=click.Path())
def experiment(kind, config_path, replicates, n, mc_samples, seed, paper_scale, fmt, out):
    """Run a calibration, power, or robustness experiment."""
    experiment_key = kind.replace("-", "_")
    try:
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                config = config_from_dict(json.load(fh))
        else:
            config = default_experiment_config(experiment_key, paper_scale=paper_scale)
        if replicates is not None:
            config = replace(config, replicates=replicates)
        if n is not None:
            config = replace(config, plan=replace(config.plan, n=n))
        if mc_samples is not None:
            config = replace(config, test=replace(config.test, mc_samples=mc_samples))
        resolved = _resolve_seed(seed, config.plan.seed)
        config = replace(
            config,
            plan=replace(config.plan, seed=resolved),
            test=replace(config.test, seed=resolved),
        )
    except DATA_ERRORS as exc:
        _fail(3, exc)
    except CONFIG_ERRORS as exc:
        _fail(2, exc)
    try:
        results = run_experiment(config)
        emit_report(results, config, fmt, out)
    except NUMERICAL_ERRORS as exc:
        _fail(4, exc)
    except OSError as exc:
        _fail(3, exc)
    summary = results.get("summary", {})
    click.echo(json.dumps({k: v for k, v in summary.items() if k != "qq_selective"}, indent=2))
    click.echo(f"wrote {out}")


@main.command("ingest-check")
@click.argument("data_path", type=click.Path(exists=True))
@click.option("--normalize-time", is_flag=True)
def ingest_check(data_path, normalize_time):
    """Validate a CSV dataset and report its shape."""
    try:
        data = ingest_csv(data_path, normalize_time=normalize_time)
    except DATA_ERRORS as exc:
        _fail(3, exc)
    lengths = data.record_lengths()
    click.echo(
        json.dumps(
            {
                "n": data.n,
                "m": data.m,
                "min_record_length": int(lengths.min()),
                "max_record_length": int(lengths.max()),
            }
        )
    )


def default_experiment_config(kind: str, paper_scale: bool = False) -> ExperimentConfig:
    """Desk-scale defaults; --paper-scale switches to the published protocol."""
    if paper_scale:
        plan = SamplingPlan(n=10_000, m=1, r=15, noise_var=0.1, seed=0)
        replicates = 100
        mc_samples = 2000
    else:
        plan = SamplingPlan(n=200, m=1, r=15, noise_var=0.1, seed=0)
        replicates = 200
        mc_samples = 1000
    basis = BasisSpec(q=3, rho=0.99, ridge=0.01)
    test = TestConfig(mc_samples=mc_samples, seed=0)
    kernel = KernelSpec("rational_quadratic", length_scale=1.0)
    if kind == "type1":
        return ExperimentConfig("type1", replicates, plan, basis, test, kernel=kernel)
    # Power experiments cluster with ward agglomeration: the deterministic
    # k-means initialization tends to settle in a noise-direction local optimum
    # on whitened two-group data, which makes the power sweeps uninformative.
    power_test = replace(test, clusterer="hclust2", linkage="ward")
    if kind == "power_sep":
        return ExperimentConfig(
            "power_sep",
            50,
            replace(plan, n=80),
            basis,
            power_test,
            kernel=kernel,
            sweep=(3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5),
        )
    if kind == "power_n":
        return ExperimentConfig(
            "power_n",
            50,
            plan,
            basis,
            power_test,
            kernel=kernel,
            sweep=(40, 50, 60, 70, 80, 90, 100),
            separation=10.0,
        )
    if kind == "robustness":
        return ExperimentConfig(
            "robustness",
            100,
            plan,
            basis,
            test,
            misspec=MisspecProcessSpec("wiener"),
        )
    raise ValueError(f"unknown experiment {kind!r}")


if __name__ == "__main__":
    main()
