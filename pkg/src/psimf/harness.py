"""Experiment drivers, CSV ingestion/export, and machine-readable reports."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .embed import BasisSpec
from .errors import (
    DegenerateCovariance,
    EmptyRecord,
    EmptyTruncation,
    ParseError,
    TimeOutOfRange,
)
from .selinf import TestConfig, run_psimf
from .simkit import (
    KernelSpec,
    LongitudinalDataset,
    MeanSpec,
    MisspecProcessSpec,
    SamplingPlan,
    generate_dataset,
    generate_misspecified_dataset,
)

CSV_HEADER = ["subject_id", "feature_id", "time", "value"]

EXPERIMENTS = ("type1", "power_n", "power_sep", "robustness")


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------


def ingest_csv(path, normalize_time: bool = False) -> LongitudinalDataset:
    """Read a longitudinal dataset from CSV.

    Expected header: subject_id,feature_id,time,value; one observation per row.
    Subjects and features are indexed densely in first-appearance order. Times
    must lie in [0,1] unless normalize_time, which affinely rescales the global
    min/max onto [0,1].
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(1, f"expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(lineno, f"expected 4 fields, got {len(row)}")
            try:
                t = float(row[2])
                v = float(row[3])
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from exc
            rows.append((row[0], row[1], t, v))
    if not rows:
        raise EmptyRecord("file contains no observations")

    if normalize_time:
        ts = np.array([r[2] for r in rows])
        lo, hi = ts.min(), ts.max()
        span = hi - lo if hi > lo else 1.0
        rows = [(s, f, (t - lo) / span, v) for s, f, t, v in rows]
    else:
        for s, f, t, v in rows:
            if not (0.0 <= t <= 1.0):
                raise TimeOutOfRange(f"time {t} outside [0,1]; pass normalize_time")

    subjects: dict = {}
    features: dict = {}
    for s, f, _, _ in rows:
        subjects.setdefault(s, len(subjects))
        features.setdefault(f, len(features))
    n, m = len(subjects), len(features)

    buckets = [[([], []) for _ in range(m)] for _ in range(n)]
    for s, f, t, v in rows:
        ts, vs = buckets[subjects[s]][features[f]]
        ts.append(t)
        vs.append(v)

    times, values = [], []
    for i in range(n):
        row_t, row_v = [], []
        for j in range(m):
            ts, vs = buckets[i][j]
            if not ts:
                raise EmptyRecord(f"subject {i}, feature {j} has no rows")
            order = np.argsort(ts, kind="stable")
            row_t.append(np.asarray(ts, dtype=float)[order])
            row_v.append(np.asarray(vs, dtype=float)[order])
        times.append(row_t)
        values.append(row_v)
    return LongitudinalDataset(times, values)


def export_csv(data: LongitudinalDataset, path) -> None:
    """Write a dataset in the ingestion schema; round-trips bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(data.n):
            for j in range(data.m):
                for t, v in zip(data.times[i][j], data.values[i][j]):
                    writer.writerow([i, j, repr(float(t)), repr(float(v))])


# ---------------------------------------------------------------------------
# Experiment configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    replicates: int
    plan: SamplingPlan
    basis: BasisSpec
    test: TestConfig
    kernel: Optional[KernelSpec] = None
    misspec: Optional[MisspecProcessSpec] = None
    sweep: tuple = ()                   # n values (power_n) or separations (power_sep)
    separation: float = 10.0            # +/- group mean for power_n
    alpha: float = 0.05

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.experiment in ("power_n", "power_sep") and not self.sweep:
            raise ValueError("power experiments need a non-empty sweep")
        if self.experiment == "robustness" and self.misspec is None:
            raise ValueError("robustness experiment needs a misspec process")
        if self.experiment != "robustness" and self.kernel is None:
            raise ValueError("experiment needs a kernel")


@dataclass
class ReplicateResult:
    replicate: int
    p_selective: float
    p_wald: float
    statistic: float
    size_c1: int
    size_c2: int
    wall_time: float


def _replicate_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def ks_distance_uniform(pvalues: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance of the sample against U[0,1]."""
    p = np.sort(np.asarray(pvalues, dtype=float))
    n = len(p)
    if n == 0:
        return float("nan")
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(max(np.abs(grid_hi - p).max(), np.abs(p - grid_lo).max()))


def qq_table(pvalues: Sequence[float]) -> list:
    """Sorted p-values paired with (k - 0.5)/N theoretical uniform quantiles."""
    p = np.sort(np.asarray(pvalues, dtype=float))
    n = len(p)
    return [
        {"theoretical": (k + 0.5) / n, "observed": float(p[k])} for k in range(n)
    ]


def _run_replicates(
    config: ExperimentConfig, plan: SamplingPlan, mean: MeanSpec
) -> tuple[list, int]:
    """Run `replicates` independent tests; returns (results, excluded_count)."""
    results = []
    excluded = 0
    for rep in range(config.replicates):
        seed = _replicate_seed(plan.seed, rep)
        rep_plan = replace(plan, seed=seed)
        if config.experiment == "robustness":
            data = generate_misspecified_dataset(config.misspec, rep_plan)
        else:
            data = generate_dataset(config.kernel, mean, rep_plan)
        test = replace(config.test, seed=seed)
        start = time.perf_counter()
        try:
            report = run_psimf(data, config.basis, test)
        except (EmptyTruncation, DegenerateCovariance):
            excluded += 1
            continue
        results.append(
            ReplicateResult(
                replicate=rep,
                p_selective=report.p_selective,
                p_wald=report.p_wald,
                statistic=report.statistic,
                size_c1=len(report.partition.c1),
                size_c2=len(report.partition.c2),
                wall_time=time.perf_counter() - start,
            )
        )
    return results, excluded


def _uniformity_summary(results: list, excluded: int, alpha: float) -> dict:
    p_sel = [r.p_selective for r in results]
    p_wald = [r.p_wald for r in results]
    return {
        "ks_selective": ks_distance_uniform(p_sel),
        "ks_wald": ks_distance_uniform(p_wald),
        "rejection_rate_alpha05": float(np.mean(np.asarray(p_sel) <= alpha)) if p_sel else float("nan"),
        "wald_rejection_rate_alpha05": float(np.mean(np.asarray(p_wald) <= alpha)) if p_wald else float("nan"),
        "excluded_count": excluded,
        "qq_selective": qq_table(p_sel),
    }


def run_type1_experiment(config: ExperimentConfig) -> dict:
    """Global-null calibration: identical means across subjects."""
    mean = MeanSpec.zero(config.plan.n)
    results, excluded = _run_replicates(config, config.plan, mean)
    return {
        "experiment": "type1",
        "replicates": [asdict(r) for r in results],
        "summary": _uniformity_summary(results, excluded, config.alpha),
    }


def run_robustness_experiment(config: ExperimentConfig) -> dict:
    """Global-null calibration with misspecified latent processes."""
    results, excluded = _run_replicates(config, config.plan, MeanSpec.zero(config.plan.n))
    return {
        "experiment": "robustness",
        "process": config.misspec.variant,
        "replicates": [asdict(r) for r in results],
        "summary": _uniformity_summary(results, excluded, config.alpha),
    }


def run_power_experiment(config: ExperimentConfig) -> dict:
    """Rejection rate at level alpha across a sweep of n or separation."""
    rows = []
    all_replicates = []
    for idx, value in enumerate(config.sweep):
        if config.experiment == "power_n":
            n = int(value)
            sep = config.separation
        else:
            n = config.plan.n
            sep = float(value)
        plan = replace(config.plan, n=n, seed=_replicate_seed(config.plan.seed, 10_000 + idx))
        mean = MeanSpec.two_group(sep, -sep, n // 2)
        results, excluded = _run_replicates(config, plan, mean)
        p_sel = np.array([r.p_selective for r in results])
        power = float(np.mean(p_sel <= config.alpha)) if len(p_sel) else float("nan")
        se = float(np.sqrt(power * (1 - power) / len(p_sel))) if len(p_sel) else float("nan")
        rows.append(
            {
                "sweep_value": float(value),
                "n": n,
                "separation": sep,
                "power": power,
                "binomial_se": se,
                "n_replicates": len(results),
                "excluded_count": excluded,
            }
        )
        all_replicates.extend(asdict(r) for r in results)
    return {
        "experiment": config.experiment,
        "power_curve": rows,
        "replicates": all_replicates,
        "summary": {
            "ks_selective": float("nan"),
            "ks_wald": float("nan"),
            "rejection_rate_alpha05": rows[-1]["power"] if rows else float("nan"),
            "excluded_count": int(sum(r["excluded_count"] for r in rows)),
        },
    }


def run_experiment(config: ExperimentConfig) -> dict:
    if config.experiment == "type1":
        return run_type1_experiment(config)
    if config.experiment == "robustness":
        return run_robustness_experiment(config)
    return run_power_experiment(config)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def config_to_dict(config: ExperimentConfig) -> dict:
    out = {
        "experiment": config.experiment,
        "replicates": config.replicates,
        "plan": {
            "n": config.plan.n,
            "m": config.plan.m,
            "r": config.plan.r,
            "noise_var": np.asarray(config.plan.noise_var).tolist(),
            "seed": config.plan.seed,
        },
        "basis": {"q": config.basis.q, "rho": config.basis.rho, "ridge": config.basis.ridge},
        "test": {
            "mc_samples": config.test.mc_samples,
            "seed": config.test.seed,
            "clusterer": config.test.clusterer,
            "linkage": config.test.linkage,
            "min_effective_denominator": config.test.min_effective_denominator,
        },
        "sweep": list(config.sweep),
        "separation": config.separation,
        "alpha": config.alpha,
    }
    if config.kernel is not None:
        out["kernel"] = {
            "variant": config.kernel.variant,
            "length_scale": config.kernel.length_scale,
            "rho": config.kernel.rho,
        }
    if config.misspec is not None:
        out["misspec"] = {
            "variant": config.misspec.variant,
            "drift": config.misspec.drift,
            "vol": config.misspec.vol,
            "theta": config.misspec.theta,
            "mean": config.misspec.mean,
        }
    return out


def config_from_dict(d: dict) -> ExperimentConfig:
    kernel = None
    if "kernel" in d:
        kernel = KernelSpec(
            d["kernel"]["variant"],
            length_scale=d["kernel"].get("length_scale", 1.0),
            rho=d["kernel"].get("rho", 0.99),
        )
    misspec = None
    if "misspec" in d:
        misspec = MisspecProcessSpec(
            d["misspec"]["variant"],
            drift=d["misspec"].get("drift", 0.0),
            vol=d["misspec"].get("vol", 1.0),
            theta=d["misspec"].get("theta", 1.0),
            mean=d["misspec"].get("mean", 0.0),
        )
    return ExperimentConfig(
        experiment=d["experiment"],
        replicates=d["replicates"],
        plan=SamplingPlan(
            n=d["plan"]["n"],
            m=d["plan"]["m"],
            r=d["plan"]["r"],
            noise_var=d["plan"]["noise_var"],
            seed=d["plan"]["seed"],
        ),
        basis=BasisSpec(
            q=d["basis"]["q"], rho=d["basis"]["rho"], ridge=d["basis"]["ridge"]
        ),
        test=TestConfig(
            mc_samples=d["test"]["mc_samples"],
            seed=d["test"]["seed"],
            clusterer=d["test"]["clusterer"],
            linkage=d["test"].get("linkage", "ward"),
            min_effective_denominator=d["test"].get("min_effective_denominator", 1e-8),
        ),
        kernel=kernel,
        misspec=misspec,
        sweep=tuple(d.get("sweep", ())),
        separation=d.get("separation", 10.0),
        alpha=d.get("alpha", 0.05),
    )


def emit_report(results: dict, config: ExperimentConfig, fmt: str, path) -> None:
    """Write a JSON report (full reproducibility) or CSV replicate table."""
    if not results.get("replicates") and not results.get("power_curve"):
        raise ValueError("results are empty")
    if fmt == "json":
        payload = {
            "config": config_to_dict(config),
            "seed": config.plan.seed,
            "replicates": results.get("replicates", []),
            "summary": results.get("summary", {}),
            "library_version": __version__,
        }
        if "power_curve" in results:
            payload["power_curve"] = results["power_curve"]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    elif fmt == "csv":
        rows = results.get("replicates", [])
        fields = list(rows[0].keys()) if rows else []
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
    else:
        raise ValueError("format must be 'json' or 'csv'")
