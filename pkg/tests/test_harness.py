import json
import warnings

import numpy as np
import pytest

from psimf.embed import BasisSpec
from psimf.errors import EmptyRecord, ParseError, TimeOutOfRange
from psimf.harness import (
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    emit_report,
    export_csv,
    ingest_csv,
    ks_distance_uniform,
    qq_table,
    run_experiment,
)
from psimf.selinf import TestConfig
from psimf.simkit import KernelSpec, LongitudinalDataset, SamplingPlan

# Deliberately small mc_samples keep these tests fast; silence the noisy-
# estimate warning that replace() re-triggers inside the experiment drivers.
pytestmark = pytest.mark.filterwarnings(
    "ignore:mc_samples below 1000:UserWarning"
)


def quiet_test_config(**kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TestConfig(**kwargs)


def random_ragged_dataset(rng, n=5, m=2, max_r=9):
    times, values = [], []
    for _ in range(n):
        row_t, row_v = [], []
        for _ in range(m):
            r = int(rng.integers(1, max_r + 1))
            row_t.append(np.sort(rng.uniform(0, 1, r)))
            row_v.append(rng.standard_normal(r))
        times.append(row_t)
        values.append(row_v)
    return LongitudinalDataset(times, values)


class TestCsvRoundTrip:
    def test_round_trip_identity(self, rng, tmp_path):
        for k in range(5):
            data = random_ragged_dataset(rng)
            path = tmp_path / f"rt{k}.csv"
            export_csv(data, path)
            back = ingest_csv(path)
            assert back.equals(data)

    def test_unsorted_rows_are_sorted_by_time(self, tmp_path):
        path = tmp_path / "unsorted.csv"
        path.write_text(
            "subject_id,feature_id,time,value\n"
            "a,f,0.9,1.0\n"
            "a,f,0.1,2.0\n"
            "a,f,0.5,3.0\n"
        )
        data = ingest_csv(path)
        np.testing.assert_allclose(data.times[0][0], [0.1, 0.5, 0.9])
        np.testing.assert_allclose(data.values[0][0], [2.0, 3.0, 1.0])

    def test_first_appearance_indexing(self, tmp_path):
        path = tmp_path / "order.csv"
        path.write_text(
            "subject_id,feature_id,time,value\n"
            "zeta,f,0.1,1.0\n"
            "alpha,f,0.2,2.0\n"
            "zeta,f,0.3,3.0\n"
            "alpha,f,0.4,4.0\n"
        )
        data = ingest_csv(path)
        # "zeta" appeared first, so it is subject 0 despite sorting after "alpha".
        np.testing.assert_allclose(data.values[0][0], [1.0, 3.0])
        np.testing.assert_allclose(data.values[1][0], [2.0, 4.0])


class TestIngestErrors:
    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,feature,time,value\na,f,0.5,1.0\n")
        with pytest.raises(ParseError) as err:
            ingest_csv(path)
        assert err.value.row == 1

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "subject_id,feature_id,time,value\na,f,0.5,1.0\na,f,oops,1.0\n"
        )
        with pytest.raises(ParseError) as err:
            ingest_csv(path)
        assert err.value.row == 3

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject_id,feature_id,time,value\na,f,0.5\n")
        with pytest.raises(ParseError):
            ingest_csv(path)

    def test_no_observations(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("subject_id,feature_id,time,value\n")
        with pytest.raises(EmptyRecord):
            ingest_csv(path)

    def test_time_out_of_range(self, tmp_path):
        path = tmp_path / "late.csv"
        path.write_text("subject_id,feature_id,time,value\na,f,1.5,1.0\n")
        with pytest.raises(TimeOutOfRange):
            ingest_csv(path)

    def test_normalize_time_rescales(self, tmp_path):
        path = tmp_path / "late.csv"
        path.write_text(
            "subject_id,feature_id,time,value\na,f,10.0,1.0\na,f,20.0,2.0\n"
        )
        data = ingest_csv(path, normalize_time=True)
        np.testing.assert_allclose(data.times[0][0], [0.0, 1.0])

    def test_missing_subject_feature_pair(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text(
            "subject_id,feature_id,time,value\n"
            "a,f1,0.1,1.0\n"
            "a,f2,0.2,2.0\n"
            "b,f1,0.3,3.0\n"
        )
        with pytest.raises(EmptyRecord):
            ingest_csv(path)


class TestUniformityHelpers:
    def test_ks_single_point(self):
        assert ks_distance_uniform([0.5]) == pytest.approx(0.5)

    def test_ks_perfect_grid_small(self):
        # Points at k/(n+1) have KS distance 1/(n+1) ... ish; check the exact
        # value for the two-point case {1/3, 2/3}: sup gap is 1/3.
        assert ks_distance_uniform([1 / 3, 2 / 3]) == pytest.approx(1 / 3)

    def test_ks_uniform_sample_is_small(self, rng):
        assert ks_distance_uniform(rng.uniform(0, 1, 2000)) < 0.05

    def test_qq_table_quantiles(self):
        table = qq_table([0.9, 0.1])
        assert table[0] == {"theoretical": 0.25, "observed": 0.1}
        assert table[1] == {"theoretical": 0.75, "observed": 0.9}


def small_type1_config(seed=3, replicates=4):
    return ExperimentConfig(
        experiment="type1",
        replicates=replicates,
        plan=SamplingPlan(n=12, m=1, r=8, noise_var=0.1, seed=seed),
        basis=BasisSpec(q=2, rho=0.9),
        test=quiet_test_config(mc_samples=200, seed=seed),
        kernel=KernelSpec("rational_quadratic"),
    )


class TestExperiments:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(
                "power_sep",
                5,
                SamplingPlan(n=10, m=1, r=5, noise_var=0.1, seed=0),
                BasisSpec(q=2),
                quiet_test_config(mc_samples=100),
                kernel=KernelSpec("rational_quadratic"),
                sweep=(),
            )
        with pytest.raises(ValueError):
            ExperimentConfig(
                "robustness",
                5,
                SamplingPlan(n=10, m=1, r=5, noise_var=0.1, seed=0),
                BasisSpec(q=2),
                quiet_test_config(mc_samples=100),
            )

    def test_type1_schema(self):
        out = run_experiment(small_type1_config())
        assert out["experiment"] == "type1"
        assert len(out["replicates"]) + out["summary"]["excluded_count"] == 4
        for key in ("ks_selective", "ks_wald", "rejection_rate_alpha05", "excluded_count"):
            assert key in out["summary"]
        for row in out["replicates"]:
            assert 0.0 <= row["p_selective"] <= 1.0
            assert 0.0 <= row["p_wald"] <= 1.0

    def test_determinism_via_config_round_trip(self):
        config = small_type1_config(seed=11)
        first = run_experiment(config)
        rebuilt = config_from_dict(json.loads(json.dumps(config_to_dict(config))))
        second = run_experiment(rebuilt)
        p1 = [r["p_selective"] for r in map(dict, first["replicates"])]
        p2 = [r["p_selective"] for r in map(dict, second["replicates"])]
        assert p1 == p2

    def test_adding_replicates_preserves_prefix(self):
        short = run_experiment(small_type1_config(seed=7, replicates=3))
        long = run_experiment(small_type1_config(seed=7, replicates=5))
        p_short = [r["p_selective"] for r in short["replicates"]]
        p_long = [r["p_selective"] for r in long["replicates"]]
        assert p_long[: len(p_short)] == p_short

    def test_power_schema(self):
        config = ExperimentConfig(
            experiment="power_sep",
            replicates=3,
            plan=SamplingPlan(n=12, m=1, r=8, noise_var=0.1, seed=5),
            basis=BasisSpec(q=2, rho=0.9),
            test=quiet_test_config(mc_samples=200, seed=5),
            kernel=KernelSpec("rational_quadratic"),
            sweep=(2.0, 4.0),
        )
        out = run_experiment(config)
        assert [row["sweep_value"] for row in out["power_curve"]] == [2.0, 4.0]
        for row in out["power_curve"]:
            assert row["n"] == 12
            assert np.isnan(row["power"]) or 0.0 <= row["power"] <= 1.0


class TestRobustness:
    def test_wiener_schema(self):
        from psimf.simkit import MisspecProcessSpec

        config = ExperimentConfig(
            experiment="robustness",
            replicates=4,
            plan=SamplingPlan(n=12, m=1, r=8, noise_var=0.1, seed=13),
            basis=BasisSpec(q=2, rho=0.9),
            test=quiet_test_config(mc_samples=200, seed=13),
            misspec=MisspecProcessSpec("wiener"),
        )
        out = run_experiment(config)
        assert out["experiment"] == "robustness"
        assert out["process"] == "wiener"
        assert "qq_selective" in out["summary"]
        assert np.isfinite(out["summary"]["ks_selective"])

    def test_zero_vol_exponential_brownian_runs(self):
        # Constant latent paths; the observation noise still makes the
        # embeddings distinct, so replicates either complete or are excluded.
        from psimf.simkit import MisspecProcessSpec

        config = ExperimentConfig(
            experiment="robustness",
            replicates=3,
            plan=SamplingPlan(n=10, m=1, r=6, noise_var=0.1, seed=2),
            basis=BasisSpec(q=2, rho=0.9),
            test=quiet_test_config(mc_samples=200, seed=2),
            misspec=MisspecProcessSpec("exponential_brownian", vol=0.0),
        )
        out = run_experiment(config)
        assert len(out["replicates"]) + out["summary"]["excluded_count"] == 3

    def test_excluded_replicates_are_counted(self):
        # An impossible denominator guard forces EmptyTruncation everywhere.
        config = small_type1_config(seed=5)
        config = ExperimentConfig(
            experiment="type1",
            replicates=config.replicates,
            plan=config.plan,
            basis=config.basis,
            test=quiet_test_config(
                mc_samples=200, seed=5, min_effective_denominator=1e12
            ),
            kernel=config.kernel,
        )
        out = run_experiment(config)
        assert out["summary"]["excluded_count"] == 4
        assert out["replicates"] == []


class TestZeroSeparationPower:
    def test_power_near_alpha_under_null(self):
        config = ExperimentConfig(
            experiment="power_sep",
            replicates=40,
            plan=SamplingPlan(n=30, m=1, r=10, noise_var=0.1, seed=21),
            basis=BasisSpec(q=2, rho=0.9),
            test=quiet_test_config(mc_samples=300, seed=21),
            kernel=KernelSpec("rational_quadratic"),
            sweep=(0.0,),
        )
        row = run_experiment(config)["power_curve"][0]
        se = np.sqrt(0.05 * 0.95 / row["n_replicates"])
        assert row["power"] <= 0.05 + 3 * se


class TestReports:
    def test_json_report_schema(self, tmp_path):
        config = small_type1_config(seed=2)
        results = run_experiment(config)
        path = tmp_path / "report.json"
        emit_report(results, config, "json", path)
        payload = json.loads(path.read_text())
        for key in ("config", "seed", "replicates", "summary", "library_version"):
            assert key in payload
        assert payload["seed"] == 2
        # The embedded config round-trips into an equal ExperimentConfig.
        assert config_from_dict(payload["config"]) == config

    def test_csv_report(self, tmp_path):
        config = small_type1_config(seed=2)
        results = run_experiment(config)
        path = tmp_path / "report.csv"
        emit_report(results, config, "csv", path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("replicate,p_selective,p_wald")
        assert len(lines) == 1 + len(results["replicates"])

    def test_unknown_format(self, tmp_path):
        config = small_type1_config()
        results = run_experiment(config)
        with pytest.raises(ValueError):
            emit_report(results, config, "yaml", tmp_path / "x")
