import json
import os

import numpy as np
import pytest

from ects_bench import bench, cli
from ects_bench.core import DelayCurve, LabeledSeries
from ects_bench.data import Dataset, generate_synthetic, save_dataset, save_series_file
from ects_bench.errors import ConfigError


@pytest.fixture(scope="module")
def tiny_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    ds = generate_synthetic(9, 10, 4, 0.3, seed=0, name="tiny")
    save_dataset(ds, str(root))
    return os.path.join(str(root), "manifest.json")


def _config_file(tmp_path, manifest, **overrides):
    doc = {
        "datasets": [manifest],
        "methods": ["asap", "alap", "proba_threshold"],
        "alpha_grid": [0.0, 0.5, 1.0],
        "output_dir": os.path.join(str(tmp_path), "out"),
    }
    doc.update(overrides)
    path = os.path.join(str(tmp_path), "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


class TestParseConfig:
    def test_defaults_applied(self, tmp_path, tiny_manifest):
        path = _config_file(tmp_path, tiny_manifest)
        with open(path) as fh:
            doc = json.load(fh)
        del doc["alpha_grid"]
        with open(path, "w") as fh:
            json.dump(doc, fh)
        config = bench.parse_config(path)
        assert config.alpha_grid == bench.DEFAULT_ALPHA_GRID
        assert config.seed == 0

    def test_unknown_method(self, tmp_path, tiny_manifest):
        path = _config_file(tmp_path, tiny_manifest, methods=["teaser"])
        with pytest.raises(ConfigError, match="unknown method 'teaser'.*asap"):
            bench.parse_config(path)

    def test_alpha_out_of_range(self, tmp_path, tiny_manifest):
        path = _config_file(tmp_path, tiny_manifest, alpha_grid=[1.5])
        with pytest.raises(ConfigError, match="1.5"):
            bench.parse_config(path)

    def test_unknown_key_rejected(self, tmp_path, tiny_manifest):
        path = _config_file(tmp_path, tiny_manifest, bogus=1)
        with pytest.raises(ConfigError, match="bogus"):
            bench.parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            bench.parse_config(os.path.join(str(tmp_path), "nope.json"))


class TestDeriveSeed:
    def test_stable(self):
        assert bench.derive_seed(0, "a", 1) == bench.derive_seed(0, "a", 1)

    def test_part_sensitive(self):
        assert bench.derive_seed(0, "a") != bench.derive_seed(0, "b")
        assert bench.derive_seed(0, "a") != bench.derive_seed(1, "a")


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, tiny_manifest):
    tmp = tmp_path_factory.mktemp("run")
    config = bench.BenchConfig(
        datasets=(tiny_manifest,),
        methods=("asap", "alap", "proba_threshold"),
        alpha_grid=(0.0, 0.5, 1.0),
        output_dir=os.path.join(str(tmp), "out"),
    )
    bundle = bench.run_benchmark(config)
    return config, bundle


class TestRunBenchmark:
    def test_coverage_exactly_once(self, tiny_run):
        config, bundle = tiny_run
        keys = [(s.dataset, s.method, s.alpha) for s in bundle.summaries]
        assert len(keys) == len(set(keys))
        assert set(keys) == {
            ("tiny", m, a) for m in config.methods for a in config.alpha_grid
        }

    def test_asap_and_alap_times(self, tiny_run):
        config, bundle = tiny_run
        timeline = bundle.timelines["tiny"]
        for r in bundle.records:
            if r.method == "asap":
                assert r.trigger_time == timeline.timestamps[0]
            if r.method == "alap":
                assert r.trigger_time == timeline.timestamps[-1]

    def test_regret_nonnegative(self, tiny_run):
        _, bundle = tiny_run
        assert all(r.regret >= -1e-12 for r in bundle.records)

    def test_standard_cost_components(self, tiny_run):
        _, bundle = tiny_run
        timeline = bundle.timelines["tiny"]
        T = timeline.series_length
        for r in bundle.records[:200]:
            assert r.misclassification_cost in (0.0, 1.0)
            assert r.delay_cost == pytest.approx(r.trigger_time / T)
            assert r.weighted_cost == pytest.approx(
                r.alpha * r.misclassification_cost + (1 - r.alpha) * r.delay_cost
            )

    def test_skip_reason_recorded(self, tmp_path, tiny_manifest):
        # a dataset with a singleton class cannot satisfy the split
        train = (
            LabeledSeries("a", (0.0, 1.0), 0),
            LabeledSeries("b", (0.5, 1.0), 0),
            LabeledSeries("c", (1.0, 0.0), 1),
        )
        bad = Dataset("bad", train, train[:1], 2, 2)
        out = os.path.join(str(tmp_path), "bad")
        save_dataset(bad, out)
        config = bench.BenchConfig(
            datasets=(os.path.join(out, "manifest.json"),),
            methods=("asap",),
            alpha_grid=(0.5,),
            output_dir=os.path.join(str(tmp_path), "o"),
        )
        bundle = bench.run_benchmark(config)
        assert not bundle.records
        assert bundle.skipped and bundle.skipped[0][0] == "bad"

    def test_anomaly_setting_cost_components(self, tmp_path):
        ds = generate_synthetic(9, 12, 3, 0.3, seed=1, name="bin3")
        # collapse to binary: classes {0} vs {1, 2}
        def to_binary(part, prefix):
            return tuple(
                LabeledSeries(f"{prefix}-{i}", s.values, 0 if s.label == 0 else 1)
                for i, s in enumerate(part)
            )
        binary = Dataset("bin", to_binary(ds.train, "train"), to_binary(ds.test, "test"), 2, 9)
        out = os.path.join(str(tmp_path), "bin")
        save_dataset(binary, out)
        config = bench.BenchConfig(
            datasets=(os.path.join(out, "manifest.json"),),
            methods=("asap", "alap"),
            cost_setting="anomaly",
            alpha_grid=(0.5,),
            output_dir=os.path.join(str(tmp_path), "o"),
        )
        bundle = bench.run_benchmark(config)
        assert bundle.records
        T = bundle.timelines["bin"].series_length
        for r in bundle.records:
            assert r.delay_cost == pytest.approx(np.exp((r.trigger_time / T) * np.log(100.0)))
            assert r.misclassification_cost in (0.0, 1.0, 100.0)
            if r.true_label == 1 and r.predicted_label == 0:
                assert r.misclassification_cost == 100.0


class TestReports:
    def test_written_files_and_row_counts(self, tmp_path, tiny_run):
        config, bundle = tiny_run
        out = os.path.join(str(tmp_path), "reports")
        written = bench.write_reports(bundle, out)
        names = {os.path.basename(p) for p in written}
        assert {"records.csv", "summaries.csv", "ranks.csv", "pairwise.csv",
                "pareto.csv", "timelines.json"} <= names
        assert "ranks.svg" not in names
        with open(os.path.join(out, "summaries.csv")) as fh:
            rows = fh.read().splitlines()
        assert len(rows) - 1 == len(config.methods) * len(config.alpha_grid)

    def test_svg_emitted_on_request(self, tmp_path, tiny_run):
        _, bundle = tiny_run
        out = os.path.join(str(tmp_path), "reports-svg")
        written = bench.write_reports(bundle, out, emit_svg=True)
        svg = [p for p in written if p.endswith(".svg")]
        assert len(svg) == 1
        with open(svg[0]) as fh:
            assert fh.read().startswith("<svg")

    def test_rerun_byte_identical(self, tmp_path, tiny_run):
        config, _ = tiny_run
        out_a = os.path.join(str(tmp_path), "a")
        out_b = os.path.join(str(tmp_path), "b")
        bench.write_reports(bench.run_benchmark(config), out_a)
        bench.write_reports(bench.run_benchmark(config), out_b)
        for name in sorted(os.listdir(out_a)):
            with open(os.path.join(out_a, name), "rb") as fh:
                a = fh.read()
            with open(os.path.join(out_b, name), "rb") as fh:
                b = fh.read()
            assert a == b, name

    def test_records_round_trip(self, tmp_path, tiny_run):
        _, bundle = tiny_run
        out = os.path.join(str(tmp_path), "rt")
        bench.write_reports(bundle, out)
        records = bench.load_records_csv(os.path.join(out, "records.csv"))
        assert records == bundle.records
        timelines = bench.load_timelines_json(os.path.join(out, "timelines.json"))
        rebuilt = bench.bundle_from_records(records, timelines)
        assert rebuilt.summaries == bundle.summaries


class TestCli:
    def test_prepare_and_screen(self, tmp_path, capsys):
        ds = generate_synthetic(12, 12, 3, 0.1, seed=2)
        train = os.path.join(str(tmp_path), "train.csv")
        test = os.path.join(str(tmp_path), "test.csv")
        save_series_file(ds.train, train)
        save_series_file(ds.test, test)
        out = os.path.join(str(tmp_path), "ds")
        assert cli.main(["prepare", "--train", train, "--test", test, "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "manifest.json"))
        assert cli.main(["screen", "--manifest", os.path.join(out, "manifest.json")]) == 0
        captured = capsys.readouterr()
        assert "accepted=" in captured.out

    def test_run_and_report(self, tmp_path, tiny_manifest, capsys):
        config_path = _config_file(tmp_path, tiny_manifest, methods=["asap", "alap"],
                                   alpha_grid=[0.0, 1.0])
        assert cli.main(["run", "--config", config_path]) == 0
        out_dir = json.load(open(config_path))["output_dir"]
        assert os.path.exists(os.path.join(out_dir, "records.csv"))
        report_dir = os.path.join(str(tmp_path), "rep")
        assert cli.main(["report", "--results", out_dir, "--out", report_dir]) == 0
        assert os.path.exists(os.path.join(report_dir, "summaries.csv"))

    def test_config_error_exit_code(self, tmp_path, tiny_manifest):
        config_path = _config_file(tmp_path, tiny_manifest, methods=["teaser"])
        assert cli.main(["run", "--config", config_path]) == 1

    def test_data_error_exit_code(self, tmp_path):
        missing = os.path.join(str(tmp_path), "missing.csv")
        with open(missing, "w") as fh:
            fh.write("")
        out = os.path.join(str(tmp_path), "o")
        code = cli.main(["prepare", "--train", missing, "--test", missing, "--out", out])
        assert code == 2

    def test_prepare_with_imbalance(self, tmp_path):
        rng = np.random.default_rng(3)
        rows_train = []
        rows_test = []
        for c in range(2):
            for i in range(20):
                vals = rng.normal(loc=float(c), size=6)
                rows_train.append(LabeledSeries(f"tr-{c}-{i}", tuple(vals), c))
                rows_test.append(LabeledSeries(f"te-{c}-{i}", tuple(vals + 0.1), c))
        train = os.path.join(str(tmp_path), "train.csv")
        test = os.path.join(str(tmp_path), "test.csv")
        save_series_file(rows_train, train)
        save_series_file(rows_test, test)
        out = os.path.join(str(tmp_path), "imb")
        code = cli.main([
            "prepare", "--train", train, "--test", test, "--out", out,
            "--znorm", "--imbalance", "0.2",
        ])
        assert code == 0
        doc = json.load(open(os.path.join(out, "manifest.json")))
        assert doc["num_classes"] == 2


def test_cost_model_for_switch():
    std = bench.cost_model_for("standard", 3, 0.4)
    assert std.delay is DelayCurve.LINEAR
    assert std.mis_matrix[0][1] == 1.0
    anom = bench.cost_model_for("anomaly", 2, 0.4)
    assert anom.delay is DelayCurve.EXPONENTIAL
    assert anom.mis_matrix[0][1] == 100.0
