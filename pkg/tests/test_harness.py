import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from wldreg import data, harness, linalg, network
from wldreg.diversity import Variant
from wldreg.errors import SchemaError, UnknownVariant

FIXTURES = Path(__file__).parent / "data"
PINNED = FIXTURES / "smoke-config.json"
GOLDEN = FIXTURES / "smoke-results-golden.csv"
MINIMAL = {"dataset": {"source": "two_moons", "n": 120, "noise": 0.1},
           "model": {"hidden": [8, 8]}}


def config(**overrides):
    cfg = json.loads(json.dumps(MINIMAL))
    for key, value in overrides.items():
        cfg[key] = value
    return cfg


def parse(obj):
    return harness.parse_config(json.dumps(obj))


def without_wall_time(path):
    with open(path, newline="") as f:
        return [row[:-1] for row in csv.reader(f)]


class TestParseConfig:
    def test_minimal_gets_defaults(self):
        cfg = parse(MINIMAL)
        assert (cfg.base.lambda1, cfg.base.lambda2, cfg.base.gamma, cfg.base.epsilon) == (
            0.001, 0.001, 10.0, 1e-6)
        assert [v.value for v in cfg.variants] == list(harness.DEFAULT_VARIANTS)
        assert cfg.seeds == (0,)
        assert cfg.optimizer.epochs == 100 and cfg.optimizer.batch_size == 128
        assert cfg.dataset.split == (0.6, 0.2, 0.2)
        assert cfg.points() == [(0.001, 0.001, 10.0)]

    def test_misspelled_variant(self):
        with pytest.raises(UnknownVariant):
            parse(config(regularizer={"variants": ["none", "logdte"]}))

    @pytest.mark.parametrize("section,key,value,name", [
        ("regularizer", "lambda1", -0.1, "regularizer.lambda1"),
        ("regularizer", "gamma", 0, "regularizer.gamma"),
        ("optimizer", "momentum", 1.0, "optimizer.momentum"),
        ("optimizer", "epochs", 2.5, "optimizer.epochs"),
        ("optimizer", "learning_rate", "fast", "optimizer.learning_rate"),
        ("dataset", "label_noise", 1.5, "dataset.label_noise"),
        ("model", "activation", "gelu", "model.activation"),
        ("model", "hidden", [], "model.hidden"),
    ])
    def test_schema_errors_name_the_key(self, section, key, value, name):
        obj = config()
        obj.setdefault(section, {})[key] = value
        with pytest.raises(SchemaError) as info:
            parse(obj)
        assert info.value.key == name

    def test_missing_dataset(self):
        with pytest.raises(SchemaError) as info:
            parse({"model": {"hidden": [4]}})
        assert info.value.key == "dataset"

    def test_unknown_key(self):
        with pytest.raises(SchemaError) as info:
            parse(config(lambda_1=0.1))
        assert info.value.key == "lambda_1"

    def test_missing_file(self, tmp_path):
        obj = config(dataset={"source": "csv", "path": str(tmp_path / "nope.csv")})
        with pytest.raises(SchemaError) as info:
            parse(obj)
        assert info.value.key == "dataset.path"

    def test_invalid_json(self):
        with pytest.raises(SchemaError):
            harness.parse_config("{not json")

    def test_empty_lists(self):
        with pytest.raises(SchemaError):
            parse(config(seeds=[]))
        with pytest.raises(SchemaError):
            parse(config(regularizer={"variants": []}))

    def test_grid_points(self):
        cfg = parse(config(grid={"lambda1": [0.1, 0.2], "gamma": [1, 10]}))
        assert cfg.points() == [(0.1, 0.001, 1.0), (0.1, 0.001, 10.0),
                                (0.2, 0.001, 1.0), (0.2, 0.001, 10.0)]

    def test_output_dir_override(self, monkeypatch, tmp_path):
        cfg = parse(config(output="runs/out.csv"))
        assert cfg.output_path() == Path("runs/out.csv")
        monkeypatch.setenv(harness.OUTPUT_DIR_ENV, str(tmp_path))
        assert cfg.output_path() == tmp_path / "out.csv"


class TestDatasets:
    def test_noise_hits_train_and_val_only(self):
        clean = parse(config(dataset={"source": "two_moons", "n": 500, "noise": 0.1}))
        noisy = parse(config(dataset={"source": "two_moons", "n": 500, "noise": 0.1,
                                      "label_noise": 0.4}))
        a, b = harness.build_dataset(clean.dataset), harness.build_dataset(noisy.dataset)
        assert np.array_equal(a.test.labels, b.test.labels)
        assert int(np.sum(a.train.labels != b.train.labels)) == 120
        assert int(np.sum(a.val.labels != b.val.labels)) == 40

    def test_standardize_uses_train_statistics(self):
        cfg = parse(config(dataset={"source": "blobs", "n_per_class": 50, "num_classes": 3,
                                    "dim": 3, "spread": 2.0, "standardize": True}))
        parts = harness.build_dataset(cfg.dataset)
        assert np.allclose(parts.train.features.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(parts.train.features.std(axis=0), 1.0, atol=1e-12)

    def test_idx_and_csv_sources(self):
        idx = parse(config(dataset={"source": "idx", "images": str(FIXTURES / "tiny-images.idx3"),
                                    "labels": str(FIXTURES / "tiny-labels.idx1"),
                                    "split": [0.5, 0.0, 0.5]}))
        assert len(harness.build_dataset(idx.dataset).train) == 1
        table = parse(config(dataset={"source": "csv", "path": str(FIXTURES / "small.csv"),
                                      "split": [1.0, 0.0, 0.0]}))
        assert len(harness.build_dataset(table.dataset).train) == 3


class TestRunExperiment:
    def test_cardinality_and_consistency(self):
        cfg = parse(config(regularizer={"variants": ["none", "direct"]}, seeds=[0, 1, 2],
                           optimizer={"epochs": 3}))
        results = harness.run_experiment(cfg)
        assert len(results) == 6
        assert [(r.variant, r.seed) for r in results] == [
            (v, s) for v in ("none", "direct") for s in (0, 1, 2)]
        for r in results:
            assert r.gap == pytest.approx(r.train_err - r.test_err, abs=1e-9)
            assert 0 <= min(r.train_err, r.val_err, r.test_err)
            assert max(r.train_err, r.val_err, r.test_err) <= 100

    def test_zero_epochs_is_untrained_model(self):
        cfg = parse(config(optimizer={"epochs": 0}, regularizer={"variants": ["none"]}, seeds=[3]))
        (result,) = harness.run_experiment(cfg)
        parts = harness.build_dataset(cfg.dataset)
        model = network.Mlp.build([2, 8, 8, 2], "relu", seed=3)
        assert result.test_err == network.error_rate(model, parts.test)
        assert result.best_epoch == 0 and len(result.curve) == 1

    def test_best_validation_checkpoint(self):
        cfg = parse(config(optimizer={"epochs": 15, "learning_rate": 0.3},
                           regularizer={"variants": ["logdet"]}, seeds=[1]))
        (result,) = harness.run_experiment(cfg)
        vals = [rec.val_err for rec in result.curve]
        assert result.best_epoch == int(np.argmin(vals))
        assert result.val_err == min(vals)
        best = result.curve[result.best_epoch]
        assert result.test_err == best.test_err and result.train_err == best.train_err
        assert [rec.epoch for rec in result.curve] == list(range(16))

    def test_parallel_matches_serial(self):
        base = config(regularizer={"variants": ["none", "det"]}, seeds=[0, 1],
                      optimizer={"epochs": 2})
        serial = harness.run_experiment(parse(base))
        parallel = harness.run_experiment(parse(dict(base, workers=2)))
        assert [r.row()[:-1] for r in serial] == [r.row()[:-1] for r in parallel]


class TestResultsCsv:
    def test_header(self, tmp_path):
        cfg = parse(config(optimizer={"epochs": 1}, regularizer={"variants": ["none"]}))
        harness.run_to_csv(cfg, tmp_path / "r.csv")
        header = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert header == ("variant,seed,lambda1,lambda2,gamma,train_err,val_err,test_err,"
                          "gap,epochs,wall_s")

    def test_pinned_config_matches_golden(self, tmp_path):
        cfg = harness.load_config(PINNED)
        harness.run_to_csv(cfg, tmp_path / "a.csv")
        harness.run_to_csv(cfg, tmp_path / "b.csv")
        golden = [row for row in csv.reader(GOLDEN.open(newline=""))]
        assert without_wall_time(tmp_path / "a.csv") == golden
        assert without_wall_time(tmp_path / "b.csv") == golden

    def test_read_results_rejects_other_files(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError):
            harness.read_results(tmp_path / "x.csv")


class TestSweep:
    def sweep_config(self, **extra):
        return parse(config(grid={"lambda1": [0.001, 0.01], "lambda2": [0.0, 0.001]},
                            regularizer={"variants": ["direct"]}, seeds=[0, 1],
                            optimizer={"epochs": 1}, **extra))

    def test_row_count(self, tmp_path):
        cfg = self.sweep_config()
        harness.sweep(cfg, tmp_path / "s.csv")
        assert len(harness.read_results(tmp_path / "s.csv")) == 8

    def test_single_point_reduces_to_run(self, tmp_path):
        cfg = parse(config(regularizer={"variants": ["det"]}, seeds=[0, 1], optimizer={"epochs": 1}))
        harness.sweep(cfg, tmp_path / "s.csv")
        harness.run_to_csv(cfg, tmp_path / "r.csv")
        assert without_wall_time(tmp_path / "s.csv") == without_wall_time(tmp_path / "r.csv")

    def test_resume_skips_completed_rows(self, tmp_path):
        cfg = self.sweep_config()
        full = tmp_path / "full.csv"
        harness.sweep(cfg, full)
        lines = full.read_text().splitlines(keepends=True)
        partial = tmp_path / "partial.csv"
        partial.write_text("".join(lines[:4]))  # header + 3 rows, as if interrupted
        rerun = harness.sweep(cfg, partial)
        assert len(rerun) == 5
        assert sorted(without_wall_time(partial)) == sorted(without_wall_time(full))
        assert harness.sweep(cfg, partial) == []


class TestDumpSimilarity:
    def test_constant_features_give_all_ones(self, tmp_path):
        model = network.Mlp.build([2, 3, 4, 2], seed=0)
        model.layers[1].weight = np.zeros((3, 4))
        model.layers[1].bias = np.full(4, 0.5)
        ds = data.gen_two_moons(20, 0.1, seed=0)
        s = harness.dump_similarity(model, ds, 10.0, tmp_path / "s.csv")
        assert np.array_equal(s, np.ones((4, 4)))
        header = (tmp_path / "s.csv").read_text().splitlines()[0]
        assert header == "# det=0.0 logdet=-inf"

    def test_two_unit_hand_case(self, tmp_path):
        eye = np.eye(2)
        model = network.Mlp([network.Layer(network.LayerSpec(2, 2, "identity"), eye, np.zeros(2)),
                             network.Layer(network.LayerSpec(2, 2, "identity"), eye, np.zeros(2))])
        ds = data.Dataset([[0.0, 1.0]], [0], 2)
        s = harness.dump_similarity(model, ds, 1.0, tmp_path / "s.csv")
        assert s[0, 1] == pytest.approx(math.exp(-1), abs=1e-15)
        det = 1 - math.exp(-2)
        comment = (tmp_path / "s.csv").read_text().splitlines()[0]
        values = dict(item.split("=") for item in comment[2:].split())
        assert float(values["det"]) == pytest.approx(det, rel=1e-12)
        assert float(values["logdet"]) == pytest.approx(math.log(det), rel=1e-12)

    def test_round_trip(self, tmp_path):
        model = network.Mlp.build([2, 6, 5, 2], seed=1)
        ds = data.gen_two_moons(50, 0.1, seed=0)
        s = harness.dump_similarity(model, ds, 10.0, tmp_path / "s.csv")
        assert np.array_equal(data.read_matrix_csv(tmp_path / "s.csv"), s)
        assert float((tmp_path / "s.csv").read_text().split()[1][4:]) == pytest.approx(
            linalg.det_psd(s, tolerant=True), rel=1e-15)

    def test_train_for_dump_uses_first_variant_and_seed(self):
        cfg = parse(config(regularizer={"variants": ["logdet", "none"]}, seeds=[4, 5],
                           optimizer={"epochs": 0}))
        model, dataset, gamma = harness.train_for_dump(cfg)
        fresh = network.Mlp.build([2, 8, 8, 2], "relu", seed=4)
        assert np.array_equal(model.layers[0].weight, fresh.layers[0].weight)
        assert gamma == 10.0
        assert len(dataset) == len(harness.build_dataset(cfg.dataset).test)


def test_summarize():
    cfg = parse(config(optimizer={"epochs": 0}, regularizer={"variants": ["none", Variant.DET]},
                       seeds=[0, 1]))
    lines = harness.summarize(harness.run_experiment(cfg))
    assert [line.split()[0] for line in lines] == ["none", "det"]
