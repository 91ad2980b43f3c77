"""Fold plans, summaries, the model-zoo runner, and report serialization."""

import json
import math

import numpy as np
import pytest

from staynet.evaluation import (
    CellFailure,
    FoldReport,
    ZooResult,
    fold_reports_from_csv_text,
    fold_reports_to_csv_text,
    kfold_split,
    run_fold,
    run_model_zoo,
    summarize_folds,
    welch_t_test,
    zoo_report_to_json_text,
    zoo_summary_to_csv_text,
)
from staynet.nn import HeadSpec, ModelSpec
from staynet.tensor import Rng
from staynet.train import MetricsReport, TrainConfig


def linear_spec(features):
    return ModelSpec(input_features=features, head=(HeadSpec(1, "linear"),)).validate()


def report(model, fold, r=0.5, rmse=1.0):
    return FoldReport(model=model, fold=fold, metrics=MetricsReport(
        mse=rmse * rmse, rmse=rmse, loss=rmse * rmse / 2.0, mae=rmse * 0.8, r=r, n=10))


class TestFoldPlan:
    def test_sizes_differ_by_at_most_one(self):
        plan = kfold_split(23, 10, seed=0)
        sizes = [f.size for f in plan.folds]
        assert sizes == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_disjoint_cover(self):
        rng = Rng(0)
        for _ in range(40):
            k = int(rng.integers(2, 11))
            n = int(rng.integers(k, 201))
            plan = kfold_split(n, k, seed=int(rng.integers(0, 1000)))
            joined = np.concatenate(plan.folds)
            assert joined.size == n
            assert np.array_equal(np.sort(joined), np.arange(n))

    def test_deterministic(self):
        a = kfold_split(50, 5, seed=3)
        b = kfold_split(50, 5, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a.folds, b.folds))
        c = kfold_split(50, 5, seed=4)
        assert not all(np.array_equal(x, y) for x, y in zip(a.folds, c.folds))

    def test_train_indices_complement(self):
        plan = kfold_split(20, 4, seed=1)
        for fold in range(4):
            tr = plan.train_indices(fold)
            te = plan.folds[fold]
            assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(20))

    def test_errors(self):
        with pytest.raises(ValueError, match="k must be >= 2"):
            kfold_split(10, 1, seed=0)
        with pytest.raises(ValueError, match="at least"):
            kfold_split(3, 4, seed=0)


class TestSummaries:
    def test_two_folds(self):
        reps = [report("m", 0, r=0.8), report("m", 1, r=0.9)]
        s = summarize_folds(reps)
        assert s["r"]["mean"] == pytest.approx(0.85)
        assert s["r"]["max"] == 0.9 and s["r"]["min"] == 0.8
        assert s["r"]["std"] == pytest.approx(0.07071067811865478)

    def test_single_fold_std_zero(self):
        assert summarize_folds([report("m", 0)])["rmse"]["std"] == 0.0

    def test_undefined_r_dropped(self):
        reps = [report("m", 0, r=None), report("m", 1, r=0.5)]
        s = summarize_folds(reps)
        assert s["r"]["mean"] == 0.5 and s["r"]["std"] == 0.0
        assert summarize_folds([report("m", 0, r=None)])["r"]["mean"] is None

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize_folds([])


def toy_data(n=48, features=3, seed=0):
    rng = Rng(seed)
    x = rng.uniform((n, features))
    y = 5.0 + 12.0 * (x @ np.linspace(1.0, 0.2, features))
    return x, y


class TestRunFold:
    def test_metrics_in_original_units(self):
        x, y = toy_data()
        plan = kfold_split(48, 4, seed=2)
        config = TrainConfig(learning_rate=0.05, batch_size=16, max_epochs=25,
                             patience=0)
        metrics, history = run_fold(x, y, linear_spec(3), config, plan, 0, cell_seed=9)
        # y spans roughly 7..22 days; an untrained or unscaled model
        # could not land an rmse this small
        assert metrics.rmse < 2.0
        assert metrics.n == plan.folds[0].size
        assert history.epochs_run() == 25

    def test_deterministic(self):
        x, y = toy_data()
        plan = kfold_split(48, 4, seed=2)
        config = TrainConfig(max_epochs=2, batch_size=16)
        a, _ = run_fold(x, y, linear_spec(3), config, plan, 1, cell_seed=9)
        b, _ = run_fold(x, y, linear_spec(3), config, plan, 1, cell_seed=9)
        assert a == b


class TestModelZoo:
    def setup_method(self):
        self.x, self.y = toy_data()
        self.plan = kfold_split(48, 3, seed=5)
        self.config = TrainConfig(max_epochs=2, batch_size=16, seed=11)
        self.zoo = [("lstm", linear_spec(3)), ("cnn-gru-dnn", linear_spec(3))]

    def test_every_cell_reported(self):
        result = run_model_zoo(self.x, self.y, self.zoo, self.config, self.plan)
        assert len(result.reports) == 6 and result.failures == []
        assert result.model_order == ["lstm", "cnn-gru-dnn"]
        assert sorted(result.histories) == [("cnn-gru-dnn", f) for f in range(3)] + \
            [("lstm", f) for f in range(3)]
        assert set(result.summaries) == {"lstm", "cnn-gru-dnn"}

    def test_subset_reproduces_cells(self):
        full = run_model_zoo(self.x, self.y, self.zoo, self.config, self.plan)
        solo = run_model_zoo(self.x, self.y, self.zoo[:1], self.config, self.plan,
                             proposed="lstm")
        want = [r for r in full.reports if r.model == "lstm"]
        assert solo.reports == want

    def test_threads_do_not_change_results(self):
        a = run_model_zoo(self.x, self.y, self.zoo, self.config, self.plan, threads=1)
        b = run_model_zoo(self.x, self.y, self.zoo, self.config, self.plan, threads=3)
        assert a.reports == b.reports

    def test_failures_recorded_not_fatal(self):
        zoo = [("broken", linear_spec(5))] + self.zoo
        result = run_model_zoo(self.x, self.y, zoo, self.config, self.plan)
        assert len(result.failures) == 3
        assert all(f.model == "broken" for f in result.failures)
        assert all("ShapeError" in f.error for f in result.failures)
        assert len(result.reports) == 6
        assert "broken" not in result.summaries

    def test_unknown_proposed_rejected(self):
        with pytest.raises(ValueError, match="not in the zoo"):
            run_model_zoo(self.x, self.y, self.zoo, self.config, self.plan,
                          proposed="resnet")

    def test_p_values_skip_proposed(self):
        result = ZooResult(
            seed=0, proposed="b", folds=2, model_order=["a", "b"],
            reports=[report("a", 0, r=0.4), report("a", 1, r=0.5),
                     report("b", 0, r=0.8), report("b", 1, r=0.9)],
            failures=[])
        p = result.p_values
        assert set(p) == {"a"}
        assert p["a"] == welch_t_test([0.4, 0.5], [0.8, 0.9]).p

    def test_p_value_none_when_too_few_folds(self):
        result = ZooResult(
            seed=0, proposed="b", folds=1, model_order=["a", "b"],
            reports=[report("a", 0, r=0.4), report("b", 0, r=0.8)],
            failures=[])
        assert result.p_values["a"] is None


class TestReportSerialization:
    def make_result(self):
        return ZooResult(
            seed=7, proposed="cnn-gru-dnn", folds=2,
            model_order=["lstm", "cnn-gru-dnn"],
            reports=[report("lstm", 0, r=0.41, rmse=5.5),
                     report("lstm", 1, r=None, rmse=6.25),
                     report("cnn-gru-dnn", 0, r=0.62, rmse=4.125)],
            failures=[CellFailure(model="cnn-gru-dnn", fold=1,
                                  error="ShapeError: dense input, oh no")])

    def test_fold_reports_round_trip(self):
        result = self.make_result()
        text = fold_reports_to_csv_text(result)
        assert text.startswith("# seed=7\n")
        back = fold_reports_from_csv_text(text)
        assert back.seed == 7
        assert back.model_order == result.model_order
        assert back.folds == 2
        assert back.failures == result.failures
        assert [(r.model, r.fold) for r in back.reports] == \
            [(r.model, r.fold) for r in result.reports]
        for got, want in zip(back.reports, result.reports):
            assert got.metrics.rmse == want.metrics.rmse
            assert got.metrics.r == want.metrics.r

    def test_fold_reports_text_is_stable(self):
        text = fold_reports_to_csv_text(self.make_result())
        again = fold_reports_to_csv_text(fold_reports_from_csv_text(text))
        assert again == text

    def test_summary_uses_six_decimals(self):
        text = zoo_summary_to_csv_text(self.make_result())
        lines = text.splitlines()
        assert lines[1].split(",")[:2] == ["model", "stat"]
        mean_row = next(l for l in lines if l.startswith("lstm,mean"))
        assert "5.875000" in mean_row  # mean rmse of 5.5 and 6.25

    def test_json_report(self):
        doc = json.loads(zoo_report_to_json_text(self.make_result()))
        assert doc["proposed"] == "cnn-gru-dnn"
        assert [m["name"] for m in doc["models"]] == ["lstm", "cnn-gru-dnn"]
        lstm = doc["models"][0]
        assert lstm["n_folds"] == 2
        assert doc["failures"][0]["fold"] == 1
        proposed = doc["models"][1]
        assert proposed["p_value"] is None
