import time

import numpy as np
import pytest

from scalemix.metrics import (
    MetricsReport,
    Workload,
    accuracy,
    confusion_matrix,
    precision_recall,
    probability_of_superiority,
    time_stages,
)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_none_correct(self):
        assert accuracy([1, 1, 1], [2, 2, 2]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 2, 1, 2], [1, 2, 1, 1]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([1, 2], [1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy([], [])


class TestConfusion:
    def test_row_sums_are_support(self):
        truth = [1, 1, 2, 2, 2, 3]
        pred = [1, 2, 2, 2, 1, 3]
        conf = confusion_matrix(pred, truth, 3)
        assert conf.sum() == 6
        assert np.array_equal(conf.sum(axis=1), [2, 3, 1])

    def test_accuracy_equals_trace_over_total(self, rng):
        truth = rng.integers(1, 5, 200)
        pred = rng.integers(1, 5, 200)
        conf = confusion_matrix(pred, truth, 4)
        assert accuracy(pred, truth) == np.trace(conf) / 200

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            confusion_matrix([1, 5], [1, 2], 4)


class TestPrecisionRecall:
    def test_perfect_predictions(self):
        prec, rec = precision_recall([1, 2, 3], [1, 2, 3], 3)
        assert np.array_equal(prec, [1.0, 1.0, 1.0])
        assert np.array_equal(rec, [1.0, 1.0, 1.0])

    def test_single_class_predictor(self):
        truth = [1, 1, 2, 2]
        pred = [1, 1, 1, 1]
        with pytest.warns(UserWarning, match="precision undefined"):
            prec, rec = precision_recall(pred, truth, 2)
        assert np.allclose(prec, [0.5, 0.0])
        assert np.allclose(rec, [1.0, 0.0])

    def test_hand_confusion_example(self):
        # confusion [[8,2],[1,9]] by construction
        truth = [1] * 10 + [2] * 10
        pred = [1] * 8 + [2] * 2 + [1] * 1 + [2] * 9
        prec, rec = precision_recall(pred, truth, 2)
        assert np.allclose(prec, [8 / 9, 9 / 11])
        assert np.allclose(rec, [0.8, 0.9])

    def test_macro_recall_equals_accuracy_on_balanced_data(self, rng):
        truth = np.repeat([1, 2, 3, 4], 50)
        pred = np.where(rng.random(200) < 0.8, truth, rng.integers(1, 5, 200))
        prec, rec = precision_recall(pred, truth, 4)
        assert float(rec.mean()) == pytest.approx(accuracy(pred, truth), abs=1e-12)


class TestProbabilityOfSuperiority:
    def test_all_wins(self):
        a = np.linspace(0.8, 0.9, 8)
        assert probability_of_superiority(a, a - 0.01) == 1.0

    def test_seven_of_eight(self):
        a = np.full(8, 0.8)
        b = np.full(8, 0.7)
        b[3] = 0.9
        assert probability_of_superiority(a, b) == 0.875

    def test_ties_are_not_wins(self):
        a = np.full(5, 0.8)
        assert probability_of_superiority(a, a) == 0.0

    def test_bounds(self, rng):
        for _ in range(20):
            a = rng.random(10)
            b = rng.random(10)
            assert 0.0 <= probability_of_superiority(a, b) <= 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            probability_of_superiority([0.5], [0.5, 0.6])


class TestMetricsReport:
    def test_consistency_check(self):
        conf = np.array([[5, 0], [0, 5]])
        MetricsReport(1.0, [1.0, 1.0], [1.0, 1.0], conf, (0.0, 1.0, 2.0))
        with pytest.raises(ValueError):
            MetricsReport(0.5, [1.0, 1.0], [1.0, 1.0], conf, (0.0, 1.0, 2.0))

    def test_csv_and_table_render(self):
        conf = np.array([[4, 1], [2, 3]])
        report = MetricsReport(
            accuracy=0.7,
            per_class_precision=[4 / 6, 3 / 4],
            per_class_recall=[0.8, 0.6],
            confusion=conf,
            timing=(0.0, 0.5, 1.5),
        )
        csv = report.to_csv()
        assert "accuracy,0.7" in csv
        assert "tune_s,0.0" in csv
        table = report.to_table()
        assert "accuracy" in table and "precision" in table
        conf_csv = report.confusion_csv()
        assert conf_csv.splitlines()[1] == "1,4,1"


class TestTimeStages:
    def test_no_tuning_stage_reports_zero(self):
        w = Workload(train=lambda: None, predict=lambda: None, n_predict_records=10)
        tune_s, train_s, pred_us = time_stages(w)
        assert tune_s == 0.0
        assert train_s >= 0.0
        assert pred_us >= 0.0

    def test_per_record_amortization(self):
        w = Workload(
            train=lambda: None,
            predict=lambda: time.sleep(0.05),
            n_predict_records=10000,
        )
        _, _, pred_us = time_stages(w)
        assert pred_us == pytest.approx(5.0, rel=0.8)

    def test_stage_order_and_tune(self):
        calls = []
        w = Workload(
            tune=lambda: calls.append("tune"),
            train=lambda: calls.append("train"),
            predict=lambda: calls.append("predict"),
            n_predict_records=1,
        )
        tune_s, _, _ = time_stages(w)
        assert calls == ["tune", "train", "predict"]
        assert tune_s >= 0.0
