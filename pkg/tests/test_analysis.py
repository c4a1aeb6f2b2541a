"""Curve metrics, percent change, confidence, and the anomaly report."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eloss.analysis import (Curve, InsufficientDataError,
                            UndefinedBaselineError, anomaly_report, confidence,
                            max_metric, mavp_abs, mavp_literal, percent_change,
                            svg_line_plot)
from eloss.datasets import NoiseSpec, make_dataset
from eloss.training import TrainConfig, build_net

curve_values = st.lists(st.floats(-100, 100, allow_nan=False,
                                  allow_infinity=False), min_size=2, max_size=30)


class TestCurve:
    def test_strictly_increasing_steps(self):
        with pytest.raises(ValueError):
            Curve(steps=(0, 0, 1), values=(1.0, 2.0, 3.0))

    def test_finite_values(self):
        with pytest.raises(ValueError):
            Curve(steps=(0, 1), values=(1.0, float("nan")))

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "curve.csv"
        path.write_text("step,value\n0,0.5\n1,0.75\n2,0.8\n")
        curve = Curve.from_csv(path)
        assert curve.steps == (0, 1, 2)
        assert curve.values == (0.5, 0.75, 0.8)


class TestMavp:
    def test_literal_hand_values(self):
        assert mavp_literal(Curve.from_values([1.0, 2.0, 4.0])) == pytest.approx(1.5)
        assert mavp_literal(Curve.from_values([3.0, 3.0, 3.0])) == 0.0
        assert mavp_literal(Curve.from_values([-1.0, -4.0])) == pytest.approx(3.0)

    def test_abs_hand_values(self):
        assert mavp_abs(Curve.from_values([1.0, 3.0, 2.0])) == pytest.approx(1.5)
        assert mavp_abs(Curve.from_values([5.0, 5.0])) == 0.0

    def test_monotone_nonnegative_curves_agree(self):
        curve = Curve.from_values([0.1, 0.4, 0.4, 0.9])
        assert mavp_abs(curve) == pytest.approx(mavp_literal(curve))

    def test_insufficient_points(self):
        with pytest.raises(InsufficientDataError):
            mavp_literal(Curve.from_values([1.0]))

    @settings(max_examples=100, deadline=None)
    @given(curve_values)
    def test_telescoping_identity(self, values):
        curve = Curve.from_values(values)
        n = len(values) - 1
        telescoped = (abs(values[-1]) - abs(values[0])) / n
        assert mavp_literal(curve) == pytest.approx(telescoped, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(curve_values)
    def test_abs_dominates_literal(self, values):
        curve = Curve.from_values(values)
        assert mavp_abs(curve) >= abs(mavp_literal(curve)) - 1e-12


class TestMaxMetric:
    def test_hand_values(self):
        assert max_metric(Curve.from_values([0.1, 0.9, 0.5])) == 0.9
        assert max_metric(Curve(steps=(3,), values=(0.7,))) == 0.7
        assert max_metric(Curve.from_values([0.2, 0.2])) == 0.2


class TestPercentChange:
    def test_table_values(self):
        # reported confidence drop and metric rise, to one decimal
        assert round(percent_change(0.495, 0.248), 1) == -49.9
        assert round(percent_change(1.584e-3, 9.085e-3), 1) == 473.5

    def test_no_change(self):
        assert percent_change(0.37, 0.37) == 0.0

    def test_zero_baseline(self):
        with pytest.raises(UndefinedBaselineError):
            percent_change(0.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 1e6), st.floats(-99.0, 1000.0))
    def test_roundtrip_property(self, clean, pct):
        noisy = clean * (1.0 + pct / 100.0)
        assert percent_change(clean, noisy) == pytest.approx(pct, abs=1e-9)


class TestConfidence:
    def test_uniform_logits(self):
        # equal logits over K classes give probability 1/K
        net = build_net(TrainConfig(task="blobs-mlp"), make_dataset(
            "blobs-mlp", seed=0, sizes={"train": 8, "val": 4, "test": 4}))
        for p in net.parameters().values():
            p.values = np.zeros_like(p.values)
        value = confidence(net, np.random.default_rng(0).normal(size=(6, 32)))
        assert value == pytest.approx(0.25, abs=1e-12)

    def test_within_unit_interval(self):
        data = make_dataset("blobs-mlp", seed=1, sizes={"train": 8, "val": 4, "test": 4})
        net = build_net(TrainConfig(task="blobs-mlp", seed=1), data)
        value = confidence(net, data.test_x)
        assert 0.0 < value <= 1.0


class TestAnomalyReport:
    @pytest.fixture(scope="class")
    def setup(self):
        data = make_dataset("gridmap-conv", seed=0,
                            sizes={"train": 16, "val": 8, "test": 24})
        net = build_net(TrainConfig(task="gridmap-conv", seed=0), data)
        return net, data

    def test_zero_noise_row_matches_clean(self, setup):
        net, data = setup
        spec = NoiseSpec(kind="gaussian-additive", ratio=0.0, sigma=0.5, seed=0)
        report = anomaly_report(net, data, [spec], k=1)
        clean, row = report.rows
        assert row.mean_confidence == pytest.approx(clean.mean_confidence, abs=1e-12)
        assert row.mean_eloss_metric == pytest.approx(clean.mean_eloss_metric, abs=1e-12)
        assert row.pct_change_confidence == pytest.approx(0.0, abs=1e-9)

    def test_clean_row_pct_exactly_zero(self, setup):
        net, data = setup
        report = anomaly_report(net, data, [NoiseSpec("element-dropout", 0.5, seed=1)])
        assert report.rows[0].pct_change_confidence == 0.0
        assert report.rows[0].pct_change_eloss == 0.0

    def test_pct_recomputes_from_means(self, setup):
        net, data = setup
        report = anomaly_report(net, data, [NoiseSpec("gaussian-additive", 0.3,
                                                      sigma=0.5, seed=2)])
        clean, row = report.rows
        expected = 100.0 * (row.mean_confidence - clean.mean_confidence) / clean.mean_confidence
        assert row.pct_change_confidence == expected

    def test_csv_and_json_emission(self, setup):
        net, data = setup
        report = anomaly_report(net, data, [NoiseSpec("gaussian-additive", 0.1,
                                                      sigma=0.5, seed=3)])
        csv_text = report.to_csv()
        assert csv_text.splitlines()[0] == "condition,mean_confidence,mean_eloss,pct_conf,pct_eloss"
        doc = json.loads(report.to_json())
        assert doc["rows"][0]["condition"] == "clean"
        assert doc["provenance"]["dataset"] == "gridmap-conv"

    def test_requires_noise_specs(self, setup):
        net, data = setup
        with pytest.raises(ValueError):
            anomaly_report(net, data, [])


class TestSvg:
    def test_deterministic_and_wellformed(self):
        curve = Curve.from_values([0.1, 0.5, 0.3, 0.9])
        a = svg_line_plot({"metric": curve}, title="demo")
        b = svg_line_plot({"metric": curve}, title="demo")
        assert a == b
        assert a.startswith("<svg") and a.rstrip().endswith("</svg>")
        assert "polyline" in a

    def test_multiple_curves(self):
        svg = svg_line_plot({"a": Curve.from_values([0.0, 1.0]),
                             "b": Curve.from_values([1.0, 0.0])})
        assert svg.count("polyline") == 2
