import csv
import json
import math
import warnings
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from witnesscert import montecarlo as mc
from witnesscert.errors import DomainError, SourceError, WitnessError
from witnesscert.experiment import experiment_preset, simulate


def summary(preset="ghz-paper", reps=40, **kw):
    return mc.run_monte_carlo(mc.McConfig(reps, experiment_preset(preset, **kw)))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(repetitions=0), dict(repetitions=2.5), dict(repetitions=3, workers=0),
                                    dict(repetitions=3, bins=0)])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            mc.McConfig(experiment=experiment_preset("ghz-paper"), **kw)


class TestRepetitions:
    def test_rows(self):
        s = summary(reps=30, n=100)
        assert s.n_ok == 30 and not s.has_failures
        np.testing.assert_array_equal(s.data["rep"], np.arange(30))
        np.testing.assert_allclose(s.column("true_w"), -0.172125, atol=1e-12)
        assert len(s.rows) == 30 and set(s.rows[0]) == set(mc.ROW_FIELDS)

    def test_rep_stream_matches_single_run(self):
        s = summary(reps=5, n=100, seed=9)
        cfg = experiment_preset("ghz-paper", n=100, seed=9)
        from witnesscert import make_rng
        from witnesscert.experiment import run_experiment

        run = run_experiment(cfg.build_source(), cfg.build_game(), cfg, make_rng(9, 3))
        assert s.data["w_hat"][3] == pytest.approx(cfg.build_game().c - run.scores.mean(), abs=1e-14)

    def test_workers_do_not_change_results(self):
        cfg = experiment_preset("ghz-paper", n=50)
        one = mc.run_monte_carlo(mc.McConfig(12, cfg, workers=1))
        two = mc.run_monte_carlo(mc.McConfig(12, cfg, workers=2))
        for k in mc.ROW_FIELDS:
            np.testing.assert_array_equal(one.data[k], two.data[k])

    def test_failures_recorded(self, monkeypatch):
        real = mc.run_experiment

        def flaky(source, game, config, rng, measurement=None):
            if flaky.calls % 3 == 1:
                flaky.calls += 1
                raise SourceError("lost lock")
            flaky.calls += 1
            return real(source, game, config, rng, measurement=measurement)

        flaky.calls = 0
        monkeypatch.setattr(mc, "run_experiment", flaky)
        s = summary(reps=9, n=50)
        assert s.has_failures and len(s.failures) == 3 and s.n_ok == 6
        assert s.failures[0] == {"rep": 1, "error": "SourceError: lost lock"}
        assert s.as_dict()["repetitions"] == 9

    def test_all_failed(self, monkeypatch):
        def broken(*a, **k):
            raise SourceError("dead")

        monkeypatch.setattr(mc, "run_experiment", broken)
        with pytest.raises(WitnessError, match="all 3 repetitions failed"):
            summary(reps=3, n=10)


class TestSummary:
    def test_aggregates(self):
        s = summary(reps=60, n=600)
        d = s.as_dict()
        assert d["coverage_rate"] == s.coverage_rate
        assert d["epsilon"] == pytest.approx(0.21588652146830464, rel=1e-12)
        assert d["w_hat_quantiles"]["q2.5"] <= d["w_hat_quantiles"]["q50"] <= d["w_hat_quantiles"]["q97.5"]
        assert -0.2 < d["w_hat_mean"] < -0.15

    def test_median_run(self):
        s = summary(reps=11, n=100)
        med = s.median_run()
        assert med["w_hat"] == pytest.approx(np.median(s.column("w_hat")))

    def test_width_ratio_definition(self):
        s = summary(reps=200, n=100)
        expected = 2 * 1.959963984540054 * s.median_run()["sigma_hat"] / s.central_width()
        assert s.gaussian_width_ratio() == pytest.approx(expected, rel=1e-12)

    def test_gaussian_reference(self):
        run = simulate(experiment_preset("ghz-paper", n=100))
        w, sd = mc.gaussian_reference(run)
        assert w == pytest.approx(0.375 - run.scores.mean())
        assert sd == pytest.approx(run.scores.std(ddof=1) / 10)
        assert mc.gaussian_reference(run.scores, c=0.375) == (w, sd)
        with pytest.raises(DomainError):
            mc.gaussian_reference(run.scores)
        with pytest.raises(DomainError):
            mc.gaussian_reference([0.1], c=0.375)


class TestHistograms:
    def test_fd_edges(self):
        x = np.random.default_rng(0).normal(size=1000)
        edges = mc.freedman_diaconis_edges(x)
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        width = 2 * iqr / 1000 ** (1 / 3)
        assert np.diff(edges)[0] == pytest.approx(width, rel=0.1)
        assert len(mc.freedman_diaconis_edges(x, bins=7)) == 8

    def test_counts(self):
        counts, edges = mc.histogram(np.arange(100.0), bins=10)
        assert counts.sum() == 100 and len(edges) == 11

    def test_empty(self):
        with pytest.raises(DomainError):
            mc.histogram([])

    def test_svg_well_formed(self):
        svg = mc.histogram_svg([1, 3, 2], [0.0, 1.0, 2.0, 3.0], "t", "x", marker=1.5)
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert sum(1 for el in root if el.tag.endswith("rect")) == 4
        assert 'stroke="red"' in svg


class TestOutputs:
    def test_files(self, tmp_path):
        s = summary(reps=20, n=100)
        paths = mc.write_outputs(s, tmp_path / "out")
        assert set(paths) == {"per_run", "summary", "hist_w_hat", "hist_p_bound"}
        with open(paths["per_run"]) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 20 and rows[0]["covered"] in ("0", "1")
        doc = json.loads(paths["summary"].read_text())
        assert doc["repetitions"] == 20
        ET.fromstring(paths["hist_p_bound"].read_text())

    def test_no_svg(self, tmp_path):
        paths = mc.write_outputs(summary(reps=5, n=50), tmp_path, svg=False)
        assert "hist_w_hat" not in paths


class TestSweep:
    def test_anchor_added(self):
        rows = mc.scaling_sweep([100.0], [200], [0.5])
        assert len(rows) == 2
        anchor = rows[-1]
        assert (anchor["t_n"], anchor["n"], anchor["beta"]) == mc.ANCHOR
        assert anchor["p_bound"] == pytest.approx(1.9248135519239035e-4, rel=1e-10)
        assert anchor["log10_p_bound"] == pytest.approx(math.log10(1.9248135519239035e-4), rel=1e-12)

    def test_skips_invalid(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rows = mc.scaling_sweep([50.0, 150.0], [100], [0.5], include_anchor=False)
        assert len(rows) == 1 and len(caught) == 1

    def test_tiny_bounds_stay_finite(self):
        rows = mc.scaling_sweep([9000.0], [10_000], [0.5], include_anchor=False)
        assert rows[0]["p_bound"] == 0.0 and np.isfinite(rows[0]["log10_p_bound"])
        assert rows[0]["log10_p_bound"] < -300

    def test_csv(self, tmp_path):
        mc.write_sweep_csv(mc.scaling_sweep([1.0], [2], [0.5]), tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(mc.SWEEP_FIELDS)

    @pytest.mark.parametrize("spec,integer,expected", [("0:1:3", False, [0.0, 0.5, 1.0]), ("1,2.5", False, [1.0, 2.5]),
                                                        ("100:300:3", True, [100, 200, 300])])
    def test_parse_range(self, spec, integer, expected):
        assert mc.parse_range(spec, integer) == expected

    def test_parse_range_bad(self):
        with pytest.raises(DomainError):
            mc.parse_range("1:2")
