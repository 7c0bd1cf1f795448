"""Window pyramid extraction, series scoring, and the data readers."""

import numpy as np
import pytest

from sinbad.benchmark import composition_series
from sinbad.evaluation import roc_auc
from sinbad.pipeline import SetPipelineConfig
from sinbad.timeseries import (
    PyramidConfig,
    Series,
    extract_pyramids,
    read_series_csv,
    read_ts_file,
    score_series,
    write_ts_file,
)


class TestExtractPyramids:
    def test_first_element_padding(self):
        # T=5, tau=3, L=1: the first element sees one pad zero on the left
        s = Series(np.arange(1.0, 6.0))
        out = extract_pyramids(s, PyramidConfig(tau=3, levels=1))
        assert out.n_elements == 5
        assert np.array_equal(out.elements[0], [0.0, 1.0, 2.0])
        assert np.array_equal(out.elements[1], [1.0, 2.0, 3.0])
        assert np.array_equal(out.elements[4], [4.0, 5.0, 0.0])

    def test_element_dim_is_levels_tau_channels(self):
        rng = np.random.default_rng(0)
        s = Series(rng.standard_normal((30, 3)))
        out = extract_pyramids(s, PyramidConfig(tau=9, levels=10))
        assert out.n_elements == 30
        assert out.n_dims == 10 * 9 * 3  # 270

    def test_zero_series_gives_zero_elements(self):
        s = Series(np.zeros((12, 2)))
        out = extract_pyramids(s, PyramidConfig(tau=5, levels=3))
        assert not out.elements.any()

    def test_count_independent_of_config(self):
        rng = np.random.default_rng(1)
        s = Series(rng.standard_normal((17, 2)))
        for tau, levels in [(3, 1), (9, 10), (4, 2), (9, 20)]:
            out = extract_pyramids(s, PyramidConfig(tau=tau, levels=levels))
            assert out.n_elements == 17

    def test_stride_two_gathers_alternating_samples(self):
        s = Series(np.arange(1.0, 10.0))
        out = extract_pyramids(s, PyramidConfig(tau=3, levels=2))
        # level 2 block of the centre element t=4: samples at t-2, t, t+2
        assert np.array_equal(out.elements[4][3:], [3.0, 5.0, 7.0])

    def test_even_tau_window_rule(self):
        # even tau: floor(c*tau/2) left pad, window starts at the left offset
        s = Series(np.arange(1.0, 7.0))
        out = extract_pyramids(s, PyramidConfig(tau=4, levels=1))
        # offsets (-2, -1, 0, 1) around each step
        assert np.array_equal(out.elements[0], [0.0, 0.0, 1.0, 2.0])
        assert np.array_equal(out.elements[5], [4.0, 5.0, 6.0, 0.0])

    def test_interior_elements_shift_with_the_series(self):
        rng = np.random.default_rng(2)
        cfg = PyramidConfig(tau=3, levels=2)
        values = rng.standard_normal((40, 1))
        base = extract_pyramids(Series(values), cfg)
        shifted = extract_pyramids(Series(np.roll(values, 1, axis=0)), cfg)
        # elements whose windows stay clear of the padding match after shift
        reach = 2 * (3 // 2)  # max stride * half window
        for t in range(reach + 1, 40 - reach - 1):
            assert np.array_equal(shifted.elements[t + 1], base.elements[t])

    def test_deep_levels_still_work_on_short_series(self):
        s = Series(np.arange(1.0, 6.0))
        out = extract_pyramids(s, PyramidConfig(tau=9, levels=10))
        assert out.n_elements == 5
        assert out.n_dims == 90


class TestScoreSeries:
    def test_training_duplicate_scores_zero(self):
        rng = np.random.default_rng(3)
        train = [Series(rng.standard_normal((25, 2)), f"s{i}") for i in range(5)]
        dup = Series(train[2].values.copy(), "dup")
        scores = score_series(train, [dup], PyramidConfig(tau=3, levels=2), seed=4)
        assert scores[0].value == 0.0
        assert scores[0].sample_id == "dup"

    def test_needs_two_training_series(self):
        s = Series(np.zeros((10, 1)) + np.arange(10)[:, None])
        with pytest.raises(ValueError, match="training series"):
            score_series([s], [s])

    def test_single_projection_runs(self):
        rng = np.random.default_rng(4)
        train = [Series(rng.standard_normal((20, 1))) for _ in range(4)]
        test = [Series(rng.standard_normal((20, 1)))]
        cfg = SetPipelineConfig(n_projections=1)
        scores = score_series(train, test, PyramidConfig(tau=3, levels=2), cfg, seed=5)
        assert np.isfinite(scores[0].value)

    def test_variable_length_series_share_edges(self):
        rng = np.random.default_rng(5)
        train = [Series(rng.standard_normal((int(rng.integers(15, 40)), 2))) for _ in range(6)]
        test = [Series(rng.standard_normal((22, 2)))]
        scores = score_series(train, test, PyramidConfig(tau=3, levels=3), seed=6)
        assert np.isfinite(scores[0].value)

    def test_composition_benchmark_auc(self):
        train, test, labels = composition_series(0)
        scores = score_series(train, test, seed=5)
        assert roc_auc([s.value for s in scores], labels) >= 0.95


class TestSeriesType:
    def test_one_dim_values_become_single_channel(self):
        s = Series(np.arange(4.0))
        assert s.values.shape == (4, 1)

    def test_rejects_nans(self):
        with pytest.raises(ValueError, match="NaN"):
            Series(np.array([1.0, np.nan]))


class TestReadSeriesCsv:
    def test_plain_numeric(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("1.0,2.0\n3.0,4.0\n")
        assert np.array_equal(read_series_csv(path), [[1.0, 2.0], [3.0, 4.0]])

    def test_header_row_skipped(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("ch_a,ch_b\n1,2\n3,4\n")
        assert np.array_equal(read_series_csv(path), [[1.0, 2.0], [3.0, 4.0]])

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(ValueError, match="inconsistent"):
            read_series_csv(path)

    def test_non_numeric_body_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("1,2\n3,x\n")
        with pytest.raises(ValueError, match="non-numeric"):
            read_series_csv(path)


TS_TEXT = """\
@problemName toy
@timeStamps false
@univariate false
@classLabel true walk run
@data
1.0,2.0,3.0:10.0,20.0,30.0:walk
4.0,5.0:40.0,50.0:run
"""


class TestTsReader:
    def test_parse_basic(self, tmp_path):
        path = tmp_path / "toy.ts"
        path.write_text(TS_TEXT)
        series, labels = read_ts_file(path)
        assert labels == ["walk", "run"]
        assert series[0].values.shape == (3, 2)
        assert np.array_equal(series[0].values[:, 1], [10.0, 20.0, 30.0])
        assert series[1].values.shape == (2, 2)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        series = [Series(rng.standard_normal((int(rng.integers(5, 12)), 3)), f"s{i}")
                  for i in range(4)]
        labels = ["a", "b", "a", "b"]
        path = tmp_path / "rt.ts"
        write_ts_file(path, series, labels)
        parsed, parsed_labels = read_ts_file(path)
        assert parsed_labels == labels
        for orig, back in zip(series, parsed):
            assert np.allclose(orig.values, back.values, atol=1e-15)

    def test_length_filter(self, tmp_path):
        path = tmp_path / "toy.ts"
        path.write_text(TS_TEXT)
        series, labels = read_ts_file(path, min_length=3, max_length=10)
        assert len(series) == 1 and labels == ["walk"]

    def test_unknown_class_rejected(self, tmp_path):
        path = tmp_path / "bad.ts"
        path.write_text(TS_TEXT.replace(":run", ":fly"))
        with pytest.raises(ValueError, match="unknown class"):
            read_ts_file(path)

    def test_unequal_dimension_lengths_rejected(self, tmp_path):
        path = tmp_path / "bad.ts"
        path.write_text(TS_TEXT.replace("40.0,50.0", "40.0"))
        with pytest.raises(ValueError, match="unequal"):
            read_ts_file(path)

    def test_data_before_header_rejected(self, tmp_path):
        path = tmp_path / "bad.ts"
        path.write_text("1.0,2.0:a\n@data\n")
        with pytest.raises(ValueError, match="before @data"):
            read_ts_file(path)

    def test_timestamps_unsupported(self, tmp_path):
        path = tmp_path / "bad.ts"
        path.write_text("@timeStamps true\n@data\n(0,1.0):a\n")
        with pytest.raises(ValueError, match="timestamp"):
            read_ts_file(path)
