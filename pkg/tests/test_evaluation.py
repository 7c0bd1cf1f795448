"""ROC-AUC, ablation harness, report files."""

import csv

import numpy as np
import pytest

from sinbad.benchmark import cluster_benchmark, equal_mean_dataset
from sinbad.evaluation import (
    AblationReport,
    ReportRow,
    read_report_csv,
    roc_auc,
    run_ablation,
    run_sets_variant,
    write_report,
)
from sinbad.pipeline import SetPipelineConfig


def pairwise_auc(scores, labels):
    """Independent O(n^2) oracle: count anomalous-beats-normal pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0

    def test_reversed_labels(self):
        assert roc_auc([1, 2, 3, 4], [1, 1, 0, 0]) == 0.0

    def test_tie_half_credit(self):
        assert roc_auc([1, 2, 2, 3], [0, 1, 0, 1]) == pytest.approx(0.875)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="each label"):
            roc_auc([1.0, 2.0], [1, 1])

    def test_matches_pairwise_oracle_randomised(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(4, 40))
            labels = np.zeros(n, dtype=int)
            labels[: int(rng.integers(1, n))] = 1
            rng.shuffle(labels)
            if labels.all() or not labels.any():
                continue
            scores = rng.integers(0, 8, size=n).astype(float)  # many ties
            assert roc_auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.standard_normal(50)
        labels = (rng.random(50) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base)
        assert roc_auc(3.0 * scores + 7.0, labels) == pytest.approx(base)

    def test_complement_identity_for_tie_free_scores(self):
        rng = np.random.default_rng(2)
        scores = rng.permutation(30).astype(float)
        labels = (rng.random(30) < 0.5).astype(int)
        labels[0], labels[1] = 0, 1
        assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def small_benchmark():
    return cluster_benchmark(3, n_train=60, n_test_normal=40, n_test_anomalous=40)


class TestRunAblation:

    def test_sim_avg_drops_well_below_full(self, small_benchmark):
        report = run_ablation("sim_avg", data=small_benchmark, seed=3)
        by_variant = {r.variant: r.score for r in report.rows}
        assert by_variant["sim_avg"] <= by_variant["full"] - 0.2

    def test_identity_vs_gaussian_on_equal_mean_patterns(self):
        data = equal_mean_dataset(0)
        base = SetPipelineConfig(n_projections=64, n_bins=8, edge_mode="uniform")
        _, gaussian = run_sets_variant(data, base, "full", seed=7)
        _, identity = run_sets_variant(data, base, "identity_proj", seed=7)
        assert gaussian > identity

    def test_projections_sweep_stable_at_scale(self, small_benchmark):
        report = run_ablation("projections_sweep", data=small_benchmark, seed=3,
                              sweep_values=(5, 100, 1000))
        scores = {r.value: r.score for r in report.rows if r.variant == "projections_sweep"}
        # scaling 100 -> 1000 projections must not degrade beyond noise
        assert scores["1000"] >= scores["100"] - 0.03

    def test_bins_sweep_rows(self, small_benchmark):
        report = run_ablation("bins_sweep", data=small_benchmark, seed=3, sweep_values=(5, 20))
        params = [(r.param, r.value) for r in report.rows if r.variant == "bins_sweep"]
        assert params == [("n_bins", "5"), ("n_bins", "20")]

    def test_pca_variant_runs(self, small_benchmark):
        report = run_ablation("pca_proj", data=small_benchmark, seed=3)
        assert {r.variant for r in report.rows} == {"full", "pca_proj"}

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="unknown variant"):
            run_ablation("bogus", data=cluster_benchmark(0, n_train=10, n_test_normal=5,
                                                         n_test_anomalous=5), seed=0)

    def test_identical_seeds_bit_reproducible(self, small_benchmark):
        a = run_ablation("no_whitening", data=small_benchmark, seed=3)
        b = run_ablation("no_whitening", data=small_benchmark, seed=3)
        assert [r.score for r in a.rows] == [r.score for r in b.rows]
        for key in a.distributions:
            assert np.array_equal(a.distributions[key][0], b.distributions[key][0])


class TestWriteReport:
    @pytest.fixture()
    def report(self):
        rng = np.random.default_rng(4)
        rep = AblationReport("bins_sweep", "pipeline = \"sets\"\nseed = 0\n")
        rep.rows = [
            ReportRow("full", "synthetic", "", "", 0, "roc_auc", 0.97),
            ReportRow("bins_sweep", "synthetic", "n_bins", "5", 0, "roc_auc", 0.955),
            ReportRow("bins_sweep", "synthetic", "n_bins", "20", 0, "roc_auc", 0.96),
        ]
        labels = np.array([0] * 10 + [1] * 10)
        rep.distributions["full"] = (rng.random(20) + labels, labels)
        return rep

    def test_report_csv_round_trip(self, tmp_path, report):
        write_report(report, tmp_path, figures=False)
        rows = read_report_csv(tmp_path / "report.csv")
        assert rows == report.rows

    def test_distributions_csv_round_trip(self, tmp_path, report):
        write_report(report, tmp_path, figures=False)
        with (tmp_path / "score_distributions.csv").open() as fh:
            lines = [l for l in fh if not l.startswith("#")]
        recs = list(csv.DictReader(lines))
        scores, labels = report.distributions["full"]
        assert len(recs) == len(scores)
        got = np.array([float(r["score"]) for r in recs])
        assert np.array_equal(got, scores)
        assert [int(r["label"]) for r in recs] == labels.tolist()

    def test_summary_and_snapshot_round_trip(self, tmp_path, report):
        write_report(report, tmp_path, figures=False)
        summary = (tmp_path / "summary.txt").read_text()
        for row in report.rows:
            assert row.variant in summary
        # every CSV embeds the config snapshot as comment lines
        for name in ("report.csv", "score_distributions.csv"):
            text = (tmp_path / name).read_text()
            assert '# pipeline = "sets"' in text
            assert "# seed = 0" in text

    def test_figures_rendered(self, tmp_path, report):
        written = write_report(report, tmp_path, figures=True)
        names = {p.name for p in written}
        assert "scores_full.png" in names
        assert "sweep_bins_sweep.png" in names
        for p in written:
            assert p.exists() and p.stat().st_size > 0
