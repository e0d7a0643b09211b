import numpy as np
import pytest

from asvd.metrics import (
    AccuracyMatrix,
    RunReport,
    average_accuracy,
    backward_transfer,
    suite_delta,
)


def filled_matrix(rows):
    m = AccuracyMatrix(len(rows))
    for t, row in enumerate(rows, 1):
        for j, value in enumerate(row, 1):
            m.set(t, j, value)
    return m


class TestAccuracyMatrix:
    def test_set_get(self):
        m = AccuracyMatrix(3)
        m.set(2, 1, 0.5)
        assert m.get(2, 1) == 0.5

    def test_rejects_upper_triangle(self):
        m = AccuracyMatrix(3)
        with pytest.raises(IndexError):
            m.set(1, 2, 0.5)

    def test_missing_entry(self):
        m = AccuracyMatrix(2)
        with pytest.raises(ValueError):
            m.get(1, 1)

    def test_round_trip_lists(self):
        m = filled_matrix([[0.9], [0.7, 0.95]])
        assert AccuracyMatrix.from_lists(m.to_lists()) == m


class TestAverageAccuracy:
    def test_all_ones(self):
        assert average_accuracy(filled_matrix([[1.0], [1.0, 1.0]])) == 1.0

    def test_two_task_mean(self):
        m = filled_matrix([[0.9], [0.8, 0.6]])
        assert average_accuracy(m) == pytest.approx(0.7, abs=1e-15)

    def test_single_task(self):
        assert average_accuracy(filled_matrix([[0.42]])) == 0.42

    def test_incomplete_rejected(self):
        m = AccuracyMatrix(2)
        m.set(1, 1, 0.5)
        m.set(2, 2, 0.5)
        with pytest.raises(ValueError):
            average_accuracy(m)

    def test_permutation_invariant_over_last_row(self):
        m1 = filled_matrix([[0.1], [0.2, 0.8]])
        m2 = filled_matrix([[0.1], [0.8, 0.2]])
        assert average_accuracy(m1) == average_accuracy(m2)


class TestBackwardTransfer:
    def test_diagonal_preserving_is_zero(self):
        m = filled_matrix([[0.9], [0.9, 0.8], [0.9, 0.8, 0.7]])
        assert backward_transfer(m, 3) == 0.0

    def test_hand_value_with_one_over_t(self):
        # (1/3) * ((0.5 - 0.9) + (0.7 - 0.7)) = -0.13333...
        m = filled_matrix([[0.9], [0.6, 0.7], [0.5, 0.7, 0.8]])
        assert backward_transfer(m, 3) == pytest.approx(-0.4 / 3.0, abs=1e-12)

    def test_uniform_improvement(self):
        # a[t][i] = a[i][i] + 0.1 gives +0.1 * (t-1)/t.
        m = filled_matrix([[0.5], [0.6, 0.5], [0.6, 0.6, 0.5]])
        assert backward_transfer(m, 3) == pytest.approx(0.1 * 2.0 / 3.0, abs=1e-12)

    def test_t_equal_one_defined_as_zero(self):
        assert backward_transfer(filled_matrix([[0.9]]), 1) == 0.0

    def test_never_negative_without_drops(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            diag = rng.uniform(0.2, 0.8, size=4)
            rows = []
            for t in range(4):
                # Re-evaluations never drop below the diagonal.
                rows.append(
                    [float(diag[i] + rng.uniform(0, 0.1)) for i in range(t)]
                    + [float(diag[t])]
                )
            assert backward_transfer(filled_matrix(rows), 4) >= 0.0


class TestSuiteDelta:
    def test_identical_is_zero(self):
        assert suite_delta([0.5, 0.7], [0.5, 0.7]) == 0.0

    def test_hand_value(self):
        assert suite_delta([0.5, 0.5], [0.6, 0.8]) == pytest.approx(0.2, abs=1e-15)

    def test_single_entry(self):
        assert suite_delta([0.3], [0.45]) == pytest.approx(0.15, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            suite_delta([0.1], [0.1, 0.2])


class TestRunReport:
    def make_report(self):
        m = filled_matrix([[0.9], [0.7, 0.95]])
        return RunReport(
            config={"trainer": "adaptive_svd", "stream": {"family": "rotated_gaussians"}},
            seed=3,
            permutation_index=1,
            task_order=[2, 1],
            trainer="adaptive_svd",
            accuracy_matrix=m,
            aa=average_accuracy(m),
            bwt=backward_transfer(m, 2),
            interference_max=1.25e-13,
            first_order_inner_max=7.5e-12,
            importance_profiles=[{"task": 2, "raw": [0.4], "normalized": [1.0]}],
            rank_allocations=[[{"task": 1, "layer": 0, "fraction": 0.8, "r_count": 3}]],
            ability_before=[0.5, 0.25],
            ability_after=[0.5, 0.3],
            ability_deltas=[0.0, 0.05],
            warnings=["example"],
            wall_clock_seconds=1.5,
        )

    def test_aa_invariant_enforced(self):
        m = filled_matrix([[0.9]])
        with pytest.raises(ValueError):
            RunReport(
                config={},
                seed=0,
                permutation_index=0,
                task_order=[1],
                trainer="seq_full",
                accuracy_matrix=m,
                aa=0.123,
                bwt=0.0,
                interference_max=None,
                first_order_inner_max=None,
                importance_profiles=[],
                rank_allocations=[],
            )

    def test_json_round_trip_lossless(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.json"
        report.save(path)
        loaded = RunReport.load(path)
        assert loaded.accuracy_matrix == report.accuracy_matrix
        assert loaded.aa == report.aa
        assert loaded.bwt == report.bwt
        assert loaded.interference_max == report.interference_max
        assert loaded.ability_deltas == report.ability_deltas
        assert loaded.to_json() == report.to_json()

    def test_metrics_recomputable_from_loaded_report(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.json"
        report.save(path)
        loaded = RunReport.load(path)
        assert average_accuracy(loaded.accuracy_matrix) == report.aa
        assert backward_transfer(loaded.accuracy_matrix, 2) == report.bwt


class TestFixtureTable:
    # Ten fixed matrices with hand-computed AA and BWT, exercised to 1e-12.
    FIXTURES = [
        ([[1.0]], 1.0, 0.0),
        ([[0.5]], 0.5, 0.0),
        ([[1.0], [1.0, 1.0]], 1.0, 0.0),
        ([[0.8], [0.6, 0.9]], 0.75, (0.6 - 0.8) / 2.0),
        ([[0.9], [0.9, 0.7]], 0.8, 0.0),
        ([[0.4], [0.5, 0.6]], 0.55, (0.5 - 0.4) / 2.0),
        ([[0.9], [0.6, 0.7], [0.5, 0.7, 0.8]], (0.5 + 0.7 + 0.8) / 3.0, -0.4 / 3.0),
        ([[1.0], [0.0, 1.0], [0.0, 0.0, 1.0]], 1.0 / 3.0, -2.0 / 3.0),
        (
            [[0.25], [0.25, 0.25], [0.25, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]],
            0.25,
            0.0,
        ),
        (
            [[0.6], [0.7, 0.8], [0.65, 0.85, 0.9], [0.6, 0.8, 0.95, 1.0]],
            (0.6 + 0.8 + 0.95 + 1.0) / 4.0,
            ((0.6 - 0.6) + (0.8 - 0.8) + (0.95 - 0.9)) / 4.0,
        ),
    ]

    @pytest.mark.parametrize("rows,expected_aa,expected_bwt", FIXTURES)
    def test_fixture(self, rows, expected_aa, expected_bwt):
        m = filled_matrix(rows)
        assert average_accuracy(m) == pytest.approx(expected_aa, abs=1e-12)
        assert backward_transfer(m, len(rows)) == pytest.approx(expected_bwt, abs=1e-12)
