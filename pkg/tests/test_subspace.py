import numpy as np
import pytest

from asvd.linalg import svd
from asvd.subspace import (
    RetentionConfig,
    allocate_rank,
    interference,
    partition,
    project_gradient,
    rank_count,
)


def random_partition(seed, rows=6, cols=5, fraction=None):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((rows, cols))
    if fraction is None:
        fraction = rng.uniform(0.0, 1.0)
    return partition(svd(w), fraction), rng


class TestRetentionConfig:
    def test_defaults(self):
        cfg = RetentionConfig()
        assert cfg.mrr == 0.1 and cfg.trr == 0.8

    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            RetentionConfig(mrr=0.9, trr=0.5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RetentionConfig(mrr=-0.1, trr=0.5)
        with pytest.raises(ValueError):
            RetentionConfig(mrr=0.1, trr=1.5)

    def test_halved(self):
        h = RetentionConfig(0.1, 0.8).halved()
        assert h.mrr == 0.05 and h.trr == 0.4


class TestAllocateRank:
    def test_unit_importance_gives_trr(self):
        assert allocate_rank(1.0, RetentionConfig(0.1, 0.8)) == pytest.approx(0.8)

    def test_zero_importance_gives_mrr(self):
        assert allocate_rank(0.0, RetentionConfig(0.1, 0.8)) == pytest.approx(0.1)

    def test_clamped_above_one(self):
        # 0.2 + 1.5 * 0.7 = 1.25, clamped to 1.0
        assert allocate_rank(1.5, RetentionConfig(0.2, 0.9)) == 1.0

    def test_rejects_negative_importance(self):
        with pytest.raises(ValueError):
            allocate_rank(-0.5, RetentionConfig())


class TestPartition:
    def test_fraction_zero_empty_high(self):
        p, _ = random_partition(0, fraction=0.0)
        assert p.r_count == 0
        assert p.u_high.shape[1] == 0
        assert p.u_low.shape[1] == 5

    def test_fraction_one_all_high(self):
        p, _ = random_partition(1, fraction=1.0)
        assert p.r_count == 5
        assert p.u_low.shape[1] == 0

    def test_round_half_to_even(self):
        # k = 10 directions, fraction 0.25 -> 2.5 rounds to 2
        f = svd(np.random.default_rng(2).standard_normal((10, 10)))
        assert partition(f, 0.25).r_count == 2
        assert rank_count(0.25, 10) == 2
        assert rank_count(0.35, 10) == 4  # 3.5 rounds to 4

    def test_high_low_orthogonal(self):
        p, _ = random_partition(3, fraction=0.5)
        assert np.linalg.norm(p.u_high.T @ p.u_low) <= 1e-8
        assert np.linalg.norm(p.v_high.T @ p.v_low) <= 1e-8

    def test_remerge_reproduces_factors(self):
        f = svd(np.random.default_rng(4).standard_normal((6, 6)))
        p = partition(f, 0.5)
        assert np.array_equal(np.hstack([p.u_high, p.u_low]), f.u)
        assert np.array_equal(np.hstack([p.v_high, p.v_low]), f.v)

    def test_rejects_bad_fraction(self):
        f = svd(np.eye(3))
        with pytest.raises(ValueError):
            partition(f, 1.5)


class TestProjectGradient:
    def test_empty_projector_is_identity(self):
        p, rng = random_partition(5, fraction=0.0)
        g = rng.standard_normal((6, 5))
        assert np.array_equal(project_gradient(g, p), g)

    def test_full_partition_annihilates_bilinear_gradient(self):
        # grad = U_h A V_h^T with a full-rank partition projects to zero.
        w = np.random.default_rng(6).standard_normal((5, 5))
        p = partition(svd(w), 1.0)
        a = np.random.default_rng(7).standard_normal((5, 5))
        g = p.u_high @ a @ p.v_high.T
        assert np.linalg.norm(project_gradient(g, p)) <= 1e-10

    def test_hand_example_2x2(self):
        # U_h = e1, V_h = e1: subtract e1 e1^T G e1 e1^T = [[1,0],[0,0]].
        f = svd(np.diag([2.0, 1.0]))
        p = partition(f, 0.5)
        assert p.r_count == 1
        g = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(project_gradient(g, p), [[0.0, 2.0], [3.0, 4.0]], atol=1e-12)

    def test_idempotent(self):
        for seed in range(30):
            p, rng = random_partition(seed)
            g = rng.standard_normal((6, 5))
            once = project_gradient(g, p)
            twice = project_gradient(once, p)
            assert np.linalg.norm(twice - once) <= 1e-10

    def test_interference_annihilation(self):
        for seed in range(30):
            p, rng = random_partition(seed + 100)
            g = rng.standard_normal((6, 5)) * 10
            assert interference(project_gradient(g, p), p) <= 1e-10

    def test_containment_preservation(self):
        # The component outside the high subspace passes through unchanged.
        for seed in range(10):
            p, rng = random_partition(seed + 200, rows=5, cols=5, fraction=0.4)
            g = rng.standard_normal((5, 5))
            pu = p.u_high @ p.u_high.T
            pv = p.v_high @ p.v_high.T
            iu = np.eye(5) - pu
            iv = np.eye(5) - pv
            before = iu @ g @ iv
            after = iu @ project_gradient(g, p) @ iv
            assert np.linalg.norm(after - before) <= 1e-12

    def test_dimension_mismatch(self):
        p, _ = random_partition(9)
        with pytest.raises(ValueError):
            project_gradient(np.zeros((3, 3)), p)


class TestInterference:
    def test_unprojected_bilinear_gradient(self):
        # grad = U_h V_h^T gives U_h^T G V_h = I_r, norm sqrt(r).
        w = np.random.default_rng(10).standard_normal((6, 6))
        p = partition(svd(w), 0.5)
        g = p.u_high @ p.v_high.T
        assert interference(g, p) == pytest.approx(np.sqrt(p.r_count), abs=1e-10)

    def test_zero_rank(self):
        p, rng = random_partition(11, fraction=0.0)
        assert interference(rng.standard_normal((6, 5)), p) == 0.0
