import math

import numpy as np
import pytest

from sgcrl_lab.embeddings import (
    EmbeddingTable,
    ScalarSimTable,
    TripletBatch,
    UpdateConfig,
    infonce_gradient_field,
    infonce_loss,
    infonce_step,
    init_scalar_table,
    init_table,
    load_table,
    pin_region,
    prob_matrix,
    psi_similarity,
    save_table,
    scalar_prob_matrix,
    scalar_step,
    scalar_table_from_embeddings,
    similarity_map,
)


def oracle_backward_loss(vectors: np.ndarray, anchors, futures) -> float:
    # scalar-loop restatement of the batch loss, independent of the vectorized path
    n = len(anchors)
    total = 0.0
    for i in range(n):
        pos = float(vectors[anchors[i]] @ vectors[futures[i]])
        denom = sum(
            math.exp(float(vectors[anchors[k]] @ vectors[futures[i]])) for k in range(n)
        )
        total -= pos - math.log(denom)
    return total


def oracle_forward_loss(vectors: np.ndarray, anchors, futures) -> float:
    n = len(anchors)
    total = 0.0
    for i in range(n):
        pos = float(vectors[anchors[i]] @ vectors[futures[i]])
        denom = sum(
            math.exp(float(vectors[anchors[i]] @ vectors[futures[k]])) for k in range(n)
        )
        total -= pos - math.log(denom)
    return total


def finite_difference_gradient(vectors, anchors, futures, oracle, h=1e-6):
    grad = np.zeros_like(vectors)
    for s in range(vectors.shape[0]):
        for k in range(vectors.shape[1]):
            vp = vectors.copy()
            vp[s, k] += h
            vm = vectors.copy()
            vm[s, k] -= h
            grad[s, k] = (oracle(vp, anchors, futures) - oracle(vm, anchors, futures)) / (2 * h)
    return grad


def random_table(num_states, dim, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((num_states, dim))
    return EmbeddingTable(v / np.linalg.norm(v, axis=1, keepdims=True))


class TestInitTable:
    def test_zero_noise_rows_identical(self):
        t = init_table(20, 8, common_scale=1.0, noise_scale=0.0, seed=3)
        assert np.allclose(t.vectors @ t.vectors.T, 1.0)
        assert psi_similarity(t, 0, 17) == pytest.approx(1.0)

    def test_zero_common_near_orthogonal(self):
        for seed in range(4):
            t = init_table(100, 16, common_scale=0.0, noise_scale=1.0, seed=seed)
            gram = t.vectors @ t.vectors.T
            off = gram[~np.eye(100, dtype=bool)]
            assert abs(off.mean()) < 0.1

    def test_rows_hug_shared_component(self):
        # oracle: the shared direction is recovered by re-drawing with zero noise
        for seed in range(8):
            noisy = init_table(50, 16, common_scale=1.0, noise_scale=0.1, seed=seed)
            shared = init_table(1, 16, common_scale=1.0, noise_scale=0.0, seed=seed)
            assert (noisy.vectors @ shared.vectors[0] > 0.9).all()

    def test_unit_rows_and_validation(self):
        t = init_table(10, 4, seed=0)
        assert t.max_norm_deviation() < 1e-12
        with pytest.raises(ValueError):
            init_table(10, 1, seed=0)
        with pytest.raises(ValueError):
            init_table(10, 4, noise_scale=-0.1, seed=0)


class TestProbMatrix:
    def test_single_pair(self):
        t = random_table(5, 4, seed=1)
        p = prob_matrix(t, TripletBatch([2], [3]))
        assert p.shape == (1, 1) and p[0, 0] == pytest.approx(1.0)

    def test_identical_anchors_uniform_columns(self):
        t = init_table(6, 8, noise_scale=0.0, seed=2)
        p = prob_matrix(t, TripletBatch([0, 1, 2], [3, 4, 5]))
        assert np.allclose(p, 1.0 / 3.0)

    def test_matches_scalar_oracle(self):
        t = random_table(9, 6, seed=4)
        anchors, futures = [1, 3, 5, 7], [2, 4, 6, 8]
        p = prob_matrix(t, TripletBatch(anchors, futures))
        for i in range(4):
            for j in range(4):
                num = math.exp(float(t.vectors[anchors[i]] @ t.vectors[futures[j]]))
                den = sum(
                    math.exp(float(t.vectors[anchors[k]] @ t.vectors[futures[j]]))
                    for k in range(4)
                )
                assert p[i, j] == pytest.approx(num / den, abs=1e-12)

    def test_columns_sum_to_one(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            t = random_table(12, 5, seed=seed + 10)
            n = int(rng.integers(1, 9))
            b = TripletBatch(rng.integers(0, 12, n), rng.integers(0, 12, n))
            p = prob_matrix(t, b)
            assert np.allclose(p.sum(axis=0), 1.0, atol=1e-9)
            assert ((p > 0) & (p <= 1)).all()

    def test_forward_rows_sum_to_one(self):
        t = random_table(8, 4, seed=7)
        b = TripletBatch([0, 1, 2], [3, 4, 5])
        p = prob_matrix(t, b, forward=True)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


class TestInfonceStep:
    def test_single_pair_is_fixed_point(self):
        t = random_table(6, 4, seed=0)
        before = t.vectors.copy()
        infonce_step(t, TripletBatch([1], [4]), UpdateConfig())
        assert np.allclose(t.vectors, before, atol=1e-15)

    def test_norms_preserved(self):
        rng = np.random.default_rng(0)
        t = random_table(15, 6, seed=3)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            b = TripletBatch(rng.integers(0, 15, n), rng.integers(0, 15, n))
            infonce_step(t, b, UpdateConfig(learning_rate=0.05))
            assert t.max_norm_deviation() < 1e-9

    @pytest.mark.parametrize("forward", [False, True])
    def test_gradient_matches_finite_differences(self, forward):
        # analytic update direction == -grad of the explicit loss, including
        # states repeated across slots and roles
        rng = np.random.default_rng(42)
        oracle = oracle_forward_loss if forward else oracle_backward_loss
        for case in range(25):
            num_states = int(rng.integers(3, 10))
            dim = int(rng.integers(2, 8))
            n = int(rng.integers(2, 8))
            t = random_table(num_states, dim, seed=100 + case)
            anchors = rng.integers(0, num_states, n)
            futures = rng.integers(0, num_states, n)
            cfg = UpdateConfig(learning_rate=1.0, normalize=False, forward=forward)
            field = infonce_gradient_field(t, TripletBatch(anchors, futures), cfg)
            fd = finite_difference_gradient(t.vectors, anchors, futures, oracle)
            # relative gate with an absolute floor for exact-fixed-point batches
            assert np.allclose(field, -fd, rtol=1e-4, atol=1e-7)

    def test_step_applies_field_then_normalizes(self):
        t = random_table(7, 5, seed=9)
        b = TripletBatch([0, 2, 4], [1, 3, 5])
        cfg = UpdateConfig(learning_rate=1e-3)
        field = infonce_gradient_field(t, b, cfg)
        expected = t.vectors + cfg.learning_rate * field
        expected /= np.linalg.norm(expected, axis=1, keepdims=True)
        infonce_step(t, b, cfg)
        assert np.allclose(t.vectors, expected, atol=1e-12)

    def test_anchor_stop_gradient(self):
        t = random_table(8, 4, seed=11)
        b = TripletBatch([0, 1], [2, 3])
        cfg = UpdateConfig(anchor_stop_gradient=True, normalize=False, learning_rate=1.0)
        field = infonce_gradient_field(t, b, cfg)
        assert np.allclose(field[[0, 1]], 0.0)
        assert not np.allclose(field[[2, 3]], 0.0)

    def test_shared_component_leaves_responsibilities_invariant(self):
        # rows constructed with an exactly equal projection onto z: adding c*z
        # to every embedding shifts each column's logits uniformly
        rng = np.random.default_rng(5)
        dim, n = 12, 6
        z = rng.standard_normal(dim)
        z /= np.linalg.norm(z)
        res = rng.standard_normal((2 * n, dim))
        res -= np.outer(res @ z, z)
        rows = 0.4 * z + 0.5 * res
        t0 = EmbeddingTable(rows.copy())
        batch = TripletBatch(np.arange(n), np.arange(n, 2 * n))
        p0 = prob_matrix(t0, batch)
        logits0 = rows[:n] @ rows[n:].T
        shifted = EmbeddingTable(rows + 0.3 * z)
        p1 = prob_matrix(shifted, batch)
        logits1 = shifted.vectors[:n] @ shifted.vectors[n:].T
        col_diffs0 = logits0 - logits0[0:1, :]
        col_diffs1 = logits1 - logits1[0:1, :]
        assert np.allclose(col_diffs0, col_diffs1, atol=1e-10)
        assert np.allclose(p0, p1, atol=1e-12)


class TestPinning:
    def test_pin_persists_through_updates(self):
        rng = np.random.default_rng(1)
        t = random_table(10, 6, seed=2)
        target = rng.standard_normal(6)
        target /= np.linalg.norm(target)
        pin_region(t, [3, 4], target)
        pinned_before = t.vectors[[3, 4]].copy()
        for _ in range(30):
            b = TripletBatch(rng.integers(0, 10, 6), rng.integers(0, 10, 6))
            infonce_step(t, b, UpdateConfig(learning_rate=0.05))
        assert np.array_equal(t.vectors[[3, 4]], pinned_before)
        assert np.array_equal(t.vectors[3], target)

    def test_pin_to_goal_and_negative_goal(self):
        t = random_table(8, 5, seed=3)
        g = 7
        pin_region(t, [1, 2], t.vectors[g].copy())
        assert psi_similarity(t, 1, g) == pytest.approx(1.0)
        pin_region(t, [4], -t.vectors[g])
        assert psi_similarity(t, 4, g) == pytest.approx(-1.0)

    def test_orthogonal_pin_zero_similarity(self):
        t = random_table(6, 4, seed=8)
        z = t.vectors[5]
        raw = np.random.default_rng(0).standard_normal(4)
        raw -= (raw @ z) * z
        raw /= np.linalg.norm(raw)
        pin_region(t, [2], raw)
        assert abs(psi_similarity(t, 2, 5)) < 1e-9

    def test_rejects_non_unit_target(self):
        t = random_table(4, 3, seed=0)
        with pytest.raises(ValueError):
            pin_region(t, [0], np.array([1.0, 1.0, 0.0]))


class TestScalarTable:
    def test_single_pair_unchanged(self):
        t = init_scalar_table(5, fill=0.3)
        before = t.sims.copy()
        scalar_step(t, TripletBatch([1], [2]), UpdateConfig())
        assert np.array_equal(t.sims, before)

    def test_uniform_two_pair_update(self):
        t = init_scalar_table(4, fill=0.0)
        eta = 0.01
        scalar_step(t, TripletBatch([0, 1], [2, 3]), UpdateConfig(learning_rate=eta))
        assert t.sims[0, 2] == pytest.approx(eta / 2)
        assert t.sims[1, 3] == pytest.approx(eta / 2)
        assert t.sims[0, 3] == pytest.approx(-eta / 2)
        assert t.sims[1, 2] == pytest.approx(-eta / 2)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for case in range(10):
            num_states = int(rng.integers(3, 7))
            n = int(rng.integers(2, 6))
            sims = rng.standard_normal((num_states, num_states))
            anchors = rng.integers(0, num_states, n)
            futures = rng.integers(0, num_states, n)

            def loss(mat):
                total = 0.0
                for i in range(n):
                    denom = sum(math.exp(mat[anchors[k], futures[i]]) for k in range(n))
                    total -= mat[anchors[i], futures[i]] - math.log(denom)
                return total

            t = ScalarSimTable(sims.copy())
            scalar_step(t, TripletBatch(anchors, futures), UpdateConfig(learning_rate=1.0))
            update = t.sims - sims
            h = 1e-6
            fd = np.zeros_like(sims)
            for r in range(num_states):
                for c in range(num_states):
                    mp = sims.copy(); mp[r, c] += h
                    mm = sims.copy(); mm[r, c] -= h
                    fd[r, c] = (loss(mp) - loss(mm)) / (2 * h)
            assert np.allclose(update, -fd, rtol=1e-4, atol=1e-7)

    def test_from_embeddings_matches_gram(self):
        t = random_table(6, 4, seed=5)
        s = scalar_table_from_embeddings(t)
        assert np.allclose(s.sims, t.vectors @ t.vectors.T)

    def test_column_softmax_shift_guard(self):
        # unbounded logits must not overflow
        t = init_scalar_table(3, fill=0.0)
        t.sims[0, 1] = 900.0
        p = scalar_prob_matrix(t, TripletBatch([0, 1], [1, 2]))
        assert np.isfinite(p).all()


class TestCheckpointRoundTrip:
    def test_lossless(self, tmp_path):
        t = random_table(9, 5, seed=6)
        pin_region(t, [2], t.vectors[8].copy())
        path = save_table(t, tmp_path / "ckpt", seed=7, step=42)
        loaded, meta = load_table(path)
        assert np.array_equal(loaded.vectors, t.vectors)
        assert set(loaded.pinned) == {2}
        assert np.array_equal(loaded.pinned[2], t.pinned[2])
        assert meta["seed"] == 7 and meta["step"] == 42

    def test_version_mismatch(self, tmp_path):
        t = random_table(3, 3, seed=0)
        path = save_table(t, tmp_path / "ckpt")
        meta_path = path.with_suffix(".json")
        meta = meta_path.read_text().replace('"version": 1', '"version": 99')
        meta_path.write_text(meta)
        with pytest.raises(ValueError):
            load_table(path)


def test_infonce_loss_matches_oracle():
    t = random_table(7, 4, seed=12)
    anchors, futures = [0, 2, 4], [1, 3, 5]
    b = TripletBatch(anchors, futures)
    assert infonce_loss(t, b) == pytest.approx(
        oracle_backward_loss(t.vectors, anchors, futures), abs=1e-10
    )
    assert infonce_loss(t, b, forward=True) == pytest.approx(
        oracle_forward_loss(t.vectors, anchors, futures), abs=1e-10
    )


def test_similarity_map_matches_rowwise():
    t = random_table(6, 4, seed=13)
    g = t.vectors[2]
    m = similarity_map(t, g)
    for s in range(6):
        assert m[s] == pytest.approx(float(t.vectors[s] @ g))
