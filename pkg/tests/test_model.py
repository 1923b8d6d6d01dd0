"""Hashing head: pooling, PCA initialization, forward pass, persistence."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from binhash import (
    FeatureStore,
    FormatError,
    HashHead,
    InitError,
    Rng,
    ShapeError,
    binarize,
    embed_store,
    forward,
    init_head,
    load_head,
    mac_pool,
    pca,
    save_head,
)


def random_store(n=25, d=6, seed=3):
    return FeatureStore([f"x{i:02d}" for i in range(n)], Rng(seed).gaussian((n, d)))


class TestMacPool:
    def test_1x1_tensor_is_identity(self):
        values = np.array([[[3.0, -1.0, 0.5]]])
        np.testing.assert_array_equal(mac_pool(values), [3.0, -1.0, 0.5])

    def test_constant_tensor(self):
        np.testing.assert_array_equal(mac_pool(np.full((3, 4, 2), 7.5)), [7.5, 7.5])

    def test_maxima_at_varying_positions(self):
        maps = np.full((2, 2, 3), -9.0)
        maps[0, 1, 0] = 5.0
        maps[1, 0, 1] = -1.0
        maps[1, 1, 2] = 0.25
        np.testing.assert_array_equal(mac_pool(maps), [5.0, -1.0, 0.25])

    def test_rejects_non_3d(self):
        with pytest.raises(ShapeError):
            mac_pool(np.ones((2, 2)))

    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            mac_pool(np.ones((0, 2, 2)))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (2, 3, 2), elements=st.floats(-100, 100)))
    def test_permutation_invariant_and_monotone(self, maps):
        pooled = mac_pool(maps)
        shuffled = maps.reshape(-1, 2)[::-1].reshape(2, 3, 2)
        np.testing.assert_array_equal(mac_pool(shuffled), pooled)
        bumped = maps.copy()
        bumped[1, 2, 0] += 1.0
        assert np.all(mac_pool(bumped) >= pooled)


class TestInitHead:
    def test_dr_output_of_mean_is_zero(self):
        store = random_store()
        head = init_head(store, 3)
        mean = store.features.mean(axis=0)
        np.testing.assert_allclose(mean @ head.w1 + head.b1, 0.0, atol=1e-12)

    def test_forward_equals_pca_projection(self):
        store = random_store()
        head = init_head(store, 4)
        components, mean, _ = pca(store.features, 4)
        expected = (store.features - mean) @ components
        np.testing.assert_allclose(forward(head, store.features).f, expected, atol=1e-12)

    def test_projected_variances_non_increasing(self):
        store = random_store(n=40, d=8)
        head = init_head(store, 5)
        f = embed_store(head, store).f
        variances = f.var(axis=0, ddof=1)
        assert np.all(np.diff(variances) <= 1e-12)

    def test_code_length_too_large(self):
        store = random_store(n=10, d=6)
        with pytest.raises(InitError):
            init_head(store, 7)  # > D
        with pytest.raises(InitError):
            init_head(random_store(n=4, d=8), 4)  # > N-1

    def test_init_then_binarize_is_sign_of_pca(self):
        store = random_store(n=30, d=7, seed=9)
        head = init_head(store, 4)
        codes = binarize(embed_store(head, store))
        components, mean, _ = pca(store.features, 4)
        projected = (store.features - mean) @ components
        expected = np.where(projected >= 0, 1.0, -1.0)
        np.testing.assert_array_equal(codes.signs(), expected)


class TestForward:
    def test_identity_network(self):
        head = HashHead(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        out = forward(head, [[0.5, -1.0]])
        np.testing.assert_array_equal(out.f, [[0.5, -1.0]])

    def test_constant_network(self):
        head = HashHead(np.zeros((3, 2)), np.zeros(2), np.zeros((2, 2)), np.array([3.0, 3.0]))
        out = forward(head, [[9.0, -2.0, 4.4], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(out.f, [[3.0, 3.0], [3.0, 3.0]])

    def test_matches_affine_composition_oracle(self):
        rng = Rng(17)
        head = HashHead(rng.gaussian((5, 3)), rng.gaussian(3), rng.gaussian((3, 3)), rng.gaussian(3))
        x = rng.gaussian((8, 5))
        out = forward(head, x).f
        expected = np.array(
            [((row @ head.w1) + head.b1) @ head.w2 + head.b2 for row in x]
        )
        np.testing.assert_allclose(out, expected, atol=1e-10)

    def test_affine_interpolation_property(self):
        rng = Rng(23)
        head = HashHead(rng.gaussian((4, 2)), rng.gaussian(2), rng.gaussian((2, 2)), rng.gaussian(2))
        for _ in range(10):
            x = rng.gaussian((1, 4))
            y = rng.gaussian((1, 4))
            alpha = rng.uniform()
            mixed = forward(head, alpha * x + (1 - alpha) * y).f
            combo = alpha * forward(head, x).f + (1 - alpha) * forward(head, y).f
            np.testing.assert_allclose(mixed, combo, atol=1e-9)

    def test_dimension_mismatch(self):
        head = HashHead(np.eye(3), np.zeros(3), np.eye(3), np.zeros(3))
        with pytest.raises(ShapeError):
            forward(head, np.ones((2, 4)))


class TestHeadFile:
    def test_round_trip_f32_exact(self, tmp_path):
        rng = Rng(31)
        head = HashHead(rng.gaussian((6, 4)), rng.gaussian(4), rng.gaussian((4, 4)), rng.gaussian(4))
        path = tmp_path / "m.hash"
        save_head(head, path)
        loaded = load_head(path)
        x = rng.gaussian((5, 6))
        f32 = HashHead(
            head.w1.astype(np.float32), head.b1.astype(np.float32),
            head.w2.astype(np.float32), head.b2.astype(np.float32),
        )
        np.testing.assert_array_equal(forward(loaded, x).f, forward(f32, x).f)
        # a second save reproduces the file byte for byte
        path2 = tmp_path / "m2.hash"
        save_head(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_truncated_file(self, tmp_path):
        head = HashHead(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        path = tmp_path / "m.hash"
        save_head(head, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError) as err:
            load_head(path)
        assert err.value.offset is not None

    def test_header_matches_hand_hex(self, tmp_path):
        """Pinned header: magic + little-endian D=3, L=2, then f32 w1."""
        head = HashHead(
            np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
            np.zeros(2),
            np.eye(2),
            np.zeros(2),
        )
        path = tmp_path / "m.hash"
        save_head(head, path)
        data = path.read_bytes()
        assert data[:12] == b"HASH" + struct.pack("<II", 3, 2)
        assert data[12:16] == struct.pack("<f", 1.0)
        assert len(data) == 12 + 4 * (3 * 2 + 2 + 2 * 2 + 2)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.hash"
        path.write_bytes(b"JUNK" + bytes(20))
        with pytest.raises(FormatError) as err:
            load_head(path)
        assert err.value.offset == 0


class TestHashHead:
    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            HashHead(np.eye(3), np.zeros(2), np.eye(3), np.zeros(3))

    def test_rejects_non_finite(self):
        w1 = np.eye(2)
        w1[0, 0] = np.nan
        with pytest.raises(ShapeError):
            HashHead(w1, np.zeros(2), np.eye(2), np.zeros(2))

    def test_copy_is_independent(self):
        head = HashHead(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        clone = head.copy()
        clone.w1[0, 0] = 5.0
        assert head.w1[0, 0] == 1.0
