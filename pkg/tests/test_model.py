import math

import numpy as np
import pytest

from conftest import central_diff, rel_err
from dgimvcm import MultiViewDataset, TrainConfig
from dgimvcm.errors import ContractError, DimensionError
from dgimvcm.graph import fuse_global_graph, normalize_adjacency, rbf_similarity
from dgimvcm.model import (
    LayerParams,
    ViewParameters,
    attention_logits,
    build_view_graph,
    embed,
    encoder_layer,
    encoder_layer_backward,
    encoder_layer_forward,
    flatten,
    forward,
    init_params,
    load_params,
    masked_softmax,
    rbf_backward,
    save_params,
    unflatten,
)

SIGMA = 0.2689414213699951  # 1 / (1 + e)


def zero_layer(h):
    z = np.zeros((h, h))
    return LayerParams(z, z, z, z, np.zeros(h))


def random_layer(rng, h, scale=0.5):
    return LayerParams(*(scale * rng.standard_normal((h, h)) for _ in range(4)), scale * rng.standard_normal(h))


class TestEmbed:
    def test_identity_composition(self, rng):
        X = rng.standard_normal((4, 3))
        vp = ViewParameters(np.eye(3), np.zeros(3))
        assert np.array_equal(embed(X, np.eye(4), vp), X)

    def test_missing_row_is_imputed_from_neighbor(self):
        X = np.array([[0.0, 0.0], [1.0, 2.0]])  # sample 0 missing
        A = np.array([[0.0, 0.5], [0.0, 1.0]])
        vp = ViewParameters(np.array([[1.0], [1.0]]), np.array([0.25]))
        Z = embed(X, A, vp)
        assert Z[0, 0] == pytest.approx(0.5 * 3.0 + 0.25)

    def test_zero_row_gives_bias(self, rng):
        X = rng.standard_normal((3, 2))
        A = np.eye(3)
        A[1] = 0
        vp = ViewParameters(rng.standard_normal((2, 4)), rng.standard_normal(4))
        assert np.array_equal(embed(X, A, vp)[1], vp.b_e)

    def test_shape_mismatch(self):
        vp = ViewParameters(np.ones((2, 2)), np.zeros(2))
        with pytest.raises(DimensionError):
            embed(np.ones((3, 3)), np.eye(3), vp)
        with pytest.raises(DimensionError):
            embed(np.ones((3, 2)), np.eye(4), vp)


class TestViewGraph:
    def test_identical_rows_are_mutual_neighbors(self, rng):
        Z = rng.standard_normal((5, 2))
        Z[1] = Z[0]
        S, A = build_view_graph(Z, 2.0, 2, np.eye(5), np.ones(5))
        assert S[0, 1] == 1.0
        assert A[0, 1] == 1 and A[1, 0] == 1

    def test_row_counts_equal_k(self, rng):
        Z = rng.standard_normal((12, 3))
        G = fuse_global_graph([rng.standard_normal((12, 2))], np.ones((12, 1)), 2.0, 4)
        mask = (rng.random(12) > 0.3).astype(float)
        _, A = build_view_graph(Z, 2.0, 4, G, mask)
        assert np.all(A.sum(axis=1) == 4)
        assert np.array_equal(A[mask == 0], G[mask == 0])


class TestAttention:
    def test_identity_projections_give_gram(self, rng):
        H = rng.standard_normal((4, 3))
        np.testing.assert_allclose(attention_logits(H, np.eye(3), np.eye(3)), H @ H.T)

    def test_one_hot_rows(self):
        H = np.eye(3)[[2, 0, 1]]
        assert np.array_equal(attention_logits(H, np.eye(3), np.eye(3)), np.eye(3))

    def test_softmax_examples(self):
        A = np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        E = np.array([[5.0, 3.0, 9.0], [0.0, 0.0, 7.0], [1.0, 2.0, 0.0]])
        P = masked_softmax(E, A)
        assert np.array_equal(P[0], [0.0, 1.0, 0.0])
        assert np.array_equal(P[1], [0.5, 0.5, 0.0])
        assert P[2, 0] == pytest.approx(SIGMA, rel=1e-14)
        assert P[2, 1] == pytest.approx(1 - SIGMA, rel=1e-14)

    def test_softmax_empty_row(self):
        with pytest.raises(ContractError):
            masked_softmax(np.zeros((2, 2)), np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_softmax_rows_and_support(self, rng):
        for _ in range(50):
            n = rng.integers(1, 9)
            A = (rng.random((n, n)) > 0.6).astype(float)
            A[np.arange(n), rng.integers(0, n, n)] = 1
            P = masked_softmax(50 * rng.standard_normal((n, n)), A)
            np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(P[A == 0] == 0)
            assert np.all(np.isfinite(P))

    def test_locality(self, rng):
        n, h = 6, 3
        A = np.eye(n)
        A[0, 1] = A[0, 2] = 1
        lp = random_layer(rng, h)
        H = rng.standard_normal((n, h))
        att = masked_softmax(attention_logits(H, lp.W_Q, lp.W_K), A)
        H2 = H.copy()
        H2[4] += 10.0
        att2 = masked_softmax(attention_logits(H2, lp.W_Q, lp.W_K), A)
        assert np.array_equal(att[0], att2[0])


class TestEncoder:
    def test_zero_weights_identity(self, rng):
        H = rng.standard_normal((5, 3))
        A = np.ones((5, 5))
        assert np.array_equal(encoder_layer(H, A, zero_layer(3)), H)

    def test_hand_computed_scalar_layer(self):
        H0 = np.array([[1.0], [2.0]])
        lp = LayerParams(np.array([[1.0]]), np.array([[1.0]]), np.array([[0.5]]), np.array([[2.0]]),
                         np.array([-0.25]))
        H = encoder_layer(H0, np.ones((2, 2)), lp)
        # logits row 0: (1, 2); row 1: (2, 4)
        s1 = 1 / (1 + math.e ** 2)
        expected = [1.0 + (SIGMA + 2 * (1 - SIGMA)) - 0.25, 2.0 + (s1 + 2 * (1 - s1)) - 0.25]
        np.testing.assert_allclose(H[:, 0], expected, rtol=1e-14)

    def test_relu_clips(self):
        H0 = np.array([[1.0], [2.0]])
        lp = LayerParams(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)),
                         np.array([-10.0]))
        assert np.array_equal(encoder_layer(H0, np.ones((2, 2)), lp), H0)

    def test_layer_backward_matches_finite_differences(self, rng):
        n, h = 6, 3
        A = (rng.random((n, n)) > 0.5).astype(float)
        np.fill_diagonal(A, 1)
        H0 = rng.standard_normal((n, h))
        lp = random_layer(rng, h)
        lp.b = lp.b + 0.3  # keep pre-activations away from the kink
        G = rng.standard_normal((n, h))

        def f():
            return float(np.sum(G * encoder_layer(H0, A, lp)))

        _, cache = encoder_layer_forward(H0, A, lp)
        dH0, g = encoder_layer_backward(G, cache, lp)
        assert rel_err(dH0, central_diff(f, H0)) < 1e-6
        for key in ("W_Q", "W_K", "W_V", "W", "b"):
            assert rel_err(getattr(g, key), central_diff(f, getattr(lp, key))) < 1e-6, key


def test_rbf_backward_matches_finite_differences(rng):
    X = rng.standard_normal((7, 3))
    G = rng.standard_normal((7, 7))

    def f():
        return float(np.sum(G * rbf_similarity(X, 2.0)))

    dX = rbf_backward(X, rbf_similarity(X, 2.0), G, 2.0)
    assert rel_err(dX, central_diff(f, X)) < 1e-7


class TestForward:
    def _setup(self, small_incomplete, cfg):
        A = fuse_global_graph(small_incomplete.views, small_incomplete.mask, cfg.rbf_scale, cfg.n_neighbors)
        params = init_params(small_incomplete.view_dims, cfg.widths(2), cfg.n_gat_layers, 1)
        return A, params

    def test_deterministic_and_shapes(self, small_incomplete):
        cfg = TrainConfig(n_clusters=3, n_neighbors=4, n_mask_edges=3, hidden_dims=(4, 6))
        A, params = self._setup(small_incomplete, cfg)
        c1 = forward(small_incomplete, A, params, cfg)
        c2 = forward(small_incomplete, A, params, cfg)
        for a, b in zip(c1.views, c2.views):
            for name in ("Z", "S_hat", "A_view", "H"):
                assert np.array_equal(getattr(a, name), getattr(b, name))
        assert [H.shape for H in c1.H] == [(12, 4), (12, 6)]
        assert all(np.all(np.isfinite(H)) for H in c1.H)

    def test_single_view_zero_encoder(self, rng):
        X = rng.standard_normal((8, 3))
        ds = MultiViewDataset(views=[X], mask=np.ones((8, 1)))
        cfg = TrainConfig(n_clusters=2, n_neighbors=3, n_mask_edges=3, hidden_dims=(2,))
        A = fuse_global_graph(ds.views, ds.mask, 2.0, 3)
        vp = init_params([3], (2,), 2, 0)[0]
        vp.layers = [zero_layer(2), zero_layer(2)]
        cache = forward(ds, A, [vp], cfg)
        direct = normalize_adjacency(A) @ X @ vp.W_e + vp.b_e
        np.testing.assert_allclose(cache.H[0], direct, rtol=1e-13)
        np.testing.assert_array_equal(cache.H[0], cache.Z[0])

    def test_no_embed_variant_uses_raw_features(self, small_incomplete):
        cfg = TrainConfig(n_clusters=3, n_neighbors=4, n_mask_edges=3, hidden_dims=(4,), disable=("embed",))
        A, params = self._setup(small_incomplete, cfg)
        cache = forward(small_incomplete, A, params, cfg)
        for X, vp, vc in zip(small_incomplete.views, params, cache.views):
            np.testing.assert_allclose(vc.Z, X @ vp.W_e + vp.b_e)
            assert vc.S_hat is None


def test_params_round_trip(tmp_path):
    params = init_params([3, 5], (4, 2), 2, seed=9)
    save_params(params, tmp_path / "p")
    back = load_params(tmp_path / "p")
    a, b = flatten(params), flatten(back)
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k], b[k])
    again = unflatten(a, 2, 2)
    assert np.array_equal(again[1].layers[1].b, params[1].layers[1].b)


def test_init_is_seeded():
    a = flatten(init_params([3], (4,), 1, seed=2))
    b = flatten(init_params([3], (4,), 1, seed=2))
    c = flatten(init_params([3], (4,), 1, seed=3))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["view0.W_e"], c["view0.W_e"])
