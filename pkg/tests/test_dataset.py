import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgimvcm import (
    MultiViewDataset,
    load_dataset,
    make_gaussian_blobs,
    normalize_views,
    save_dataset,
    simulate_missing,
)
from dgimvcm.errors import DatasetParseError, DimensionError, InvariantError


def write_views(path, *mats, mask=None, labels=None):
    path.mkdir(parents=True, exist_ok=True)
    for v, M in enumerate(mats):
        np.savetxt(path / f"view_{v}.csv", np.asarray(M, dtype=float), delimiter=",")
    if mask is not None:
        np.savetxt(path / "mask.csv", np.asarray(mask), fmt="%d", delimiter=",")
    if labels is not None:
        np.savetxt(path / "labels.csv", np.asarray(labels), fmt="%d")
    return path


class TestLoad:
    def test_two_views_without_mask_default_complete(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((3, 2)), np.zeros((3, 4)))
        ds = load_dataset(d)
        assert (ds.n_samples, ds.n_views) == (3, 2)
        assert ds.view_dims == [2, 4]
        assert np.array_equal(ds.mask, np.ones((3, 2)))
        assert ds.labels is None

    def test_mismatched_rows(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((3, 2)), np.ones((4, 2)))
        with pytest.raises(DimensionError):
            load_dataset(d)

    def test_sample_with_no_views(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((2, 2)), np.ones((2, 2)), mask=[[1, 1], [0, 0]])
        with pytest.raises(InvariantError, match="sample with no views"):
            load_dataset(d)

    def test_parse_error_names_view_and_row(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((3, 2)), np.ones((3, 2)))
        lines = (d / "view_1.csv").read_text().splitlines()
        lines[2] = "1.0,abc"
        (d / "view_1.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetParseError, match=r"view 1: row 2"):
            load_dataset(d)

    def test_ragged_row(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((3, 2)))
        (d / "view_0.csv").write_text("1,2\n3\n5,6\n")
        with pytest.raises(DatasetParseError, match=r"view 0: row 1"):
            load_dataset(d)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")

    def test_non_integer_labels(self, tmp_path):
        d = write_views(tmp_path / "ds", np.ones((2, 2)))
        (d / "labels.csv").write_text("0\n1.5\n")
        with pytest.raises(DatasetParseError, match="labels"):
            load_dataset(d)

    def test_missing_rows_are_zeroed(self):
        ds = MultiViewDataset(views=[np.ones((2, 2)), np.ones((2, 1))], mask=[[1, 0], [1, 1]])
        assert np.array_equal(ds.views[1], [[0.0], [1.0]])


class TestRoundTrip:
    def test_save_load_bit_identical(self, tmp_path, rng):
        views = [rng.standard_normal((7, 3)) * 1e3, rng.random((7, 2)) * 1e-9]
        mask = np.ones((7, 2))
        mask[[1, 4], 0] = 0
        ds = MultiViewDataset(views=views, mask=mask, labels=np.arange(7) % 3)
        save_dataset(ds, tmp_path / "a")
        back = load_dataset(tmp_path / "a")
        for X, Y in zip(ds.views, back.views):
            assert np.array_equal(X, Y)
        assert np.array_equal(ds.mask, back.mask)
        assert np.array_equal(ds.labels, back.labels)
        save_dataset(back, tmp_path / "b")
        for f in ("view_0.csv", "view_1.csv", "mask.csv", "labels.csv", "meta.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_meta_document(self, tmp_path):
        ds = make_gaussian_blobs(n_samples=8, n_views=2, n_clusters=2, dim=3)
        save_dataset(ds, tmp_path / "m")
        meta = json.loads((tmp_path / "m" / "meta.json").read_text())
        assert meta == {
            "format": "dgimvcm-multiview", "version": 1, "n_samples": 8, "n_views": 2,
            "view_dims": [3, 3], "has_mask": True, "has_labels": True,
        }


class TestSimulateMissing:
    def test_zero_rate_keeps_mask(self, blobs):
        assert np.array_equal(simulate_missing(blobs, 0.0, 3).mask, np.ones((200, 3)))

    def test_half_of_hundred_seed7(self):
        full = make_gaussian_blobs(n_samples=100, n_views=3, dim=4)
        m = simulate_missing(full, 0.5, 7).mask
        assert int(np.any(m == 0, axis=1).sum()) == 50
        assert np.all(m.sum(axis=1) >= 1)

    def test_deterministic(self, blobs):
        a = simulate_missing(blobs, 0.5, 7).mask
        b = simulate_missing(blobs, 0.5, 7).mask
        assert np.array_equal(a, b)

    def test_bad_rate(self, blobs):
        for delta in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                simulate_missing(blobs, delta, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 5), st.floats(0, 0.99), st.integers(0, 2**31))
    def test_counts_and_coverage(self, n, V, delta, seed):
        full = MultiViewDataset(views=[np.ones((n, 1))] * V, mask=np.ones((n, V)))
        m = simulate_missing(full, delta, seed).mask
        assert int(np.any(m == 0, axis=1).sum()) == round(delta * n)
        assert np.all(m.sum(axis=1) >= 1)


class TestNormalize:
    def test_min_max_over_observed_rows(self):
        X = np.array([[2.0], [100.0], [4.0], [6.0]])
        ds = MultiViewDataset(views=[X, np.ones((4, 1))], mask=[[1, 1], [0, 1], [1, 1], [1, 1]])
        out = normalize_views(ds).views[0][:, 0]
        assert np.array_equal(out, [0.0, 0.0, 0.5, 1.0])

    def test_constant_column(self):
        ds = MultiViewDataset(views=[np.full((2, 1), 5.0)], mask=np.ones((2, 1)))
        assert np.array_equal(normalize_views(ds).views[0], [[0.0], [0.0]])

    def test_range(self, blobs):
        ds = normalize_views(simulate_missing(blobs, 0.5, 1))
        for X in ds.views:
            assert X.min() >= 0.0 and X.max() <= 1.0


def test_blobs_fixture_shape(blobs):
    assert (blobs.n_samples, blobs.n_views, blobs.view_dims) == (200, 3, [10, 10, 10])
    assert np.array_equal(np.bincount(blobs.labels), [50, 50, 50, 50])


def test_blob_means_are_separated():
    ds = make_gaussian_blobs(n_samples=4000, seed=2)
    for X in ds.views:
        means = np.array([X[ds.labels == c].mean(axis=0) for c in range(4)])
        d = np.sqrt(((means[:, None] - means[None]) ** 2).sum(-1))[np.triu_indices(4, 1)]
        np.testing.assert_allclose(d, 5.0, atol=0.25)
