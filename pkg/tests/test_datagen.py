"""Synthetic data generation, class thinning, and the two file formats."""

import numpy as np
import pytest

from malkit.datagen import (Dataset, apply_imbalance, generate_blobs,
                            load_csv, load_idx, save_csv, save_idx,
                            split_train_test)
from malkit.errors import ConfigError, ContractError, ParseError


class TestGenerateBlobs:

    def test_shapes_counts_and_class_balance(self):
        ds = generate_blobs(n_classes=4, per_class=25, dim=6, spread=0.1,
                            seed=0, test_per_class=5)
        assert ds.features.shape == (4 * 25 + 4 * 5, 6)
        assert ds.n_classes == 4
        assert len(ds.train_ids) == 100
        assert len(ds.test_ids) == 20
        train = np.array(ds.train_ids)
        for k in range(4):
            assert np.sum(ds.labels[train] == k) == 25
        test_feats, test_labels = ds.test_arrays()
        for k in range(4):
            assert np.sum(test_labels == k) == 5

    def test_clusters_sit_near_unit_norm_means(self):
        ds = generate_blobs(n_classes=5, per_class=40, dim=8, spread=0.05,
                            seed=1)
        for k in range(5):
            centroid = ds.features[ds.labels == k].mean(axis=0)
            assert abs(np.linalg.norm(centroid) - 1.0) < 0.1

    def test_small_spread_separates_classes_for_nearest_mean(self):
        ds = generate_blobs(n_classes=6, per_class=30, dim=10, spread=0.08,
                            seed=2)
        means = np.stack([ds.features[ds.labels == k].mean(axis=0)
                          for k in range(6)])
        d = ds.features[:, None, :] - means[None, :, :]
        nearest = np.argmin((d ** 2).sum(axis=2), axis=1)
        assert np.mean(nearest == ds.labels) > 0.99

    def test_seed_determinism(self):
        a = generate_blobs(3, 10, 4, 0.2, seed=7)
        b = generate_blobs(3, 10, 4, 0.2, seed=7)
        c = generate_blobs(3, 10, 4, 0.2, seed=8)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert not np.array_equal(a.features, c.features)

    def test_contracts(self):
        with pytest.raises(ContractError):
            generate_blobs(1, 10, 4, 0.1, seed=0)
        with pytest.raises(ContractError):
            generate_blobs(3, 1, 4, 0.1, seed=0)
        with pytest.raises(ContractError):
            generate_blobs(3, 10, 4, -0.1, seed=0)


class TestApplyImbalance:

    def _balanced(self, k=10, per_class=500, test_per_class=10):
        return generate_blobs(k, per_class, dim=4, spread=0.1, seed=3,
                              test_per_class=test_per_class)

    def test_keep_counts_follow_floor_of_ratio(self):
        ds = self._balanced(k=2, per_class=500, test_per_class=0)
        thin = apply_imbalance(ds, ratios=(0.1, 1.0), min_keep=5, seed=0)
        counts = sorted(np.bincount(thin.labels[list(thin.train_ids)],
                                    minlength=2))
        assert counts == [50, 500]  # floor(500 * 0.1) and all of the other

    def test_min_keep_floors_tiny_classes(self):
        ds = self._balanced(k=2, per_class=500, test_per_class=0)
        thin = apply_imbalance(ds, ratios=(0.01, 1.0), min_keep=5, seed=0)
        counts = sorted(np.bincount(thin.labels[list(thin.train_ids)],
                                    minlength=2))
        assert counts == [5, 500]  # floor gives 5, min_keep also 5

    def test_five_group_log_ladder_charges_each_group_once(self):
        ratios = (0.01, 0.0316227766016838, 0.1, 0.316227766016838, 1.0)
        ds = self._balanced(k=10, per_class=100, test_per_class=0)
        thin = apply_imbalance(ds, ratios=ratios, min_keep=5, seed=1)
        counts = np.bincount(thin.labels[list(thin.train_ids)], minlength=10)
        # per ratio: max(floor(100 r), 5) = 5, 5, 10, 31, 100, twice each
        expected = sorted([5, 5, 5, 5, 10, 10, 31, 31, 100, 100])
        assert sorted(counts) == sorted(
            [max(int(100 * r), 5) for r in ratios for _ in range(2)])
        assert sorted(counts) == expected

    def test_test_rows_are_untouched(self):
        ds = self._balanced(k=4, per_class=50, test_per_class=8)
        thin = apply_imbalance(ds, ratios=(0.1, 1.0), min_keep=2, seed=2)
        old_feats, old_labels = ds.test_arrays()
        new_feats, new_labels = thin.test_arrays()
        np.testing.assert_array_equal(old_feats, new_feats)
        np.testing.assert_array_equal(old_labels, new_labels)

    def test_group_assignment_varies_with_seed(self):
        ds = self._balanced(k=4, per_class=100, test_per_class=0)
        a = apply_imbalance(ds, ratios=(0.1, 1.0), min_keep=2, seed=0)
        b = apply_imbalance(ds, ratios=(0.1, 1.0), min_keep=2, seed=0)
        assert np.array_equal(a.features, b.features)
        # which classes land in the thinned group should move with the seed
        thinned_sets = set()
        for s in range(8):
            thin = apply_imbalance(ds, ratios=(0.1, 1.0), min_keep=2, seed=s)
            counts = np.bincount(thin.labels[list(thin.train_ids)],
                                 minlength=4)
            thinned_sets.add(tuple(sorted(np.where(counts == 10)[0].tolist())))
        assert len(thinned_sets) > 1

    def test_uneven_group_split_rejected(self):
        ds = self._balanced(k=4, per_class=20, test_per_class=0)
        with pytest.raises(ConfigError):
            apply_imbalance(ds, ratios=(0.1, 0.5, 1.0), min_keep=2, seed=0)
        with pytest.raises(ConfigError):
            apply_imbalance(ds, ratios=(0.0, 1.0), min_keep=2, seed=0)
        with pytest.raises(ConfigError):
            apply_imbalance(ds, ratios=(0.5, 1.0), min_keep=0, seed=0)


class TestCsvFormat:

    def test_round_trip_is_exact(self, tmp_path):
        ds = generate_blobs(3, 12, 5, 0.3, seed=4, test_per_class=2)
        path = tmp_path / "data.csv"
        save_csv(ds, path)
        back = load_csv(path, n_classes=3, test_ids=ds.test_ids)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.test_ids == ds.test_ids
        assert back.n_classes == 3

    def test_header_is_feature_columns_then_label(self, tmp_path):
        ds = generate_blobs(2, 3, 2, 0.1, seed=5)
        path = tmp_path / "data.csv"
        save_csv(ds, path)
        assert path.read_text().splitlines()[0] == "f0,f1,label"

    def test_bad_header_rejected_at_offset_zero(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,x1,label\n1.0,2.0,0\n")
        with pytest.raises(ParseError) as err:
            load_csv(path)
        assert err.value.offset == 0

    def test_field_count_error_reports_line_offset(self, tmp_path):
        path = tmp_path / "bad.csv"
        good = "f0,f1,label\n1.0,2.0,0\n"
        path.write_text(good + "3.0,1\n")
        with pytest.raises(ParseError) as err:
            load_csv(path)
        assert "line 3" in str(err.value)
        assert err.value.offset == len(good)

    def test_unparsable_float_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1.0,0\nnope,1\n")
        with pytest.raises(ParseError) as err:
            load_csv(path)
        assert "line 3" in str(err.value)

    def test_label_beyond_declared_classes_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1.0,5\n")
        with pytest.raises(ParseError):
            load_csv(path, n_classes=3)

    def test_empty_data_section_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("f0,f1,label\n")
        with pytest.raises(ParseError):
            load_csv(path)

    def test_class_count_inferred_when_not_given(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("f0,label\n0.5,0\n0.25,4\n")
        assert load_csv(path).n_classes == 5


class TestIdxFormat:

    def test_round_trip_and_unit_scaling(self, tmp_path):
        rng = np.random.default_rng(48)
        images = rng.integers(0, 256, size=(10, 9), dtype=np.uint8)
        labels = rng.integers(0, 4, size=10, dtype=np.uint8)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        save_idx(images, labels, ip, lp, rows=3, cols=3)
        ds = load_idx(ip, lp, test_ids=(8, 9))
        np.testing.assert_allclose(ds.features, images.astype(float) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)
        assert ds.features.dtype == np.float64
        assert ds.test_ids == (8, 9)

    def test_truncated_payload_reports_parse_error(self, tmp_path):
        rng = np.random.default_rng(49)
        images = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
        labels = np.zeros(4, dtype=np.uint8)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        save_idx(images, labels, ip, lp, rows=2, cols=2)
        ip.write_bytes(ip.read_bytes()[:-3])
        with pytest.raises(ParseError) as err:
            load_idx(ip, lp)
        assert "truncated" in str(err.value)

    def test_bad_magic_and_count_mismatch(self, tmp_path):
        rng = np.random.default_rng(50)
        images = rng.integers(0, 256, size=(4, 4), dtype=np.uint8)
        labels = np.zeros(4, dtype=np.uint8)
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        save_idx(images, labels, ip, lp, rows=2, cols=2)

        corrupted = bytearray(ip.read_bytes())
        corrupted[3] = 0xFF
        ip2 = tmp_path / "bad_img.idx"
        ip2.write_bytes(bytes(corrupted))
        with pytest.raises(ParseError):
            load_idx(ip2, lp)

        short_lab = tmp_path / "short_lab.idx"
        save_idx(images, labels[:4], ip, lp, rows=2, cols=2)
        save_idx(images[:3], labels[:3], tmp_path / "i3.idx", short_lab,
                 rows=2, cols=2)
        with pytest.raises(ParseError):
            load_idx(ip, short_lab)


class TestTrainTestSplit:

    def test_marks_requested_fraction_once(self):
        ds = Dataset(features=np.zeros((40, 2)), labels=np.zeros(40, dtype=int),
                     n_classes=2, name="t", test_ids=())
        split = split_train_test(ds, 0.25, seed=0)
        assert len(split.test_ids) == 10
        assert len(split.train_ids) == 30
        again = split_train_test(split, 0.5, seed=1)
        assert again.test_ids == split.test_ids  # already split: no-op

    def test_fraction_bounds(self):
        ds = Dataset(features=np.zeros((10, 2)), labels=np.zeros(10, dtype=int),
                     n_classes=2, name="t", test_ids=())
        for bad in (0.0, 1.0):
            with pytest.raises(ConfigError):
                split_train_test(ds, bad, seed=0)
