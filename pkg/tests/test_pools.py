"""Pool partition bookkeeping, oracles, batch draws, and history replay."""

import json

import numpy as np
import pytest

from malkit.datagen import Dataset
from malkit.errors import ContractError, SelectionError
from malkit.pools import (HumanOracle, IdealOracle, PoolState, annotate,
                          export_split_history, init_pools, labeled_batch,
                          replay_history, unlabeled_batch)


def tagged_dataset(n=40, dim=3, k=4, test=0):
    """Rows carry their own id in column 0 so feature draws identify samples."""
    feats = np.zeros((n, dim))
    feats[:, 0] = np.arange(n)
    feats[:, 1:] = np.linspace(-1, 1, n)[:, None]
    labels = np.arange(n) % k
    test_ids = tuple(range(n - test, n))
    return Dataset(features=feats, labels=labels, n_classes=k,
                   name="tagged", test_ids=test_ids)


class TestInitPools:

    def test_initial_label_count_is_floor_of_fraction(self):
        ds = tagged_dataset(n=50)
        pool = init_pools(ds, 0.1, seed=0)
        assert pool.n_labeled == 5
        assert pool.n_unlabeled == 45
        pool = init_pools(ds, 0.07, seed=0)
        assert pool.n_labeled == 3  # floor(3.5)

    def test_partition_and_revealed_labels(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.25, seed=1)
        pool.check_partition()
        for i in pool.labeled_ids:
            assert pool.revealed_labels[i] == ds.labels[i]
        assert set(pool.revealed_labels) == set(pool.labeled_ids)

    def test_test_rows_are_excluded_from_both_sides(self):
        ds = tagged_dataset(n=40, test=10)
        pool = init_pools(ds, 0.2, seed=2)
        assert set(pool.all_ids) == set(range(30))
        assert not set(pool.labeled_ids) & set(ds.test_ids)
        assert not set(pool.unlabeled_ids) & set(ds.test_ids)

    def test_seed_determinism(self):
        ds = tagged_dataset()
        a = init_pools(ds, 0.2, seed=7)
        b = init_pools(ds, 0.2, seed=7)
        c = init_pools(ds, 0.2, seed=8)
        assert a.labeled_ids == b.labeled_ids
        assert a.labeled_ids != c.labeled_ids

    def test_history_starts_with_the_initial_draw(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.2, seed=3)
        assert pool.split_history == ((0, pool.labeled_ids),)

    def test_fraction_contracts(self):
        ds = tagged_dataset(n=20)
        for bad in (0.0, 1.0, -0.3, 1.5):
            with pytest.raises(ContractError):
                init_pools(ds, bad, seed=0)
        with pytest.raises(ContractError):
            init_pools(ds, 0.01, seed=0)  # floors to zero labels


class TestAnnotate:

    def test_moves_ids_and_reveals_labels(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.2, seed=4)
        oracle = IdealOracle(ds.labels)
        picked = pool.unlabeled_ids[:3]
        after = annotate(pool, picked, oracle)
        after.check_partition()
        assert set(picked) <= set(after.labeled_ids)
        assert not set(picked) & set(after.unlabeled_ids)
        for i in picked:
            assert after.revealed_labels[i] == ds.labels[i]
        assert after.split_history[-1] == (1, tuple(picked))

    def test_original_pool_is_untouched(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.2, seed=5)
        before = (pool.labeled_ids, pool.unlabeled_ids,
                  dict(pool.revealed_labels))
        annotate(pool, pool.unlabeled_ids[:2], IdealOracle(ds.labels))
        assert (pool.labeled_ids, pool.unlabeled_ids,
                dict(pool.revealed_labels)) == before

    def test_rejects_duplicates_and_foreign_ids(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.2, seed=6)
        oracle = IdealOracle(ds.labels)
        u0 = pool.unlabeled_ids[0]
        with pytest.raises(SelectionError):
            annotate(pool, [u0, u0], oracle)
        with pytest.raises(SelectionError):
            annotate(pool, [pool.labeled_ids[0]], oracle)
        with pytest.raises(SelectionError):
            annotate(pool, [10_000], oracle)
        with pytest.raises(ContractError):
            annotate(pool, [], oracle)

    def test_partition_survives_randomized_operation_stream(self):
        ds = tagged_dataset(n=60)
        pool = init_pools(ds, 0.1, seed=9)
        oracle = IdealOracle(ds.labels)
        rng = np.random.default_rng(42)
        for _ in range(300):
            op = rng.integers(0, 3)
            if op == 0 and pool.n_unlabeled > 0:
                b = int(rng.integers(1, min(4, pool.n_unlabeled) + 1))
                picked = rng.choice(pool.unlabeled_ids, size=b, replace=False)
                pool = annotate(pool, picked, oracle)
            elif op == 1:
                x, y = labeled_batch(pool, int(rng.integers(1, 8)),
                                     seed=int(rng.integers(0, 1000)))
                ids = x[:, 0].astype(int)
                assert all(i in set(pool.labeled_ids) for i in ids)
                np.testing.assert_array_equal(y, ds.labels[ids])
            elif pool.n_unlabeled > 0:
                x = unlabeled_batch(pool, int(rng.integers(1, 8)),
                                    seed=int(rng.integers(0, 1000)))
                ids = x[:, 0].astype(int)
                assert not set(ids) & set(pool.labeled_ids)
            pool.check_partition()
            assert pool.n_labeled + pool.n_unlabeled == len(pool.all_ids)


class TestHumanOracle:

    def test_annotation_waits_for_every_answer(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.2, seed=10)
        oracle = HumanOracle()
        picked = list(pool.unlabeled_ids[:3])

        waiting = annotate(pool, picked, oracle)
        assert waiting is pool
        assert oracle.pending == picked

        oracle.provide(picked[0], 1)
        oracle.provide(picked[1], 2)
        still = annotate(pool, picked, oracle)
        assert still is pool  # one answer outstanding

        oracle.provide(picked[2], 0)
        done = annotate(pool, picked, oracle)
        assert done is not pool
        assert oracle.pending == []
        assert done.revealed_labels[picked[0]] == 1
        assert done.revealed_labels[picked[1]] == 2
        assert done.revealed_labels[picked[2]] == 0

    def test_human_answers_flow_into_training_batches(self):
        # whatever the human said is what training sees, right or wrong
        ds = tagged_dataset(n=10, k=3)
        pool = init_pools(ds, 0.2, seed=11)
        oracle = HumanOracle()
        target = pool.unlabeled_ids[0]
        wrong = (int(ds.labels[target]) + 1) % 3
        oracle.provide(target, wrong)
        pool = annotate(pool, [target], oracle)
        for draw_seed in range(40):
            x, y = labeled_batch(pool, 6, seed=draw_seed)
            hit = x[:, 0].astype(int) == target
            assert np.all(y[hit] == wrong)


class TestBatchDraws:

    def test_same_seed_same_batch(self):
        ds = tagged_dataset()
        pool = init_pools(ds, 0.3, seed=12)
        xa, ya = labeled_batch(pool, 5, seed=3)
        xb, yb = labeled_batch(pool, 5, seed=3)
        np.testing.assert_array_equal(xa, xb)
        np.testing.assert_array_equal(ya, yb)
        xc = unlabeled_batch(pool, 5, seed=3)
        xd = unlabeled_batch(pool, 5, seed=3)
        np.testing.assert_array_equal(xc, xd)

    def test_labeled_and_unlabeled_streams_are_independent(self):
        ds = tagged_dataset(n=80)
        pool = init_pools(ds, 0.5, seed=13)
        x_l, _ = labeled_batch(pool, 10, seed=3)
        x_u = unlabeled_batch(pool, 10, seed=3)
        assert not np.array_equal(x_l[:, 0], x_u[:, 0])

    def test_oversized_batch_falls_back_to_replacement(self):
        ds = tagged_dataset(n=20)
        pool = init_pools(ds, 0.1, seed=14)  # 2 labeled rows
        x, y = labeled_batch(pool, 7, seed=0)
        assert x.shape == (7, ds.features.shape[1])
        assert set(x[:, 0].astype(int)) <= set(pool.labeled_ids)

    def test_empty_pool_and_bad_sizes_rejected(self):
        ds = tagged_dataset(n=10)
        pool = init_pools(ds, 0.9, seed=15)
        exhausted = annotate(pool, pool.unlabeled_ids,
                             IdealOracle(ds.labels))
        assert exhausted.n_unlabeled == 0
        with pytest.raises(ContractError):
            unlabeled_batch(exhausted, 2, seed=0)
        with pytest.raises(ContractError):
            labeled_batch(pool, 0, seed=0)


class TestReplayAndExport:

    def _run_some_rounds(self, seed=16):
        ds = tagged_dataset(n=30)
        pool = init_pools(ds, 0.2, seed=seed)
        oracle = IdealOracle(ds.labels)
        rng = np.random.default_rng(seed)
        for _ in range(4):
            picked = rng.choice(pool.unlabeled_ids, size=3, replace=False)
            pool = annotate(pool, picked, oracle)
        return ds, pool

    def test_replay_reconstructs_the_exact_pool(self):
        ds, pool = self._run_some_rounds()
        rebuilt = replay_history(ds, pool.split_history, IdealOracle(ds.labels))
        assert rebuilt.labeled_ids == pool.labeled_ids
        assert rebuilt.unlabeled_ids == pool.unlabeled_ids
        assert rebuilt.revealed_labels == pool.revealed_labels
        assert rebuilt.split_history == pool.split_history

    def test_replay_rejects_empty_history(self):
        ds = tagged_dataset()
        with pytest.raises(ContractError):
            replay_history(ds, (), IdealOracle(ds.labels))

    def test_export_writes_one_json_line_per_split(self, tmp_path):
        ds, pool = self._run_some_rounds()
        path = tmp_path / "splits.jsonl"
        export_split_history(pool, path, strategy="mal", seed=16)
        lines = path.read_text().splitlines()
        assert len(lines) == len(pool.split_history)
        for line, (split, ids) in zip(lines, pool.split_history):
            row = json.loads(line)
            assert row["split"] == split
            assert tuple(row["ids"]) == ids
            assert row["strategy"] == "mal"
            assert row["seed"] == 16
            assert "timestamp" in row
