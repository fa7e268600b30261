"""Selection rules against hand-worked cases and slow enumeration oracles."""

import csv

import numpy as np
import pytest

from malkit.acquisition import (AcquisitionScore, dump_scores,
                                entropy_of_rows, rank_sums, score_unlabeled,
                                select_by_dprob, select_by_entropy,
                                select_kcenter, select_mal,
                                select_mal_two_stage, select_max_entropy,
                                select_random)
from malkit.errors import ContractError, SelectionError
from malkit.networks import init_classifier, init_discriminator, init_encoder
from malkit.pools import init_pools

from oracles import (best_subset_total, kcenter_by_loops,
                     mal_selection_by_counting, ranksum_by_counting)
from test_pools import tagged_dataset


def scores_from(pairs):
    return [AcquisitionScore(id=i, d_prob=d, entropy=h)
            for i, (d, h) in enumerate(pairs)]


def random_scores(rng, n, grid=False):
    if grid:  # coarse values force plenty of rank ties
        d = rng.integers(0, 5, size=n) / 4.0
        h = rng.integers(0, 5, size=n) / 4.0
    else:
        d = rng.uniform(0.001, 0.999, size=n)
        h = rng.uniform(0.0, 2.0, size=n)
    return [AcquisitionScore(id=i, d_prob=float(d[i]), entropy=float(h[i]))
            for i in range(n)]


class TestRankSumSelection:

    def test_hand_worked_four_candidates(self):
        # (d_prob, entropy): rank_D = 0,3,1,2 and rank_H = 1,0,3,2, so the
        # sums are 1,3,4,4 and the budget-2 pick is ids 0 and 1
        scores = scores_from([(0.1, 1.2), (0.9, 1.3), (0.2, 0.1), (0.5, 0.9)])
        assert rank_sums(scores) == {0: 1, 1: 3, 2: 4, 3: 4}
        assert select_mal(scores, 2) == [0, 1]

    def test_sum_tie_breaks_by_lower_d_prob(self):
        # ids 2 and 3 tie at rank sum 4; id 2 wins on smaller d_prob
        scores = scores_from([(0.1, 1.2), (0.9, 1.3), (0.2, 0.1), (0.5, 0.9)])
        assert select_mal(scores, 3) == [0, 1, 2]

    def test_rank_ties_break_by_lower_id(self):
        scores = [AcquisitionScore(id=5, d_prob=0.4, entropy=1.0),
                  AcquisitionScore(id=3, d_prob=0.4, entropy=1.0),
                  AcquisitionScore(id=9, d_prob=0.8, entropy=0.2)]
        sums = rank_sums(scores)
        assert sums[3] < sums[5]  # same scores, lower id ranks first twice
        assert select_mal(scores, 2) == [3, 5]

    def test_matches_counting_oracle_on_random_tables(self):
        rng = np.random.default_rng(42)
        for trial in range(300):
            n = int(rng.integers(2, 13))
            b = int(rng.integers(1, min(4, n) + 1))
            scores = random_scores(rng, n, grid=bool(trial % 2))
            assert rank_sums(scores) == ranksum_by_counting(scores)
            assert select_mal(scores, b) == mal_selection_by_counting(scores, b)

    def test_selection_total_is_subset_optimal(self):
        rng = np.random.default_rng(43)
        for _ in range(60):
            n = int(rng.integers(3, 11))
            b = int(rng.integers(1, min(4, n) + 1))
            scores = random_scores(rng, n)
            sums = rank_sums(scores)
            picked = select_mal(scores, b)
            assert sum(sums[i] for i in picked) == best_subset_total(scores, b)

    def test_budget_bounds(self):
        scores = scores_from([(0.1, 0.5), (0.4, 0.2)])
        with pytest.raises(SelectionError):
            select_mal(scores, 0)
        with pytest.raises(SelectionError):
            select_mal(scores, 3)


class TestTwoStageVariant:

    def test_diverges_from_rank_sum_when_entropy_dominates_late(self):
        scores = scores_from([(0.05, 0.0), (0.1, 0.1), (0.2, 5.0),
                              (0.9, 4.0), (0.95, 4.5)])
        assert select_mal(scores, 2) == [2, 0]
        # stage one keeps the 4 lowest d_prob (ids 0-3); the entropy pass
        # then prefers id 3 over the low-entropy ids 0 and 1
        assert select_mal_two_stage(scores, 2) == [2, 3]

    def test_stage_one_pool_is_capped_at_double_budget(self):
        rng = np.random.default_rng(44)
        for _ in range(100):
            n = int(rng.integers(2, 12))
            b = int(rng.integers(1, min(4, n) + 1))
            scores = random_scores(rng, n)
            picked = select_mal_two_stage(scores, b)
            keep = sorted(scores, key=lambda s: (s.d_prob, s.id))[:2 * b]
            expected = [s.id for s in
                        sorted(keep, key=lambda s: (-s.entropy, s.id))[:b]]
            assert picked == expected


class TestSingleCriterionSelectors:

    def test_entropy_only_takes_the_most_uncertain(self):
        scores = scores_from([(0.5, 0.3), (0.5, 1.9), (0.5, 1.0)])
        assert select_by_entropy(scores, 2) == [1, 2]

    def test_dprob_only_takes_the_least_labeled_looking(self):
        scores = scores_from([(0.7, 1.0), (0.2, 1.0), (0.4, 1.0)])
        assert select_by_dprob(scores, 2) == [1, 2]

    def test_agree_with_argsort_oracle(self):
        rng = np.random.default_rng(45)
        for _ in range(100):
            n = int(rng.integers(2, 10))
            b = int(rng.integers(1, n + 1))
            scores = random_scores(rng, n, grid=True)
            by_h = sorted(scores, key=lambda s: (-s.entropy, s.id))
            by_d = sorted(scores, key=lambda s: (s.d_prob, s.id))
            assert select_by_entropy(scores, b) == [s.id for s in by_h[:b]]
            assert select_by_dprob(scores, b) == [s.id for s in by_d[:b]]


class TestRandomSelector:

    def test_deterministic_in_seed_and_inside_the_pool(self):
        ds = tagged_dataset(n=30)
        pool = init_pools(ds, 0.2, seed=0)
        a = select_random(pool, 5, seed=11)
        b = select_random(pool, 5, seed=11)
        c = select_random(pool, 5, seed=12)
        assert a == b
        assert a != c
        assert len(set(a)) == 5
        assert set(a) <= set(pool.unlabeled_ids)

    def test_budget_cannot_exceed_the_pool(self):
        ds = tagged_dataset(n=10)
        pool = init_pools(ds, 0.5, seed=0)
        with pytest.raises(SelectionError):
            select_random(pool, pool.n_unlabeled + 1, seed=0)


class TestMaxEntropySelector:

    def test_hand_case_with_remapped_ids(self):
        probs = np.array([[0.98, 0.01, 0.01],   # near certain
                          [1 / 3, 1 / 3, 1 / 3],  # maximal entropy
                          [0.5, 0.4, 0.1]])
        assert select_max_entropy(probs, 2, ids=[7, 4, 9]) == [4, 9]

    def test_requires_one_id_per_row(self):
        with pytest.raises(ContractError):
            select_max_entropy(np.full((3, 2), 0.5), 1, ids=[1, 2])

    def test_entropy_helper_matches_loop_oracle(self):
        from oracles import entropy_by_rows
        rng = np.random.default_rng(46)
        z = rng.uniform(0.01, 1, size=(20, 5))
        p = z / z.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(entropy_of_rows(p), entropy_by_rows(p),
                                   rtol=1e-12)


class TestKCenterSelector:

    def test_hand_worked_line_of_points(self):
        # points on a line at 0 (labeled), 4, 5, 10: the farthest-first walk
        # picks 10 first, then 5 (distance 5 to {0, 10} beats 4's distance 4)
        feats = np.array([[0.0], [4.0], [5.0], [10.0]])
        assert select_kcenter(feats, [0], [1, 2, 3], 1) == [3]
        assert select_kcenter(feats, [0], [1, 2, 3], 2) == [3, 2]

    def test_equidistant_tie_goes_to_the_lower_id(self):
        feats = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        assert select_kcenter(feats, [0], [1, 2, 3], 1) == [1]

    def test_empty_labeled_set_seeds_with_the_lowest_id(self):
        feats = np.array([[0.0], [7.0], [3.0]])
        picked = select_kcenter(feats, [], [2, 1, 0], 2)
        assert picked[0] == 0
        assert picked == [0, 1]  # 7 is farther from 0 than 3

    def test_matches_loop_oracle_on_random_configurations(self):
        rng = np.random.default_rng(47)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            feats = rng.normal(size=(n, int(rng.integers(1, 4))))
            ids = list(rng.permutation(n))
            n_lab = int(rng.integers(0, n - 1))
            labeled, unlabeled = ids[:n_lab], ids[n_lab:]
            b = int(rng.integers(1, len(unlabeled) + 1))
            assert select_kcenter(feats, labeled, unlabeled, b) == \
                kcenter_by_loops(feats, labeled, unlabeled, b)


class TestScoringAndDump:

    def _scored_pool(self):
        ds = tagged_dataset(n=24, dim=5, k=3)
        pool = init_pools(ds, 0.25, seed=1)
        enc = init_encoder(0, input_dim=5, hidden=(8,), latent_dim=4)
        clf = init_classifier(1, 4, 3)
        disc = init_discriminator(2, latent_dim=4)
        return pool, score_unlabeled(enc, clf, disc, pool)

    def test_scores_align_with_unlabeled_ids_and_respect_bounds(self):
        pool, scores = self._scored_pool()
        assert [s.id for s in scores] == list(pool.unlabeled_ids)
        for s in scores:
            assert 0.0 < s.d_prob < 1.0
            assert -1e-9 <= s.entropy <= np.log(3) + 1e-9

    def test_empty_pool_rejected(self):
        ds = tagged_dataset(n=10)
        pool = init_pools(ds, 0.9, seed=0)
        from malkit.pools import IdealOracle, annotate
        pool = annotate(pool, pool.unlabeled_ids, IdealOracle(ds.labels))
        enc = init_encoder(0, input_dim=3, hidden=(4,), latent_dim=3)
        clf = init_classifier(1, 3, 4)
        disc = init_discriminator(2, latent_dim=3)
        with pytest.raises(ContractError):
            score_unlabeled(enc, clf, disc, pool)

    def test_dump_round_trips_exact_values(self, tmp_path):
        _pool, scores = self._scored_pool()
        path = tmp_path / "scores.csv"
        dump_scores(scores, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["id", "d_prob", "entropy"]
        assert len(rows) - 1 == len(scores)
        for row, s in zip(rows[1:], scores):
            assert int(row[0]) == s.id
            assert float(row[1]) == s.d_prob
            assert float(row[2]) == s.entropy
