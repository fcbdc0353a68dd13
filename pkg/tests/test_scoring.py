from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointcore.bank import MemoryBank, build_memory_bank
from pointcore.config import PipelineConfig, ScoringParams
from pointcore.errors import BankTooSmall, DimensionMismatch, InvalidParams, LengthMismatch
from pointcore.geometry import PointCloud, apply_transform
from pointcore.sampling import SamplingParams
from pointcore.scoring import (
    compute_raw_scores,
    fuse_scores,
    object_score,
    rank_normalize,
    run_inference,
    score_features,
)
from pointcore.synthetic import generate_shape, inject_defect, random_rigid_transform


def hand_bank(coords, feats):
    coords = np.asarray(coords, dtype=float)
    ref = PointCloud(coords, np.tile([0.0, 0.0, 1.0], (len(coords), 1)))
    return MemoryBank(coords, np.asarray(feats, dtype=float), np.zeros(len(coords)), ref,
                      PipelineConfig().to_dict(), "00" * 32)


def brute_scores(bc, bf, tc, tf):
    out_c, out_f = [], []
    for p, f in zip(tc, tf):
        d = [np.sqrt(np.sum((p - q) ** 2)) for q in bc]
        nn = sorted(range(len(bc)), key=lambda i: (d[i], i))[:3]
        out_c.append(sum(d[i] for i in nn) / 3.0)
        out_f.append(min(np.sqrt(np.sum((f - bf[i]) ** 2)) for i in nn))
    return np.array(out_c), np.array(out_f)


class TestRawScores:
    def test_collinear_hand_case(self):
        bank = hand_bank([[x, 0, 0] for x in range(4)], np.zeros((4, 1)))
        rc, rf = compute_raw_scores(bank, [[0.0, 0.0, 0.0]], [[5.0]])
        assert rc[0] == 1.0 and rf[0] == 5.0

    def test_self_match(self, rng):
        C = rng.normal(size=(100, 3))
        F = rng.normal(size=(100, 8))
        rc, rf = compute_raw_scores(hand_bank(C, F), C, F)
        assert np.all(rf == 0.0)
        _, dc = hand_bank(C, F).index.query(C, 3)
        assert np.all(dc[:, 0] == 0.0)

    def test_matches_oracle(self):
        for seed in range(3):
            r = np.random.default_rng(seed)
            bc, bf = r.normal(size=(500, 3)), r.normal(size=(500, 6))
            tc, tf = r.normal(size=(200, 3)), r.normal(size=(200, 6))
            rc, rf = compute_raw_scores(hand_bank(bc, bf), tc, tf)
            wc, wf = brute_scores(bc, bf, tc, tf)
            np.testing.assert_allclose(rc, wc, atol=1e-12)
            np.testing.assert_allclose(rf, wf, atol=1e-12)

    def test_feature_match_is_coordinate_restricted(self, rng):
        # a perfect feature match far away in space must not be used
        bc = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [50, 0, 0]])
        bf = np.array([[1.0], [1.0], [1.0], [7.0]])
        _, rf = compute_raw_scores(hand_bank(bc, bf), [[0.5, 0, 0]], [[7.0]])
        assert rf[0] == 6.0

    def test_one_query_per_point(self, rng):
        bank = hand_bank(rng.normal(size=(50, 3)), rng.normal(size=(50, 2)))
        compute_raw_scores(bank, rng.normal(size=(33, 3)), rng.normal(size=(33, 2)))
        assert bank.index.n_queries == 33

    def test_errors(self, rng):
        with pytest.raises(BankTooSmall):
            compute_raw_scores(hand_bank(np.zeros((2, 3)), np.zeros((2, 1))), np.zeros((1, 3)), np.zeros((1, 1)))
        bank = hand_bank(rng.normal(size=(5, 3)), np.zeros((5, 2)))
        with pytest.raises(DimensionMismatch):
            compute_raw_scores(bank, np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(LengthMismatch):
            compute_raw_scores(bank, np.zeros((2, 3)), np.zeros((1, 2)))


class TestRankNormalize:
    def test_examples(self):
        assert rank_normalize([5.0]).tolist() == [1.0]
        assert rank_normalize([10, 2, 7]).tolist() == [1.0, 1 / 3, 2 / 3]
        assert rank_normalize([4, 4]).tolist() == [0.75, 0.75]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
    def test_monotone_invariance(self, xs):
        x = np.array(xs)
        y = np.arctan(x) * 7.0 + 3.0
        a = rank_normalize(x)
        # rounding can merge distinct inputs; the map is only strictly increasing when it does not
        if len(np.unique(y)) == len(np.unique(x)):
            assert np.array_equal(a, rank_normalize(y))
        assert np.array_equal(a, rank_normalize(2.0 * x))
        assert a.min() > 0 and a.max() <= 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 200), st.integers(0, 2**32 - 1))
    def test_distinct_inputs_give_uniform_grid(self, n, seed):
        x = np.random.default_rng(seed).permutation(n) * 1.5 - 7
        out = np.sort(rank_normalize(x))
        assert np.array_equal(out, np.arange(1, n + 1) / n)

    def test_rejects_nan(self):
        with pytest.raises(InvalidParams):
            rank_normalize([1.0, np.nan])


class TestFusion:
    def test_agreement(self):
        a = np.array([0.25, 0.5, 1.0])
        assert np.array_equal(fuse_scores(a, a), a)

    def test_arithmetic(self):
        assert fuse_scores([1.0, 0.5], [0.0, 0.5]).tolist() == [0.5, 0.5]

    def test_degenerate_weights(self):
        a, b = np.array([0.3, 0.9]), np.array([0.1, 0.2])
        assert np.array_equal(fuse_scores(a, b, (1.0, 0.0)), a)
        assert np.array_equal(fuse_scores(a, b, (0.0, 1.0)), b)

    def test_monotone(self, rng):
        a, b = rng.uniform(size=50), rng.uniform(size=50)
        assert np.all(fuse_scores(a + 0.1, b) >= fuse_scores(a, b))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            fuse_scores([1.0], [1.0, 2.0])

    def test_object_score(self):
        assert object_score([0.4] * 5) == 0.4
        assert object_score([0.1, 0.9, 0.3]) == 0.9
        assert object_score([0.2, 0.4, 0.6, 0.8], "top-q", 0.5) == pytest.approx(0.7, abs=1e-15)

    def test_score_set_norm_values_on_grid(self, rng):
        bank = hand_bank(rng.normal(size=(40, 3)), rng.normal(size=(40, 3)))
        s = score_features(bank, rng.normal(size=(25, 3)), rng.normal(size=(25, 3)))
        assert set(np.round(s.norm_coord * 25, 9)) <= set(float(r) for r in range(1, 26))
        assert len(s) == 25


@pytest.fixture(scope="module")
def blob_setup():
    kind = "blended-blob"
    diam = generate_shape(kind, 1000, 0.0, 0).diameter
    rng = np.random.default_rng(3)
    protos = [generate_shape(kind, 2500, 0.001 * diam, 100 + i) for i in range(2)]
    protos[1] = apply_transform(protos[1], random_rigid_transform(rng, 20, 0.05 * diam))
    cfg = PipelineConfig(sampling=SamplingParams(s_max=2000))
    bank = build_memory_bank(protos, cfg)
    test = apply_transform(generate_shape(kind, 2500, 0.001 * diam, 200), random_rigid_transform(rng, 20, 0.05 * diam))
    bads = []
    for j in range(3):
        c, _ = inject_defect(generate_shape(kind, 2500, 0.001 * diam, 300 + j), "bump", 0.1 * diam, 0.08 * diam, j)
        bads.append(apply_transform(c, random_rigid_transform(rng, 20, 0.05 * diam)))
    return bank, protos, test, bads


class TestRunInference:
    def test_repeatable_and_thread_independent(self, blob_setup):
        bank, _, test, _ = blob_setup
        a = run_inference(bank, test)
        b = run_inference(bank, test)
        c = run_inference(bank, test, workers=8)
        assert a.equals(b) and a.equals(c)
        assert np.array_equal(a.transform.as_matrix(), c.transform.as_matrix())

    def test_single_bank_instrumentation(self, blob_setup):
        bank, _, test, _ = blob_setup
        s = run_inference(bank, test)
        assert s.stats["inference_bank_queries"] == len(test)
        assert 33 not in s.stats["inference_index_builds"]
        assert set(s.stats["inference_index_builds"]) == {3}

    def test_canonical_prototype_scores_low(self, blob_setup):
        bank, protos, _, bads = blob_setup
        own = run_inference(bank, protos[0]).object_score
        bad = [run_inference(bank, c).object_score for c in bads]
        assert own <= np.median(bad)

    def test_scoring_settings_follow_caller(self, blob_setup):
        bank, _, test, _ = blob_setup
        cfg = replace(bank.pipeline_config, scoring=ScoringParams(aggregation="top-q", top_q=0.1))
        s = run_inference(bank, test, cfg)
        assert s.object_score == object_score(s.fused, "top-q", 0.1)
