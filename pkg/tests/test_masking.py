import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmask.core import MASK, Config, DimMismatch, OutOfRange, SpectralProfile, TextCondition
from dynmask.masking import (
    DYNAMIC,
    EXPANSION,
    FILL,
    SEMANTIC,
    MaskPlan,
    apply_masking,
    build_training_example,
    cfs_select,
    cosine_ratio,
    dynamic_scores,
    semantic_scores,
)

from oracles import reference_cfs


def test_cosine_ratio():
    assert cosine_ratio(0) == 1.0
    assert abs(cosine_ratio(1)) < 1e-15
    assert cosine_ratio(0.5) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    with pytest.raises(OutOfRange):
        cosine_ratio(1.2)


def _profile(om, valid=None):
    om = np.asarray(om, float)
    valid = np.ones(len(om), bool) if valid is None else valid
    return SpectralProfile(np.zeros((len(om), 4)), om, valid)


def test_dynamic_scores():
    assert np.all(dynamic_scores(_profile([0.2] * 5)) == 0)
    np.testing.assert_allclose(dynamic_scores(_profile([0, 0, 1, 1])), [-1, -1, 1, 1], atol=1e-12)
    om = np.random.default_rng(0).random(9)
    assert np.argmax(dynamic_scores(_profile(om))) == np.argmax(om)


def test_semantic_scores():
    x = np.array([[1.0, 0], [0, 1], [-1, 0]])
    c = TextCondition([1.0, 0])
    np.testing.assert_allclose(semantic_scores(x, c), [1.224745, 0, -1.224745], atol=1e-6)
    assert np.all(semantic_scores(np.array([[2.0, 0], [5, 0]]), c) == 0)
    y = np.random.default_rng(1).standard_normal((7, 2))
    np.testing.assert_allclose(semantic_scores(y, TextCondition([5.0, 0])), semantic_scores(y, c), atol=1e-12)
    with pytest.raises(DimMismatch):
        semantic_scores(x, TextCondition([1.0, 0, 0]))


def test_semantic_zero_norm_row():
    x = np.array([[0.0, 0], [1, 0], [-1, 0]])
    np.testing.assert_allclose(semantic_scores(x, TextCondition([1.0, 0])), [0, 1.224745, -1.224745], atol=1e-6)


def test_cfs_quota_example():
    s_dyn = np.linspace(0.9, 0.0, 10)
    plan = cfs_select(s_dyn, s_dyn[::-1], 4, Config(lambda_sem=0.25, r_exp=0))
    assert sorted(plan.positions) == [0, 1, 2, 9]
    assert plan.provenance == (DYNAMIC, DYNAMIC, DYNAMIC, SEMANTIC)


def test_cfs_empty_budget():
    plan = cfs_select(np.arange(5.0), np.arange(5.0), 0, Config())
    assert plan.positions == () and plan.K == 0


def test_cfs_expansion_order():
    s_dyn = np.zeros(10)
    s_dyn[5] = 1.0
    s_dyn[1] = 0.5
    plan = cfs_select(s_dyn, np.zeros(10), 5, Config(lambda_sem=0.0, r_exp=2))
    assert plan.positions == (5, 6, 4, 7, 3)
    assert plan.provenance == (DYNAMIC,) + (EXPANSION,) * 4
    plan = cfs_select(s_dyn, np.zeros(10), 6, Config(lambda_sem=0.0, r_exp=1))
    assert plan.positions == (5, 6, 4, 1, 2, 0)
    assert plan.provenance == (DYNAMIC, EXPANSION, EXPANSION, DYNAMIC, EXPANSION, EXPANSION)


def test_cfs_fill_when_expansion_short():
    s_dyn = np.arange(6.0)
    valid = np.array([True, True, True, False, True, True])
    plan = cfs_select(s_dyn, np.zeros(6), 10, Config(r_exp=1), valid)
    assert len(plan) == 5 and 3 not in plan.positions


def _random_case(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 40))
    valid = rng.random(T) < 0.85
    if not valid.any():
        valid[rng.integers(T)] = True
    # rounded scores force ties
    s_dyn = np.round(rng.standard_normal(T), 1)
    s_sem = np.round(rng.standard_normal(T), 1)
    K = int(rng.integers(0, T + 5))
    lam = float(rng.choice([0.0, 0.25, 0.3, 0.5, 1.0, rng.random()]))
    r_exp = int(rng.integers(0, 4))
    return s_dyn, s_sem, K, lam, r_exp, valid


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cfs_matches_reference(seed):
    s_dyn, s_sem, K, lam, r_exp, valid = _random_case(seed)
    plan = cfs_select(s_dyn, s_sem, K, Config(lambda_sem=lam, r_exp=r_exp), valid)
    assert list(plan.positions) == reference_cfs(s_dyn, s_sem, K, lam, r_exp, valid)
    assert len(plan) == min(K, int(valid.sum()))
    assert len(set(plan.positions)) == len(plan)
    assert all(valid[i] for i in plan.positions)
    n_sem = math.floor(lam * K + 0.5)
    tags = list(plan.provenance)
    assert tags.count(DYNAMIC) <= K - n_sem and tags.count(SEMANTIC) <= n_sem


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_raised_frame_always_selected(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 30))
    om = rng.random(T) * 0.3
    star = int(rng.integers(T))
    om[star] = 0.5
    K = int(rng.integers(1, T + 1))
    plan = cfs_select(dynamic_scores(_profile(om)), rng.standard_normal(T), K, Config(lambda_sem=0, r_exp=0))
    assert star in plan.positions


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_pure_semantic_selection(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 30))
    s_sem = rng.standard_normal(T)
    K = int(rng.integers(0, T + 1))
    plan = cfs_select(rng.standard_normal(T), s_sem, K, Config(lambda_sem=1.0, r_exp=0))
    assert list(plan.positions) == list(np.argsort(-s_sem, kind="stable")[:K])


def _plan(pos):
    return MaskPlan(tuple(pos), ("dynamic",) * len(pos), len(pos))


def test_apply_masking_degenerate_ratios(rng):
    toks = rng.integers(1, 9, 20)
    ex = apply_masking(toks, _plan([1, 4, 7]), (1, 0, 0), 8, rng)
    assert ex.corrupted.tokens[[1, 4, 7]].tolist() == [MASK] * 3
    assert np.array_equal(np.delete(ex.corrupted.tokens, [1, 4, 7]), np.delete(toks, [1, 4, 7]))
    ex = apply_masking(toks, _plan([1, 4, 7]), (0, 0, 1), 8, rng)
    assert np.array_equal(ex.corrupted.tokens, toks)
    assert np.flatnonzero(ex.loss_mask).tolist() == [1, 4, 7]
    assert np.array_equal(ex.targets, toks)


def test_apply_masking_frequencies():
    rng = np.random.default_rng(99)
    n, V = 10_000, 50
    toks = np.full(n, V + 1)  # sentinel value outside 1..V marks "kept"
    ex = apply_masking(toks, _plan(range(n)), (0.8, 0.1, 0.1), V, rng)
    out = ex.corrupted.tokens
    assert abs(np.mean(out == MASK) - 0.8) < 0.02
    assert abs(np.mean((out >= 1) & (out <= V)) - 0.1) < 0.02
    assert abs(np.mean(out == V + 1) - 0.1) < 0.02


def _inputs(seed=0, T=24, D=3):
    rng = np.random.default_rng(seed)
    emb = rng.standard_normal((T, D))
    return rng.integers(1, 17, T), emb, TextCondition(rng.standard_normal(D))


def test_build_example_extremes():
    toks, emb, cond = _inputs()
    cfg = Config()
    ex = build_training_example(toks, emb, cond, cfg, np.random.default_rng(0), 16, r=0.0)
    assert ex.loss_mask.all()
    ex = build_training_example(toks, emb, cond, cfg, np.random.default_rng(0), 16, r=1.0)
    assert not ex.loss_mask.any()


def test_build_example_deterministic():
    toks, emb, cond = _inputs()
    a = build_training_example(toks, emb, cond, Config(), np.random.default_rng(5), 16)
    b = build_training_example(toks, emb, cond, Config(), np.random.default_rng(5), 16)
    assert np.array_equal(a.corrupted.tokens, b.corrupted.tokens)
    assert np.array_equal(a.loss_mask, b.loss_mask)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.integers(0, 1000), st.sampled_from(["cfs", "uniform"]))
def test_budget_conservation(r, seed, strategy):
    toks, emb, cond = _inputs(seed, T=17)
    valid = np.ones(17, bool)
    valid[seed % 17] = False
    ex = build_training_example(toks, emb, cond, Config(r_exp=2), np.random.default_rng(seed), 16,
                                valid=valid, r=r, strategy=strategy)
    n = int(valid.sum())
    assert ex.loss_mask.sum() == min(math.ceil(math.cos(math.pi * r / 2) * n - 1e-9), n)
    assert not ex.loss_mask[~valid].any()
    assert np.array_equal(ex.targets, toks)
