import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contextual_rnn import context as ctx
from contextual_rnn.cells import final_logits, init_params
from contextual_rnn.fixed_points import FixedPoint, assemble_line_attractor
from contextual_rnn.toy import VOCAB
from helpers import randomized


def _net(seed=0, N=6):
    return randomized("gru", N=N, D=8, seed=seed, scale=0.6, pad_id=7)


def _zero_gru():
    p = init_params("gru", 4, 8, pad_id=7)
    for v in p.arrays.values():
        v[...] = 0
    return p


def _line(N, direction=None):
    d = np.ones(N) / np.sqrt(N) if direction is None else direction
    return assemble_line_attractor([FixedPoint(t * d, 0.0, 0.0, float(t)) for t in (-1, 0, 1)])


def test_word_that_leaves_fixed_point_gives_zero_delta():
    p = _zero_gru()
    h_star = np.zeros(4)
    for w in range(8):
        assert not ctx.delta_input_jacobian(p, w, h_star).any()


def test_barcode_at_reference_is_zero():
    p = _net()
    h = np.random.default_rng(0).uniform(-0.5, 0.5, 6)
    bc = ctx.barcode(p, h, [0, 1, 3, 4], h)
    assert bc.probes == [0, 1, 3, 4]
    np.testing.assert_array_equal(bc.values, 0.0)


def test_barcode_matches_explicit_product():
    p = _net(1)
    rng = np.random.default_rng(1)
    h_star, h_ctx = rng.uniform(-0.5, 0.5, 6), rng.uniform(-0.5, 0.5, 6)
    dJ = ctx.delta_input_jacobian_at(p, h_ctx, h_star)
    bc = ctx.barcode(p, h_ctx, [4, 0], h_star)
    for i, t in enumerate([4, 0]):
        assert bc.values[i] == pytest.approx(sum(p.w[n] * dJ[n, t] for n in range(6)), rel=1e-12, abs=1e-15)


def test_rank_modifiers_threshold_and_permutation_invariance():
    p = _net(2)
    h_star = np.zeros(6)
    a = ctx.rank_modifiers(p, range(8), h_star, threshold=1e-12)
    b = ctx.rank_modifiers(p, [5, 2, 7, 0, 3, 6, 1, 4], h_star, threshold=1e-12)
    assert [r.word for r in a.ranked] == [r.word for r in b.ranked]
    assert a.norms == b.norms
    assert ctx.rank_modifiers(p, range(8), h_star, threshold=math.inf).selected == []
    with pytest.raises(ValueError):
        ctx.rank_modifiers(p, range(8), h_star, threshold=0)


def test_histogram_edges_are_logarithmic():
    p = _net(3)
    counts, edges = ctx.rank_modifiers(p, range(8), np.zeros(6), threshold=1.0).histogram(bins=5)
    ratios = edges[1:] / edges[:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    assert counts.sum() == sum(1 for r in ctx.rank_modifiers(p, range(8), np.zeros(6)).ranked if r.norm > 0)


def test_probe_selection():
    assert ctx.select_probe_words([0.3, -1, 2, 0.1], 0) == []
    assert ctx.select_probe_words([0.3, -1, 2, 0.1], 1) == [2, 1]
    with pytest.raises(ValueError):
        ctx.select_probe_words([1.0, 2.0], 2)
    toy = ctx.toy_probe_words(VOCAB)
    assert sorted(toy) == [0, 1, 3, 4] and toy[:2] == [4, 3]
    assert ctx.select_probe_words(np.arange(300.0), 100).__len__() == 200


def _deflections(seed, n=6, S=5):
    return np.random.default_rng(seed).standard_normal((n, S))


def test_subspace_orthonormal_and_orthogonal_to_direction():
    D = _deflections(0)
    d = np.random.default_rng(9).standard_normal(5)
    sub = ctx.fit_modifier_subspace(D, d, 3)
    np.testing.assert_allclose(sub.components @ sub.components.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(sub.components @ d, 0, atol=1e-8)
    assert np.all(np.diff(sub.variance_explained) <= 0)
    assert ctx.fit_modifier_subspace(D, d, 0).P == 0


def test_subspace_rejects_parallel_deflections():
    d = np.array([1.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="no variance"):
        ctx.fit_modifier_subspace(np.outer([1.0, -2.0, 0.5], d), d, 1)


@given(st.integers(0, 1000), st.permutations(range(6)))
def test_subspace_invariant_to_permutation(seed, perm):
    D = _deflections(seed)
    d = np.ones(5)
    a = ctx.fit_modifier_subspace(D, d, 2)
    b = ctx.fit_modifier_subspace(D[list(perm)], d, 2)
    np.testing.assert_allclose(np.abs(a.components @ b.components.T), np.eye(2), atol=1e-7)
    np.testing.assert_allclose(a.variance_explained, b.variance_explained, atol=1e-12)


def test_random_subspace_orthonormal():
    R = ctx.random_subspace(10, 3, seed=4)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    np.testing.assert_array_equal(R, ctx.random_subspace(10, 3, seed=4))
    assert ctx.random_subspace(10, 0).shape == (0, 10)


@given(st.floats(0.3, 20.0), st.floats(0.1, 10.0))
def test_fit_exponential_recovers_time_constant(tau, a):
    t = np.arange(31)
    a_hat, tau_hat = ctx.fit_exponential(a * np.exp(-t / tau))
    assert tau_hat == pytest.approx(tau, rel=1e-6)
    assert a_hat == pytest.approx(a, rel=1e-6)


def test_fit_exponential_edge_cases():
    assert math.isnan(ctx.fit_exponential([0.0, 0.0, 0.0])[1])
    assert math.isnan(ctx.fit_exponential([1.0, 1e-9, 0.0])[1])
    assert ctx.fit_exponential([1.0, 1.0, 1.0])[1] == math.inf


def test_fit_decay_and_persistence():
    t = np.arange(20)
    y = np.concatenate([[0.2], 3 * np.exp(-t / 2.0)])     # rise, then a clean decay
    assert ctx.fit_decay(y) == pytest.approx(2.0, rel=1e-9)
    assert ctx.persistence(y) == 1 + int(np.ceil(2.0 * np.log(10)))
    assert math.isnan(ctx.fit_decay(np.zeros(5)))
    assert ctx.persistence(np.zeros(5)) == 0


def test_pad_impulse_at_fixed_point_is_zero():
    p = _zero_gru()
    att = _line(4)
    res = ctx.impulse_response(p, 7, 5, np.zeros(4), att)
    np.testing.assert_array_equal(res.states, 0.0)
    np.testing.assert_array_equal(res.distance, 0.0)
    with pytest.raises(ValueError):
        ctx.impulse_response(p, 7, 0, np.zeros(4), att)


def test_projection_hook_idempotent():
    rng = np.random.default_rng(5)
    M = ctx.random_subspace(6, 2, seed=5)
    fixed = rng.standard_normal((4, 6))
    hook = ctx.projection_hook(M, fixed)
    H = fixed[[0, 2]] + 0.01 * rng.standard_normal((2, 6))
    once = hook(0, H)
    np.testing.assert_allclose(hook(0, once), once, atol=1e-12)
    np.testing.assert_allclose(((once - fixed[[0, 2]]) @ M.T), 0, atol=1e-12)


def test_zero_dimensional_projection_matches_baseline():
    p = _net(6)
    seqs = np.random.default_rng(6).integers(0, 8, (40, 7))
    labels = np.random.default_rng(8).integers(0, 2, 40)
    res = ctx.project_out_subspace_eval(p, seqs, labels, np.zeros((0, 6)), _line(6), n_traces=0)
    assert res.accuracy == np.mean((final_logits(p, seqs) > 0) == (labels > 0))
    np.testing.assert_array_equal(res.logits, final_logits(p, seqs))


def test_eod_pad_zero_and_h0_on_attractor():
    p = _net(7)
    seqs = np.random.default_rng(7).integers(0, 7, (30, 5))
    labels = final_logits(p, seqs) > 0
    assert ctx.eod_pad_eval(p, seqs, labels, 0) == 0.0
    sub = ctx.ModifierSubspace(ctx.random_subspace(6, 2, 1), np.array([0.6, 0.4]), np.ones(6) / np.sqrt(6))
    rep = ctx.h0_analysis(p, sub, p.h0, seqs, labels, [4, 3, 1, 0])
    np.testing.assert_array_equal(rep.projection, 0.0)
    assert rep.perturbed_accuracy == rep.baseline_accuracy
    np.testing.assert_array_equal(rep.barcode.values, 0.0)
