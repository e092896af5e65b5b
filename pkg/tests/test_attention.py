"""Tests for the sparse attention head: masked softmax over edge lists,
dense equivalence under an injected all-ones mask, the straight-through
edge gradients, and the operation counters."""

import numpy as np
import pytest

from oracles import dense_masked_attention, mask_to_dense, presence_probability
from sbmformer.attention import (AttentionHead, density_loss, head_backward,
                                 head_forward, infer_sbm, init_head,
                                 masked_softmax_edges)
from sbmformer.errors import CountersDisabledError, DomainError, ShapeError
from sbmformer.numerics import finite_diff_check
from sbmformer.sampler import EdgeMask


def _head(d=12, d_h=8, k=3, seed=0, **kw):
    return init_head(d, d_h, k, np.random.default_rng(seed), **kw)


def _rand_mask(n, rng, fill=0.5):
    dense = rng.random((n, n)) < fill
    dense[0, :2] = True  # keep at least one multi-edge row
    return EdgeMask.from_pairs(n, n, np.argwhere(dense))


def test_masked_softmax_edges_matches_dense_rows():
    rng = np.random.default_rng(0)
    n = 7
    mask = _rand_mask(n, rng)
    scores = rng.normal(size=mask.m) * 3
    w = masked_softmax_edges(scores, mask.indptr)
    dense = np.zeros((n, n))
    dense[mask.rows, mask.cols] = scores
    for i in range(n):
        lo, hi = mask.indptr[i], mask.indptr[i + 1]
        if lo == hi:
            continue
        row = scores[lo:hi]
        e = np.exp(row - row.max())
        np.testing.assert_allclose(w[lo:hi], e / e.sum(), atol=1e-13)
    # empty rows contribute nothing; sums over each nonempty row are 1
    sums = np.add.reduceat(w, mask.indptr[:-1][np.diff(mask.indptr) > 0])
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_head_forward_with_full_mask_equals_dense_attention():
    rng = np.random.default_rng(1)
    head = _head()
    x = rng.normal(size=(9, 12)) * 0.3
    trace = head_forward(head, x, injected_mask="full")
    want, weights = dense_masked_attention(x @ head.w_q, x @ head.w_k,
                                           x @ head.w_v, np.ones((9, 9), bool))
    np.testing.assert_allclose(trace.out, want, atol=1e-12)
    assert trace.density == 1.0


def test_head_forward_with_arbitrary_mask_matches_dense_reference():
    rng = np.random.default_rng(2)
    head = _head()
    x = rng.normal(size=(8, 12)) * 0.3
    mask = _rand_mask(8, rng, fill=0.35)
    trace = head_forward(head, x, injected_mask=mask)
    want, _ = dense_masked_attention(x @ head.w_q, x @ head.w_k,
                                     x @ head.w_v, mask_to_dense(mask))
    np.testing.assert_allclose(trace.out, want, atol=1e-12)


def test_empty_rows_produce_zero_output():
    rng = np.random.default_rng(3)
    head = _head()
    x = rng.normal(size=(5, 12))
    mask = EdgeMask.from_pairs(5, 5, [(0, 1), (0, 2), (2, 4)])
    trace = head_forward(head, x, injected_mask=mask)
    np.testing.assert_array_equal(trace.out[1], np.zeros(8))
    np.testing.assert_array_equal(trace.out[3], np.zeros(8))
    assert np.abs(trace.out[0]).max() > 0


def test_identity_mask_attends_self_only():
    rng = np.random.default_rng(4)
    head = _head()
    x = rng.normal(size=(6, 12))
    trace = head_forward(head, x, injected_mask="identity")
    np.testing.assert_allclose(trace.out, x @ head.w_v, atol=1e-12)


def test_blocks_keep_sequences_apart():
    rng = np.random.default_rng(5)
    head = _head()
    x = rng.normal(size=(10, 12))
    trace = head_forward(head, x, rng=np.random.default_rng(0),
                         blocks=[(0, 5), (5, 10)], training=True)
    assert (trace.edge_cols[trace.edge_rows < 5] < 5).all()
    assert (trace.edge_cols[trace.edge_rows >= 5] >= 5).all()
    # per-block masks carry the same edges as the global list
    merged = mask_to_dense(trace.mask)
    total = sum(b.mask.m for b in trace.blocks)
    assert total == trace.edge_rows.size == merged.sum()


def test_sampled_density_tracks_intensities():
    # with huge intensities every pair appears; with zero, none do
    rng = np.random.default_rng(6)
    head = _head()
    head.c[:] = 0.0
    head.mlp_w2[:] = 0.0
    head.mlp_b2[:] = 40.0  # memberships saturate at sigmoid(40 * sum c) ...
    x = rng.normal(size=(6, 12))
    params = infer_sbm(head, x @ head.w_q, x @ head.w_k)
    # memberships sigmoid(out @ c.T) with c = 0 give exactly 1/2; block
    # matrix softmax over k^2 equal entries gives 1/k^2, so intensity is
    # (1/2) * (1/2) * k * k / k^2 ... fixed fully by the shapes
    want = presence_probability(params.y, params.b, params.z, delta=head.delta)
    trials = 3000
    hits = np.zeros((6, 6))
    for _ in range(trials):
        t = head_forward(head, x, rng, training=True)
        hits += mask_to_dense(t.mask)
    se = np.sqrt(want * (1 - want) / trials)
    assert (np.abs(hits / trials - want) <= 4 * se + 1e-12).all()


def test_fresh_head_initial_density_near_one_quarter_intensity():
    rng = np.random.default_rng(7)
    head = _head(d=16, d_h=16, k=4, seed=11)
    x = rng.normal(size=(12, 16)) * 0.02
    params = infer_sbm(head, x @ head.w_q, x @ head.w_k)
    lam = params.y @ params.b @ params.z.T
    assert 0.15 < lam.mean() < 0.35  # near 0.25 by construction


def test_density_loss_is_mean_mask_density():
    masks = [EdgeMask.full(4, 4), EdgeMask.identity(4)]
    np.testing.assert_allclose(density_loss(masks), (1.0 + 0.25) / 2)
    with pytest.raises(DomainError):
        density_loss([])


def test_head_forward_requires_rng_when_sampling():
    head = _head()
    x = np.zeros((4, 12))
    with pytest.raises(DomainError):
        head_forward(head, x)
    # injected masks need no generator
    head_forward(head, x, injected_mask="full")


def test_counts_disabled_by_default():
    rng = np.random.default_rng(8)
    head = _head()
    x = rng.normal(size=(5, 12))
    trace = head_forward(head, x, injected_mask="full")
    assert trace.counts is None
    counted = head_forward(head, x, injected_mask="full", count_ops=True)
    assert counted.counts["dot_products"] == 25


def test_dot_product_counter_equals_edge_count():
    rng = np.random.default_rng(9)
    head = _head()
    x = rng.normal(size=(10, 12))
    for _ in range(5):
        t = head_forward(head, x, rng, training=True, count_ops=True)
        assert t.counts["dot_products"] == t.edge_rows.size


# ------------------------------------------------------------------ gradients


def _loss_and_grads(head, x, mask, probe, lambda_density=0.0):
    trace = head_forward(head, x, injected_mask=mask)
    grads = head_backward(trace, head, probe, lambda_density=lambda_density)
    return float((trace.out * probe).sum()), grads


def test_head_backward_input_gradient_matches_fd():
    rng = np.random.default_rng(10)
    head = _head(d=6, d_h=5, k=2, seed=3)
    x = rng.normal(size=(7, 6))
    mask = _rand_mask(7, rng)
    probe = rng.normal(size=(7, 5))
    _, grads = _loss_and_grads(head, x, mask, probe)
    report = finite_diff_check(
        lambda v: _loss_and_grads(head, v.reshape(7, 6), mask, probe)[0],
        x, grads.dx)
    assert report.passed, report.failures


@pytest.mark.parametrize("name", ["w_q", "w_k", "w_v"])
def test_head_backward_projection_gradients_match_fd(name):
    rng = np.random.default_rng(11)
    head = _head(d=6, d_h=5, k=2, seed=4)
    x = rng.normal(size=(7, 6))
    mask = _rand_mask(7, rng)
    probe = rng.normal(size=(7, 5))
    _, grads = _loss_and_grads(head, x, mask, probe)
    base = getattr(head, name).copy()

    def f(flat):
        setattr(head, name, flat.reshape(base.shape))
        try:
            return _loss_and_grads(head, x, mask, probe)[0]
        finally:
            setattr(head, name, base)

    report = finite_diff_check(f, base.ravel(), grads.params[name].ravel())
    assert report.passed, report.failures


def test_straight_through_gradient_is_weight_times_logit():
    # dL/dp_e must equal dL/dA_e * A_e on every sampled edge when the
    # intensity is below the clamp and the regularizer is off
    rng = np.random.default_rng(12)
    head = _head(d=6, d_h=5, k=2, seed=5)
    x = rng.normal(size=(6, 6)) * 0.1  # small intensities, no clamping
    trace = head_forward(head, x, np.random.default_rng(3), training=True)
    if trace.edge_rows.size == 0:
        pytest.skip("empty sample")
    probe = rng.normal(size=trace.out.shape)
    grads = head_backward(trace, head, probe)
    assert (trace.edge_p < 1.0).all()
    np.testing.assert_allclose(grads.edge_grad_p,
                               grads.edge_grad_logits * trace.edge_logits,
                               rtol=1e-12)


def test_straight_through_gradient_clamps_saturated_edges():
    # the block matrix is a softmax over all k^2 entries, so an intensity can
    # reach 1 only when every membership saturates at exactly 1; build that
    # case exactly: constant cluster rows make s_hat a flat 1/4 (dyadic, so
    # the sum is exactly 1) and a huge mlp bias rounds sigmoid to 1.0
    rng = np.random.default_rng(13)
    head = _head(d=6, d_h=4, k=2, seed=6, delta=0.0)
    head.c[:] = 0.5
    head.mlp_w2[:] = 0.0
    head.mlp_b2[:] = 60.0
    x = rng.normal(size=(5, 6))
    trace = head_forward(head, x, np.random.default_rng(4), training=True)
    assert trace.edge_rows.size > 0
    np.testing.assert_array_equal(trace.edge_p, np.ones(trace.edge_rows.size))
    probe = rng.normal(size=trace.out.shape)
    grads = head_backward(trace, head, probe, lambda_density=1.0)
    # with every edge clamped the chain into the sampling parameters is cut
    np.testing.assert_array_equal(grads.params["c"], np.zeros_like(head.c))
    np.testing.assert_array_equal(grads.params["mlp_b2"], np.zeros(4))
    assert np.abs(grads.params["w_v"]).max() > 0  # dense branch still flows


def test_density_regularizer_pushes_intensities_down():
    rng = np.random.default_rng(14)
    head = _head(d=6, d_h=5, k=2, seed=7)
    x = rng.normal(size=(6, 6)) * 0.1
    trace = head_forward(head, x, np.random.default_rng(5), training=True)
    zero_probe = np.zeros(trace.out.shape)
    grads = head_backward(trace, head, zero_probe, lambda_density=1.0)
    # with no task gradient the straight-through term comes only from the
    # regularizer, which is positive on every sampled edge
    assert (grads.edge_grad_p > 0).all()
    assert np.abs(grads.params["c"]).max() > 0


def test_head_backward_rejects_mismatched_probe():
    rng = np.random.default_rng(15)
    head = _head()
    x = rng.normal(size=(5, 12))
    trace = head_forward(head, x, injected_mask="full")
    with pytest.raises(ShapeError):
        head_backward(trace, head, np.zeros((4, 8)))


def test_attention_dropout_zeroes_some_edges_and_rescales():
    rng = np.random.default_rng(16)
    head = _head()
    x = rng.normal(size=(8, 12))
    trace = head_forward(head, x, np.random.default_rng(6), training=True,
                         injected_mask="full", attn_dropout=0.5)
    assert trace.edge_drop is not None
    kept = trace.edge_drop > 0
    assert 0 < kept.sum() < kept.size
    np.testing.assert_allclose(trace.edge_drop[kept], 2.0)
