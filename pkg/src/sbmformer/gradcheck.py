"""Finite-difference verification of the hand-written backward pass.

The sampled mask is a discrete draw, so the model's loss is not a smooth
function of its parameters and cannot be differenced directly. The harness
therefore checks the three smooth pieces the backward pass is made of:

- the dense path: freeze one mask, inject it into every forward, and
  difference the classification loss (injected masks carry no sampling
  gradient, so this isolates the softmax/pooling/projection algebra);
- the per-edge coefficients: relax the mask to a multiplier on the attention
  logits, ``softmax(m_e * A_e)`` at ``m = 1``; the derivative in each m_e is
  dL/dA_e * A_e, which is the straight-through value the backward pass feeds
  into the sampling branch;
- the sampling branch itself: on a sampled trace with no task gradient and
  the density regularizer tuned so every edge carries coefficient exactly 1,
  the analytic gradients must match differences of
  ``sum_e min(p_e(theta), 1)`` recomputed over the frozen edge list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rngs
from .attention import (AttentionHead, head_backward, head_forward, infer_sbm,
                        init_head, masked_softmax_edges, _segment_sum)
from .encoder import (EncoderModel, ModelConfig, init_model, model_backward,
                      model_forward, named_params, set_param)
from .numerics import FdReport, bce_loss, finite_diff_check
from .sampler import EdgeMask


@dataclass
class GradcheckReport:
    per_param: dict[str, FdReport]
    edge_multiplier: FdReport
    sampling_chain: dict[str, FdReport]
    passed: bool
    max_rel_err: float
    n_checked: int
    n_skipped: int

    def lines(self) -> list[str]:
        out = []
        for name, rep in sorted(self.per_param.items()):
            status = "ok" if rep.passed else "FAIL"
            out.append(f"  {name:<28} {status:<4} max rel err {rep.max_rel_err:.3e} "
                       f"({rep.n_checked} checked, {rep.n_skipped} near-zero)")
        status = "ok" if self.edge_multiplier.passed else "FAIL"
        out.append(f"  {'edge multiplier':<28} {status:<4} max rel err "
                   f"{self.edge_multiplier.max_rel_err:.3e} "
                   f"({self.edge_multiplier.n_checked} edges)")
        for name, rep in sorted(self.sampling_chain.items()):
            status = "ok" if rep.passed else "FAIL"
            out.append(f"  {'sampling/' + name:<28} {status:<4} max rel err "
                       f"{rep.max_rel_err:.3e} "
                       f"({rep.n_checked} checked, {rep.n_skipped} near-zero)")
        verdict = "passed" if self.passed else "FAILED"
        out.append(f"gradient check {verdict}: max rel err {self.max_rel_err:.3e} "
                   f"over {self.n_checked} entries ({self.n_skipped} near-zero skipped)")
        return out


def _frozen_mask(n: int, rng: np.random.Generator) -> EdgeMask:
    """Roughly half-dense mask with guaranteed multi-edge rows and one empty row.

    A sampled mask can come out with every row holding at most one edge, and a
    one-edge softmax has zero gradient in its logit, which would silence the
    whole q/k path and make the check vacuous. Forcing structure keeps every
    code path under test, including the empty-row output.
    """
    dense = rng.random((n, n)) < 0.5
    dense[0, : max(2, n // 2)] = True
    dense[-1, :] = False
    return EdgeMask.from_pairs(n, n, np.argwhere(dense))


def _frozen_mask_loss(model: EncoderModel, tokens: np.ndarray, targets: np.ndarray,
                      mask: EdgeMask) -> float:
    trace = model_forward(model, tokens, rng=None, training=False, injected_mask=mask)
    valid = trace.valid.reshape(tokens.shape)
    loss, _ = bce_loss(trace.logits, targets, valid)
    return loss


def check_model_gradients(n: int = 6, d: int = 8, k: int = 2, seed: int = 0, *,
                          n_heads: int = 1, h: float = 1e-5, tol: float = 1e-4,
                          floor: float = 1e-6) -> GradcheckReport:
    """Difference every parameter of a one-layer model against its backward.

    Uses a single sequence so one concrete mask can be injected everywhere.
    Exploration stays disabled: delta moves the sampling distribution only
    and receives no gradient anywhere.
    """
    cfg = ModelConfig(n_layers=1, n_heads=n_heads, d=d, d_ff=d, k=k,
                      vocab_size=max(12, n + 2), max_seq_len=n,
                      delta=0.0, lambda_density=0.0, seed=seed)
    model = init_model(cfg)
    # At the 0.02-scale init every attention-path gradient (logits and the
    # straight-through coefficients) sits below the finite-difference noise
    # floor and the comparison would be vacuous. Inflate the input-side
    # parameters so those paths all carry O(1) signal.
    for name, value in named_params(model).items():
        if name.rsplit(".", 1)[-1] in ("tok_emb", "pos_emb", "w_q", "w_k",
                                       "w_v", "cls_w"):
            set_param(model, name, value * 25.0)
    rng = rngs.substream(seed, rngs.STREAM_TEST, 0)
    tokens = rng.integers(1, cfg.vocab_size, size=(1, n))
    targets = (rng.random((1, n)) < 0.5).astype(np.float64)

    mask = _frozen_mask(n, rng)

    base = model_forward(model, tokens, rng=None, training=False, injected_mask=mask)
    _, dlogits = bce_loss(base.logits, targets, base.valid.reshape(tokens.shape))
    analytic = model_backward(model, base, dlogits)

    reports = {}
    for name, value in named_params(model).items():
        def loss_at(p, _name=name, _shape=value.shape):
            set_param(model, _name, p.reshape(_shape))
            try:
                return _frozen_mask_loss(model, tokens, targets, mask)
            finally:
                set_param(model, _name, value)
        reports[name] = finite_diff_check(loss_at, value, analytic[name],
                                          h=h, tol=tol, floor=floor)

    edge_rep = check_edge_multiplier(
        model.layers[0].heads[0], base.layer_traces[0].head_traces[0].x, mask,
        rngs.substream(seed, rngs.STREAM_TEST, 1), h=h, tol=tol, floor=floor)

    chain_reps = check_sampling_chain(n=n, d=d, k=k, seed=seed,
                                      h=h, tol=tol, floor=floor)

    all_reports = (list(reports.values()) + [edge_rep] +
                   list(chain_reps.values()))
    return GradcheckReport(
        per_param=reports,
        edge_multiplier=edge_rep,
        sampling_chain=chain_reps,
        passed=all(r.passed for r in all_reports),
        max_rel_err=max(r.max_rel_err for r in all_reports),
        n_checked=sum(r.n_checked for r in all_reports),
        n_skipped=sum(r.n_skipped for r in all_reports),
    )


def check_edge_multiplier(head: AttentionHead, x: np.ndarray, mask: EdgeMask,
                          rng: np.random.Generator, *, h: float = 1e-5,
                          tol: float = 1e-4, floor: float = 1e-6) -> FdReport:
    """Difference the relaxed-mask multiplier at 1 against dL/dA_e * A_e.

    Loss is a fixed random projection of the head output, so every edge
    weight matters. The multiplier scales the logits before the masked
    softmax; its derivative at 1 is the straight-through coefficient the
    sampling branch would apply on a sampled trace.
    """
    trace = head_forward(head, x, training=False, injected_mask=mask)
    probe = rng.normal(size=trace.out.shape)
    hg = head_backward(trace, head, probe)
    gj = trace.edge_cols
    v = trace.v

    def loss_at(mult):
        w = masked_softmax_edges(trace.edge_logits * mult, trace.edge_indptr)
        out = _segment_sum(w[:, None] * v[gj], trace.edge_indptr)
        return float((probe * out).sum())

    return finite_diff_check(loss_at, np.ones(trace.edge_rows.size),
                             hg.edge_grad_logits * trace.edge_logits,
                             h=h, tol=tol, floor=floor)


def check_sampling_chain(n: int = 6, d: int = 8, k: int = 2, seed: int = 0, *,
                         h: float = 1e-5, tol: float = 1e-4,
                         floor: float = 1e-6) -> dict[str, FdReport]:
    """Difference the straight-through chain on a genuinely sampled trace.

    With a zero task gradient and ``lambda_density = n^2`` the regularizer
    hands every sampled edge the coefficient exactly 1, so the analytic
    parameter gradients equal d/dtheta of ``sum_e min(p_e(theta), 1)`` with
    the edge list frozen. That sum is recomputed here from ``infer_sbm``
    directly, independent of the backward pass.
    """
    rng = rngs.substream(seed, rngs.STREAM_TEST, 2)
    head = init_head(d, d, k, rng, delta=0.0)
    x = rng.normal(size=(n, d))
    trace = head_forward(head, x, rngs.substream(seed, rngs.STREAM_TEST, 3),
                         training=True)
    if trace.edge_rows.size == 0:
        raise RuntimeError("sampled an empty mask; pick another seed")
    gi, gj = trace.edge_rows, trace.edge_cols
    hg = head_backward(trace, head, np.zeros(trace.out.shape),
                       lambda_density=float(n * n), n_heads_total=1)

    def chain_loss(inputs: np.ndarray) -> float:
        params = infer_sbm(head, inputs @ head.w_q, inputs @ head.w_k)
        p = (params.y[gi] * (params.z @ params.b.T)[gj]).sum(axis=1)
        return float(np.minimum(p, 1.0).sum())

    reports = {"x": finite_diff_check(lambda v: chain_loss(v.reshape(n, d)),
                                      x, hg.dx, h=h, tol=tol, floor=floor)}
    for name in ("w_q", "w_k", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "c"):
        value = getattr(head, name).copy()

        def loss_at(p, _name=name, _shape=value.shape):
            setattr(head, _name, p.reshape(_shape))
            try:
                return chain_loss(x)
            finally:
                setattr(head, _name, value)

        reports[name] = finite_diff_check(loss_at, value.ravel(),
                                          hg.params[name].ravel(),
                                          h=h, tol=tol, floor=floor)
    return reports
