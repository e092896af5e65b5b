"""One attention head whose support is sampled from a per-input stochastic block model.

Forward (per head, per sequence):
  Q, K, V = X W_q, X W_k, X W_v
  S_hat   = softmax over all entries of C C^T          (k x k block matrix)
  Q_hat   = sigmoid(mlp(Q) C^T), K_hat = sigmoid(mlp(K) C^T)   (memberships)
  M       = bipartite graph with P(edge i-j) = (Q_hat S_hat K_hat^T)_{ij},
            sampled in O(edges) via boosted fastRG draws plus per-pair
            thinning (presence saturates at PRESENCE_CAP, not at 1 - 1/e)
  A_e     = Q_i . K_j / sqrt(d_h) computed only on sampled edges
  out_i   = masked-softmax-row(A) pooled over V        (empty rows give zero)

The mlp is a shared two-layer ReLU network (d_h -> d_h -> d_h, with biases)
applied to both Q and K. During training an exploration floor ``delta`` is
added to every pair's intensity via a background cluster before sampling.

Backward combines the dense path through the masked softmax with a
straight-through estimate for the sampling step: for each sampled edge,
``dL/dp_ij := dL/dA_ij * (Q_i . K_j) / sqrt(d_h)``, plus
``lambda / (n_heads_total * n^2)`` from the density regularizer, chained
through p = Q_hat S_hat K_hat^T (clamped to <= 1) into the memberships, the
shared mlp, C, and back into W_q/W_k. Unsampled pairs get no gradient, and
``delta`` gets none anywhere.

A batch is laid out block-diagonally (``blocks`` splits the rows into
independent sequences). Masks are sampled per block, but every per-edge
computation runs once over the concatenated edge list of all blocks, so the
Python-level work does not grow with the batch size. Nothing in either pass
materializes an n x n array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConsistencyError, DomainError, ShapeError
from .numerics import relu, sigmoid, softmax_all
from .sampler import (PRESENCE_CAP, EdgeMask, SampleCounter, SbmParams, add_self_loops,
                      sample_bernoulli_blocks, sample_bernoulli_mask, with_exploration)

HEAD_PARAM_NAMES = ("w_q", "w_k", "w_v", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "c")


@dataclass(eq=False)
class AttentionHead:
    """Parameters of one head; ``d_h`` and ``k`` are implied by the shapes."""

    w_q: np.ndarray   # (d, d_h)
    w_k: np.ndarray   # (d, d_h)
    w_v: np.ndarray   # (d, d_h)
    mlp_w1: np.ndarray  # (d_h, d_h)
    mlp_b1: np.ndarray  # (d_h,)
    mlp_w2: np.ndarray  # (d_h, d_h)
    mlp_b2: np.ndarray  # (d_h,)
    c: np.ndarray     # (k, d_h) cluster embeddings
    delta: float = 0.01
    self_loops: bool = False

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_q.shape[1]

    @property
    def k(self) -> int:
        return self.c.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in HEAD_PARAM_NAMES}


def init_head(d: int, d_h: int, k: int, rng: np.random.Generator,
              delta: float = 0.01, self_loops: bool = False) -> AttentionHead:
    """Kaiming-normal mlp and cluster embeddings, 0.02-scaled projections.

    With this init the memberships start near 0.5 and the block matrix near
    uniform, so pair intensities sit around 0.25 and sampled masks around
    1 - exp(-0.25) ~ 22% density.
    """
    if d < 1 or d_h < 1 or k < 1:
        raise DomainError(f"dimensions must be positive, got d={d}, d_h={d_h}, k={k}")
    kaiming = math.sqrt(2.0 / d_h)
    return AttentionHead(
        w_q=rng.normal(0.0, 0.02, (d, d_h)),
        w_k=rng.normal(0.0, 0.02, (d, d_h)),
        w_v=rng.normal(0.0, 0.02, (d, d_h)),
        mlp_w1=rng.normal(0.0, kaiming, (d_h, d_h)),
        mlp_b1=np.zeros(d_h),
        mlp_w2=rng.normal(0.0, kaiming, (d_h, d_h)),
        mlp_b2=np.zeros(d_h),
        c=rng.normal(0.0, kaiming, (k, d_h)),
        delta=delta,
        self_loops=self_loops,
    )


def _mlp_forward(head: AttentionHead, t: np.ndarray):
    pre = t @ head.mlp_w1 + head.mlp_b1
    act = relu(pre)
    out = act @ head.mlp_w2 + head.mlp_b2
    return pre, act, out


def infer_sbm(head: AttentionHead, q: np.ndarray, k: np.ndarray) -> SbmParams:
    """Per-input SBM: memberships from the shared mlp, block matrix from C."""
    if q.shape[1] != head.d_h or k.shape[1] != head.d_h:
        raise ShapeError(f"q/k width {q.shape[1]}/{k.shape[1]} != head dim {head.d_h}")
    s_hat = softmax_all(head.c @ head.c.T)
    q_hat = sigmoid(_mlp_forward(head, q)[2] @ head.c.T)
    k_hat = sigmoid(_mlp_forward(head, k)[2] @ head.c.T)
    return SbmParams(y=q_hat, b=s_hat, z=k_hat)


def _segment_sum(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Sum ``values`` (m, ...) over CSR segments; empty segments give 0."""
    n = indptr.size - 1
    counts = np.diff(indptr)
    out = np.zeros((n,) + values.shape[1:])
    nonempty = counts > 0
    if values.shape[0]:
        starts = indptr[:-1][nonempty].astype(np.intp)
        out[nonempty] = np.add.reduceat(values, starts, axis=0)
    return out


def _weighted_gather_sum(data: np.ndarray, cols: np.ndarray, indptr: np.ndarray,
                         mat: np.ndarray) -> np.ndarray:
    """Rows of ``A @ mat`` for the sparse A given in CSR pieces.

    Equivalent to ``_segment_sum(data[:, None] * mat[cols], indptr)`` without
    the (m, width) temporaries; the compiled sparse kernel keeps the edge
    stage linear in the edge count.
    """
    n = indptr.size - 1
    adj = sparse.csr_matrix((data, cols, indptr), shape=(n, mat.shape[0]))
    return adj @ mat


def _segment_max(values: np.ndarray, indptr: np.ndarray, empty: float) -> np.ndarray:
    n = indptr.size - 1
    counts = np.diff(indptr)
    out = np.full(n, empty)
    nonempty = counts > 0
    if values.size:
        starts = indptr[:-1][nonempty].astype(np.intp)
        out[nonempty] = np.maximum.reduceat(values, starts)
    return out


def masked_softmax_edges(a: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Per-row softmax over an edge list grouped by ``indptr``.

    Equivalent to filling unsampled entries with -inf in a dense softmax;
    rows with no edges simply contribute nothing.
    """
    row_max = _segment_max(a, indptr, empty=0.0)
    row_of = np.repeat(np.arange(indptr.size - 1), np.diff(indptr))
    e = np.exp(a - row_max[row_of])
    denom = _segment_sum(e, indptr)
    return e / denom[row_of]


@dataclass(eq=False)
class BlockTrace:
    """One sequence's sampled support (one block of the batch)."""

    start: int
    end: int
    mask: EdgeMask


@dataclass(eq=False)
class HeadForwardTrace:
    """Everything the backward pass and the instrumentation need.

    Per-edge arrays are global: all blocks' edges concatenated in block
    order (which is also global row order, since blocks are ascending).
    ``edge_bounds[b] : edge_bounds[b + 1]`` slices out block b.
    """

    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    mlp_q: tuple   # (pre, act, out)
    mlp_k: tuple
    q_hat: np.ndarray
    k_hat: np.ndarray
    s_hat: np.ndarray
    ks: np.ndarray  # K_hat S_hat^T, reused by the straight-through chain
    qs: np.ndarray  # Q_hat S_hat
    blocks: list[BlockTrace]
    edge_rows: np.ndarray     # global row per edge
    edge_cols: np.ndarray     # global column per edge
    edge_indptr: np.ndarray   # CSR over every row of x
    edge_bounds: np.ndarray   # (len(blocks) + 1,) slice bounds per block
    edge_p: np.ndarray        # raw intensities Q_hat S_hat K_hat^T per edge
    edge_logits: np.ndarray   # A_e = Q_i . K_j / sqrt(d_h)
    edge_weights: np.ndarray  # post-softmax weights (pre-dropout)
    edge_drop: np.ndarray | None  # inverted-dropout scaling, or None
    out: np.ndarray
    training: bool
    injected: bool
    valid: np.ndarray
    counts: dict | None = None

    @property
    def density(self) -> float:
        area = sum((b.end - b.start) * (b.end - b.start) for b in self.blocks)
        return self.edge_rows.size / area

    @property
    def per_block_density(self) -> np.ndarray:
        return np.array([b.mask.m / ((b.end - b.start) ** 2) for b in self.blocks])

    def expected_density(self) -> np.ndarray:
        """Per-block mean of min(Q_hat S_hat K_hat^T, PRESENCE_CAP) over valid
        positions: the expectation of ``per_block_density`` under the sampling
        law (before exploration and self-loops), smooth where the realized
        draw fluctuates. O(n_b^2 k) per block, for instrumentation only."""
        out = []
        for b in self.blocks:
            va = self.valid[b.start:b.end]
            if not va.any():
                out.append(0.0)
                continue
            q = self.q_hat[b.start:b.end][va]
            k = self.k_hat[b.start:b.end][va]
            p = (q @ self.s_hat) @ k.T
            out.append(float(np.minimum(p, PRESENCE_CAP).mean()))
        return np.array(out)

    @property
    def mask(self) -> EdgeMask:
        """Merged mask over all blocks (block-diagonal union)."""
        if len(self.blocks) == 1 and self.blocks[0].start == 0:
            return self.blocks[0].mask
        n = self.x.shape[0]
        return EdgeMask.from_codes(n, n, self.edge_rows * n + self.edge_cols)


def _resolve_injected(injected, n: int) -> EdgeMask:
    if isinstance(injected, EdgeMask):
        if injected.n_q != n or injected.n_k != n:
            raise ShapeError(f"injected mask is {injected.n_q}x{injected.n_k}, block is {n}x{n}")
        return injected
    if injected == "full":
        return EdgeMask.full(n, n)
    if injected == "identity":
        return EdgeMask.identity(n)
    raise DomainError(f"injected mask must be an EdgeMask, 'full' or 'identity', got {injected!r}")


def _check_blocks(blocks: list[tuple[int, int]], n: int) -> None:
    if not blocks:
        raise DomainError("blocks must be non-empty")
    prev = 0
    for start, end in blocks:
        if start < prev or end <= start or end > n:
            raise DomainError(f"blocks must be ascending and disjoint within {n} rows")
        prev = end


def _blocks_tile(blocks: list[tuple[int, int]], n: int) -> bool:
    """True when the blocks partition [0, n) into equal contiguous runs."""
    nb = blocks[0][1] - blocks[0][0]
    if len(blocks) * nb != n:
        return False
    return all(s == i * nb and e == s + nb for i, (s, e) in enumerate(blocks))


def _sample_block(head: AttentionHead, q_hat, k_hat, s_hat, valid, start, end,
                  training: bool, rng, counter) -> EdgeMask:
    """Reference sampling path for one block (alias-table fastRG)."""
    valid_b = valid[start:end]
    params = SbmParams(y=q_hat[start:end] * valid_b[:, None], b=s_hat,
                       z=k_hat[start:end] * valid_b[:, None])
    if training and head.delta > 0.0:
        params = with_exploration(params, head.delta)
        if not valid_b.all():
            params = SbmParams(y=params.y * valid_b[:, None], b=params.b,
                               z=params.z * valid_b[:, None])
    return sample_bernoulli_mask(params, rng, counter)


def _sample_all_blocks(head: AttentionHead, q_hat, k_hat, s_hat, valid,
                       blocks, training: bool, rng, counter) -> list[EdgeMask]:
    """Masks for every block.

    A single block (and any non-tiling block layout) goes through
    ``sample_bernoulli_mask`` directly; an equal-block batch goes through the
    stacked sampler, identical in law but one vectorized sweep. The two
    consume the generator differently, so the drawn masks depend on the block
    layout as well as the generator state.
    """
    n = q_hat.shape[0]
    kk = head.k
    if len(blocks) > 1 and _blocks_tile(blocks, n):
        nb = blocks[0][1] - blocks[0][0]
        y = (q_hat * valid[:, None]).reshape(len(blocks), nb, kk)
        z = (k_hat * valid[:, None]).reshape(len(blocks), nb, kk)
        bmat = s_hat
        if training and head.delta > 0.0:
            vcol = valid.astype(np.float64).reshape(len(blocks), nb, 1)
            y = np.concatenate([y, vcol], axis=2)
            z = np.concatenate([z, vcol], axis=2)
            bmat = np.zeros((kk + 1, kk + 1))
            bmat[:kk, :kk] = s_hat
            bmat[kk, kk] = head.delta
        return sample_bernoulli_blocks(y, bmat, z, rng, counter)
    return [_sample_block(head, q_hat, k_hat, s_hat, valid, start, end,
                          training, rng, counter)
            for start, end in blocks]


def head_forward(head: AttentionHead, x: np.ndarray, rng: np.random.Generator | None = None, *,
                 training: bool = False, blocks: list[tuple[int, int]] | None = None,
                 injected_mask=None, valid: np.ndarray | None = None,
                 attn_dropout: float = 0.0, count_ops: bool = False) -> HeadForwardTrace:
    """Run one head over ``x`` (n x d).

    ``blocks`` splits the rows into independent sequences (ascending and
    disjoint); masks are sampled per block so no edge crosses sequences.
    ``injected_mask`` bypasses sampling (an EdgeMask applies to a single
    block; the strings 'full'/'identity' apply per block). ``valid`` marks
    real (non-pad) positions: invalid rows are zeroed out of the membership
    matrices, including the exploration column, before sampling.

    Generator consumption order: all sampling draws first (see
    ``_sample_all_blocks``), then one dropout draw over the whole edge list.
    """
    n, d = x.shape
    if d != head.d:
        raise ShapeError(f"input width {d} != head input dim {head.d}")
    if blocks is None:
        blocks = [(0, n)]
    _check_blocks(blocks, n)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    if rng is None and (injected_mask is None or (training and attn_dropout > 0.0)):
        raise DomainError("head_forward needs an rng unless a mask is injected and dropout is off")
    if isinstance(injected_mask, EdgeMask) and len(blocks) != 1:
        raise DomainError("a concrete injected EdgeMask only applies to a single block")

    q = x @ head.w_q
    k = x @ head.w_k
    v = x @ head.w_v
    mlp_q = _mlp_forward(head, q)
    mlp_k = _mlp_forward(head, k)
    s_hat = softmax_all(head.c @ head.c.T)
    q_hat = sigmoid(mlp_q[2] @ head.c.T)
    k_hat = sigmoid(mlp_k[2] @ head.c.T)
    ks = k_hat @ s_hat.T
    qs = q_hat @ s_hat
    h = head.d_h
    scale = 1.0 / math.sqrt(h)

    counts = None
    counter = None
    if count_ops:
        kk = head.k
        counter = SampleCounter()
        counts = {
            # FLOPs, 1 multiply-add = 2 FLOPs; activations 1 FLOP per entry.
            "memberships_flops": 2 * (4 * n * h * h + 2 * n * h * kk) + 4 * n * h + 2 * n * kk,
            "block_flops": 2 * kk * kk * h + 3 * kk * kk,
            "masked_flops": 0.0,
            "sampling_flops": 0.0,
            "dot_products": 0,
            "sampling_ops": 0,
            "peak_floats": 0.0,
            "n": n, "k": kk, "d_h": h,
        }

    if injected_mask is not None:
        masks = [_resolve_injected(injected_mask, end - start) for start, end in blocks]
    else:
        masks = _sample_all_blocks(head, q_hat, k_hat, s_hat, valid, blocks,
                                   training, rng, counter)
    if head.self_loops:
        masks = [add_self_loops(mask) for mask in masks]

    bounds = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum([mask.m for mask in masks], out=bounds[1:])
    total_m = int(bounds[-1])
    if total_m:
        gi = np.concatenate([mk.rows + s for mk, (s, _e) in zip(masks, blocks)])
        gj = np.concatenate([mk.cols + s for mk, (s, _e) in zip(masks, blocks)])
    else:
        gi = np.empty(0, dtype=np.int64)
        gj = np.empty(0, dtype=np.int64)
    row_counts = np.zeros(n, dtype=np.int64)
    for mk, (s, e) in zip(masks, blocks):
        row_counts[s:e] = np.diff(mk.indptr)
    gptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(row_counts, out=gptr[1:])

    a = (q[gi] * k[gj]).sum(axis=1) * scale
    w = masked_softmax_edges(a, gptr)
    drop = None
    if training and attn_dropout > 0.0:
        # Inverted dropout on the weights; no renormalization afterwards.
        drop = (rng.random(total_m) >= attn_dropout) / (1.0 - attn_dropout)
        w_used = w * drop
    else:
        w_used = w
    out = _weighted_gather_sum(w_used, gj, gptr, v)
    p = (q_hat[gi] * ks[gj]).sum(axis=1)

    if counts is not None:
        counts["masked_flops"] = 4.0 * total_m * h + 5.0 * total_m
        counts["dot_products"] = total_m
        counts["sampling_ops"] = counter.total_ops
        counts["peak_floats"] = float(2 * total_m + 2 * n * h + 2 * n * head.k
                                      + head.k * h + head.k * head.k
                                      + 2 * h * h + 2 * h)

    block_traces = [BlockTrace(start=s, end=e, mask=mk)
                    for (s, e), mk in zip(blocks, masks)]
    return HeadForwardTrace(x=x, q=q, k=k, v=v, mlp_q=mlp_q, mlp_k=mlp_k,
                            q_hat=q_hat, k_hat=k_hat, s_hat=s_hat, ks=ks, qs=qs,
                            blocks=block_traces, edge_rows=gi, edge_cols=gj,
                            edge_indptr=gptr, edge_bounds=bounds, edge_p=p,
                            edge_logits=a, edge_weights=w, edge_drop=drop,
                            out=out, training=training,
                            injected=injected_mask is not None, valid=valid,
                            counts=counts)


@dataclass(eq=False)
class HeadGradients:
    params: dict[str, np.ndarray]
    dx: np.ndarray
    edge_grad_logits: np.ndarray  # dL/dA_e, over the global edge list
    edge_grad_p: np.ndarray       # straight-through dL/dp_e, same layout


def _check_trace(trace: HeadForwardTrace, head: AttentionHead) -> None:
    if trace.q.shape[1] != head.d_h or trace.s_hat.shape[0] != head.k \
            or trace.x.shape[1] != head.d:
        raise ConsistencyError(
            f"trace shapes (d={trace.x.shape[1]}, d_h={trace.q.shape[1]}, "
            f"k={trace.s_hat.shape[0]}) do not match head "
            f"(d={head.d}, d_h={head.d_h}, k={head.k})"
        )


def head_backward(trace: HeadForwardTrace, head: AttentionHead, grad_out: np.ndarray,
                  lambda_density: float = 0.0, n_heads_total: int = 1) -> HeadGradients:
    """Gradients of a scalar loss with ``dL/dout = grad_out``.

    The dense branch differentiates the masked softmax and pooling exactly;
    the sampling branch applies the straight-through rule per sampled edge
    and adds ``lambda_density / (n_heads_total * n_block^2)`` from the
    density regularizer, then chains through the clamped intensities into
    parameters. Both branches accumulate into W_q/W_k and into dx. Traces
    built from an injected mask skip the sampling branch: the mask is a
    constant there, not a draw from the inferred graph model.
    """
    _check_trace(trace, head)
    if grad_out.shape != trace.out.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != output shape {trace.out.shape}")
    h = head.d_h
    scale = 1.0 / math.sqrt(h)
    q, k, v = trace.q, trace.k, trace.v
    n = trace.x.shape[0]
    gi, gj, gptr = trace.edge_rows, trace.edge_cols, trace.edge_indptr
    corder = np.argsort(gj, kind="stable")
    cptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(gj, minlength=n), out=cptr[1:])

    w = trace.edge_weights
    w_used = w * trace.edge_drop if trace.edge_drop is not None else w
    ti = gi[corder]  # transpose structure: A^T in CSR is (data[corder], ti, cptr)

    # Pooling: out_i = sum_e w_e V_j.
    dw_used = (grad_out[gi] * v[gj]).sum(axis=1)
    dv = _weighted_gather_sum(w_used[corder], ti, cptr, grad_out)
    dw = dw_used * trace.edge_drop if trace.edge_drop is not None else dw_used

    # Masked softmax backward, rowwise: da = w * (dw - sum_row w dw).
    row_dot = _segment_sum(w * dw, gptr)
    da = w * (dw - row_dot[gi])

    # Dense branch into Q/K.
    das = da * scale
    dq = _weighted_gather_sum(das, gj, gptr, k)
    dk = _weighted_gather_sum(das[corder], ti, cptr, q)

    dc = np.zeros_like(head.c)
    dw1 = np.zeros_like(head.mlp_w1)
    db1 = np.zeros_like(head.mlp_b1)
    dw2 = np.zeros_like(head.mlp_w2)
    db2 = np.zeros_like(head.mlp_b2)
    if trace.injected:
        # An injected mask is a constant, so there is no sampling
        # distribution to differentiate: the membership parameters get no
        # gradient and the per-edge intensity gradient is zero.
        dp = np.zeros(gi.size)
    else:
        # Straight-through branch: dL/dp = dL/dA * (Q_i . K_j)/sqrt(d_h),
        # plus the density regularizer's per-edge constant.
        dp = da * trace.edge_logits
        if lambda_density != 0.0:
            inv_area = np.repeat(
                np.array([1.0 / (b.end - b.start) ** 2 for b in trace.blocks]),
                np.diff(trace.edge_bounds))
            dp = dp + (lambda_density / n_heads_total) * inv_area
        dp_chain = np.where(trace.edge_p < 1.0, dp, 0.0)  # clamp p to <= 1
        dq_hat = _weighted_gather_sum(dp_chain, gj, gptr, trace.ks)
        dk_hat = _weighted_gather_sum(dp_chain[corder], ti, cptr, trace.qs)
        # sum_e dp_e outer(Q_hat_i, K_hat_j), factored through one sparse product.
        ds_hat = trace.q_hat.T @ _weighted_gather_sum(dp_chain, gj, gptr, trace.k_hat)

        # Memberships: sigmoid then shared logits against C.
        dlq = dq_hat * trace.q_hat * (1.0 - trace.q_hat)
        dlk = dk_hat * trace.k_hat * (1.0 - trace.k_hat)
        dc = dlq.T @ trace.mlp_q[2] + dlk.T @ trace.mlp_k[2]
        dh_q = dlq @ head.c
        dh_k = dlk @ head.c

        # Block matrix: softmax over all entries of C C^T.
        inner = float((ds_hat * trace.s_hat).sum())
        dg = trace.s_hat * (ds_hat - inner)
        dc += (dg + dg.T) @ head.c

        # Shared mlp, applied to Q and K.
        for (pre, act, _out), upstream, tin, dt in (
            (trace.mlp_q, dh_q, q, dq),
            (trace.mlp_k, dh_k, k, dk),
        ):
            dw2 += act.T @ upstream
            db2 += upstream.sum(axis=0)
            dact = upstream @ head.mlp_w2.T
            dpre = dact * (pre > 0)
            dw1 += tin.T @ dpre
            db1 += dpre.sum(axis=0)
            dt += dpre @ head.mlp_w1.T

    dx = dq @ head.w_q.T + dk @ head.w_k.T + dv @ head.w_v.T
    grads = {
        "w_q": trace.x.T @ dq,
        "w_k": trace.x.T @ dk,
        "w_v": trace.x.T @ dv,
        "mlp_w1": dw1,
        "mlp_b1": db1,
        "mlp_w2": dw2,
        "mlp_b2": db2,
        "c": dc,
    }
    return HeadGradients(params=grads, dx=dx, edge_grad_logits=da, edge_grad_p=dp)


def density_loss(masks: list[EdgeMask]) -> float:
    """Mean mask density across heads (the regularizer's raw value)."""
    if not masks:
        raise DomainError("density_loss needs at least one mask")
    return float(np.mean([m.density() for m in masks]))
