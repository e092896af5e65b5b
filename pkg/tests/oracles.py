"""Independent reference implementations the tests compare against.

Everything here is written from first principles rather than by calling
into the library: dense attention materializes the full score matrix,
the duplicate labeler is a quadratic scan, the edge-probability formula
comes straight from the Poisson thinning identity, and the cycle
expectation for tiny graphs enumerates every possible digraph.
"""

import itertools
import math

import numpy as np


def mask_to_dense(mask) -> np.ndarray:
    """Boolean (n_q, n_k) matrix from an edge mask, built row by row."""
    dense = np.zeros((mask.n_q, mask.n_k), dtype=bool)
    for i in range(mask.n_q):
        lo, hi = mask.indptr[i], mask.indptr[i + 1]
        dense[i, mask.cols[lo:hi]] = True
    return dense


def edge_probability(y: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    """P(at least one sampled edge) for every query/key pair.

    The number of raw draws landing on pair (i, j) is Poisson with mean
    (Y B Z^T)_ij, so the dedup'd mask contains the pair with probability
    1 - exp(-mean).
    """
    lam = y @ b @ z.T
    return 1.0 - np.exp(-lam)


def presence_probability(y, b, z, delta=0.0, cap=0.995) -> np.ndarray:
    """P(pair in the mask) under the attention layer's exact-Bernoulli law.

    The head treats the intensity as the presence probability itself
    (exploration delta added during training, saturating at the cap), unlike
    the raw draw-and-dedup law in ``edge_probability``.
    """
    lam = y @ b @ z.T
    return np.minimum(lam + delta, cap)


def dense_masked_attention(q, k, v, allowed):
    """Row-softmax attention with disallowed scores set to -inf.

    Rows with no allowed key produce an all-zero output row. Returns
    (out, weights) where weights is the dense (n_q, n_k) matrix.
    """
    n_q, d = q.shape
    scores = (q @ k.T) / math.sqrt(d)
    weights = np.zeros((n_q, k.shape[0]))
    for i in range(n_q):
        row = np.where(allowed[i], scores[i], -np.inf)
        if not allowed[i].any():
            continue
        row = row - row[allowed[i]].max()
        e = np.where(allowed[i], np.exp(row), 0.0)
        weights[i] = e / e.sum()
    return weights @ v, weights


def _layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def dense_encoder_logits(model, tokens) -> np.ndarray:
    """Plain dense-attention forward pass over each sequence separately.

    Mirrors the documented architecture (post-norm residual blocks, ReLU
    feed-forward, per-position or mean-pooled single-logit head) without
    any edge lists, blocks, or sampling. Assumes no padding tokens.
    """
    cfg = model.config
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    out = []
    for row in tokens:
        n = row.size
        x = model.tok_emb[row] + model.pos_emb[:n]
        for layer in model.layers:
            parts = []
            for head in layer.heads:
                o, _ = dense_masked_attention(
                    x @ head.w_q, x @ head.w_k, x @ head.w_v,
                    np.ones((n, n), dtype=bool))
                parts.append(o)
            x = _layer_norm(x + np.concatenate(parts, axis=1) @ layer.w_o,
                            layer.ln1_g, layer.ln1_b)
            h = np.maximum(x @ layer.ffn_w1 + layer.ffn_b1, 0.0)
            x = _layer_norm(x + h @ layer.ffn_w2 + layer.ffn_b2,
                            layer.ln2_g, layer.ln2_b)
        if cfg.pooling == "mean":
            x = x.mean(axis=0, keepdims=True)
        out.append((x @ model.cls_w + model.cls_b).ravel())
    return np.array(out)


def brute_force_duplicates(tokens) -> np.ndarray:
    """Quadratic-scan duplicate labels: 1.0 where the token recurs."""
    tokens = np.atleast_2d(np.asarray(tokens))
    targets = np.zeros(tokens.shape)
    for r in range(tokens.shape[0]):
        for i in range(tokens.shape[1]):
            hits = sum(1 for j in range(tokens.shape[1])
                       if tokens[r, j] == tokens[r, i])
            targets[r, i] = 1.0 if hits > 1 else 0.0
    return targets


def _hamiltonian_count(adj: np.ndarray) -> int:
    """Directed Hamiltonian cycles in a dense adjacency matrix, by
    enumerating every cyclic vertex order (node 0 pinned first)."""
    n = adj.shape[0]
    count = 0
    for perm in itertools.permutations(range(1, n)):
        order = (0,) + perm
        if all(adj[order[i], order[(i + 1) % n]] for i in range(n)):
            count += 1
    return count


def exhaustive_cycle_expectation(n: int, p: float) -> float:
    """E[#Hamiltonian cycles] over G(n, p) digraphs, by summing every
    one of the 2^(n(n-1)) graphs. Only feasible for n <= 4."""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    total = 0.0
    for bits in range(2 ** len(pairs)):
        adj = np.zeros((n, n), dtype=bool)
        n_edges = 0
        for e, (i, j) in enumerate(pairs):
            if bits >> e & 1:
                adj[i, j] = True
                n_edges += 1
        weight = p ** n_edges * (1.0 - p) ** (len(pairs) - n_edges)
        total += weight * _hamiltonian_count(adj)
    return total
