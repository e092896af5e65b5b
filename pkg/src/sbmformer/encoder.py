"""Post-norm transformer encoder over sampled-support attention heads.

Layer structure: attention -> add -> layernorm -> feedforward -> add ->
layernorm, with learned token and positional embeddings in front and a
binary token-level (or mean-pooled sequence-level) classifier on top. The
whole computation, including the straight-through sampling branch, is
differentiated by hand in float64.

Batches are laid out block-diagonally: the B x n token grid becomes one
(B*n) x d activation matrix, and each sequence is an independent block for
attention sampling, so dense kernels batch while no edge crosses sequences.

Determinism: the trainer draws one generator per purpose and step from
``rngs.substream`` and consumes it in a fixed order (embedding dropout, then
per layer: each head's sampling and attention dropout, the attention-output
dropout, the feedforward dropout). Same master seed, same run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import rngs
from .attention import (AttentionHead, HeadForwardTrace, density_loss, head_backward,
                        head_forward, init_head)
from .duplicates import LabeledBatch, TaskConfig, generate_batch
from .errors import DomainError, InputError, NonFiniteLossError, ShapeError
from .numerics import AdamState, adam_update, bce_loss, relu, sigmoid

LN_EPS = 1e-5
PAD_ID = 0

LAYER_PARAM_NAMES = ("w_o", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                     "ln1_g", "ln1_b", "ln2_g", "ln2_b")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; ``d_h = d // n_heads`` and id 0 is padding."""

    n_layers: int = 1
    n_heads: int = 1
    d: int = 32
    d_ff: int = 32
    k: int = 128
    vocab_size: int = 257
    max_seq_len: int = 256
    dropout: float = 0.0
    attn_dropout: float = 0.0
    delta: float = 0.01
    lambda_density: float = 0.0
    self_loops: bool = False
    pooling: str = "none"   # "none" = token-level labels, "mean" = one label per sequence
    n_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1 or self.n_heads < 1 or self.d < 1 or self.d_ff < 1 or self.k < 1:
            raise DomainError("layer/head/dimension counts must be positive")
        if self.d % self.n_heads != 0:
            raise DomainError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if not (0.0 <= self.dropout < 1.0 and 0.0 <= self.attn_dropout < 1.0):
            raise DomainError("dropout rates must be in [0, 1)")
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must be in [0, 1], got {self.delta}")
        if self.lambda_density < 0.0:
            raise DomainError("lambda_density must be nonnegative")
        if self.pooling not in ("none", "mean"):
            raise DomainError(f"pooling must be 'none' or 'mean', got {self.pooling!r}")
        if self.n_classes != 2:
            raise DomainError("only binary classification (n_classes=2) is supported")
        if self.vocab_size < 2 or self.max_seq_len < 1:
            raise DomainError("vocab_size must be >= 2 and max_seq_len >= 1")

    @property
    def d_h(self) -> int:
        return self.d // self.n_heads


@dataclass(eq=False)
class LayerParams:
    heads: list[AttentionHead]
    w_o: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass(eq=False)
class EncoderModel:
    config: ModelConfig
    tok_emb: np.ndarray
    pos_emb: np.ndarray
    layers: list[LayerParams]
    cls_w: np.ndarray
    cls_b: np.ndarray


def init_model(config: ModelConfig) -> EncoderModel:
    """Unit-normal token embeddings, 0.02-scale positional embeddings,
    fan-in-scaled linear layers, zero biases.

    Heads follow ``init_head`` (0.02-scale projections, Kaiming mlp and
    cluster embeddings). Token embeddings at unit scale matter for
    trainability: attention logits are bilinear in the token features, so
    starting them several orders of magnitude too small stalls optimization
    on a long plateau before the query/key geometry can form. Positional
    embeddings start small instead. On tasks whose labels are permutation
    invariant, position is noise in the membership features, and a
    unit-scale positional signal drowns the token signal for long enough
    that the sampled masks drift sparse and cut the gradient path before
    anything is learned. The padding row of the token table is zeroed.
    """
    rng = rngs.substream(config.seed, rngs.STREAM_INIT)
    d, dff = config.d, config.d_ff

    def linear(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, (fan_in, fan_out))

    layers = []
    for _ in range(config.n_layers):
        heads = [init_head(d, config.d_h, config.k, rng, delta=config.delta,
                           self_loops=config.self_loops)
                 for _ in range(config.n_heads)]
        layers.append(LayerParams(
            heads=heads,
            w_o=linear(d, d),
            ffn_w1=linear(d, dff),
            ffn_b1=np.zeros(dff),
            ffn_w2=linear(dff, d),
            ffn_b2=np.zeros(d),
            ln1_g=np.ones(d), ln1_b=np.zeros(d),
            ln2_g=np.ones(d), ln2_b=np.zeros(d),
        ))
    tok_emb = rng.normal(0.0, 1.0, (config.vocab_size, d))
    tok_emb[PAD_ID] = 0.0
    return EncoderModel(
        config=config,
        tok_emb=tok_emb,
        pos_emb=rng.normal(0.0, 0.02, (config.max_seq_len, d)),
        layers=layers,
        cls_w=linear(d, 1),
        cls_b=np.zeros(1),
    )


def _param_slots(model: EncoderModel):
    yield "tok_emb", model, "tok_emb"
    yield "pos_emb", model, "pos_emb"
    for li, layer in enumerate(model.layers):
        for hi, head in enumerate(layer.heads):
            for name in head.params():
                yield f"layers.{li}.heads.{hi}.{name}", head, name
        for name in LAYER_PARAM_NAMES:
            yield f"layers.{li}.{name}", layer, name
    yield "cls_w", model, "cls_w"
    yield "cls_b", model, "cls_b"


def named_params(model: EncoderModel) -> dict[str, np.ndarray]:
    return {name: getattr(obj, attr) for name, obj, attr in _param_slots(model)}


def set_param(model: EncoderModel, name: str, value: np.ndarray) -> None:
    for slot_name, obj, attr in _param_slots(model):
        if slot_name == name:
            current = getattr(obj, attr)
            if current.shape != value.shape:
                raise ShapeError(f"{name}: shape {value.shape} != expected {current.shape}")
            setattr(obj, attr, np.asarray(value, dtype=np.float64))
            return
    raise InputError(f"unknown parameter {name!r}")


def _layernorm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * gain + bias, (xhat, inv)

def _layernorm_backward(dy: np.ndarray, cache, gain: np.ndarray):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    return dx, dg, db


def _dropout(x: np.ndarray, rate: float, rng: np.random.Generator):
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


@dataclass(eq=False)
class LayerTrace:
    head_traces: list[HeadForwardTrace]
    concat: np.ndarray
    drop_attn: np.ndarray | None
    ln1_cache: tuple
    x1n: np.ndarray
    ffn_pre: np.ndarray
    drop_ffn: np.ndarray | None
    ln2_cache: tuple


@dataclass(eq=False)
class ModelTrace:
    tokens: np.ndarray      # (B, n)
    valid: np.ndarray       # (B*n,) bool
    blocks: list[tuple[int, int]]
    x0: np.ndarray
    drop_emb: np.ndarray | None
    layer_traces: list[LayerTrace]
    x_final: np.ndarray
    pooled: np.ndarray | None
    logits: np.ndarray      # (B, n) for token-level, (B, 1) for pooled

    def head_densities(self) -> np.ndarray:
        """(n_layers, n_heads, n_blocks) per-sequence densities."""
        return np.array([[t.per_block_density for t in lt.head_traces]
                         for lt in self.layer_traces])

    def head_expected_densities(self) -> np.ndarray:
        """(n_layers, n_heads, n_blocks) per-sequence expected densities,
        mean of min(edge intensity, 1) rather than the realized draw."""
        return np.array([[t.expected_density() for t in lt.head_traces]
                         for lt in self.layer_traces])


def model_forward(model: EncoderModel, tokens: np.ndarray,
                  rng: np.random.Generator | None = None, *, training: bool = False,
                  injected_mask=None, count_ops: bool = False) -> ModelTrace:
    """Forward over a (B, n) batch of token ids (0 = padding)."""
    cfg = model.config
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    bsz, n = tokens.shape
    if n > cfg.max_seq_len:
        raise InputError(f"sequence length {n} exceeds max_seq_len {cfg.max_seq_len}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        bad = tokens.min() if tokens.min() < 0 else tokens.max()
        raise InputError(f"token id {bad} outside vocab [0, {cfg.vocab_size})")

    flat = tokens.ravel()
    valid = flat != PAD_ID
    blocks = [(b * n, (b + 1) * n) for b in range(bsz)]
    x = model.tok_emb[flat] + np.tile(model.pos_emb[:n], (bsz, 1))
    drop_emb = None
    if training and cfg.dropout > 0.0:
        x, drop_emb = _dropout(x, cfg.dropout, rng)
    x0 = x

    layer_traces = []
    for layer in model.layers:
        head_traces = [
            head_forward(head, x, rng, training=training, blocks=blocks,
                         injected_mask=injected_mask, valid=valid,
                         attn_dropout=cfg.attn_dropout, count_ops=count_ops)
            for head in layer.heads
        ]
        concat = np.concatenate([t.out for t in head_traces], axis=1)
        attn = concat @ layer.w_o
        drop_attn = None
        if training and cfg.dropout > 0.0:
            attn, drop_attn = _dropout(attn, cfg.dropout, rng)
        x1n, ln1_cache = _layernorm(x + attn, layer.ln1_g, layer.ln1_b)
        ffn_pre = x1n @ layer.ffn_w1 + layer.ffn_b1
        ffn = relu(ffn_pre) @ layer.ffn_w2 + layer.ffn_b2
        drop_ffn = None
        if training and cfg.dropout > 0.0:
            ffn, drop_ffn = _dropout(ffn, cfg.dropout, rng)
        x2n, ln2_cache = _layernorm(x1n + ffn, layer.ln2_g, layer.ln2_b)
        layer_traces.append(LayerTrace(head_traces=head_traces, concat=concat,
                                       drop_attn=drop_attn, ln1_cache=ln1_cache,
                                       x1n=x1n, ffn_pre=ffn_pre, drop_ffn=drop_ffn,
                                       ln2_cache=ln2_cache))
        x = x2n

    pooled = None
    if cfg.pooling == "mean":
        counts = valid.reshape(bsz, n).sum(axis=1, keepdims=True)
        if (counts == 0).any():
            raise InputError("a fully padded sequence cannot be mean-pooled")
        pooled = (x.reshape(bsz, n, -1) * valid.reshape(bsz, n, 1)).sum(axis=1) / counts
        logits = pooled @ model.cls_w + model.cls_b
    else:
        logits = (x @ model.cls_w + model.cls_b).reshape(bsz, n)
    return ModelTrace(tokens=tokens, valid=valid, blocks=blocks, x0=x0, drop_emb=drop_emb,
                      layer_traces=layer_traces, x_final=x, pooled=pooled, logits=logits)


def model_backward(model: EncoderModel, trace: ModelTrace, dlogits: np.ndarray,
                   lambda_density: float = 0.0,
                   head_grad_sink: dict | None = None) -> dict[str, np.ndarray]:
    """Gradients for every named parameter given dL/dlogits.

    ``lambda_density`` is the per-forward regularizer weight handed to each
    head (callers averaging over a batch pass lambda / batch_size). When
    ``head_grad_sink`` is a dict it receives each head's HeadGradients under
    the key ``(layer_index, head_index)``, exposing the per-edge
    straight-through values to gradient checkers.
    """
    cfg = model.config
    bsz, n = trace.tokens.shape
    n_heads_total = cfg.n_layers * cfg.n_heads
    grads = {name: np.zeros_like(p) for name, p in named_params(model).items()}

    if cfg.pooling == "mean":
        counts = trace.valid.reshape(bsz, n).sum(axis=1, keepdims=True)
        grads["cls_w"] += trace.pooled.T @ dlogits
        grads["cls_b"] += dlogits.sum(axis=0)
        dpooled = dlogits @ model.cls_w.T
        dx = ((dpooled / counts)[:, None, :]
              * trace.valid.reshape(bsz, n, 1)).reshape(bsz * n, -1)
    else:
        dflat = dlogits.reshape(bsz * n, 1)
        grads["cls_w"] += trace.x_final.T @ dflat
        grads["cls_b"] += dflat.sum(axis=0)
        dx = dflat @ model.cls_w.T

    for li in reversed(range(cfg.n_layers)):
        layer = model.layers[li]
        lt = trace.layer_traces[li]
        dx2, dg2, db2 = _layernorm_backward(dx, lt.ln2_cache, layer.ln2_g)
        grads[f"layers.{li}.ln2_g"] += dg2
        grads[f"layers.{li}.ln2_b"] += db2
        dffn = dx2 * lt.drop_ffn if lt.drop_ffn is not None else dx2
        act = relu(lt.ffn_pre)
        grads[f"layers.{li}.ffn_w2"] += act.T @ dffn
        grads[f"layers.{li}.ffn_b2"] += dffn.sum(axis=0)
        dact = dffn @ layer.ffn_w2.T
        dpre = dact * (lt.ffn_pre > 0)
        grads[f"layers.{li}.ffn_w1"] += lt.x1n.T @ dpre
        grads[f"layers.{li}.ffn_b1"] += dpre.sum(axis=0)
        dx1n = dx2 + dpre @ layer.ffn_w1.T
        dx1, dg1, db1 = _layernorm_backward(dx1n, lt.ln1_cache, layer.ln1_g)
        grads[f"layers.{li}.ln1_g"] += dg1
        grads[f"layers.{li}.ln1_b"] += db1
        dattn = dx1 * lt.drop_attn if lt.drop_attn is not None else dx1
        grads[f"layers.{li}.w_o"] += lt.concat.T @ dattn
        dconcat = dattn @ layer.w_o.T
        dx = dx1.copy()
        d_h = cfg.d_h
        for hi, head in enumerate(layer.heads):
            hg = head_backward(lt.head_traces[hi], head,
                               dconcat[:, hi * d_h:(hi + 1) * d_h],
                               lambda_density=lambda_density,
                               n_heads_total=n_heads_total)
            if head_grad_sink is not None:
                head_grad_sink[(li, hi)] = hg
            for pname, g in hg.params.items():
                grads[f"layers.{li}.heads.{hi}.{pname}"] += g
            dx += hg.dx

    if trace.drop_emb is not None:
        dx = dx * trace.drop_emb
    np.add.at(grads["tok_emb"], trace.tokens.ravel(), dx)
    grads["pos_emb"][:n] += dx.reshape(bsz, n, -1).sum(axis=0)
    return grads


@dataclass
class TrainMetrics:
    step: int
    loss: float          # bce + lambda * mean density
    bce: float
    accuracy: float
    density_mean: float
    expected_density_mean: float     # mean of min(intensity, 1): see expected_density
    density_by_head: np.ndarray      # (n_layers, n_heads) mean over the batch
    density_std_by_head: np.ndarray  # (n_layers, n_heads) std over the batch
    wall_clock: float
    flops_attention_total: float


def _attention_flops(trace: ModelTrace, cfg: ModelConfig) -> float:
    # Analytic per-head cost at the observed edge counts (see costing module).
    n = trace.tokens.shape[1]
    h, k = cfg.d_h, cfg.k
    per_head_static = (8 * n * h * h + 4 * n * h * k + 2 * k * k * h) * trace.tokens.shape[0]
    total = 0.0
    for lt in trace.layer_traces:
        for t in lt.head_traces:
            m = t.edge_rows.size
            total += per_head_static + 4.0 * m * h + 5.0 * m
    return total


def _accuracy(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    pred = sigmoid(logits) > 0.5
    hit = (pred == (targets > 0.5))[mask]
    return float(hit.mean()) if hit.size else 0.0


def train_step(model: EncoderModel, batch: LabeledBatch, opt: dict[str, AdamState],
               rng: np.random.Generator, step: int = 0, lr: float = 1e-3) -> TrainMetrics:
    """One optimizer step on one batch; mutates model parameters and ``opt``."""
    t0 = time.perf_counter()
    cfg = model.config
    bsz = batch.tokens.shape[0]
    trace = model_forward(model, batch.tokens, rng, training=True)
    if cfg.pooling == "mean":
        mask = np.ones_like(batch.targets, dtype=bool)
    else:
        mask = trace.valid.reshape(batch.tokens.shape)
    bce, dlogits = bce_loss(trace.logits, batch.targets, mask)

    dens = trace.head_densities()        # (L, H, B)
    density_mean = float(dens.mean())
    loss = bce + cfg.lambda_density * density_mean
    if not np.isfinite(loss):
        raise NonFiniteLossError(
            f"non-finite loss at step {step}",
            diagnostics={"step": step, "bce": bce,
                         "per_head_density": dens.mean(axis=2).tolist(),
                         "max_abs_logit": float(np.abs(trace.logits).max())},
        )

    grads = model_backward(model, trace, dlogits,
                           lambda_density=cfg.lambda_density / bsz)
    params = named_params(model)
    for name, g in grads.items():
        state = opt.get(name)
        if state is None:
            state = AdamState.fresh(g.shape, lr=lr)
        new_p, opt[name] = adam_update(params[name], g, state)
        set_param(model, name, new_p)

    return TrainMetrics(
        step=step, loss=loss, bce=bce,
        accuracy=_accuracy(trace.logits, batch.targets, mask),
        density_mean=density_mean,
        expected_density_mean=float(trace.head_expected_densities().mean()),
        density_by_head=dens.mean(axis=2),
        density_std_by_head=dens.std(axis=2),
        wall_clock=time.perf_counter() - t0,
        flops_attention_total=_attention_flops(trace, cfg),
    )


@dataclass
class EvalStats:
    loss: float
    accuracy: float
    density_mean: np.ndarray  # (n_layers, n_heads)
    density_std: np.ndarray
    n_tokens: int


def evaluate(model: EncoderModel, batches, rng: np.random.Generator) -> EvalStats:
    """Loss/accuracy/density over ``batches`` without touching parameters.

    Masks are still sampled (the model is stochastic at inference); the
    exploration floor and dropout are off.
    """
    cfg = model.config
    total_loss = 0.0
    total_hits = 0.0
    total_count = 0
    dens_parts = []
    for batch in batches:
        trace = model_forward(model, batch.tokens, rng, training=False)
        if cfg.pooling == "mean":
            mask = np.ones_like(batch.targets, dtype=bool)
        else:
            mask = trace.valid.reshape(batch.tokens.shape)
        bce, _ = bce_loss(trace.logits, batch.targets, mask)
        count = int(mask.sum())
        total_loss += bce * count
        total_hits += _accuracy(trace.logits, batch.targets, mask) * count
        total_count += count
        dens_parts.append(trace.head_densities())
    if total_count == 0:
        raise DomainError("evaluate needs at least one unmasked target")
    dens = np.concatenate(dens_parts, axis=2)
    return EvalStats(loss=total_loss / total_count, accuracy=total_hits / total_count,
                     density_mean=dens.mean(axis=2), density_std=dens.std(axis=2),
                     n_tokens=total_count)


def train_loop(model: EncoderModel, task: TaskConfig, steps: int, lr: float = 1e-3, *,
               on_step=None, stop_bce: float | None = None) -> list[TrainMetrics]:
    """Fresh-batch training: step t draws its batch from substream (TASK, t)
    and its forward randomness from (FORWARD, t), both under the model seed."""
    seed = model.config.seed
    opt: dict[str, AdamState] = {}
    history = []
    for step in range(steps):
        batch = generate_batch(task, rngs.substream(seed, rngs.STREAM_TASK, step))
        metrics = train_step(model, batch, opt,
                             rngs.substream(seed, rngs.STREAM_FORWARD, step),
                             step=step, lr=lr)
        history.append(metrics)
        if on_step is not None:
            on_step(metrics)
        if stop_bce is not None and metrics.bce < stop_bce:
            break
    return history
