"""Linear-time sampling of binary bipartite masks from a stochastic block model.

Given nonnegative query memberships Y (n_q x k), block intensities B (k x k)
and key memberships Z (n_k x k), the intensity of pair (i, j) is
``(Y B Z^T)_{ij}``. Sampling never materializes that n_q x n_k product:

1. column-normalize Y and Z, folding the column sums into
   ``Bbar_{uv} = colsum_Y(u) * B_{uv} * colsum_Z(v)``;
2. draw the raw edge count ``m ~ Poisson(sum(Bbar))``;
3. per edge, draw a cluster pair (u, v) with probability proportional to
   ``Bbar``, then a source from column u of the normalized Y and a
   destination from column v of the normalized Z;
4. deduplicate repeated pairs into a sorted CSR edge list.

Each pair is then present with probability ``1 - exp(-intensity)``, and the
expected number of raw draws landing on (i, j) is exactly the intensity.
Cluster pairs are drawn by inverse CDF over the nonzero entries of ``Bbar``;
nodes are drawn from per-column Walker alias tables, so zero-intensity pairs
are structurally unreachable.

When the intensity is meant as a presence *probability* (the attention layer
treats ``(Y B Z^T)_{ij}`` as P(edge i-j)), the raw draw-and-dedup law is too
thin: presence saturates at ``1 - 1/e`` when the intensity tops out at 1.
``sample_bernoulli_mask`` closes that gap by oversampling at a boosted
intensity and thinning each distinct pair, so presence equals
``min(intensity, PRESENCE_CAP)`` exactly while the work stays linear in the
draw count.

RNG consumption order inside ``sample_mask`` is fixed: one Poisson draw, one
uniform array for cluster pairs, then two uniform arrays each for sources and
destinations. The Bernoulli variants append one uniform array over the
distinct sampled pairs (per block for the stacked version).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError

# Highest realizable per-pair presence probability. Exact presence p needs
# Poisson intensity -ln(1 - p), which diverges as p -> 1, so the target is
# clamped here and the oversampling factor stays finite.
PRESENCE_CAP = 0.995


@dataclass(frozen=True, eq=False)
class SbmParams:
    """Nonnegative low-rank factorization (Y, B, Z) of a bipartite intensity matrix."""

    y: np.ndarray  # (n_q, k) query memberships
    b: np.ndarray  # (k, k) block intensities
    z: np.ndarray  # (n_k, k) key memberships

    def __post_init__(self):
        for name, a in (("y", self.y), ("b", self.b), ("z", self.z)):
            if a.ndim != 2:
                raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
        k = self.b.shape[0]
        if self.b.shape != (k, k):
            raise ShapeError(f"b must be square, got {self.b.shape}")
        if self.y.shape[1] != k or self.z.shape[1] != k:
            raise ShapeError(
                f"membership widths {self.y.shape[1]}/{self.z.shape[1]} != block size {k}"
            )
        if self.y.min(initial=0.0) < 0 or self.b.min(initial=0.0) < 0 or self.z.min(initial=0.0) < 0:
            raise DomainError("SBM parameters must be nonnegative")

    @property
    def n_q(self) -> int:
        return self.y.shape[0]

    @property
    def n_k(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.b.shape[0]

    def intensity(self, i: int, j: int) -> float:
        """Expected raw draw count for pair (i, j); O(k^2), for tests and desk checks."""
        return float(self.y[i] @ self.b @ self.z[j])


@dataclass(frozen=True, eq=False)
class NormalizedSbm:
    """Column-stochastic memberships plus the rescaled block matrix."""

    ybar: np.ndarray      # (n_q, k), columns sum to 1 (or all-zero if empty)
    zbar: np.ndarray      # (n_k, k)
    bbar: np.ndarray      # (k, k), absorbs both column-sum scalings
    total_intensity: float
    empty_y: np.ndarray   # (k,) bool, column had zero mass
    empty_z: np.ndarray


def normalize(params: SbmParams) -> NormalizedSbm:
    """Fold membership column sums into the block matrix.

    ``sum(bbar)`` equals the total intensity ``1^T Y B Z^T 1``. Empty
    membership columns are flagged and left all-zero; their block rows or
    columns vanish, so they can never be drawn.
    """
    cy = params.y.sum(axis=0)
    cz = params.z.sum(axis=0)
    empty_y = cy == 0
    empty_z = cz == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ybar = np.where(empty_y[None, :], 0.0, params.y / np.where(empty_y, 1.0, cy))
        zbar = np.where(empty_z[None, :], 0.0, params.z / np.where(empty_z, 1.0, cz))
    bbar = cy[:, None] * params.b * cz[None, :]
    return NormalizedSbm(
        ybar=ybar, zbar=zbar, bbar=bbar,
        total_intensity=float(bbar.sum()),
        empty_y=empty_y, empty_z=empty_z,
    )


class AliasTable:
    """Walker/Vose alias table over nonnegative weights.

    O(size) construction, O(1) per draw. Zero-weight outcomes never appear:
    their cells carry probability 0 and alias targets come from the nonzero
    support, with an explicit guard against float drift in the pairing loop.
    """

    __slots__ = ("size", "total", "prob", "alias")

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1:
            raise ShapeError(f"weights must be 1-D, got shape {w.shape}")
        if w.size == 0:
            raise DomainError("cannot build an alias table over zero outcomes")
        if w.min() < 0:
            raise DomainError("alias weights must be nonnegative")
        self.size = w.size
        self.total = float(w.sum())
        if self.total <= 0:
            raise DomainError("alias weights must have positive total mass")
        n = self.size
        scaled = (w * (n / self.total)).tolist()
        prob = [0.0] * n
        alias = [0] * n
        support = [i for i in range(n) if scaled[i] > 0.0]
        # zero-weight cells join the small stack so their uniform slot is
        # handed to a heavy alias; leaving them out would dump that mass on
        # whatever the alias array was initialized with
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in support if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        fallback = support[0]
        for leftover in large + small:
            # Exact arithmetic leaves these at 1; drift guard keeps true
            # zeros (weight 0) unreachable regardless.
            prob[leftover] = 1.0 if w[leftover] > 0 else 0.0
            alias[leftover] = fallback
        self.prob = np.asarray(prob)
        self.alias = np.asarray(alias, dtype=np.int64)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` outcomes; consumes two uniform arrays of length count."""
        cell = rng.integers(0, self.size, size=count)
        coin = rng.random(count)
        return np.where(coin < self.prob[cell], cell, self.alias[cell])


@dataclass
class SampleCounter:
    """Operation/allocation counters for the sampling path (no wall clocks)."""

    draw_ops: int = 0     # categorical and alias draws, 1 per drawn value
    table_ops: int = 0    # cells touched building tables / CDFs
    alloc_floats: int = 0 # float slots allocated for tables, CDFs, edge buffers

    @property
    def total_ops(self) -> int:
        return self.draw_ops + self.table_ops


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Binary bipartite mask as a deduplicated CSR edge list.

    ``rows``/``cols`` are sorted by (row, col); ``indptr`` has length
    ``n_q + 1``. ``n_draws`` records the raw Poisson draw count before
    deduplication (0 for masks not produced by sampling).
    """

    n_q: int
    n_k: int
    rows: np.ndarray
    cols: np.ndarray
    indptr: np.ndarray
    n_draws: int = 0
    _col_cache: list = field(default_factory=list, repr=False, compare=False)

    @property
    def m(self) -> int:
        return int(self.rows.size)

    def density(self) -> float:
        return self.m / (self.n_q * self.n_k)

    def contains(self, i: int, j: int) -> bool:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + np.searchsorted(self.cols[lo:hi], j)
        return pos < hi and self.cols[pos] == j

    def to_pairs(self) -> np.ndarray:
        return np.stack([self.rows, self.cols], axis=1)

    def col_view(self) -> tuple[np.ndarray, np.ndarray]:
        """(permutation sorting edges by column, CSC-style indptr); cached."""
        if not self._col_cache:
            order = np.argsort(self.cols, kind="stable")
            cptr = np.zeros(self.n_k + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.cols, minlength=self.n_k), out=cptr[1:])
            self._col_cache.append((order, cptr))
        return self._col_cache[0]

    @classmethod
    def from_codes(cls, n_q: int, n_k: int, codes: np.ndarray, n_draws: int = 0) -> "EdgeMask":
        """Build from (possibly duplicated) flat codes ``i * n_k + j``."""
        codes = np.unique(np.asarray(codes, dtype=np.int64))
        rows = codes // n_k
        cols = codes % n_k
        indptr = np.zeros(n_q + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_q), out=indptr[1:])
        return cls(n_q=n_q, n_k=n_k, rows=rows, cols=cols, indptr=indptr, n_draws=n_draws)

    @classmethod
    def from_pairs(cls, n_q: int, n_k: int, pairs) -> "EdgeMask":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (
            pairs.min() < 0 or pairs[:, 0].max() >= n_q or pairs[:, 1].max() >= n_k
        ):
            raise DomainError(f"edge indices out of range for a {n_q}x{n_k} mask")
        return cls.from_codes(n_q, n_k, pairs[:, 0] * n_k + pairs[:, 1])

    @classmethod
    def empty(cls, n_q: int, n_k: int) -> "EdgeMask":
        return cls.from_codes(n_q, n_k, np.empty(0, dtype=np.int64))

    @classmethod
    def identity(cls, n: int) -> "EdgeMask":
        d = np.arange(n, dtype=np.int64)
        return cls.from_codes(n, n, d * n + d)

    @classmethod
    def full(cls, n_q: int, n_k: int) -> "EdgeMask":
        return cls.from_codes(n_q, n_k, np.arange(n_q * n_k, dtype=np.int64))


def mask_density(mask: EdgeMask) -> float:
    """Fraction of the n_q x n_k grid covered by edges."""
    return mask.density()


def add_self_loops(mask: EdgeMask) -> EdgeMask:
    """Union the mask with the full diagonal (square masks only)."""
    if mask.n_q != mask.n_k:
        raise DomainError(f"self-loops need a square mask, got {mask.n_q}x{mask.n_k}")
    diag = np.arange(mask.n_q, dtype=np.int64) * (mask.n_k + 1)
    codes = np.concatenate([mask.rows * mask.n_k + mask.cols, diag])
    return EdgeMask.from_codes(mask.n_q, mask.n_k, codes, n_draws=mask.n_draws)


def with_exploration(params: SbmParams, delta: float) -> SbmParams:
    """Add a background cluster raising every pair's intensity by exactly ``delta``.

    Both membership matrices gain an all-ones column and the block matrix a
    single diagonal entry ``delta``, so sampling stays O(edges) instead of
    touching all n_q * n_k pairs. ``delta`` itself receives no gradient
    anywhere; it is a sampling-time floor only.
    """
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"exploration delta must be in [0, 1], got {delta}")
    if delta == 0.0:
        return params
    k = params.k
    b = np.zeros((k + 1, k + 1))
    b[:k, :k] = params.b
    b[k, k] = delta
    ones_q = np.ones((params.n_q, 1))
    ones_k = np.ones((params.n_k, 1))
    return SbmParams(
        y=np.hstack([params.y, ones_q]),
        b=b,
        z=np.hstack([params.z, ones_k]),
    )


def _column_tables(matrix: np.ndarray, used: np.ndarray,
                   counter: SampleCounter | None) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (prob, alias) arrays for the used columns of a normalized matrix."""
    n = matrix.shape[0]
    probs = np.empty((used.size, n))
    aliases = np.empty((used.size, n), dtype=np.int64)
    for pos, col in enumerate(used):
        table = AliasTable(matrix[:, col])
        probs[pos] = table.prob
        aliases[pos] = table.alias
    if counter is not None:
        counter.table_ops += used.size * n
        counter.alloc_floats += 2 * used.size * n
    return probs, aliases


def _draw_nodes(probs: np.ndarray, aliases: np.ndarray, col_pos: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """Vectorized alias draws, one per edge, from the stacked column tables."""
    n = probs.shape[1]
    cell = rng.integers(0, n, size=col_pos.size)
    coin = rng.random(col_pos.size)
    keep = coin < probs[col_pos, cell]
    return np.where(keep, cell, aliases[col_pos, cell])


def sample_mask(params: SbmParams, rng: np.random.Generator,
                counter: SampleCounter | None = None) -> EdgeMask:
    """Sample a binary mask whose pair (i, j) appears with prob ``1 - exp(-intensity)``.

    Work is O(m + tables) where m is the Poisson draw count; the dense
    intensity matrix is never formed. Deterministic given the generator
    state. Tables are rebuilt per call from the current parameters.
    """
    norm = normalize(params)
    k = params.k
    if counter is not None:
        counter.table_ops += k * k  # bbar assembly
    total = norm.total_intensity
    m = int(rng.poisson(total)) if total > 0 else 0
    if counter is not None:
        counter.draw_ops += 1
    if m == 0:
        return EdgeMask.empty(params.n_q, params.n_k)

    # Cluster pairs by inverse CDF over the nonzero entries of bbar.
    flat = norm.bbar.ravel()
    nz = np.flatnonzero(flat)
    cdf = np.cumsum(flat[nz])
    r = rng.random(m) * cdf[-1]
    pos = np.minimum(np.searchsorted(cdf, r, side="right"), nz.size - 1)
    cells = nz[pos]
    us = cells // k
    vs = cells % k
    if counter is not None:
        counter.table_ops += nz.size
        counter.alloc_floats += nz.size + m
        counter.draw_ops += m

    # Node draws from per-column alias tables, built lazily for used columns.
    used_u = np.unique(us)
    used_v = np.unique(vs)
    probs_u, alias_u = _column_tables(norm.ybar, used_u, counter)
    probs_v, alias_v = _column_tables(norm.zbar, used_v, counter)
    srcs = _draw_nodes(probs_u, alias_u, np.searchsorted(used_u, us), rng)
    dsts = _draw_nodes(probs_v, alias_v, np.searchsorted(used_v, vs), rng)
    if counter is not None:
        counter.draw_ops += 2 * m
        counter.alloc_floats += 2 * m

    codes = srcs * params.n_k + dsts
    return EdgeMask.from_codes(params.n_q, params.n_k, codes, n_draws=m)


def presence_boost(cap: float = PRESENCE_CAP) -> float:
    """Oversampling factor c with ``c * p >= -ln(1 - p)`` for all p <= cap.

    ``-ln(1 - p) / p`` is increasing on (0, 1), so its value at the cap
    bounds it everywhere below; a rate-(c * p) Poisson then lands at least
    one draw on a pair often enough that thinning down to probability p is
    possible.
    """
    if not 0.0 < cap < 1.0:
        raise DomainError(f"presence cap must be in (0, 1), got {cap}")
    return -math.log1p(-cap) / cap


def _thin_to_presence(mask: EdgeMask, p: np.ndarray, boost: float, cap: float,
                      rng: np.random.Generator,
                      counter: SampleCounter | None) -> EdgeMask:
    """Keep each distinct pair with prob ``min(p, cap) / (1 - exp(-boost * p))``.

    Composing with the draw-and-dedup presence ``1 - exp(-boost * p)`` leaves
    each pair present with probability ``min(p, cap)`` exactly. Sampled pairs
    always have p > 0, so the ratio is well defined and <= 1 by the choice of
    ``boost``.
    """
    denom = -np.expm1(-boost * p)
    accept = np.minimum(p, cap) / np.where(denom > 0.0, denom, 1.0)
    keep = rng.random(mask.m) < accept
    if counter is not None:
        counter.draw_ops += mask.m
        counter.alloc_floats += 3 * mask.m
    codes = mask.rows[keep] * mask.n_k + mask.cols[keep]
    return EdgeMask.from_codes(mask.n_q, mask.n_k, codes, n_draws=mask.n_draws)


def _pair_intensities(yb: np.ndarray, z: np.ndarray, mask: EdgeMask,
                      counter: SampleCounter | None) -> np.ndarray:
    """Per-edge intensities ``(Y B)_i . Z_j`` for the distinct sampled pairs."""
    if counter is not None:
        counter.table_ops += mask.m * z.shape[1]
    return np.einsum("ek,ek->e", yb[mask.rows], z[mask.cols])


def sample_bernoulli_mask(params: SbmParams, rng: np.random.Generator,
                          counter: SampleCounter | None = None,
                          cap: float = PRESENCE_CAP) -> EdgeMask:
    """Sample a mask whose pair (i, j) is present with prob ``min(intensity, cap)``.

    Runs ``sample_mask`` at ``presence_boost(cap)`` times the intensity, then
    thins the distinct pairs. Work stays O(draws + tables); intensities above
    the cap (legal inputs here, unlike in ``sample_mask``'s probability-free
    reading) saturate at the cap.
    """
    boost = presence_boost(cap)
    scaled = SbmParams(y=params.y, b=params.b * boost, z=params.z)
    raw = sample_mask(scaled, rng, counter)
    if raw.m == 0:
        return raw
    p = _pair_intensities(params.y @ params.b, params.z, raw, counter)
    if counter is not None:
        counter.table_ops += params.n_q * params.k * params.k
    return _thin_to_presence(raw, p, boost, cap, rng, counter)


def _stacked_cdf_lookup(weights: np.ndarray, blk: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw within each row of ``weights`` (B, size).

    ``blk`` assigns each query to a row; ``u`` must lie in (0, 1] so bins of
    zero weight (flat stretches of the CDF) are never selected. One global
    searchsorted resolves every query: each row's normalized CDF is offset by
    its row index, making the flattened array nondecreasing.
    """
    size = weights.shape[1]
    cdf = np.cumsum(weights, axis=1)
    last = cdf[:, -1].copy()
    safe = np.where(last > 0.0, last, 1.0)
    flat = (cdf / safe[:, None] + np.arange(weights.shape[0])[:, None]).ravel()
    idx = np.searchsorted(flat, blk + u, side="left")
    return idx - blk * size


def sample_mask_blocks(y: np.ndarray, b: np.ndarray, z: np.ndarray,
                       rng: np.random.Generator,
                       counter: SampleCounter | None = None) -> list[EdgeMask]:
    """One mask per batch block, drawn in a single vectorized sweep.

    ``y`` is a (B, n_q, k) membership stack, ``z`` is (B, n_k, k), and ``b``
    is the (k, k) block matrix shared by every block. Each block's mask has
    the same law as ``sample_mask`` on that block's parameters; only the
    mechanics differ: node draws use inverse-CDF lookups over per-block
    cumulative sums instead of per-column alias tables, trading O(1) draws
    for O(log n) ones so the whole batch needs four numpy passes instead of
    a table construction per block and column.

    Draw order: one Poisson per block (a single vectorized call), then one
    uniform per raw edge for the cluster pair, one for the source node, and
    one for the destination node.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.ndim != 3 or z.ndim != 3 or y.shape[0] != z.shape[0]:
        raise ShapeError(f"membership stacks must be (B, n, k), got {y.shape} and {z.shape}")
    nblk, n_q, ky = y.shape
    _, n_k, kz = z.shape
    if b.shape != (ky, kz):
        raise ShapeError(f"block matrix {b.shape} does not join widths {ky} and {kz}")
    if y.min() < 0 or z.min() < 0 or b.min() < 0:
        raise DomainError("intensity factors must be nonnegative")

    ycs = y.sum(axis=1)                                   # (B, ky)
    zcs = z.sum(axis=1)                                   # (B, kz)
    bbar = ycs[:, :, None] * b[None, :, :] * zcs[:, None, :]
    flat_bbar = bbar.reshape(nblk, ky * kz)
    totals = flat_bbar.sum(axis=1)
    raw = rng.poisson(totals)                             # (B,)
    total_m = int(raw.sum())
    if counter is not None:
        counter.draw_ops += nblk + 3 * total_m
        counter.table_ops += bbar.size + y.size + z.size
        counter.alloc_floats += bbar.size + y.size + z.size + 3 * total_m
    area = n_q * n_k
    if total_m == 0:
        return [EdgeMask.empty(n_q, n_k) for _ in range(nblk)]

    blk = np.repeat(np.arange(nblk), raw)
    cells = _stacked_cdf_lookup(flat_bbar, blk, 1.0 - rng.random(total_m))
    us = cells // kz
    vs = cells % kz

    # Source rows: weights down each block's cluster column, laid out as
    # (B, k, n) so (block, cluster) indexes a contiguous run of node weights.
    yrows = y.transpose(0, 2, 1).reshape(nblk * ky, n_q)
    zrows = z.transpose(0, 2, 1).reshape(nblk * kz, n_k)
    srcs = _stacked_cdf_lookup(yrows, blk * ky + us, 1.0 - rng.random(total_m))
    dsts = _stacked_cdf_lookup(zrows, blk * kz + vs, 1.0 - rng.random(total_m))

    codes = np.unique(blk * area + srcs * n_k + dsts)
    bounds = np.searchsorted(codes, np.arange(nblk + 1) * area)
    masks = []
    for bi in range(nblk):
        local = codes[bounds[bi]:bounds[bi + 1]] - bi * area
        rows = local // n_k
        cols = local % n_k
        indptr = np.zeros(n_q + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_q), out=indptr[1:])
        masks.append(EdgeMask(n_q=n_q, n_k=n_k, rows=rows, cols=cols,
                              indptr=indptr, n_draws=int(raw[bi])))
    return masks


def sample_bernoulli_blocks(y: np.ndarray, b: np.ndarray, z: np.ndarray,
                            rng: np.random.Generator,
                            counter: SampleCounter | None = None,
                            cap: float = PRESENCE_CAP) -> list[EdgeMask]:
    """Per-block masks with presence ``min(intensity, cap)``; see ``sample_bernoulli_mask``.

    Same marginal law per block as the single-block version, but drawn through
    ``sample_mask_blocks`` and thinned block by block, so the generator is
    consumed differently.
    """
    boost = presence_boost(cap)
    masks = sample_mask_blocks(y, b * boost, z, rng, counter)
    yb = np.asarray(y, dtype=np.float64) @ b
    z = np.asarray(z, dtype=np.float64)
    if counter is not None:
        counter.table_ops += yb.size * b.shape[0]
    out = []
    for bi, mask in enumerate(masks):
        if mask.m == 0:
            out.append(mask)
            continue
        p = _pair_intensities(yb[bi], z[bi], mask, counter)
        out.append(_thin_to_presence(mask, p, boost, cap, rng, counter))
    return out


def write_mask(mask: EdgeMask, fh) -> None:
    """Text dump: header ``n_q n_k num_edges`` then one ascending ``i j`` per line."""
    fh.write(f"{mask.n_q} {mask.n_k} {mask.m}\n")
    for i, j in zip(mask.rows.tolist(), mask.cols.tolist()):
        fh.write(f"{i} {j}\n")


def read_mask(fh) -> EdgeMask:
    header = fh.readline().split()
    if len(header) != 3:
        raise DomainError("mask dump must start with 'n_q n_k num_edges'")
    n_q, n_k, m = (int(x) for x in header)
    pairs = np.loadtxt(fh, dtype=np.int64, ndmin=2) if m else np.empty((0, 2), dtype=np.int64)
    if pairs.shape[0] != m:
        raise DomainError(f"mask dump declares {m} edges but contains {pairs.shape[0]}")
    return EdgeMask.from_pairs(n_q, n_k, pairs)
