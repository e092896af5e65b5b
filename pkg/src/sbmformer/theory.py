"""Executable checks behind the universal-approximation argument.

Sparse attention with supports A_i (the keys query i attends to) keeps a
transformer a universal approximator when, across the p alternating
patterns:

1. every pattern contains all self-loops;
2. the union digraph (edge u -> v whenever v attends to u in some pattern)
   has a Hamiltonian path;
3. repeated application of the patterns reaches every token from every
   token: S_i^1 = A_i under the first pattern, S_i^t = union of S_j^{t-1}
   over j in A_i under pattern ((t-1) mod p) + 1, and some finite s has
   S_i^s = [n] for all i.

``build_patterns`` constructs the three canonical patterns: block-diagonal
clusters, everyone-to-the-last-k relays, and relays-to-everyone, plus SBM
parameter realizations that sample them. ``verify_assumption1`` checks the
three conditions constructively. The module also evaluates the
Hamiltonian-cycle expectation p^n (n-1)! of a directed G(n, p) and its
threshold probability (e/n) n^(1/n), with exact Monte Carlo cycle counts at
desk scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sampler import SbmParams

# Intensity per required edge in the SBM realizations: presence probability
# 1 - exp(-14) > 1 - 1e-6 per pair.
PATTERN_INTENSITY = 14.0


@dataclass(frozen=True)
class SparsityPattern:
    """Directed attention support: (i, j) present means query i attends key j."""

    n: int
    edges: frozenset
    tag: str

    def attends(self, i: int, j: int) -> bool:
        return (i, j) in self.edges

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            idx = np.asarray(sorted(self.edges))
            out[idx[:, 0], idx[:, 1]] = True
        return out


@dataclass
class AssumptionReport:
    condition1: bool
    condition2: bool
    witness_path: list | None
    condition3: bool
    s: int | None
    rotation: int | None   # index of the pattern applied at t=1 for the best s
    edges_per_pattern: list
    passed: bool

    def lines(self) -> list[str]:
        out = [
            f"condition 1 (self-loops in every pattern): {'pass' if self.condition1 else 'FAIL'}",
            f"condition 2 (Hamiltonian path in the union): {'pass' if self.condition2 else 'FAIL'}",
        ]
        if self.witness_path is not None:
            out.append(f"  witness: {' -> '.join(str(v) for v in self.witness_path)}")
        out.append(
            f"condition 3 (full reachability): {'pass' if self.condition3 else 'FAIL'}"
            + (f", s = {self.s} starting from pattern {self.rotation + 1}" if self.s else "")
        )
        out.append(f"edges per pattern: {self.edges_per_pattern}")
        return out


def _cluster(i: int, n: int, k: int) -> int:
    return i * k // n


def build_patterns(n: int, k: int) -> tuple[list[SparsityPattern], list[SbmParams]]:
    """The three canonical patterns on n tokens with k clusters/relays.

    - ``clusters``: i attends j iff both share cluster floor(i*k/n); includes
      the diagonal by construction.
    - ``to-relays``: everyone attends the last k tokens, plus self-loops.
    - ``from-relays``: the last k tokens attend everyone; others only themselves.

    Also returns one SbmParams realization per pattern whose sampled mask is
    always a subset of the pattern and covers it with probability
    >= 1 - n^2 exp(-14) per draw. The relay realizations omit the diagonal
    (rank-k factors cannot express identity); union the sample with
    ``add_self_loops`` to realize the full pattern.
    """
    if k < 2 or n <= k or n % k != 0:
        raise DomainError(f"need k >= 2, n > k and k | n, got n={n}, k={k}")
    relays = set(range(n - k, n))

    cluster_edges = frozenset(
        (i, j) for i in range(n) for j in range(n)
        if _cluster(i, n, k) == _cluster(j, n, k)
    )
    to_relay_edges = frozenset(
        (i, j) for i in range(n) for j in range(n) if j in relays or i == j
    )
    from_relay_edges = frozenset(
        (i, j) for i in range(n) for j in range(n) if i in relays or i == j
    )
    patterns = [
        SparsityPattern(n=n, edges=cluster_edges, tag="clusters"),
        SparsityPattern(n=n, edges=to_relay_edges, tag="to-relays"),
        SparsityPattern(n=n, edges=from_relay_edges, tag="from-relays"),
    ]

    onehot = np.zeros((n, k))
    onehot[np.arange(n), [_cluster(i, n, k) for i in range(n)]] = 1.0
    relay_col = np.zeros((n, 1))
    relay_col[n - k:, 0] = 1.0
    ones = np.ones((n, 1))
    realizations = [
        SbmParams(y=onehot, b=PATTERN_INTENSITY * np.eye(k), z=onehot),
        SbmParams(y=ones, b=np.array([[PATTERN_INTENSITY]]), z=relay_col),
        SbmParams(y=relay_col, b=np.array([[PATTERN_INTENSITY]]), z=ones),
    ]
    return patterns, realizations


def _union_edges(patterns: list[SparsityPattern]) -> set:
    """Digraph edges u -> v: v attends u somewhere (information flows key -> query)."""
    out = set()
    for pat in patterns:
        out.update((j, i) for (i, j) in pat.edges)
    return out


def _relay_witness(n: int, k: int) -> list[int]:
    """Hamiltonian path interleaving each cluster's non-relay members with one relay.

    Hops into a relay are legal because relays attend everyone; hops out are
    legal because everyone attends relays; hops inside a cluster are legal
    because clusters are complete.
    """
    relays = list(range(n - k, n))
    relay_set = set(relays)
    path = []
    for c in range(k):
        members = [i for i in range(n) if _cluster(i, n, k) == c and i not in relay_set]
        path.extend(members)
        path.append(relays[c])
    return path


def _verify_path(path: list[int], n: int, union: set) -> bool:
    if sorted(path) != list(range(n)):
        return False
    return all((path[t], path[t + 1]) in union for t in range(n - 1))


def _exhaustive_hamiltonian(n: int, union: set) -> list[int] | None:
    """Bitmask DP over the union digraph; practical for n <= 10."""
    succ = [[v for v in range(n) if (u, v) in union and v != u] for u in range(n)]
    # parent[mask][v] = predecessor of v on a path visiting exactly `mask`.
    parent = [dict() for _ in range(1 << n)]
    for v in range(n):
        parent[1 << v][v] = -1
    for mask in range(1 << n):
        if not parent[mask]:
            continue
        for v in list(parent[mask]):
            for w in succ[v]:
                nxt = mask | (1 << w)
                if nxt != mask and w not in parent[nxt]:
                    parent[nxt][w] = v
    full = (1 << n) - 1
    if not parent[full]:
        return None
    v = next(iter(parent[full]))
    path, mask = [], full
    while v != -1:
        path.append(v)
        v, mask = parent[mask][v], mask & ~(1 << v)
    return path[::-1]


def _reach_matrices(patterns: list[SparsityPattern]) -> list[np.ndarray]:
    return [p.matrix() for p in patterns]


def _closure_steps(mats: list[np.ndarray], rotation: int, cap: int) -> int | None:
    """Smallest s with full reachability when layer t uses pattern
    (rotation + t - 1) mod p; None if not reached within cap steps."""
    p = len(mats)
    n = mats[0].shape[0]
    s_mat = mats[rotation].copy()
    for t in range(1, cap + 1):
        if s_mat.all():
            return t
        nxt = mats[(rotation + t) % p]
        new = (nxt @ s_mat) > 0
        if t >= p and np.array_equal(new, s_mat):
            return None  # stalled over a full period
        s_mat = new
    return n + 1 if s_mat.all() else None


def verify_assumption1(patterns: list[SparsityPattern]) -> AssumptionReport:
    """Constructively check the three conditions on a shared-n pattern list.

    Condition 2 tries, in order: the explicit relay-interleaved witness (when
    the list looks like ``build_patterns`` output), the identity ordering, and
    an exhaustive search for n <= 10; every candidate is re-verified edge by
    edge. Condition 3 reports the smallest s over the p cyclic rotations of
    the pattern sequence (the stacking argument does not privilege which
    pattern the first layer uses); the winning rotation is recorded.
    """
    if not patterns:
        raise DomainError("need at least one pattern")
    n = patterns[0].n
    if any(p.n != n for p in patterns):
        raise DomainError("patterns must share the same token count")

    condition1 = all(all((i, i) in p.edges for i in range(n)) for p in patterns)

    union = _union_edges(patterns)
    tags = [p.tag for p in patterns]
    witness = None
    if tags == ["clusters", "to-relays", "from-relays"]:
        k = sum(1 for (i, j) in patterns[2].edges if i != j) // max(n - 1, 1)
        if k >= 1 and n % k == 0:
            candidate = _relay_witness(n, k)
            if _verify_path(candidate, n, union):
                witness = candidate
    if witness is None:
        identity = list(range(n))
        if _verify_path(identity, n, union):
            witness = identity
    if witness is None and n <= 10:
        candidate = _exhaustive_hamiltonian(n, union)
        if candidate is not None and _verify_path(candidate, n, union):
            witness = candidate
    condition2 = witness is not None

    mats = _reach_matrices(patterns)
    best_s, best_rot = None, None
    for rot in range(len(patterns)):
        s = _closure_steps(mats, rot, cap=len(patterns) * n)
        if s is not None and (best_s is None or s < best_s):
            best_s, best_rot = s, rot
    condition3 = best_s is not None

    return AssumptionReport(
        condition1=condition1,
        condition2=condition2,
        witness_path=witness,
        condition3=condition3,
        s=best_s,
        rotation=best_rot,
        edges_per_pattern=[len(p.edges) for p in patterns],
        passed=condition1 and condition2 and condition3,
    )


def hamiltonian_cycle_expectation(n: int, p: float) -> float:
    """E[# Hamiltonian cycles] = p^n (n-1)! in a directed G(n, p)."""
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be a probability, got {p}")
    return p ** n * math.factorial(n - 1)


def threshold_probability(n: int) -> float:
    """Raw threshold (e/n) n^(1/n) where the expectation crosses 1.

    Expected edge count at this p is n^2 p / n-normalized = e * n^(1/n) per
    node, i.e. O(n) edges overall. Exceeds 1 for small n; clamp before using
    it as a probability.
    """
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    return (math.e / n) * n ** (1.0 / n)


def threshold_probability_clamped(n: int) -> float:
    return min(1.0, threshold_probability(n))


def count_hamiltonian_cycles(adj: np.ndarray) -> int:
    """Exact directed Hamiltonian cycle count by enumeration (n <= 9)."""
    n = adj.shape[0]
    if n > 9:
        raise DomainError(f"exact enumeration is capped at n=9, got {n}")
    count = 0
    for perm in itertools.permutations(range(1, n)):
        cycle = (0,) + perm
        if all(adj[cycle[t], cycle[(t + 1) % n]] for t in range(n)):
            count += 1
    return count


def monte_carlo_cycles(n: int, p: float, trials: int,
                       rng: np.random.Generator) -> tuple[float, float]:
    """(mean, standard error) of the Hamiltonian cycle count over directed
    G(n, p) samples, counted exactly. Self-loops are irrelevant and never drawn."""
    if n < 2 or n > 9:
        raise DomainError(f"need 2 <= n <= 9, got {n}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be a probability, got {p}")
    if trials < 2:
        raise DomainError("need at least 2 trials")
    cycles = [(0,) + perm for perm in itertools.permutations(range(1, n))]
    srcs = np.array([[c[t] for t in range(n)] for c in cycles])
    dsts = np.array([[c[(t + 1) % n] for t in range(n)] for c in cycles])
    total = 0.0
    total_sq = 0.0
    chunk = max(1, min(trials, 20000))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        adj = rng.random((b, n, n)) < p
        counts = np.zeros(b, dtype=np.int64)
        for s, d in zip(srcs, dsts):
            counts += adj[:, s, d].all(axis=1)
        total += counts.sum()
        total_sq += (counts.astype(np.float64) ** 2).sum()
        done += b
    mean = total / trials
    var = (total_sq - trials * mean * mean) / (trials - 1)
    return mean, math.sqrt(max(var, 0.0) / trials)
