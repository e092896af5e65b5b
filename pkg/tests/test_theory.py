"""Tests for the expressibility checks: the three canonical sparsity
patterns, the reachability conditions, and the Hamiltonian-cycle counts."""

import math

import numpy as np
import pytest

from oracles import (edge_probability, exhaustive_cycle_expectation,
                     mask_to_dense, _hamiltonian_count)
from sbmformer.errors import DomainError
from sbmformer.sampler import add_self_loops, sample_mask
from sbmformer.theory import (build_patterns, count_hamiltonian_cycles,
                              hamiltonian_cycle_expectation,
                              monte_carlo_cycles, threshold_probability,
                              threshold_probability_clamped,
                              verify_assumption1)


def _pattern_by_tag(patterns, tag):
    return next(p for p in patterns if p.tag == tag)


def test_pattern_edge_counts_for_sixteen_tokens_four_clusters():
    patterns, _ = build_patterns(16, 4)
    by_tag = {p.tag: p for p in patterns}
    # 4 groups of 4, every ordered pair inside a group (diagonal included)
    assert len(by_tag["clusters"].edges) == 4 * 16
    # everyone reaches the 4 relays, plus 12 non-relay self-loops
    assert len(by_tag["to-relays"].edges) == 16 * 4 + 12
    # the 4 relays reach everyone, plus 12 non-relay self-loops
    assert len(by_tag["from-relays"].edges) == 4 * 16 + 12


def test_cluster_pattern_structure():
    patterns, _ = build_patterns(8, 2)
    clusters = _pattern_by_tag(patterns, "clusters")
    for i in range(8):
        for j in range(8):
            same_group = (i < 4) == (j < 4)
            assert clusters.attends(i, j) == same_group


def test_relay_patterns_structure():
    patterns, _ = build_patterns(8, 2)
    to_relays = _pattern_by_tag(patterns, "to-relays")
    from_relays = _pattern_by_tag(patterns, "from-relays")
    for i in range(8):
        for j in range(8):
            assert to_relays.attends(i, j) == (j >= 6 or i == j)
            assert from_relays.attends(i, j) == (i >= 6 or i == j)


def test_build_patterns_validates_arguments():
    with pytest.raises(DomainError):
        build_patterns(8, 1)
    with pytest.raises(DomainError):
        build_patterns(8, 3)  # k must divide n
    with pytest.raises(DomainError):
        build_patterns(4, 4)  # need n > k


def test_realizations_support_matches_patterns():
    patterns, realizations = build_patterns(8, 2)
    for pattern, params in zip(patterns, realizations):
        lam = params.y @ params.b @ params.z.T
        want = pattern.matrix()
        if pattern.tag != "clusters":
            # rank-k relay factors cannot carry the diagonal; it is added
            # back by add_self_loops on the sampled mask
            want = want & ~np.eye(8, dtype=bool) | (lam > 0) & np.eye(8, dtype=bool)
            off_diag = ~np.eye(8, dtype=bool)
            np.testing.assert_array_equal((lam > 0)[off_diag],
                                          pattern.matrix()[off_diag])
        else:
            np.testing.assert_array_equal(lam > 0, want)
        # on-pattern intensities are saturated: miss probability under 1e-6
        assert lam[lam > 0].min() >= 14.0 - 1e-9


def test_realized_masks_cover_the_pattern_after_self_loops():
    patterns, realizations = build_patterns(8, 2)
    rng = np.random.default_rng(0)
    for pattern, params in zip(patterns, realizations):
        mask = add_self_loops(sample_mask(params, rng))
        np.testing.assert_array_equal(mask_to_dense(mask), pattern.matrix())


def test_verify_assumption_holds_for_canonical_patterns():
    patterns, _ = build_patterns(16, 4)
    report = verify_assumption1(patterns)
    assert report.passed
    assert report.condition1 and report.condition2 and report.condition3
    assert report.s is not None and report.s <= 3
    # the witness must be a real Hamiltonian path in the union digraph
    path = report.witness_path
    assert sorted(path) == list(range(16))
    union = set()
    for p in patterns:
        union |= {(j, i) for (i, j) in p.edges}  # v reachable from u when v attends u
    assert all((path[t], path[t + 1]) in union for t in range(15))


def test_verify_assumption_fails_without_self_loops():
    patterns, _ = build_patterns(8, 2)
    from sbmformer.theory import SparsityPattern
    broken = SparsityPattern(
        n=8, edges=frozenset(e for e in patterns[0].edges if e[0] != e[1]),
        tag="clusters")
    report = verify_assumption1([broken, patterns[1], patterns[2]])
    assert not report.condition1
    assert not report.passed


def test_verify_assumption_fails_on_disconnected_pattern():
    from sbmformer.theory import SparsityPattern
    loops = frozenset((i, i) for i in range(6))
    isolated = SparsityPattern(n=6, edges=loops, tag="identity")
    report = verify_assumption1([isolated])
    assert report.condition1
    assert not report.condition2
    assert not report.condition3
    assert not report.passed


def test_cycle_expectation_matches_exhaustive_enumeration():
    for n, p in [(3, 0.5), (3, 0.2), (4, 0.5), (4, 0.3)]:
        np.testing.assert_allclose(hamiltonian_cycle_expectation(n, p),
                                   exhaustive_cycle_expectation(n, p),
                                   rtol=1e-12)


def test_cycle_expectation_closed_form():
    assert hamiltonian_cycle_expectation(6, 0.5) == 0.5 ** 6 * 120
    with pytest.raises(DomainError):
        hamiltonian_cycle_expectation(1, 0.5)
    with pytest.raises(DomainError):
        hamiltonian_cycle_expectation(4, 1.5)


def test_threshold_probability():
    np.testing.assert_allclose(threshold_probability(8),
                               (np.e / 8) * 8 ** 0.125)
    # at the threshold p^n (n-1)! = (e/n)^n n (n-1)! = e^n n! / n^n
    for n in (5, 8):
        p = threshold_probability(n)
        np.testing.assert_allclose(hamiltonian_cycle_expectation(n, p),
                                   math.e ** n * math.factorial(n) / n ** n,
                                   rtol=1e-9)
    assert threshold_probability(2) > 1.0
    assert threshold_probability_clamped(2) == 1.0


def test_exact_cycle_counts():
    full = np.ones((5, 5), dtype=bool)
    assert count_hamiltonian_cycles(full) == 24  # (n-1)!
    ring = np.zeros((5, 5), dtype=bool)
    for i in range(5):
        ring[i, (i + 1) % 5] = True
    assert count_hamiltonian_cycles(ring) == 1
    acyclic = np.triu(np.ones((5, 5), dtype=bool), 1)
    assert count_hamiltonian_cycles(acyclic) == 0
    rng = np.random.default_rng(1)
    for _ in range(5):
        adj = rng.random((6, 6)) < 0.4
        assert count_hamiltonian_cycles(adj) == _hamiltonian_count(adj)
    with pytest.raises(DomainError):
        count_hamiltonian_cycles(np.ones((10, 10), dtype=bool))


def test_monte_carlo_matches_expectation_within_four_se():
    rng = np.random.default_rng(2)
    mean, se = monte_carlo_cycles(5, 0.5, 20_000, rng)
    want = hamiltonian_cycle_expectation(5, 0.5)
    assert se > 0
    assert abs(mean - want) <= 4 * se


def test_monte_carlo_is_deterministic_given_the_generator():
    a = monte_carlo_cycles(4, 0.4, 500, np.random.default_rng(3))
    b = monte_carlo_cycles(4, 0.4, 500, np.random.default_rng(3))
    assert a == b
