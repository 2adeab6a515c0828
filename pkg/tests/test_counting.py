import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsqi.counting import (
    CountingQuery, ResourceGuardError, annulus_points, count_E_histogram, count_S_histogram, enumerate_E,
    enumerate_E_bruteforce, enumerate_S, fit_exponent, sup_count_S,
)


def brute_S(m, shells, signs, cyclic=True, ball=False):
    """kappa histogram and the count of excluded pairings, by a plain triple loop."""
    pts = [list(map(tuple, annulus_points(N, ball).tolist())) for N in shells]
    hist, excluded = Counter(), 0
    for k1, k2, k3 in itertools.product(*pts):
        ks = (k1, k2, k3)
        if any(sum(s * k[a] for s, k in zip(signs, ks)) != m[a] for a in (0, 1)):
            continue
        pairs = [(0, 1), (1, 2)] + ([(2, 0)] if cyclic else [])
        if any(ks[i] == ks[j] or ks[i] == tuple(-x for x in ks[j]) for i, j in pairs):
            excluded += 1
            continue
        hist[sum(s * (k[0] ** 2 + k[1] ** 2) for s, k in zip(signs, ks))] += 1
    return hist, excluded


def test_annulus_convention():
    assert len(annulus_points(1)) == 5
    pts = annulus_points(4)
    r2 = (pts ** 2).sum(axis=1)
    assert np.all((r2 > 4) & (r2 <= 16))
    assert len(annulus_points(4, ball=True)) == 49


def test_query_validation():
    with pytest.raises(ValueError):
        CountingQuery((0, 0), (4, 4), (1,))
    with pytest.raises(ValueError):
        CountingQuery((0, 0), (4, 3, 4), (1, 1, 1))
    with pytest.raises(ValueError):
        CountingQuery((0, 0), (4, 4, 4), (1, 2, 1))


def test_S_examples():
    assert enumerate_S(CountingQuery((0, 0), (1, 1, 1), (1, 1, 1), kappa=0)) == 0
    for N in (1, 2, 4):
        assert enumerate_S(CountingQuery((1, 0), (N, N, N), (1, -1, 1), kappa=10 ** 6)) == 0


def test_S_guard():
    with pytest.raises(ResourceGuardError, match="limit"):
        count_S_histogram(CountingQuery((0, 0), (128, 4, 4), (1, 1, 1)))


@given(
    st.tuples(st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4])),
    st.tuples(*[st.sampled_from([1, -1])] * 3),
    st.tuples(st.integers(-4, 4), st.integers(-4, 4)),
    st.booleans(), st.booleans(),
)
@settings(max_examples=40, deadline=None)
def test_S_matches_brute_force(shells, signs, m, cyclic, ball):
    fast = count_S_histogram(CountingQuery(m, shells, signs, cyclic=cyclic, ball=ball))
    slow, _ = brute_S(m, shells, signs, cyclic, ball)
    assert fast == slow


def test_S_partition():
    # union over kappa plus the excluded pairings gives every solution of the linear constraint
    for m, shells, signs in [((0, 0), (2, 2, 2), (1, 1, 1)), ((1, 2), (4, 2, 4), (1, -1, 1)), ((0, 1), (4, 4, 4), (-1, 1, 1))]:
        hist, excluded = brute_S(m, shells, signs)
        pts = [annulus_points(N) for N in shells]
        linear = sum(1 for k1, k2, k3 in itertools.product(*pts)
                     if np.array_equal(signs[0] * k1 + signs[1] * k2 + signs[2] * k3, m))
        assert sum(count_S_histogram(CountingQuery(m, shells, signs)).values()) + excluded == linear


def test_S_permutation_symmetry():
    shells, signs, m = (4, 2, 4), (1, -1, 1), (1, 1)
    base = count_S_histogram(CountingQuery(m, shells, signs, cyclic=True))
    for perm in itertools.permutations(range(3)):
        q = CountingQuery(m, tuple(shells[i] for i in perm), tuple(signs[i] for i in perm), cyclic=True)
        assert count_S_histogram(q) == base


def test_S_ball_monotone():
    for m in [(0, 0), (2, 1)]:
        a = count_S_histogram(CountingQuery(m, (4, 4, 2), (1, -1, 1)))
        b = count_S_histogram(CountingQuery(m, (4, 4, 2), (1, -1, 1), ball=True))
        assert all(b[kap] >= c for kap, c in a.items())


def test_sup_count_reports_argmax():
    c, m, kap = sup_count_S((4, 4, 4), (1, 1, -1), [(0, 0), (1, 0)])
    assert c == max(max(count_S_histogram(CountingQuery(mm, (4, 4, 4), (1, 1, -1))).values()) for mm in [(0, 0), (1, 0)])
    assert enumerate_S(CountingQuery(m, (4, 4, 4), (1, 1, -1), kappa=kap)) == c


# the E set ---------------------------------------------------------------------

def test_E_unsatisfiable():
    assert sum(count_E_histogram((64, 1, 1, 1)).values()) == 0


def test_E_guard():
    with pytest.raises(ResourceGuardError):
        count_E_histogram((8, 8, 8, 8), max_search=1000)
    with pytest.raises(ResourceGuardError):
        enumerate_E_bruteforce(0, (8, 8, 8, 8), max_search=1000)
    with pytest.raises(ValueError):
        count_E_histogram((4, 4, 4))


@pytest.mark.parametrize("shells", [(2, 2, 2, 2), (4, 2, 2, 1), (1, 4, 2, 4), (2, 2, 2, 2, 2, 2), (8, 8, 2, 2)])
def test_E_matches_second_implementation(shells):
    hist = count_E_histogram(shells)
    kappas = sorted(set(hist) | {0, 1, -3})
    for kap in kappas:
        assert enumerate_E_bruteforce(kap, shells) == hist.get(kap, 0)


def test_E_k1_all_twos_kappa_zero():
    assert enumerate_E(0, (2, 2, 2, 2)) == enumerate_E_bruteforce(0, (2, 2, 2, 2)) > 0


def test_E_ball_monotone():
    a = count_E_histogram((4, 4, 2, 2))
    b = count_E_histogram((4, 4, 2, 2), ball=True)
    assert all(b[kap] >= c for kap, c in a.items())


def test_E_growth_exponent():
    Ns = [4, 8, 16]
    counts = [max(count_E_histogram((N, N, 2, 2)).values()) for N in Ns]
    assert fit_exponent(Ns, counts) <= 1.3


def test_fit_exponent():
    assert fit_exponent([2, 4, 8], [3, 12, 48]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fit_exponent([2, 4], [0, 1])
