from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgmm.metrics import adjusted_rand_index, contingency, misclassification_rate


def brute_ari(a, b):
    """Pair-counting Rand index adjusted by its permutation-model expectation."""
    n = len(a)
    same_a = np.array([[a[i] == a[j] for j in range(n)] for i in range(n)])
    same_b = np.array([[b[i] == b[j] for j in range(n)] for i in range(n)])
    iu = np.triu_indices(n, 1)
    x, y = same_a[iu], same_b[iu]
    pairs = len(x)
    index, sa, sb = np.sum(x & y), np.sum(x), np.sum(y)
    expected = sa * sb / pairs
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


def brute_mr(t, p):
    """Best injective relabelling of predicted classes, by exhaustive search."""
    ut, up = sorted(set(t)), sorted(set(p))
    best = 0
    if len(up) <= len(ut):
        for perm in permutations(ut, len(up)):
            m = dict(zip(up, perm))
            best = max(best, sum(m[q] == s for q, s in zip(p, t)))
    else:
        for perm in permutations(up, len(ut)):
            m = dict(zip(perm, ut))
            best = max(best, sum(m.get(q) == s for q, s in zip(p, t)))
    return (len(t) - best) / len(t)


def test_identical_partitions():
    a = [1, 1, 2, 3, 3, 3]
    assert adjusted_rand_index(a, a) == 1.0
    assert misclassification_rate(a, a) == 0.0


def test_hand_example_ari():
    # cells all 1 -> index 0; row and column pair sums 2 each; E = 2*2/6
    # ARI = (0 - 2/3) / (2 - 2/3) = -0.5
    assert adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == -0.5


def test_hand_example_mr():
    assert misclassification_rate([1, 1, 1, 2], [1, 2, 2, 2]) == 0.5


def test_swapped_names():
    t = [1, 1, 2, 2, 3]
    p = [2, 2, 1, 1, 3]
    assert misclassification_rate(t, p) == 0.0
    assert adjusted_rand_index(t, p) == 1.0
    assert adjusted_rand_index(["x", "y", "x"], ["b", "a", "b"]) == 1.0


def test_trivial_partitions():
    assert adjusted_rand_index([1, 1, 1], [2, 2, 2]) == 1.0
    assert adjusted_rand_index([1, 2, 3], [3, 2, 1]) == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        adjusted_rand_index([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        misclassification_rate([1, 2], [1])


def test_unequal_alphabets_count_unmatched_as_errors():
    # 3 predicted groups, 2 true: one predicted group cannot be matched
    assert misclassification_rate([1, 1, 2, 2], [1, 2, 3, 3]) == 0.25


def test_contingency_counts():
    tab = contingency([1, 1, 2], ["a", "b", "b"])
    np.testing.assert_array_equal(tab.counts, [[1, 1], [0, 1]])
    assert tab.n == 3


def test_exhaustive_equivalence():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        a = rng.integers(1, 4, n).tolist()
        b = rng.integers(1, 4, n).tolist()
        assert adjusted_rand_index(a, b) == pytest.approx(brute_ari(a, b), abs=1e-12)
        assert misclassification_rate(a, b) == pytest.approx(brute_mr(a, b), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=30),
       st.permutations(range(5)))
def test_ranges_and_relabelling(pairs, perm):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    ari = adjusted_rand_index(a, b)
    mr = misclassification_rate(a, b)
    assert -1.0 <= ari <= 1.0
    assert 0.0 <= mr <= 1.0
    b2 = [perm[y] for y in b]
    a2 = [perm[x] for x in a]
    assert adjusted_rand_index(a2, b2) == pytest.approx(ari, abs=1e-12)
    assert misclassification_rate(a, b2) == pytest.approx(mr, abs=1e-12)
