import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lefgpd.geometry import AffineMap, CircleMap
from lefgpd.superalgebra import (
    DeRhamBundleData,
    GradedEndomorphism,
    exterior_algebra_action,
    exterior_power_action,
    multi_indices,
    supertrace,
    zeta_de_rham,
)

from oracles import exterior_minor

CAT = np.array([[2.0, 1.0], [1.0, 1.0]])


def test_bundle_data():
    for n in range(1, 6):
        d = DeRhamBundleData(n)
        assert sum(d.ranks) == d.total_rank == 2 ** n
        assert [len(b) for b in d.basis] == d.ranks
    assert multi_indices(3, 2) == [(0, 1), (0, 2), (1, 2)]


def test_block_shape_checked():
    with pytest.raises(ValueError):
        GradedEndomorphism([np.eye(1), np.eye(3), np.eye(1)])


def test_exterior_power_examples():
    B = np.random.default_rng(1).normal(size=(3, 3))
    np.testing.assert_array_equal(exterior_power_action(B, 0), [[1.0]])
    np.testing.assert_array_equal(exterior_power_action(B, 1), B)
    assert abs(exterior_power_action(CAT, 2)[0, 0] - 1.0) < 1e-15


def test_exterior_power_entries_are_minors():
    B = np.random.default_rng(2).normal(size=(4, 4))
    for p in range(5):
        L = exterior_power_action(B, p)
        idx = multi_indices(4, p)
        for (i, I), (j, J) in itertools.product(enumerate(idx), repeat=2):
            assert abs(L[i, j] - exterior_minor(B, I, J)) < 1e-12


def test_supertrace_examples():
    assert supertrace(GradedEndomorphism.identity(2)) == 0
    for n in range(1, 6):
        assert supertrace(GradedEndomorphism.identity(n)) == 0
    assert abs(supertrace(exterior_algebra_action(CAT.T)) - (-1.0)) < 1e-15
    assert supertrace(exterior_algebra_action(np.array([[3.0]]))) == -2.0


def test_zeta_examples():
    g = zeta_de_rham(AffineMap([[2]]), 0.4)
    assert [b.tolist() for b in g.blocks] == [[[1.0]], [[2.0]]]
    assert supertrace(g) == -1.0
    assert supertrace(zeta_de_rham(AffineMap(np.eye(3, dtype=int)), np.zeros(3))) == 0.0
    f = CircleMap(-1, 0.0, sin=[(1, 0.05)])
    g = zeta_de_rham(f, np.array([0.0]))
    assert abs(g.blocks[1][..., 0, 0].item() - (-1 + 0.1 * np.pi)) < 1e-15
    assert abs(supertrace(g).item() - (2 - 0.1 * np.pi)) < 1e-15


def test_batched_blocks():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(5, 3, 3))
    g = exterior_algebra_action(B)
    st_ = supertrace(g)
    assert st_.shape == (5,)
    np.testing.assert_allclose(st_, np.linalg.det(np.eye(3) - B.swapaxes(-1, -2)), atol=1e-12)
    np.testing.assert_array_equal(g.scale(np.ones(5)).blocks[2], g.blocks[2])


def _matrix(n, lo=-2.0, hi=2.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=n * n, max_size=n * n).map(
        lambda e: np.array(e).reshape(n, n))


def test_determinant_identity_100_random():
    rng = np.random.default_rng(20240101)
    worst = 0.0
    for i in range(100):
        n = 1 + i % 4
        B = rng.normal(size=(n, n))
        lhs = supertrace(exterior_algebra_action(B.T))
        rhs = np.linalg.det(np.eye(n) - B)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    assert worst < 1e-10


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(_matrix(n), _matrix(n))))
def test_functoriality(pair):
    B1, B2 = pair
    n = B1.shape[0]
    for p in range(n + 1):
        np.testing.assert_allclose(
            exterior_power_action(B1 @ B2, p),
            exterior_power_action(B1, p) @ exterior_power_action(B2, p), atol=1e-10)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    *[st.lists(_matrix(comb(n, p)), min_size=2, max_size=2) for p in range(n + 1)])))
def test_supercommutator_is_traceless(blocks):
    a = GradedEndomorphism([b[0] for b in blocks])
    b = GradedEndomorphism([b[1] for b in blocks])
    assert abs(supertrace(a.supercommutator(b))) < 1e-10
