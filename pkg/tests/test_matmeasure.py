import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from quorumsync.errors import InputError, UnsupportedError
from quorumsync.matmeasure import (BlockPartition, MeasureKind, WeightSpec, block_margins,
                                   block_measure_bound, combined_measure_oracle,
                                   combined_vector_norm, induced_norm, measure,
                                   measure_limit_oracle, operator_norm, random_partition,
                                   weighted_measure)

KINDS = list(MeasureKind)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


# -- hand-evaluated examples ---------------------------------------------------------


def test_mu2_diagonal():
    assert measure(np.diag([-1.0, -2.0]), "L2") == pytest.approx(-1.0)


def test_mu2_antisymmetric_is_zero():
    assert measure([[0.0, 1.0], [-1.0, 0.0]], "L2") == pytest.approx(0.0, abs=1e-15)


def test_mu1_and_muinf_triangular():
    A = [[-2.0, 1.0], [0.0, -3.0]]
    assert measure(A, "L1") == pytest.approx(-2.0)
    assert measure(A, "Linf") == pytest.approx(-1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_minus_identity(kind):
    assert measure(-np.eye(3), kind) == pytest.approx(-1.0)
    assert measure_limit_oracle(-np.eye(3), kind, 1e-6) == pytest.approx(-1.0, abs=1e-5)


def test_oracle_matches_l1_example():
    assert measure_limit_oracle([[-2.0, 1.0], [0.0, -3.0]], "L1", 1e-7) == pytest.approx(-2.0,
                                                                                         abs=1e-5)


def test_oracle_rejects_large_step():
    with pytest.raises(InputError):
        measure_limit_oracle(np.eye(2), "L1", 1e-2)
    with pytest.raises(InputError):
        measure_limit_oracle(np.eye(2), "L1", 0.0)


def test_non_finite_rejected():
    with pytest.raises(InputError):
        measure([[np.nan, 0.0], [0.0, 1.0]], "L1")
    with pytest.raises(InputError):
        measure(np.ones((2, 3)), "L1")


def test_kind_aliases():
    assert MeasureKind.parse("inf") is MeasureKind.LINF
    assert MeasureKind.parse(1) is MeasureKind.L1
    with pytest.raises(InputError):
        MeasureKind.parse("L3")


def test_weighted_measure_example():
    A = np.array([[0.0, 4.0], [0.0, -1.0]])
    w = WeightSpec(np.diag([1.0, 10.0]), "L1")
    # Theta A Theta^-1 = [[0, 0.4], [0, -1]]: column sums 0 and -0.6
    assert weighted_measure(A, w) == pytest.approx(0.0)
    T = w.transform(A)
    np.testing.assert_allclose(T, [[0.0, 0.4], [0.0, -1.0]])
    assert measure_limit_oracle(T, "L1", 1e-7) == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("kind", KINDS)
def test_weighted_identity_and_diagonal(kind):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    assert weighted_measure(A, WeightSpec(np.eye(4), kind)) == pytest.approx(measure(A, kind))
    D = np.diag(rng.normal(size=4))
    W = WeightSpec(np.diag(rng.uniform(0.5, 3.0, 4)), kind)
    assert weighted_measure(D, W) == pytest.approx(measure(D, kind))


def test_singular_weight_rejected():
    with pytest.raises(InputError):
        WeightSpec(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]]), "L1")


def test_operator_norm_examples():
    assert operator_norm(np.zeros((2, 3)), "L2", "L2") == 0.0
    assert operator_norm([[3.0, 0.0], [0.0, 4.0]], "L2", "L2") == pytest.approx(4.0)
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert operator_norm(B, "L1", "L1") == pytest.approx(6.0)
    # oracle: the L1 unit ball's extreme points are +-e_j
    best = max(np.abs(B @ (s * e)).sum() for e in np.eye(2) for s in (-1, 1))
    assert operator_norm(B, "L1", "L1") == pytest.approx(best)


def test_mixed_kind_norm_rejected():
    with pytest.raises(UnsupportedError):
        operator_norm(np.eye(2), "L1", "L2")


def test_induced_linf_by_sign_vectors():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(3, 4))
    best = max(np.abs(B @ np.array(s)).max() for s in itertools.product((-1, 1), repeat=4))
    assert induced_norm(B, "Linf") == pytest.approx(best)


# -- block lemma ------------------------------------------------------------------------


def test_block_bound_scalar_blocks():
    J = np.array([[-3.0, 1.0], [0.5, -2.0]])
    p = BlockPartition([1, 1], [1.0, 1.0], "L1")
    assert block_measure_bound(J, p) == pytest.approx(-1.0)
    np.testing.assert_allclose(block_margins(J, p), [-2.5, -1.0])
    assert combined_measure_oracle(J, p, 1e-8) <= -1.0 + 1e-6


def test_block_bound_block_diagonal():
    rng = np.random.default_rng(1)
    A, D = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
    J = np.zeros((5, 5))
    J[:2, :2], J[2:, 2:] = A, D
    p = BlockPartition([2, 3], [1.0, 1.0], ["L2", "L1"])
    assert block_measure_bound(J, p) == pytest.approx(max(measure(A, "L2"), measure(D, "L1")))


def test_block_bound_hierarchy_limit():
    J11, J12, J22 = np.array([[-1.0]]), np.array([[5.0]]), np.array([[-2.0]])
    J = np.block([[J11, J12], [np.zeros((1, 1)), J22]])
    theta1, theta2 = 1.0, 1e3
    p = BlockPartition([1, 1], [theta1, theta2], "L1")
    expected = max(-1.0, -2.0 + theta1 / theta2 * 5.0)
    assert block_measure_bound(J, p) == pytest.approx(expected)


@pytest.mark.parametrize("kind", KINDS)
def test_single_block_equals_measure(kind):
    A = np.random.default_rng(2).normal(size=(4, 4))
    assert block_measure_bound(A, BlockPartition([4], [1.0], kind)) == pytest.approx(
        measure(A, kind))


def test_partition_validation():
    with pytest.raises(InputError):
        BlockPartition([2, 0], [1.0, 1.0])
    with pytest.raises(InputError):
        BlockPartition([2, 2], [1.0, -1.0])
    with pytest.raises(InputError):
        block_measure_bound(np.eye(3), BlockPartition([1, 1]))


def test_combined_norm_is_weighted_sum():
    p = BlockPartition([2, 1], [2.0, 0.5], ["L2", "L1"])
    z = np.array([3.0, 4.0, -2.0])
    assert combined_vector_norm(z, p) == pytest.approx(2.0 * 5.0 + 0.5 * 2.0)


# -- properties ---------------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(square(n), square(n))),
       st.sampled_from(KINDS))
def test_subadditivity(AB, kind):
    A, B = AB
    assert measure(A + B, kind) <= measure(A, kind) + measure(B, kind) + 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(square), st.floats(0, 100), st.sampled_from(KINDS))
def test_positive_homogeneity(A, c, kind):
    assert measure(c * A, kind) == pytest.approx(c * measure(A, kind), abs=1e-10 * (1 + c))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(square), st.sampled_from(KINDS))
def test_measure_bounded_by_norm(A, kind):
    n = induced_norm(A, kind)
    m = measure(A, kind)
    assert -n - 1e-10 <= m <= n + 1e-10


@pytest.mark.parametrize("seed", range(100))
def test_oracle_converges_to_measure(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    nA = induced_norm(A, "L2")
    for kind in KINDS:
        vals = [measure_limit_oracle(A, kind, h) for h in (1e-3, 1e-4, 1e-6)]
        assert abs(vals[-1] - measure(A, kind)) <= 10 * 1e-6 * nA ** 2 + 1e-9
        # the difference quotient of a convex function decreases with h
        assert vals[0] >= vals[1] - 1e-9 and vals[1] >= vals[2] - 1e-9


@pytest.mark.parametrize("seed", range(30))
def test_lemma_bound_random(seed):
    rng = np.random.default_rng(seed)
    sizes = list(rng.integers(1, 4, size=int(rng.integers(2, 4))))
    p = random_partition(rng, sizes, [KINDS[int(rng.integers(3))]] * len(sizes))
    J = rng.normal(size=(p.dim, p.dim))
    assert combined_measure_oracle(J, p, 1e-8, seed=seed) <= block_measure_bound(J, p) + 1e-6
