import math

import numpy as np
import pytest

from wickprop import MultiIndex, TruncationBox, enumerate_indices


def test_canonical_form_and_equality():
    a = MultiIndex([(3, 2), (1, 1)])
    b = MultiIndex({1: 1, 3: 2})
    assert a == b
    assert hash(a) == hash(b)
    assert a.entries == ((1, 1), (3, 2))
    # zeros are never stored
    c = MultiIndex([(1, 1), (2, 0), (3, 2)])
    assert c == a


def test_order_and_add():
    zero = MultiIndex.zero()
    a = MultiIndex.from_dense((1, 0, 2))
    b = MultiIndex.from_dense((0, 1, 1))
    assert (zero + a) == a
    assert MultiIndex.unit(1) + MultiIndex.unit(1) == MultiIndex.unit(1, 2)
    assert a + b == MultiIndex.from_dense((1, 1, 3))
    assert (a + b).order == a.order + b.order


def test_sub_one():
    assert MultiIndex.unit(1, 2).sub_one(1) == MultiIndex.unit(1)
    # alpha - eps_k is absent when alpha_k = 0, not an error
    assert MultiIndex.unit(2).sub_one(1) is None
    assert MultiIndex.from_dense((1, 0, 2)).sub_one(3) == MultiIndex.from_dense((1, 0, 1))


def test_factorial():
    assert MultiIndex.zero().factorial() == 1.0
    assert MultiIndex.unit(1, 3).factorial() == 6.0
    assert MultiIndex.from_dense((1, 0, 2)).factorial() == 2.0
    with pytest.raises(OverflowError):
        MultiIndex.unit(1, 151).factorial()


def test_characteristic_set():
    alpha = MultiIndex.from_dense((1, 0, 2, 0, 0, 1, 0, 3))
    assert alpha.characteristic_set() == (1, 3, 3, 6, 8, 8, 8)
    assert MultiIndex.unit(5).characteristic_set() == (5,)
    assert MultiIndex.unit(2, 3).characteristic_set() == (2, 2, 2)
    with pytest.raises(ValueError):
        MultiIndex.zero().characteristic_set()


def test_characteristic_set_round_trip():
    for alpha in enumerate_indices(TruncationBox(5, 4)):
        if alpha.order == 0:
            continue
        assert MultiIndex.from_characteristic_set(alpha.characteristic_set()) == alpha


def test_string_encoding_round_trip():
    assert MultiIndex.zero().to_string() == "0"
    assert MultiIndex.from_string("0") == MultiIndex.zero()
    alpha = MultiIndex.from_dense((1, 0, 2, 0, 0, 1, 0, 3))
    assert alpha.to_string() == "1,3,3,6,8,8,8"
    assert MultiIndex.from_string(alpha.to_string()) == alpha


def test_power():
    assert MultiIndex.zero().power([5.0]) == 1.0
    assert MultiIndex.from_dense((2, 1)).power([2.0, 3.0]) == 12.0
    alpha = MultiIndex.from_dense((1, 0, 2, 0, 0, 1, 0, 3))
    b = [float(k) for k in range(1, 9)]
    direct = alpha.power(b)
    over_charset = 1.0
    for k in alpha.characteristic_set():
        over_charset *= b[k - 1]
    assert direct == over_charset == 27648.0
    with pytest.raises(ValueError):
        MultiIndex.unit(1).power([-1.0])


def test_two_n_factor():
    assert MultiIndex.zero().two_n_factor(3.0) == 1.0
    assert MultiIndex.unit(2).two_n_factor(2.0) == 16.0
    assert MultiIndex.unit(1, 2).two_n_factor(-1.0) == 0.25
    # (2N)^{2 alpha} = 2^{2|alpha|} prod k^{2 alpha_k}
    alpha = MultiIndex.from_dense((2, 0, 1))
    expect = 2.0 ** (2 * alpha.order) * (1 ** 4) * (3 ** 2)
    assert alpha.two_n_factor(2.0) == pytest.approx(expect, rel=1e-14)


def test_enumerate_small_boxes():
    assert enumerate_indices(TruncationBox(0, 3)) == [MultiIndex.zero()]
    assert enumerate_indices(TruncationBox(1, 2)) == [
        MultiIndex.zero(), MultiIndex.unit(1), MultiIndex.unit(2)]
    # exhaustive nested-loop oracle for N = 2, K = 2
    brute = []
    for a1 in range(3):
        for a2 in range(3):
            if a1 + a2 <= 2:
                brute.append(MultiIndex.from_dense((a1, a2)))
    got = enumerate_indices(TruncationBox(2, 2))
    assert len(got) == len(brute) == math.comb(4, 2)
    assert set(got) == set(brute)


def test_enumerate_order_and_cardinality():
    for order, modes in ((3, 3), (4, 2), (2, 5), (6, 4)):
        box = TruncationBox(order, modes)
        idx = enumerate_indices(box)
        assert len(idx) == box.size() == math.comb(order + modes, modes)
        assert idx == sorted(idx, key=MultiIndex.sort_key)
        assert idx[0] == MultiIndex.zero()
        assert len(set(idx)) == len(idx)


def test_multinomial_integrality():
    box = TruncationBox(4, 3)
    idx = enumerate_indices(box)
    for a in idx:
        for b in idx:
            assert (a + b).factorial() >= a.factorial() * b.factorial() - 1e-9


def test_factorial_bound_by_weighted_powers():
    # |alpha|! <= alpha! (2N)^{2 alpha} over the order-8, 8-mode box
    for alpha in enumerate_indices(TruncationBox(8, 8)):
        lhs = math.factorial(alpha.order)
        rhs = alpha.factorial() * alpha.two_n_factor(2.0)
        assert lhs <= rhs * (1 + 1e-12)


def test_weighted_power_sums():
    # sum over the box of (2N)^{-r alpha}: non-increasing in r, and for fixed
    # r > 1 stable to three significant digits as the box grows with N = K
    def box_sum(n, r):
        return sum(a.two_n_factor(-r) for a in enumerate_indices(TruncationBox(n, n)))

    sums_by_r = [box_sum(6, r) for r in (1.5, 2.0, 3.0)]
    assert sums_by_r == sorted(sums_by_r, reverse=True)

    values = [box_sum(n, 3.0) for n in (6, 7, 8)]
    for prev, nxt in zip(values, values[1:]):
        assert abs(nxt - prev) / nxt < 1e-3


def test_truncation_box_validation():
    with pytest.raises(ValueError):
        TruncationBox(-1, 2)
    with pytest.raises(ValueError):
        TruncationBox(2, 0)
    box = TruncationBox(2, 2)
    assert box.contains(MultiIndex.unit(2, 2))
    assert not box.contains(MultiIndex.unit(3))
    assert not box.contains(MultiIndex.unit(1, 3))
