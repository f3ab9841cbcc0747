import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiprop.jets import Jet, JetMismatchError, jet_arith


def test_square_of_variable():
    x = Jet.variable(0, 1, 3)
    sq = jet_arith(x, x, "mul")
    assert sq[(2,)] == 1.0 and sq[(0,)] == 0 and sq[(1,)] == 0


def test_truncation_rule():
    x = Jet.variable(0, 1, 1)
    prod = jet_arith(1 + x, 1 - x, "mul")
    assert prod.allclose(Jet.constant(1.0, 1, 1))


def test_mismatch_raises():
    with pytest.raises(JetMismatchError):
        Jet.variable(0, 1, 3) + Jet.variable(0, 1, 4)


def _random_jet(seed, n=2, order=6):
    rng = np.random.default_rng(seed)
    return Jet(rng.normal(size=(order + 1,) * n), order)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_product_associative(seed):
    a, b, c = (_random_jet(seed + i) for i in range(3))
    lhs = jet_arith(jet_arith(a, b, "mul"), c, "mul")
    rhs = jet_arith(a, jet_arith(b, c, "mul"), "mul")
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-12, atol=1e-12)


def test_exp_and_sqrt_series():
    x = Jet.variable(0, 1, 8)
    e = (0.5 * x).exp()
    np.testing.assert_allclose([e[(k,)] for k in range(9)],
                               [0.5 ** k / math.factorial(k) for k in range(9)])
    s = (1 + x).sqrt()
    np.testing.assert_allclose((s * s).coeffs, (1 + x).coeffs, atol=1e-14)


def test_sqrt_branch_follows_root():
    c = Jet.constant(-1.0 + 0j, 1, 2) + Jet.variable(0, 1, 2)
    assert c.sqrt(root=-1j).value == pytest.approx(-1j)


def test_from_callable_polynomial():
    j = Jet.from_callable(lambda z: 1 + 2 * z[0] - z[0] * z[1] + z[1] ** 3, 2, 3)
    assert j[(1, 0)] == pytest.approx(2) and j[(1, 1)] == pytest.approx(-1) and j[(0, 3)] == pytest.approx(1)
