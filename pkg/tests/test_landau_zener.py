import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from galton_dnp.errors import NegativeGap, NonpositiveRate, ProbabilityOutOfRange
from galton_dnp.landau_zener import TransferMatrix, transfer_apply, tunneling_probability


def test_zero_gap_is_diabatic():
    assert tunneling_probability(0.0, 3.0) == 1.0


def test_gap_squared_equal_rate():
    assert tunneling_probability(2.0, 4.0) == pytest.approx(math.exp(-1), abs=1e-15)


def test_large_gap():
    assert tunneling_probability(math.sqrt(10.0), 1.0) == pytest.approx(4.539992976248485e-05, rel=1e-12)


def test_array_input():
    out = tunneling_probability(np.array([0.0, 1.0]), 1.0)
    assert out.shape == (2,)


def test_errors():
    with pytest.raises(NonpositiveRate):
        tunneling_probability(1.0, 0.0)
    with pytest.raises(NegativeGap):
        tunneling_probability(-1.0, 1.0)
    with pytest.raises(ProbabilityOutOfRange):
        TransferMatrix(1.5)


@pytest.mark.parametrize("eta,expected", [(1.0, (1.0, 0.0)), (0.0, (0.0, 1.0)), (0.5, (0.5, 0.5))])
def test_transfer_examples(eta, expected):
    assert tuple(transfer_apply(TransferMatrix(eta), (1.0, 0.0))) == expected


def test_symmetric_matrix_is_doubly_stochastic():
    T = TransferMatrix(0.3).matrix
    assert np.allclose(T.sum(axis=0), 1) and np.allclose(T.sum(axis=1), 1)


unit = st.floats(0, 1)


@given(unit, unit, st.floats(0, 1e3), st.floats(0, 1e3))
def test_transfer_conserves_and_bounds(a, b, x, y):
    out = transfer_apply(TransferMatrix(a, b), (x, y))
    s = x + y
    assert abs(out.sum() - s) <= 1e-15 * max(s, 1.0) * 4
    assert np.all(out >= 0) and np.all(out <= s * (1 + 1e-15) + 1e-300)
