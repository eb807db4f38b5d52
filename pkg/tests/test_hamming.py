import pytest
from hypothesis import given, strategies as st

from galton_dnp.errors import LengthMismatch, ValidationError
from galton_dnp.hamming import code_rank, hamming_index, hamming_order, hamming_state, n_spins_for


def test_two_spin_order():
    assert [hamming_index(b) for b in [(0, 0), (0, 1), (1, 0), (1, 1)]] == [1, 2, 3, 4]


def test_three_spin_order_by_weight_then_value():
    assert hamming_order(3) == (0b000, 0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111)


@pytest.mark.parametrize("n", range(1, 9))
def test_round_trip(n):
    for i in range(1, 2 ** n + 1):
        assert hamming_index(hamming_state(i, n), n) == i


@given(st.lists(st.integers(0, 1), min_size=1, max_size=10))
def test_index_is_weight_monotone(bits):
    n = len(bits)
    i = hamming_index(bits)
    w = sum(bits)
    # every state of smaller weight comes first
    from math import comb
    assert sum(comb(n, k) for k in range(w)) < i <= sum(comb(n, k) for k in range(w + 1))


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        hamming_index((0, 1), n_spins=3)


def test_bad_bits_and_index():
    with pytest.raises(ValidationError):
        hamming_index((0, 2))
    with pytest.raises(ValidationError):
        hamming_state(5, 2)


def test_code_rank_matches_index():
    assert code_rank(0b011, 3) == hamming_index((0, 1, 1))


@pytest.mark.parametrize("m", [0, 1, 3, 6, 12])
def test_n_spins_rejects_non_powers(m):
    with pytest.raises(ValidationError):
        n_spins_for(m)
