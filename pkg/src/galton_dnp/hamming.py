"""Hamming ordering of nuclear spin basis states.

A basis state of ``N`` spin-1/2 nuclei is a bit pattern ``(s_1, ..., s_N)``
with ``s_j = 1`` meaning projection ``+1/2`` on the local quantization axis.
Spin 1 is the most significant bit. States are ordered by the number of
raised spins, ties broken by ascending binary value, and numbered from 1.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

from .errors import LengthMismatch, ValidationError


@lru_cache(maxsize=None)
def hamming_order(n_spins: int) -> tuple[int, ...]:
    """Integer codes of all ``2**n_spins`` states, in Hamming order."""
    if n_spins < 1:
        raise ValidationError("need at least one spin")
    return tuple(sorted(range(1 << n_spins), key=lambda c: (c.bit_count(), c)))


@lru_cache(maxsize=None)
def _rank_of_code(n_spins: int) -> dict[int, int]:
    return {code: i + 1 for i, code in enumerate(hamming_order(n_spins))}


def bits_to_code(bits: Sequence[int]) -> int:
    code = 0
    for b in bits:
        if b not in (0, 1):
            raise ValidationError(f"bit values must be 0 or 1, got {b!r}")
        code = (code << 1) | int(b)
    return code


def code_to_bits(code: int, n_spins: int) -> tuple[int, ...]:
    return tuple((code >> (n_spins - 1 - j)) & 1 for j in range(n_spins))


def hamming_index(bits: Sequence[int], n_spins: int | None = None) -> int:
    """Position (1-based) of a nuclear bit pattern in Hamming order.

    >>> [hamming_index(b) for b in [(0, 0), (0, 1), (1, 0), (1, 1)]]
    [1, 2, 3, 4]
    """
    bits = tuple(bits)
    if n_spins is not None and len(bits) != n_spins:
        raise LengthMismatch(f"expected {n_spins} bits, got {len(bits)}")
    if not bits:
        raise LengthMismatch("empty bit pattern")
    return _rank_of_code(len(bits))[bits_to_code(bits)]


def hamming_state(index: int, n_spins: int) -> tuple[int, ...]:
    """Inverse of :func:`hamming_index`."""
    order = hamming_order(n_spins)
    if not 1 <= index <= len(order):
        raise ValidationError(f"index {index} outside 1..{len(order)}")
    return code_to_bits(order[index - 1], n_spins)


def code_rank(code: int, n_spins: int) -> int:
    """Hamming index of an integer-coded state."""
    return _rank_of_code(n_spins)[code]


def n_spins_for(n_states: int) -> int:
    """log2 of a power-of-two state count."""
    if n_states < 2 or n_states & (n_states - 1):
        raise ValidationError(f"number of states must be a power of two >= 2, got {n_states}")
    return n_states.bit_length() - 1
