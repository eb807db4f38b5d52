"""Single anti-crossing physics: tunneling probability and node transfer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeGap, NonpositiveRate, ProbabilityOutOfRange


def tunneling_probability(gap, sweep_rate):
    """Diabatic passage probability ``exp(-gap**2 / sweep_rate)``.

    Parameters
    ----------
    gap : float or array_like
        Anti-crossing gap in MHz, ``>= 0``.
    sweep_rate : float
        Sweep rate expressed in MHz**2 (the units that make the exponent
        dimensionless).

    Returns
    -------
    float or ndarray
        Probability in ``(0, 1]``; a scalar for scalar input.
    """
    if not sweep_rate > 0:
        raise NonpositiveRate(f"sweep rate must be positive, got {sweep_rate!r}")
    g = np.asarray(gap, dtype=float)
    if np.any(g < 0):
        raise NegativeGap("gaps must be nonnegative")
    eta = np.exp(-(g * g) / sweep_rate)
    return float(eta) if eta.ndim == 0 else eta


@dataclass(frozen=True)
class TransferMatrix:
    """Redistribution of the two channels meeting at one node.

    Channel 1 travels along an ``m_s=+1`` line (down the board), channel 2
    along an ``m_s=0`` level (right). ``eta`` is the probability that a
    channel-1 population passes straight through; ``eta_h`` the same for
    channel 2 and defaults to ``eta``, which gives the symmetric
    Landau-Zener matrix ``[[eta, 1-eta], [1-eta, eta]]``. Unequal values
    describe a peg that sends everything down with one fixed probability,
    whatever the arrival direction.
    """

    eta: float
    eta_h: float | None = None

    def __post_init__(self):
        for v in (self.eta, self.eta_right):
            if not 0.0 <= v <= 1.0:
                raise ProbabilityOutOfRange(f"transfer probability {v!r} outside [0, 1]")

    @property
    def eta_right(self) -> float:
        return self.eta if self.eta_h is None else self.eta_h

    @property
    def matrix(self) -> np.ndarray:
        a, b = self.eta, self.eta_right
        return np.array([[a, 1.0 - b], [1.0 - a, b]])


def transfer_apply(T: TransferMatrix, p_in) -> np.ndarray:
    """Outgoing (down, right) populations for incoming (from-top, from-left)."""
    a, b = (float(x) for x in p_in)
    if a < 0 or b < 0:
        raise ProbabilityOutOfRange("incoming populations must be nonnegative")
    ev, eh = T.eta, T.eta_right
    return np.array([ev * a + (1.0 - eh) * b, (1.0 - ev) * a + eh * b])
