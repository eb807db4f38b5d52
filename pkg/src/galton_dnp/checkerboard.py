"""The anti-crossing checkerboard.

Row ``k`` (1-based) is an ``m_s=0`` nuclear level, ordered from the highest
energy down; column ``l`` is an ``m_s=+1`` line, ordered by the frequency at
which it sweeps through the ``m_s=0`` levels. Node ``(k, l)`` is where they
cross. Population travelling along a ``+1`` line moves down the board,
population on an ``m_s=0`` level moves right.

Each row and column carries the Hamming index of its nuclear state. The
default labelling (row ``k`` holds state ``M-k+1``, column ``l`` holds state
``l``) puts the same-state anti-crossings on the anti-diagonal.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    BoardOrderError,
    DegeneracyWarning,
    NegativeGap,
    ProbabilityOutOfRange,
    ShapeMismatch,
    ValidationError,
)
from .hamming import n_spins_for
from .landau_zener import tunneling_probability

log = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9  # MHz


class LacNode(NamedTuple):
    k: int
    l: int
    f_cross: float
    gap: float


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def default_row_labels(n_states: int) -> np.ndarray:
    return np.arange(n_states, 0, -1)


def default_col_labels(n_states: int) -> np.ndarray:
    return np.arange(1, n_states + 1)


@dataclass(frozen=True, eq=False)
class Checkerboard:
    """Immutable ``2**N x 2**N`` table of anti-crossings.

    Attributes
    ----------
    crossings : ndarray
        Crossing frequency ``f_cross`` of every node, MHz.
    gaps : ndarray
        Anti-crossing gap of every node, MHz. NaN for boards specified
        directly through transfer probabilities.
    eta, eta_h : ndarray
        Straight-through probability for population moving down (along a
        ``+1`` line) and right (along an ``m_s=0`` level).
    row_labels, col_labels : ndarray of int
        Hamming index of the nuclear state of each row / column.
    sweep_rate : float or None
        Rate used to turn gaps into ``eta``; None when ``eta`` was given.
    reverse : bool
        True for a board mirrored for a high-to-low frequency sweep.
    """

    crossings: np.ndarray
    gaps: np.ndarray
    eta: np.ndarray
    eta_h: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray
    sweep_rate: float | None = None
    reverse: bool = False
    traversal_order: np.ndarray = field(init=False, repr=False)
    degenerate_ties: int = field(init=False)

    def __post_init__(self):
        f = np.asarray(self.crossings, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ShapeMismatch(f"crossing table must be square, got shape {f.shape}")
        m = f.shape[0]
        n_spins_for(m)
        for name in ("gaps", "eta", "eta_h"):
            if np.shape(getattr(self, name)) != (m, m):
                raise ShapeMismatch(f"{name} table has shape {np.shape(getattr(self, name))}, expected {(m, m)}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("crossing frequencies must be finite")
        gaps = np.asarray(self.gaps, dtype=float)
        if np.any(gaps < 0):
            raise NegativeGap("gaps must be nonnegative")
        for name in ("eta", "eta_h"):
            e = np.asarray(getattr(self, name), dtype=float)
            if np.any(~np.isfinite(e)) or np.any(e < 0) or np.any(e > 1):
                raise ProbabilityOutOfRange(f"{name} entries must lie in [0, 1]")
        for name in ("row_labels", "col_labels"):
            lab = np.asarray(getattr(self, name))
            if lab.shape != (m,) or sorted(lab.tolist()) != list(range(1, m + 1)):
                raise ValidationError(f"{name} must be a permutation of 1..{m}")

        # predecessors of (k, l) are (k-1, l) and (k, l-1); they must not come later
        sign = -1.0 if self.reverse else 1.0
        tol = TIE_TOLERANCE
        if np.any(sign * np.diff(f, axis=0) < -tol) or np.any(sign * np.diff(f, axis=1) < -tol):
            raise BoardOrderError(
                "crossing frequencies must be monotone along every row and column "
                "(the board would not be traversed sequentially)"
            )

        for name, dtype in (("crossings", float), ("gaps", float), ("eta", float),
                            ("eta_h", float), ("row_labels", int), ("col_labels", int)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))

        order, ties = _traversal_order(sign * f)
        object.__setattr__(self, "traversal_order", _frozen(order, np.int64))
        object.__setattr__(self, "degenerate_ties", ties)
        if ties:
            warnings.warn(
                f"{ties} anti-crossing(s) share a frequency within {TIE_TOLERANCE:g} MHz; "
                "ordered by (k, l)",
                DegeneracyWarning,
                stacklevel=3,
            )

    # -- basic properties -------------------------------------------------
    @property
    def n_states(self) -> int:
        return self.crossings.shape[0]

    @property
    def n_spins(self) -> int:
        return n_spins_for(self.n_states)

    @property
    def symmetric(self) -> bool:
        """True when every node is an ordinary Landau-Zener transfer matrix."""
        return bool(np.array_equal(self.eta, self.eta_h))

    def node(self, k: int, l: int) -> LacNode:
        return LacNode(k, l, float(self.crossings[k - 1, l - 1]), float(self.gaps[k - 1, l - 1]))

    @property
    def nodes(self) -> tuple[tuple[LacNode, ...], ...]:
        m = self.n_states
        return tuple(tuple(self.node(k, l) for l in range(1, m + 1)) for k in range(1, m + 1))

    def traversal_nodes(self) -> list[tuple[int, int]]:
        """Traversal order as 1-based ``(k, l)`` pairs."""
        m = self.n_states
        return [(int(i) // m + 1, int(i) % m + 1) for i in self.traversal_order]

    def same_state_mask(self) -> np.ndarray:
        """Nodes joining identical nuclear states in the two manifolds."""
        return self.row_labels[:, None] == self.col_labels[None, :]

    # -- derived boards ---------------------------------------------------
    def _replace(self, **changes) -> "Checkerboard":
        kw = dict(
            crossings=self.crossings, gaps=self.gaps, eta=self.eta, eta_h=self.eta_h,
            row_labels=self.row_labels, col_labels=self.col_labels,
            sweep_rate=self.sweep_rate, reverse=self.reverse,
        )
        kw.update(changes)
        with warnings.catch_warnings():
            # the tie warning was already issued for this board
            warnings.simplefilter("ignore", DegeneracyWarning)
            return Checkerboard(**kw)

    def with_sweep_rate(self, sweep_rate: float) -> "Checkerboard":
        if np.any(np.isnan(self.gaps)):
            raise ValidationError("board has no gap table; cannot change the sweep rate")
        eta = tunneling_probability(self.gaps, sweep_rate)
        return self._replace(eta=eta, eta_h=eta, sweep_rate=float(sweep_rate))

    def reversed(self) -> "Checkerboard":
        """The same board traversed by a high-to-low frequency sweep.

        A downward chirp moves the ``+1`` lines up through the ``m_s=0``
        levels and sweeps the levels from high frequency to low, which is
        the forward traversal of the board rotated by 180 degrees.
        """
        flip = (slice(None, None, -1), slice(None, None, -1))
        return self._replace(
            crossings=self.crossings[flip], gaps=self.gaps[flip],
            eta=self.eta[flip], eta_h=self.eta_h[flip],
            row_labels=self.row_labels[::-1], col_labels=self.col_labels[::-1],
            reverse=not self.reverse,
        )

    def window_mask(self, window: tuple[float, float] | None) -> np.ndarray:
        """Nodes whose crossing frequency lies inside ``[lo, hi]``."""
        if window is None:
            return np.ones(self.crossings.shape, dtype=bool)
        lo, hi = window
        if not hi >= lo:
            raise ValidationError(f"window upper edge {hi!r} below lower edge {lo!r}")
        return (self.crossings >= lo) & (self.crossings <= hi)

    def with_window(self, window: tuple[float, float] | None) -> "Checkerboard":
        """Copy with every node outside ``window`` made a perfect pass-through."""
        mask = self.window_mask(window)
        return self._replace(eta=np.where(mask, self.eta, 1.0), eta_h=np.where(mask, self.eta_h, 1.0))

    # -- export -----------------------------------------------------------
    def table_rows(self) -> list[dict]:
        """One dict per node with keys ``k, l, f_cross, gap, eta`` (+ ``eta_h``)."""
        rows = []
        asym = not self.symmetric
        for k in range(self.n_states):
            for l in range(self.n_states):
                row = {
                    "k": k + 1, "l": l + 1,
                    "f_cross": float(self.crossings[k, l]),
                    "gap": float(self.gaps[k, l]),
                    "eta": float(self.eta[k, l]),
                }
                if asym:
                    row["eta_h"] = float(self.eta_h[k, l])
                rows.append(row)
        return rows


def _traversal_order(f: np.ndarray) -> tuple[np.ndarray, int]:
    m = f.shape[0]
    k, l = np.divmod(np.arange(m * m), m)
    flat = f.ravel()
    pre = np.argsort(flat, kind="stable")
    # group runs of near-equal frequencies, then order each run by (k, l)
    jumps = np.diff(flat[pre]) > TIE_TOLERANCE
    group = np.empty(m * m, dtype=np.int64)
    group[pre] = np.concatenate([[0], np.cumsum(jumps)])
    order = np.lexsort((l, k, group))
    ties = int(m * m - 1 - np.count_nonzero(jumps))
    return order, ties


def _labels(n_states, row_labels, col_labels):
    rows = default_row_labels(n_states) if row_labels is None else row_labels
    cols = default_col_labels(n_states) if col_labels is None else col_labels
    return rows, cols


def checkerboard_from_gaps(n_states: int, gaps, crossings, sweep_rate: float = 1.0,
                           row_labels=None, col_labels=None) -> Checkerboard:
    """Board from explicit gap and crossing-frequency tables (taken verbatim)."""
    gaps = np.asarray(gaps, dtype=float)
    crossings = np.asarray(crossings, dtype=float)
    if gaps.ndim != 2 or gaps.shape[0] != gaps.shape[1]:
        raise ShapeMismatch(f"gap table must be square, got shape {gaps.shape}")
    if gaps.shape != (n_states, n_states) or crossings.shape != gaps.shape:
        raise ShapeMismatch(
            f"expected {n_states}x{n_states} tables, got gaps {gaps.shape} and crossings {crossings.shape}"
        )
    if np.any(gaps < 0):
        raise NegativeGap("gaps must be nonnegative")
    eta = tunneling_probability(gaps, sweep_rate)
    rows, cols = _labels(n_states, row_labels, col_labels)
    return Checkerboard(crossings, gaps, eta, eta, rows, cols, sweep_rate=float(sweep_rate))


def tilted_crossings(n_states: int) -> np.ndarray:
    """Generic strictly increasing crossing table: columns one MHz apart."""
    k, l = np.indices((n_states, n_states))
    return l + k / n_states


def checkerboard_from_eta(eta, eta_h=None, crossings=None, row_labels=None, col_labels=None) -> Checkerboard:
    """Board specified directly through transfer probabilities."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2 or eta.shape[0] != eta.shape[1]:
        raise ShapeMismatch(f"eta table must be square, got shape {eta.shape}")
    m = eta.shape[0]
    eta_h = eta if eta_h is None else np.asarray(eta_h, dtype=float)
    crossings = tilted_crossings(m) if crossings is None else np.asarray(crossings, dtype=float)
    rows, cols = _labels(m, row_labels, col_labels)
    return Checkerboard(crossings, np.full((m, m), np.nan), eta, eta_h, rows, cols)


def galton_board(n_states: int, p: float, q: float) -> Checkerboard:
    """Uniform Galton board with adiabatic anti-diagonal.

    Every ordinary node sends its total incoming population down with
    probability ``p`` and right with probability ``q = 1 - p``; the
    anti-diagonal nodes ``(k, M-k+1)`` swap the two channels completely.
    For ``p = q = 1/2`` this is the symmetric transfer matrix with
    ``eta = 1/2``.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0) or abs(p + q - 1.0) > 1e-12:
        raise ProbabilityOutOfRange(f"need p, q in [0, 1] with p + q = 1, got p={p!r}, q={q!r}")
    n_spins_for(n_states)
    anti = np.add.outer(np.arange(n_states), np.arange(n_states)) == n_states - 1
    eta = np.where(anti, 0.0, p)
    eta_h = np.where(anti, 0.0, q)
    return checkerboard_from_eta(eta, eta_h)
