"""Population propagation through the checkerboard.

Three independent routes to the exit populations:

* :func:`dp_sweep` -- node-by-node transfer-matrix recursion in traversal order
* :func:`path_sum_exits` -- explicit sum over monotone lattice paths (oracle)
* :func:`analytic_full_sweep` -- closed binomial form for the uniform board
  with an adiabatic anti-diagonal
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import betainc, gammaln

from .checkerboard import Checkerboard
from .errors import (
    BoardUninitialized,
    InvalidEndpoints,
    NegativeHyperfineWarning,
    PathExplosion,
    ProbabilityOutOfRange,
    ShapeMismatch,
    ValidationError,
)
from .hamming import hamming_index, hamming_state, n_spins_for  # noqa: F401  re-exported
from .landau_zener import TransferMatrix, transfer_apply, tunneling_probability  # noqa: F401

log = logging.getLogger(__name__)

NORM_TOL = 1e-12
MAX_PATHS = 10**6
MAX_ANALYTIC_SPINS = 20
LITERAL_MAX_SPINS = 12


@dataclass(frozen=True, eq=False)
class PopulationVector:
    """Nuclear-state occupations in the two electron manifolds.

    ``manifold0[n-1]`` and ``manifold1[n-1]`` hold the population of nuclear
    state ``n`` (Hamming index) with the electron in ``m_s=0`` and ``m_s=+1``.
    """

    manifold0: np.ndarray
    manifold1: np.ndarray

    def __post_init__(self):
        m0 = np.array(self.manifold0, dtype=float, copy=True)
        m1 = np.array(self.manifold1, dtype=float, copy=True)
        if m0.ndim != 1 or m0.shape != m1.shape:
            raise ShapeMismatch(f"manifold arrays must be 1-D and equal length, got {m0.shape}, {m1.shape}")
        n_spins_for(m0.size)
        if np.any(m0 < -NORM_TOL) or np.any(m1 < -NORM_TOL):
            raise ValidationError("populations must be nonnegative")
        for a in (m0, m1):
            a.setflags(write=False)
        object.__setattr__(self, "manifold0", m0)
        object.__setattr__(self, "manifold1", m1)

    @classmethod
    def uniform(cls, n_states: int) -> "PopulationVector":
        """Equal weight on every nuclear state of the ``m_s=0`` manifold."""
        n_spins_for(n_states)
        return cls(np.full(n_states, 1.0 / n_states), np.zeros(n_states))

    @property
    def n_states(self) -> int:
        return self.manifold0.size

    @property
    def total(self) -> float:
        return float(self.manifold0.sum() + self.manifold1.sum())

    @property
    def nuclear(self) -> np.ndarray:
        """Nuclear marginals, summed over the electron state."""
        return self.manifold0 + self.manifold1

    def reset(self) -> "PopulationVector":
        """Optical repolarization: electron back to ``m_s=0``, nuclei untouched."""
        return PopulationVector(self.nuclear, np.zeros(self.n_states))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.total - 1.0) <= tol

    def rows(self) -> list[dict]:
        out = []
        for name, arr in (("0", self.manifold0), ("+1", self.manifold1)):
            out.extend({"manifold": name, "index": i + 1, "population": float(v)} for i, v in enumerate(arr))
        return out


@dataclass(frozen=True, eq=False)
class PopulationField:
    """Result of a board traversal.

    ``p_in[k-1, l-1]`` and ``p_out[k-1, l-1]`` are the two-component vectors
    entering and leaving node ``(k, l)``; component 0 travels down (along an
    ``m_s=+1`` line), component 1 travels right (along an ``m_s=0`` level).
    They are None when the sweep was run with ``record=False``.
    """

    board: Checkerboard
    p_in: np.ndarray | None
    p_out: np.ndarray | None
    exit_bottom: np.ndarray
    exit_right: np.ndarray
    populations: PopulationVector
    window_empty: bool = False

    @property
    def hyperpolarization(self) -> float:
        return hyperpolarization(self.populations)


def _entry_edges(board: Checkerboard, init: PopulationVector) -> tuple[np.ndarray, np.ndarray]:
    top = init.manifold1[board.col_labels - 1].astype(float)
    left = init.manifold0[board.row_labels - 1].astype(float)
    return top, left


def _readout(board: Checkerboard, bottom: np.ndarray, right: np.ndarray) -> PopulationVector:
    m = board.n_states
    m0 = np.zeros(m)
    m1 = np.zeros(m)
    m1[board.col_labels - 1] = bottom
    m0[board.row_labels - 1] = right
    return PopulationVector(np.clip(m0, 0.0, None), np.clip(m1, 0.0, None))


def dp_sweep(
    board: Checkerboard,
    init: PopulationVector | None = None,
    window: tuple[float, float] | None = None,
    *,
    record: bool = True,
    observer: Callable[[int, int, float], None] | None = None,
) -> PopulationField:
    """Propagate ``init`` through ``board`` one anti-crossing at a time.

    Parameters
    ----------
    board : Checkerboard
    init : PopulationVector, optional
        Entering populations; defaults to the uniform ``m_s=0`` state.
    window : (lo, hi), optional
        Only nodes with ``lo <= f_cross <= hi`` act; the rest pass populations
        straight through.
    record : bool
        Keep per-node input/output vectors. Switching this off also skips the
        inactive nodes entirely, which is what makes window scans cheap.
    observer : callable, optional
        Called as ``observer(k, l, total)`` after every node update with the
        current total population on the frontier.
    """
    if not isinstance(board, Checkerboard):
        raise BoardUninitialized("dp_sweep needs a constructed Checkerboard")
    m = board.n_states
    init = PopulationVector.uniform(m) if init is None else init
    if init.n_states != m:
        raise ShapeMismatch(f"init has {init.n_states} states, board has {m}")
    if not init.is_normalized():
        raise ValidationError(f"init populations sum to {init.total!r}, expected 1")

    active = board.window_mask(window)
    window_empty = window is not None and not active.any()
    top, left = _entry_edges(board, init)
    if window_empty:
        log.debug("window %s contains no anti-crossings", window)
        return PopulationField(board, None, None, top, left, init, window_empty=True)

    down = top.tolist()
    right = left.tolist()
    eta = board.eta.ravel().tolist()
    eta_h = board.eta_h.ravel().tolist()
    flat_active = active.ravel()
    act = flat_active.tolist()
    order = board.traversal_order
    if not (record or observer):
        order = order[flat_active[order]]
    order = order.tolist()
    if record:
        p_in = np.zeros((m, m, 2))
        p_out = np.zeros((m, m, 2))
    for idx in order:
        on = act[idx]
        k, l = divmod(idx, m)
        a = down[l]
        b = right[k]
        if on:
            ev = eta[idx]
            eh = eta_h[idx]
            d = ev * a + (1.0 - eh) * b
            r = (1.0 - ev) * a + eh * b
            down[l] = d
            right[k] = r
        else:
            d, r = a, b
        if record:
            p_in[k, l] = (a, b)
            p_out[k, l] = (d, r)
        if observer is not None:
            observer(k + 1, l + 1, math.fsum(down) + math.fsum(right))
    bottom = np.array(down)
    rgt = np.array(right)
    return PopulationField(
        board,
        p_in if record else None,
        p_out if record else None,
        bottom,
        rgt,
        _readout(board, bottom, rgt),
    )


# -- path enumeration ------------------------------------------------------

@lru_cache(maxsize=256)
def _path_table(dk: int, dl: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Interior-vertex offsets and step directions of every monotone path.

    Returns ``(dk_v, dl_v, inc, out)``, each of shape ``(n_paths, steps-1)``:
    the offset of every interior vertex from the start and whether the step
    into / out of it goes down.
    """
    steps = dk + dl
    combos = list(itertools.combinations(range(steps), dk))
    down = np.zeros((len(combos), steps), dtype=bool)
    if dk:
        down[np.repeat(np.arange(len(combos)), dk), np.array(combos).ravel()] = True
    dk_v = np.cumsum(down, axis=1)[:, :-1]
    dl_v = np.cumsum(~down, axis=1)[:, :-1]
    out = (dk_v, dl_v, down[:, :-1], down[:, 1:])
    for arr in out:
        arr.setflags(write=False)
    return out


def _padded(board: Checkerboard) -> tuple[np.ndarray, np.ndarray]:
    m = board.n_states
    ev = np.zeros((m + 2, m + 2))
    eh = np.zeros((m + 2, m + 2))
    ev[1:-1, 1:-1] = board.eta
    eh[1:-1, 1:-1] = board.eta_h
    return ev, eh


def _path_sum(ev, eh, m, start, end) -> float:
    (ki, li), (kf, lf) = start, end
    dk, dl = kf - ki, lf - li
    if dk + dl < 2:
        return 1.0
    dk_v, dl_v, inc, out = _path_table(dk, dl)
    vk = ki + dk_v
    vl = li + dl_v
    ev_v = ev[vk, vl]
    eh_v = eh[vk, vl]
    coeff = np.where(inc, np.where(out, ev_v, 1.0 - ev_v), np.where(out, 1.0 - eh_v, eh_v))
    coeff *= (vk >= 1) & (vk <= m) & (vl >= 1) & (vl <= m)
    return float(np.prod(coeff, axis=1).sum())


def path_probability(board: Checkerboard, start: tuple[int, int], end: tuple[int, int]) -> float:
    """Probability of travelling from ``start`` to ``end`` along down/right paths.

    Vertices use padded coordinates: ``(k, 0)`` is the left entry of row
    ``k``, ``(0, l)`` the top entry of column ``l``, ``(M+1, l)`` the bottom
    exit and ``(k, M+1)`` the right exit. Each path contributes the product
    of its interior-vertex coefficients: ``eta`` for a vertex passed straight
    while moving down, ``eta_h`` straight while moving right, and ``1 - eta``
    / ``1 - eta_h`` for a turn out of a vertical / horizontal approach.
    Interior vertices off the board give 0.
    """
    m = board.n_states
    (ki, li), (kf, lf) = start, end
    for v in (ki, li, kf, lf):
        if not (isinstance(v, (int, np.integer)) and 0 <= v <= m + 1):
            raise InvalidEndpoints(f"endpoint coordinates must be integers in [0, {m + 1}], got {start}, {end}")
    dk, dl = kf - ki, lf - li
    if dk < 0 or dl < 0:
        raise InvalidEndpoints(f"end {end} is not below/right of start {start}")
    if math.comb(dk + dl, dk) > MAX_PATHS:
        raise PathExplosion(f"C({dk + dl}, {dk}) paths exceeds the {MAX_PATHS} guard")
    ev, eh = _padded(board)
    return _path_sum(ev, eh, m, start, end)


def _walk_exits(ev: np.ndarray, eh: np.ndarray, m: int, top: np.ndarray, left: np.ndarray):
    # path sum grouped by path length: one application of the down/right walk
    # operators extends every partial path by one vertex, all vertices at once
    xd = np.zeros((m + 2, m + 2))  # weight arriving at (k, l) while moving down
    xr = np.zeros((m + 2, m + 2))  # ... while moving right
    xd[1, 1:m + 1] = top
    xr[1:m + 1, 1] = left
    inner = (slice(1, m + 1), slice(1, m + 1))
    v = ev[inner]
    h = eh[inner]
    bottom = np.zeros(m)
    right = np.zeros(m)
    for _ in range(2 * m):
        a = xd[inner]
        b = xr[inner]
        xd = np.zeros_like(xd)
        xr = np.zeros_like(xr)
        xd[2:, 1:m + 1] = v * a + (1.0 - h) * b
        xr[1:m + 1, 2:] = (1.0 - v) * a + h * b
        bottom += xd[m + 1, 1:m + 1]
        right += xr[1:m + 1, m + 1]
    return bottom, right


def path_sum_exits(board: Checkerboard, init: PopulationVector | None = None,
                   method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Exit-edge populations as the sum over all monotone paths.

    ``method="enumerate"`` lists every path explicitly (subject to the path
    guard, so N <= 3 in practice). ``method="walk"`` evaluates the same sum
    grouped by path length, extending all partial paths by one vertex per
    step; it does not use the traversal order and reaches any N. ``"auto"``
    enumerates when the guard allows.

    Returns ``(bottom, right)`` in the layout of
    :attr:`PopulationField.exit_bottom` / ``exit_right``.
    """
    m = board.n_states
    init = PopulationVector.uniform(m) if init is None else init
    top, left = _entry_edges(board, init)
    ev, eh = _padded(board)
    fits = math.comb(2 * m, m) <= MAX_PATHS
    if method == "auto":
        method = "enumerate" if fits else "walk"
    if method == "walk":
        return _walk_exits(ev, eh, m, top, left)
    if method != "enumerate":
        raise ValidationError(f"unknown method {method!r}")
    if not fits:
        raise PathExplosion(f"board with {m} states exceeds the {MAX_PATHS} path guard")
    entries = [((k, 0), w) for k, w in zip(range(1, m + 1), left) if w] + \
              [((0, l), w) for l, w in zip(range(1, m + 1), top) if w]
    bottom = np.zeros(m)
    right = np.zeros(m)
    for (ki, li), w in entries:
        for j in range(max(li, 1), m + 1):
            bottom[j - 1] += w * _path_sum(ev, eh, m, (ki, li), (m + 1, j))
        for j in range(max(ki, 1), m + 1):
            right[j - 1] += w * _path_sum(ev, eh, m, (ki, li), (j, m + 1))
    return bottom, right


def path_sum_sweep(board: Checkerboard, init: PopulationVector | None = None,
                   method: str = "auto") -> PopulationVector:
    bottom, right = path_sum_exits(board, init, method)
    return _readout(board, bottom, right)


# -- closed form -----------------------------------------------------------

def _check_pq(n_states: int, p: float, q: float) -> int:
    n_spins = n_spins_for(n_states)
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ProbabilityOutOfRange(f"p and q must lie in [0, 1], got {p!r}, {q!r}")
    if abs(p + q - 1.0) > 1e-12:
        raise ProbabilityOutOfRange(f"p + q must equal 1, got {p + q!r}")
    if n_spins > MAX_ANALYTIC_SPINS:
        raise ProbabilityOutOfRange(f"closed form limited to N <= {MAX_ANALYTIC_SPINS}, got N={n_spins}")
    return n_spins


def _log_binom(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ok = (b >= 0) & (b <= a)
    aa = np.where(ok, a, 0)
    bb = np.where(ok, b, 0)
    return np.where(ok, gammaln(aa + 1) - gammaln(bb + 1) - gammaln(aa - bb + 1), -np.inf)


def _xlogy(k: np.ndarray, x: float) -> np.ndarray:
    # k * log(x) with 0 * log(0) = 0
    if x > 0:
        return k * math.log(x)
    return np.where(k == 0, 0.0, -np.inf)


def _analytic_literal(m: int, p: float, q: float) -> np.ndarray:
    n = np.arange(1, m + 1)[:, None]
    l = np.arange(1, m)[None, :]
    t1 = _log_binom(n - 2 + m - l - 1, n - 2) + _xlogy(m - l, p) + _xlogy(n - 2 + 0 * l, q)
    j = m - n - l
    t2 = _log_binom(j + m - 2, j) + _xlogy(np.maximum(j, 0), p) + (m - 1) * (math.log(q) if q > 0 else -np.inf)
    t2 = np.where(j >= 0, t2, -np.inf)
    with np.errstate(invalid="ignore"):
        s = np.exp(t1).sum(axis=1) + np.exp(t2).sum(axis=1)
    s[0] += 1.0
    return s / m


def _analytic_beta(m: int, p: float, q: float) -> np.ndarray:
    # the two row sums are negative-binomial tails, i.e. regularized incomplete betas
    n = np.arange(1, m + 1)
    out = np.zeros(m)
    out[0] = 1.0
    if q == 0.0:
        out[1] += m - 1
        return out / m
    if p == 0.0:
        out[: m - 1] += 1.0
        return out / m
    hi = n >= 2
    out[hi] += (p / q) * betainc(n[hi] - 1, m - 1, q)
    lo = n <= m - 1
    out[lo] += betainc(m - 1, m - n[lo], q)
    return out / m


def analytic_full_sweep(n_states: int, p: float, q: float, method: str = "auto") -> PopulationVector:
    """Closed-form populations after one full sweep of the uniform board.

    Every ordinary node sends population down with probability ``p`` and
    right with probability ``q``; the anti-diagonal is fully adiabatic. The
    electron is returned to ``m_s=0`` afterwards, so the result sits in
    ``manifold0``.

    ``method`` is ``"literal"`` (term-by-term binomial sum, N <= 12),
    ``"beta"`` (incomplete-beta form of the same sums) or ``"auto"``.
    """
    n_spins = _check_pq(n_states, p, q)
    if method == "auto":
        method = "literal" if n_spins <= LITERAL_MAX_SPINS else "beta"
    if method == "literal":
        if n_spins > LITERAL_MAX_SPINS:
            raise ValidationError(f"literal sum limited to N <= {LITERAL_MAX_SPINS}")
        vals = _analytic_literal(n_states, p, q)
    elif method == "beta":
        vals = _analytic_beta(n_states, p, q)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return PopulationVector(vals, np.zeros(n_states))


def hyperpolarization(pops: PopulationVector, hyperfine_sign: float = 1.0) -> float:
    """Signed imbalance between the lower and upper halves of the Hamming order.

    A negative secular hyperfine coupling produces no hyperpolarization in the
    ``m_s=+1`` readout; that case returns 0 with a warning.
    """
    if hyperfine_sign < 0:
        warnings.warn(
            "negative secular hyperfine coupling: no hyperpolarization in the m_s=+1 manifold",
            NegativeHyperfineWarning,
            stacklevel=2,
        )
        return 0.0
    nuc = pops.nuclear
    half = nuc.size // 2
    return float(math.fsum(nuc[:half]) - math.fsum(nuc[half:]))
