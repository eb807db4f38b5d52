"""Windowed microwave sweeps over a model density of states.

A sweep whose window is ``[f0, f0 + df]`` only drives the anti-crossings
inside the window; scanning ``f0`` and recording the hyperpolarization gives
a spectral map of the ``m_s=+1`` level density.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, trapezoid

from .checkerboard import Checkerboard, default_col_labels, default_row_labels
from .engine import PopulationVector, dp_sweep, hyperpolarization
from .errors import (
    BadSeed,
    DegeneracyWarning,
    EmptyRange,
    UnnormalizedTable,
    ValidationError,
)
from .hamming import hamming_order, n_spins_for
from .landau_zener import tunneling_probability

log = logging.getLogger(__name__)

TABLE_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SweepSpec:
    window_start: float
    window_width: float
    sweep_rate: float = 1.0
    direction: str = "forward"
    n_sweeps: int = 1

    def __post_init__(self):
        if not self.window_width > 0:
            raise ValidationError(f"window width must be positive, got {self.window_width!r}")
        if not self.sweep_rate > 0:
            raise ValidationError(f"sweep rate must be positive, got {self.sweep_rate!r}")
        if self.direction not in ("forward", "reverse"):
            raise ValidationError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")
        if int(self.n_sweeps) != self.n_sweeps or self.n_sweeps < 1:
            raise ValidationError(f"n_sweeps must be a positive integer, got {self.n_sweeps!r}")

    @property
    def window(self) -> tuple[float, float]:
        return (self.window_start, self.window_start + self.window_width)

    def at(self, window_start: float) -> "SweepSpec":
        return SweepSpec(window_start, self.window_width, self.sweep_rate, self.direction, self.n_sweeps)

    def flipped(self) -> "SweepSpec":
        d = "reverse" if self.direction == "forward" else "forward"
        return SweepSpec(self.window_start, self.window_width, self.sweep_rate, d, self.n_sweeps)


@dataclass(frozen=True, eq=False)
class DosModel:
    """Distribution of ``m_s=+1`` level frequencies.

    ``kind="gaussian"`` uses ``center`` and the standard deviation ``width``
    (``width=0`` is a delta function). ``kind="tabulated"`` interpolates a
    ``(frequency, density)`` table linearly; the table must integrate to 1.
    """

    kind: str = "gaussian"
    center: float = 0.0
    width: float = 13.5
    table: np.ndarray | None = None
    _cdf: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.width >= 0:
                raise ValidationError(f"width must be nonnegative, got {self.width!r}")
        elif self.kind == "tabulated":
            if self.table is None:
                raise ValidationError("tabulated DOS needs a table")
            t = np.array(self.table, dtype=float)
            if t.ndim != 2 or t.shape[1] != 2 or t.shape[0] < 2:
                raise ValidationError("table must be an (n >= 2, 2) array of (frequency, density)")
            if np.any(np.diff(t[:, 0]) <= 0):
                raise ValidationError("table frequencies must be strictly increasing")
            if np.any(t[:, 1] < 0):
                raise ValidationError("density must be nonnegative")
            total = trapezoid(t[:, 1], t[:, 0])
            if abs(total - 1.0) > TABLE_NORM_TOL:
                raise UnnormalizedTable(f"tabulated density integrates to {total!r}, expected 1")
            t.setflags(write=False)
            cdf = cumulative_trapezoid(t[:, 1], t[:, 0], initial=0.0) / total
            cdf.setflags(write=False)
            object.__setattr__(self, "table", t)
            object.__setattr__(self, "_cdf", cdf)
        else:
            raise ValidationError(f"unknown DOS kind {self.kind!r}")

    @property
    def is_delta(self) -> bool:
        return self.kind == "gaussian" and self.width == 0

    def pdf(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "tabulated":
            return np.interp(f, self.table[:, 0], self.table[:, 1], left=0.0, right=0.0)
        if self.is_delta:
            return np.where(f == self.center, np.inf, 0.0)
        return stats.norm.pdf(f, self.center, self.width)

    def cdf(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "tabulated":
            x, y = self.table[:, 0], self.table[:, 1]
            i = np.clip(np.searchsorted(x, f, side="right") - 1, 0, len(x) - 2)
            dx = np.clip(f - x[i], 0.0, x[i + 1] - x[i])
            slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i])
            val = self._cdf[i] + y[i] * dx + 0.5 * slope * dx ** 2
            return np.where(f < x[0], 0.0, np.where(f >= x[-1], 1.0, val))
        if self.is_delta:
            return np.where(f >= self.center, 1.0, 0.0)
        return stats.norm.cdf(f, self.center, self.width)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "tabulated":
            grid = np.linspace(self.table[0, 0], self.table[-1, 0], 20001)
            c = self.cdf(grid)
            keep = np.concatenate([[True], np.diff(c) > 0])
            return np.interp(u, c[keep], grid[keep])
        if self.is_delta:
            return np.full(u.shape, float(self.center))
        return stats.norm.ppf(u, self.center, self.width)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": self.center, "width": self.width}
        if self.table is not None:
            d["table"] = self.table.tolist()
        return d


def field_dos(config, width: float) -> DosModel:
    """Gaussian level density centred on the bare ``m_s=+1`` crossing frequency.

    ``config`` is a :class:`~galton_dnp.spin_model.SpinSystemConfig`; the
    centre ``Delta + gamma_e B0`` moves with the bias field while ``width``
    models the spread of ``Delta`` across an ensemble of centres.
    """
    return DosModel("gaussian", config.offset, width)


def integrate_dos(dos: DosModel, f0: float, df: float) -> float:
    """Fraction of the density inside ``[f0, f0 + df]``."""
    if not df > 0:
        raise ValidationError(f"window width must be positive, got {df!r}")
    if dos.kind == "gaussian" and not dos.is_delta:
        # work on the near tail so far-out windows keep their relative precision
        a = (f0 - dos.center) / dos.width
        b = (f0 + df - dos.center) / dos.width
        if a > 0:
            return float(stats.norm.sf(a) - stats.norm.sf(b))
        return float(stats.norm.cdf(b) - stats.norm.cdf(a))
    return float(dos.cdf(f0 + df) - dos.cdf(np.nextafter(f0, -np.inf)))


# -- boards from a DOS -----------------------------------------------------

def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise BadSeed(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2 ** 64:
        raise BadSeed(f"seed must lie in [0, 2**64), got {seed!r}")
    return int(seed)


def level_positions(dos: DosModel, n_states: int, placement: str = "quantile",
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Sorted frequencies of the ``m_s=+1`` lines."""
    if placement == "quantile":
        return np.asarray(dos.ppf((np.arange(n_states) + 0.5) / n_states), dtype=float)
    if placement == "random":
        if rng is None:
            raise BadSeed("random placement needs a seeded generator")
        return np.sort(dos.ppf(rng.random(n_states)))
    raise ValidationError(f"unknown placement {placement!r}")


def _hamming_distance(row_labels: np.ndarray, col_labels: np.ndarray, n_states: int) -> np.ndarray:
    codes = np.array(hamming_order(n_spins_for(n_states)))
    x = codes[row_labels - 1][:, None] ^ codes[col_labels - 1][None, :]
    return np.vectorize(lambda v: bin(v).count("1"), otypes=[int])(x)


def sample_board_from_dos(
    dos: DosModel,
    n_states: int,
    gap_scale: float,
    seed: int = 0,
    *,
    placement: str = "quantile",
    labels: str = "random",
    complement: bool = False,
    off_diagonal: float = 0.3,
    gap_profile: str = "uniform",
    level_spacing: float = 0.0,
    sweep_rate: float = 1.0,
) -> Checkerboard:
    """Board whose ``m_s=+1`` lines are distributed according to ``dos``.

    Each column is one ``m_s=+1`` line at frequency ``x_l``; node ``(k, l)``
    sits at ``x_l + (k-1) * level_spacing``. Column states are a seeded random
    assignment of nuclear states (``labels="random"``) or the identity
    (``labels="default"``); ``complement`` maps every column state ``s`` to
    ``M + 1 - s``, i.e. flips all nuclear spins.

    Gaps: ``gap_scale`` where the row and column carry the same nuclear
    state, otherwise ``gap_scale * off_diagonal`` (``gap_profile="uniform"``)
    or ``gap_scale * off_diagonal**d`` with ``d`` the number of flipped spins
    (``gap_profile="hamming"``).
    """
    seed = check_seed(seed)
    n_spins_for(n_states)
    if not gap_scale >= 0 or not off_diagonal >= 0:
        raise ValidationError("gap_scale and off_diagonal must be nonnegative")
    rng = np.random.default_rng(seed)
    x = level_positions(dos, n_states, placement, rng)
    rows = default_row_labels(n_states)
    if labels == "random":
        cols = rng.permutation(n_states) + 1
    elif labels == "default":
        cols = default_col_labels(n_states)
    else:
        raise ValidationError(f"unknown label scheme {labels!r}")
    if complement:
        cols = n_states + 1 - cols
    same = rows[:, None] == cols[None, :]
    if gap_profile == "uniform":
        gaps = np.where(same, gap_scale, gap_scale * off_diagonal)
    elif gap_profile == "hamming":
        gaps = gap_scale * off_diagonal ** _hamming_distance(rows, cols, n_states)
    else:
        raise ValidationError(f"unknown gap profile {gap_profile!r}")
    crossings = x[None, :] + level_spacing * np.arange(n_states)[:, None]
    eta = tunneling_probability(gaps, sweep_rate)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegeneracyWarning)
        board = Checkerboard(crossings, gaps, eta, eta, rows, cols, sweep_rate=float(sweep_rate))
    # with zero level spacing each column is one degenerate block by construction;
    # only coincidences beyond that are worth a warning
    expected = n_states * (n_states - 1) if level_spacing == 0 else 0
    if board.degenerate_ties > expected:
        for w in caught:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return board


def sample_ensemble_from_dos(dos: DosModel, n_states: int, gap_scale: float, seed: int = 0,
                             n_pairs: int = 4, **kwargs) -> list[Checkerboard]:
    """``n_pairs`` random label assignments, each with its spin-flipped partner.

    The ensemble stands in for many centres with different nuclear
    environments; pairing every board with its complement removes the bias a
    single random assignment puts on the polarization sign.
    """
    seed = check_seed(seed)
    if n_pairs < 1:
        raise ValidationError("need at least one board pair")
    children = np.random.SeedSequence(seed).generate_state(n_pairs, dtype=np.uint64)
    boards = []
    for s in children:
        for comp in (False, True):
            boards.append(sample_board_from_dos(dos, n_states, gap_scale, int(s), complement=comp, **kwargs))
    return boards


# -- sweeps ----------------------------------------------------------------

def _board_for(board: Checkerboard, spec: SweepSpec) -> Checkerboard:
    if board.sweep_rate is not None and not np.any(np.isnan(board.gaps)) and board.sweep_rate != spec.sweep_rate:
        board = board.with_sweep_rate(spec.sweep_rate)
    want_reverse = spec.direction == "reverse"
    return board.reversed() if board.reverse != want_reverse else board


def simulate_window_sweep(board: Checkerboard, spec: SweepSpec,
                          init: PopulationVector | None = None) -> tuple[PopulationVector, float]:
    """Repeated windowed sweeps with optical reset of the electron in between.

    Forward sweeps meet the active nodes in ascending frequency, reverse
    sweeps in descending frequency. Returns the nuclear populations after the
    last sweep (electron reset to ``m_s=0``) and their hyperpolarization.
    """
    b = _board_for(board, spec)
    pops = PopulationVector.uniform(b.n_states) if init is None else init
    for _ in range(spec.n_sweeps):
        pops = dp_sweep(b, pops, spec.window, record=False).populations.reset()
    return pops, hyperpolarization(pops)


@dataclass(frozen=True, eq=False)
class SpectralMapResult:
    f0: np.ndarray
    P: np.ndarray
    spec: SweepSpec
    metadata: dict = field(default_factory=dict)

    @property
    def window_centers(self) -> np.ndarray:
        return self.f0 + 0.5 * self.spec.window_width

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.f0, self.P)]

    def rows(self) -> list[dict]:
        return [{"f0": float(a), "P": float(b)} for a, b in zip(self.f0, self.P)]

    def sidecar(self) -> dict:
        return {"spec": asdict(self.spec), **self.metadata}


BoardSource = Union[Checkerboard, Sequence[Checkerboard], Callable[[], Union[Checkerboard, Sequence[Checkerboard]]]]


def _resolve_boards(source: BoardSource) -> list[Checkerboard]:
    if callable(source) and not isinstance(source, Checkerboard):
        source = source()
    if isinstance(source, Checkerboard):
        return [source]
    boards = list(source)
    if not boards or not all(isinstance(b, Checkerboard) for b in boards):
        raise ValidationError("board factory must yield one or more Checkerboards")
    return boards


def f0_grid(f0_range: tuple[float, float], step: float) -> np.ndarray:
    lo, hi = f0_range
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step!r}")
    if not hi >= lo:
        raise EmptyRange(f"empty f0 range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _map_chunk(args) -> np.ndarray:
    boards, starts, spec = args
    out = np.empty(len(starts))
    for i, f in enumerate(starts):
        s = spec.at(float(f))
        out[i] = math.fsum(simulate_window_sweep(b, s)[1] for b in boards) / len(boards)
    return out


def map_spectrum(board_factory: BoardSource, f0_range: tuple[float, float], step: float,
                 spec_template: SweepSpec, *, jobs: int = 1, metadata: dict | None = None) -> SpectralMapResult:
    """Hyperpolarization as a function of the window edge ``f0``.

    ``board_factory`` is a board, a list of boards (the map is their
    average) or a zero-argument callable returning either. With ``jobs > 1``
    the ``f0`` grid is split into contiguous chunks evaluated in worker
    processes; the result does not depend on ``jobs``.
    """
    grid = f0_grid(f0_range, step)
    boards = [_board_for(b, spec_template) for b in _resolve_boards(board_factory)]
    if jobs > 1 and grid.size > 1:
        chunks = [c for c in np.array_split(grid, min(jobs, grid.size)) if c.size]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            P = np.concatenate(list(ex.map(_map_chunk, [(boards, c, spec_template) for c in chunks])))
    else:
        P = _map_chunk((boards, grid, spec_template))
    meta = {"n_boards": len(boards), "n_states": boards[0].n_states}
    meta.update(metadata or {})
    return SpectralMapResult(grid, P, spec_template, meta)


def compare_directions(board_factory: BoardSource, f0_range: tuple[float, float], step: float,
                       spec_template: SweepSpec, *, jobs: int = 1, tol: float = 1e-12) -> dict:
    """Forward and reverse maps on identical boards.

    Reports whether every nonzero forward point changes sign under reversal
    (``sign_flip``), the largest ``|P_f + P_r|`` and the shift between the
    fitted spectral centres (``center_shift``, reverse minus forward; NaN if
    either fit fails).
    """
    from .analysis import Spectrum, fit_gaussian  # local: analysis is optional for simulation
    from .errors import GaltonError

    boards = _resolve_boards(board_factory)
    fwd = map_spectrum(boards, f0_range, step, SweepSpec(**{**asdict(spec_template), "direction": "forward"}), jobs=jobs)
    rev = map_spectrum(boards, f0_range, step, SweepSpec(**{**asdict(spec_template), "direction": "reverse"}), jobs=jobs)
    pf, pr = fwd.P, rev.P
    nonzero = (np.abs(pf) > tol) | (np.abs(pr) > tol)
    flip = bool(np.all(np.sign(pf[nonzero]) == -np.sign(pr[nonzero])) and np.all(pf[nonzero] * pr[nonzero] < 0))
    try:
        cf = fit_gaussian(Spectrum(fwd.window_centers, pf)).params["center"]
        cr = fit_gaussian(Spectrum(rev.window_centers, -pr)).params["center"]
        shift = cr - cf
    except GaltonError:
        shift = float("nan")
    return {
        "forward": fwd,
        "reverse": rev,
        "sign_flip": flip,
        "max_asymmetry": float(np.max(np.abs(pf + pr))),
        "center_shift": float(shift),
    }


# -- buildup ---------------------------------------------------------------

@dataclass(frozen=True)
class BuildupModel:
    """Rate equation ``dP/dt = r (P_max - P) - Gamma1 P``."""

    injection_rate: float
    relaxation: float
    p_max: float = 1.0

    def __post_init__(self):
        if not self.injection_rate >= 0:
            raise ValidationError("injection rate must be nonnegative")
        if not self.relaxation > 0:
            raise ValidationError("relaxation rate must be positive")
        if not 0 < self.p_max <= 1:
            raise ValidationError("p_max must lie in (0, 1]")

    @property
    def t1(self) -> float:
        return 1.0 / self.relaxation

    @property
    def steady_state(self) -> float:
        r = self.injection_rate
        return self.p_max * r / (r + self.relaxation)


def accumulate_buildup(model: BuildupModel, times) -> np.ndarray:
    """Polarization at each time, starting from zero."""
    t = np.asarray(times, dtype=float)
    if t.size and (np.any(t < 0) or np.any(np.diff(t) < 0)):
        raise ValidationError("times must be nonnegative and ascending")
    k = model.injection_rate + model.relaxation
    return model.steady_state * -np.expm1(-k * t)
