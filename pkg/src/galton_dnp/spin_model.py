"""Electron-nuclear level structure and anti-crossing extraction.

The electron is restricted to ``m_s in {0, +1}`` and treated as a pseudo
spin-1/2 whose drive term is ``Omega_e * sigma_x / 2``. In the rotating frame

    H(f0) = (Delta - f0 + gamma_e B0) P1 + Omega_e sigma_x / 2
            + sum_j [omega0_j P0 I_zj + omega1_j P1 I_z'j]

where ``I_z' = cos(theta) I_z + sin(theta) I_x``. All frequencies are MHz,
fields mT.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components

from .checkerboard import Checkerboard, checkerboard_from_gaps
from .errors import (
    CrossingNotFound,
    DimensionTooLarge,
    GridEmpty,
    MinimizationDiverged,
    ValidationError,
)
from .hamming import code_rank

log = logging.getLogger(__name__)

GYRO_ELECTRON = 28.025  # MHz/mT
ZERO_FIELD_SPLITTING = 2870.0  # MHz
MAX_LEVEL_SPINS = 12
MAX_EXACT_SPINS = 6
GAP_XATOL = 1e-6  # MHz
DEGENERACY_TOL = 1e-9  # MHz


@dataclass(frozen=True)
class NuclearSpinParams:
    """One nucleus: precession in each manifold and the tilt between their axes."""

    omega0: float
    omega1: float
    tilt: float = 0.0
    a_parallel: float = 0.0

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValidationError(f"omega0 must be positive, got {self.omega0!r}")
        if not self.omega1 >= 0:
            raise ValidationError(f"omega1 must be nonnegative, got {self.omega1!r}")
        if not 0.0 <= self.tilt < math.pi:
            raise ValidationError(f"tilt must lie in [0, pi), got {self.tilt!r}")

    @property
    def hyperfine_sign(self) -> int:
        return -1 if self.a_parallel < 0 else 1

    @classmethod
    def from_hyperfine(cls, omega0: float, a_parallel: float, a_perp: float) -> "NuclearSpinParams":
        """Effective field in ``m_s=+1``: the Larmor term plus the hyperfine field.

        The nucleus precesses about ``omega0 z + A_par z + A_perp x`` when the
        electron is in ``m_s=+1``.
        """
        bz = omega0 + a_parallel
        omega1 = math.hypot(bz, a_perp)
        tilt = math.atan2(a_perp, bz) % math.pi if omega1 > 0 else 0.0
        return cls(omega0, omega1, tilt, a_parallel)


@dataclass(frozen=True)
class SpinSystemConfig:
    nuclei: tuple[NuclearSpinParams, ...]
    rabi: float = 1.0
    bias_field: float = 0.0
    gyro_electron: float = GYRO_ELECTRON
    zero_field_splitting: float = ZERO_FIELD_SPLITTING

    def __post_init__(self):
        nuclei = tuple(n if isinstance(n, NuclearSpinParams) else NuclearSpinParams(**n) for n in self.nuclei)
        object.__setattr__(self, "nuclei", nuclei)
        if len(nuclei) < 1:
            raise ValidationError("need at least one nucleus")
        # a zero drive is accepted: it is the bare level diagram
        if not self.rabi >= 0:
            raise ValidationError(f"rabi frequency must be nonnegative, got {self.rabi!r}")
        if not self.zero_field_splitting > 0:
            raise ValidationError("zero-field splitting must be positive")
        if not self.bias_field >= 0:
            raise ValidationError("bias field must be nonnegative")

    @property
    def n_nuclei(self) -> int:
        return len(self.nuclei)

    @property
    def n_states(self) -> int:
        return 2 ** self.n_nuclei

    @property
    def offset(self) -> float:
        """Frequency where the bare ``m_s=+1`` and ``m_s=0`` levels cross."""
        return self.zero_field_splitting + self.gyro_electron * self.bias_field

    def with_bias_field(self, bias_field: float) -> "SpinSystemConfig":
        return SpinSystemConfig(self.nuclei, self.rabi, bias_field, self.gyro_electron, self.zero_field_splitting)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nuclei"] = [asdict(n) for n in self.nuclei]
        return d


def load_config(source) -> SpinSystemConfig:
    """Config from a JSON file path, a JSON string or a mapping.

    Keys mirror :class:`SpinSystemConfig`; an ``n_nuclei`` key, if present,
    must match the length of ``nuclei``.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        p = Path(source)
        text = p.read_text() if p.exists() else None
        if text is None:
            if isinstance(source, str) and source.lstrip().startswith("{"):
                text = source
            else:
                raise ValidationError(f"config file not found: {source}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from e
    n = data.pop("n_nuclei", None)
    known = {"nuclei", "rabi", "bias_field", "gyro_electron", "zero_field_splitting"}
    extra = set(data) - known
    if extra:
        raise ValidationError(f"unknown config keys: {sorted(extra)}")
    if "nuclei" not in data:
        raise ValidationError("config needs a 'nuclei' list")
    cfg = SpinSystemConfig(**data)
    if n is not None and n != cfg.n_nuclei:
        raise ValidationError(f"n_nuclei={n} but {cfg.n_nuclei} nuclei listed")
    return cfg


@dataclass(frozen=True, eq=False)
class LevelDiagram:
    """Eigenvalues of the rotating-frame Hamiltonian over a frequency grid.

    ``energies0[i]`` / ``energies1[i]`` are the levels of mostly ``m_s=0`` /
    mostly ``m_s=+1`` character at ``f0_grid[i]``, each sorted ascending.
    """

    f0_grid: np.ndarray
    energies0: np.ndarray
    energies1: np.ndarray

    def rows(self) -> list[dict]:
        out = []
        for f, e0, e1 in zip(self.f0_grid, self.energies0, self.energies1):
            for name, e in (("0", e0), ("+1", e1)):
                out.extend({"f0": float(f), "manifold": name, "index": i + 1, "energy": float(v)}
                           for i, v in enumerate(e))
        return out


# -- operators -------------------------------------------------------------

_SZ = np.diag([0.5, -0.5])  # basis order (up, down)
_SX = np.array([[0.0, 0.5], [0.5, 0.0]])


def _embed(op: np.ndarray, j: int, n: int) -> np.ndarray:
    return reduce(np.kron, [op if i == j else np.eye(2) for i in range(n)])


def hamiltonian(config: SpinSystemConfig, f0: float) -> np.ndarray:
    """Explicit ``2*2**N`` matrix; electron ``m_s=0`` block first.

    Nuclear basis states are ordered with spin 1 as the most significant
    bit and bit value 1 meaning ``m=+1/2``.
    """
    n = config.n_nuclei
    dim = 2 ** n
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    # kron ordering above uses (up, down); flip to bit order (0 = down, 1 = up)
    flip = np.eye(dim)[::-1]
    h_nuc0 = np.zeros((dim, dim))
    h_nuc1 = np.zeros((dim, dim))
    for j, nuc in enumerate(config.nuclei):
        iz = _embed(_SZ, j, n)
        ix = _embed(_SX, j, n)
        h_nuc0 += nuc.omega0 * iz
        h_nuc1 += nuc.omega1 * (math.cos(nuc.tilt) * iz + math.sin(nuc.tilt) * ix)
    h_nuc0 = flip @ h_nuc0 @ flip
    h_nuc1 = flip @ h_nuc1 @ flip
    sx = np.array([[0.0, 0.5], [0.5, 0.0]])
    detune = config.offset - f0
    return (
        np.kron(p0, h_nuc0)
        + np.kron(p1, h_nuc1 + detune * np.eye(dim))
        + config.rabi * np.kron(sx, np.eye(dim))
    )


def build_levels(config: SpinSystemConfig, f0_grid) -> LevelDiagram:
    """Diagonalize the Hamiltonian at every grid frequency.

    Eigenvalues are split by manifold character: the ``2**N`` eigenvectors
    with the largest ``m_s=+1`` weight form manifold +1.
    """
    grid = np.asarray(f0_grid, dtype=float).ravel()
    if grid.size == 0:
        raise GridEmpty("frequency grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValidationError("frequency grid must be sorted ascending")
    if config.n_nuclei > MAX_LEVEL_SPINS:
        raise DimensionTooLarge(f"N={config.n_nuclei} exceeds the limit of {MAX_LEVEL_SPINS} nuclei")
    dim = config.n_states
    e0 = np.empty((grid.size, dim))
    e1 = np.empty((grid.size, dim))
    for i, f in enumerate(grid):
        w, v = np.linalg.eigh(hamiltonian(config, f))
        weight1 = np.sum(v[dim:] ** 2, axis=0)
        order = np.argsort(weight1, kind="stable")
        e0[i] = np.sort(w[order[:dim]])
        e1[i] = np.sort(w[order[dim:]])
    return LevelDiagram(grid, e0, e1)


# -- rotated basis used for the crossings ----------------------------------

def _bits(n: int) -> np.ndarray:
    codes = np.arange(2 ** n)
    return (codes[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1


def manifold_energies(config: SpinSystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bare nuclear energies per binary code in ``m_s=0`` and ``m_s=+1``.

    In ``m_s=+1`` the code refers to the tilted quantization axes.
    """
    bits = _bits(config.n_nuclei) - 0.5
    w0 = np.array([n.omega0 for n in config.nuclei])
    w1 = np.array([n.omega1 for n in config.nuclei])
    return bits @ w0, bits @ w1


def overlap_matrix(config: SpinSystemConfig) -> np.ndarray:
    """``U[a, b] = <z code a | z' code b>``: nuclear overlap between the manifolds."""
    mats = []
    for nuc in config.nuclei:
        c, s = math.cos(nuc.tilt / 2), math.sin(nuc.tilt / 2)
        # rows: z bit (0 down, 1 up); columns: tilted-axis bit
        mats.append(np.array([[c, s], [-s, c]]))
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class _Layout:
    row_codes: np.ndarray  # code of the m_s=0 state on row k
    col_codes: np.ndarray  # code of the m_s=+1 state on column l
    e0: np.ndarray
    e1: np.ndarray
    crossings: np.ndarray
    row_labels: np.ndarray = field(repr=False)
    col_labels: np.ndarray = field(repr=False)


def _layout(config: SpinSystemConfig) -> _Layout:
    e0, e1 = manifold_energies(config)
    for name, e in (("m_s=0", e0), ("m_s=+1", e1)):
        s = np.sort(e)
        if np.any(np.diff(s) < DEGENERACY_TOL):
            raise CrossingNotFound(
                f"degenerate nuclear levels in the {name} manifold; anti-crossings are not isolated"
            )
    rows = np.argsort(-e0, kind="stable")
    cols = np.argsort(e1, kind="stable")
    crossings = config.offset + e1[cols][None, :] - e0[rows][:, None]
    n = config.n_nuclei
    rl = np.array([code_rank(int(c), n) for c in rows])
    cl = np.array([code_rank(int(c), n) for c in cols])
    return _Layout(rows, cols, e0, e1, crossings, rl, cl)


def _pair_gap(h0: np.ndarray, a: int, b: int, dim: int, center: float, half_width: float) -> float:
    """Smallest splitting of the eigenpair carrying states ``a`` (m_s=0) and ``b`` (m_s=+1)."""
    base = h0.copy()
    idx1 = np.arange(dim, 2 * dim)

    def split(delta):
        h = base.copy()
        h[idx1, idx1] -= delta
        w, v = np.linalg.eigh(h)
        weight = v[a] ** 2 + v[dim + b] ** 2
        i, j = np.argsort(weight)[-2:]
        return abs(w[i] - w[j])

    lo, hi = center - half_width, center + half_width
    res = minimize_scalar(split, bounds=(lo, hi), method="bounded", options={"xatol": GAP_XATOL})
    if not res.success:
        raise MinimizationDiverged(f"gap search did not converge near detuning {center:.6g} MHz")
    if min(res.x - lo, hi - res.x) < 2 * GAP_XATOL:
        raise MinimizationDiverged(
            f"gap minimum at the edge of the +-{half_width:.3g} MHz bracket around {center:.6g} MHz"
        )
    return float(res.fun)


def locate_lacs(config: SpinSystemConfig) -> Checkerboard:
    """Crossing frequencies and exact eigen-gaps of every anti-crossing.

    Rows are ``m_s=0`` levels from the highest energy down, columns are
    ``m_s=+1`` levels from the lowest up, so crossing frequency increases
    along both. Each node's gap is the minimum splitting of the eigenpair
    that carries its two bare states, searched within ``+-3 Omega_e`` of the
    bare crossing. Nodes whose states are not connected by the drive at any
    order are true crossings and get a gap of exactly 0.
    """
    n = config.n_nuclei
    if n > MAX_EXACT_SPINS:
        raise DimensionTooLarge(
            f"exact gap extraction is limited to N <= {MAX_EXACT_SPINS}; use perturbative_board"
        )
    lay = _layout(config)
    dim = config.n_states
    gaps = np.zeros((dim, dim))
    omega = config.rabi
    if omega > 0:
        u = overlap_matrix(config)
        h0 = np.zeros((2 * dim, 2 * dim))
        h0[np.arange(dim), np.arange(dim)] = lay.e0
        h0[np.arange(dim, 2 * dim), np.arange(dim, 2 * dim)] = lay.e1
        h0[:dim, dim:] = 0.5 * omega * u
        h0[dim:, :dim] = 0.5 * omega * u.T
        _, comp = connected_components(np.abs(h0) > 0, directed=False)
        for k, a in enumerate(lay.row_codes):
            for l, b in enumerate(lay.col_codes):
                if comp[a] != comp[dim + b]:
                    continue
                center = lay.e1[b] - lay.e0[a]
                gaps[k, l] = _pair_gap(h0, int(a), int(b), dim, center, 3.0 * omega)
    log.debug("located %d anti-crossings for N=%d", dim * dim, n)
    return checkerboard_from_gaps(dim, gaps, lay.crossings, row_labels=lay.row_labels,
                                  col_labels=lay.col_labels)


def perturbative_board(config: SpinSystemConfig) -> Checkerboard:
    """First-order gaps ``Omega_e * |<z_a|z'_b>|`` for any N."""
    lay = _layout(config)
    bits = _bits(config.n_nuclei)
    ra = bits[lay.row_codes]
    cb = bits[lay.col_codes]
    mag = np.ones((config.n_states, config.n_states))
    for j, nuc in enumerate(config.nuclei):
        same = ra[:, j][:, None] == cb[:, j][None, :]
        mag *= np.where(same, abs(math.cos(nuc.tilt / 2)), abs(math.sin(nuc.tilt / 2)))
    gaps = config.rabi * mag
    return checkerboard_from_gaps(config.n_states, gaps, lay.crossings, row_labels=lay.row_labels,
                                  col_labels=lay.col_labels)
