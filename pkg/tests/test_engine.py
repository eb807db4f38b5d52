import csv
import math
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galton_dnp.checkerboard import checkerboard_from_eta, galton_board
from galton_dnp.engine import (
    PopulationVector,
    analytic_full_sweep,
    dp_sweep,
    hyperpolarization,
    path_probability,
    path_sum_exits,
    path_sum_sweep,
)
from galton_dnp.errors import (
    BoardUninitialized,
    InvalidEndpoints,
    NegativeHyperfineWarning,
    PathExplosion,
    ProbabilityOutOfRange,
    ShapeMismatch,
    ValidationError,
)

GOLDEN = Path(__file__).parent / "golden" / "galton_n4_p05_populations.csv"


def _brute_paths(board, start, end):
    """Independent enumeration: walk every down/right sequence explicitly."""
    (ki, li), (kf, lf) = start, end
    dk, dl = kf - ki, lf - li
    m = board.n_states
    total = 0.0
    for downs in combinations(range(dk + dl), dk):
        moves = ["d" if i in downs else "r" for i in range(dk + dl)]
        k, l = ki, li
        prod = 1.0
        for j in range(len(moves) - 1):
            k, l = (k + 1, l) if moves[j] == "d" else (k, l + 1)
            if not (1 <= k <= m and 1 <= l <= m):
                prod = 0.0
                break
            ev, eh = board.eta[k - 1, l - 1], board.eta_h[k - 1, l - 1]
            a, b = moves[j], moves[j + 1]
            prod *= {("d", "d"): ev, ("d", "r"): 1 - ev, ("r", "d"): 1 - eh, ("r", "r"): eh}[(a, b)]
        total += prod
    return total


def test_population_vector_validation():
    with pytest.raises(ShapeMismatch):
        PopulationVector([0.5, 0.5], [0.0])
    with pytest.raises(ValidationError):
        PopulationVector([-0.5, 1.5], [0, 0])
    v = PopulationVector.uniform(4)
    assert v.total == 1.0 and v.is_normalized()
    assert [r["manifold"] for r in v.rows()][:1] == ["0"]


def test_all_diabatic_board_is_identity():
    rng = np.random.default_rng(0)
    init = PopulationVector(0.6 * rng.dirichlet(np.ones(8)), 0.4 * rng.dirichlet(np.ones(8)))
    field = dp_sweep(checkerboard_from_eta(np.ones((8, 8))), init)
    assert np.array_equal(field.populations.manifold0, init.manifold0)
    assert np.array_equal(field.populations.manifold1, init.manifold1)
    assert dp_sweep(checkerboard_from_eta(np.ones((8, 8)))).hyperpolarization == 0.0


def test_single_spin_all_adiabatic_hand_trace():
    # rows hold states (2, 1), columns (1, 2); eta=0 swaps the channels at every node.
    # Row 1 turns down at (1,1), row 2 turns down at (2,1) while the row-1 population
    # turns right and then down at (2,2). Everything leaves through the bottom.
    field = dp_sweep(checkerboard_from_eta(np.zeros((2, 2))))
    assert np.allclose(field.p_out[0, 0], (0.5, 0.0))
    assert np.allclose(field.p_out[1, 0], (0.5, 0.5))
    assert np.allclose(field.p_out[1, 1], (0.5, 0.0))
    assert np.allclose(field.exit_bottom, (0.5, 0.5))
    assert np.allclose(field.exit_right, (0.0, 0.0))
    assert np.allclose(field.populations.manifold1, (0.5, 0.5))
    assert field.hyperpolarization == 0.0


def test_path_probability_examples():
    b = checkerboard_from_eta(np.full((4, 4), 0.3))
    assert path_probability(b, (2, 2), (2, 2)) == 1.0
    assert path_probability(b, (1, 2), (3, 2)) == pytest.approx(0.3)
    half = checkerboard_from_eta(np.full((2, 2), 0.5))
    assert path_probability(half, (0, 1), (3, 2)) == pytest.approx(_brute_paths(half, (0, 1), (3, 2)))


def test_path_probability_errors():
    b = galton_board(4, 0.5, 0.5)
    with pytest.raises(InvalidEndpoints):
        path_probability(b, (3, 3), (2, 4))
    with pytest.raises(InvalidEndpoints):
        path_probability(b, (0, 0), (9, 9))
    big = galton_board(2 ** 5, 0.5, 0.5)
    with pytest.raises(PathExplosion):
        path_probability(big, (1, 0), (33, 32))
    with pytest.raises(PathExplosion):
        path_sum_exits(galton_board(16, 0.5, 0.5), method="enumerate")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_vectorised_paths_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    b = checkerboard_from_eta(rng.random((4, 4)), rng.random((4, 4)))
    starts = [(k, 0) for k in range(1, 5)] + [(0, l) for l in range(1, 5)]
    for s in starts[:: 3]:
        for e in [(5, 2), (3, 5), (5, 4)]:
            if e[0] >= s[0] and e[1] >= s[1]:
                assert path_probability(b, s, e) == pytest.approx(_brute_paths(b, s, e), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1), st.booleans())
def test_dp_matches_both_path_sums(n, seed, asym):
    rng = np.random.default_rng(seed)
    m = 2 ** n
    b = checkerboard_from_eta(rng.random((m, m)), rng.random((m, m)) if asym else None)
    init = PopulationVector(0.7 * rng.dirichlet(np.ones(m)), 0.3 * rng.dirichlet(np.ones(m)))
    f = dp_sweep(b, init)
    for method in ("enumerate", "walk"):
        bottom, right = path_sum_exits(b, init, method)
        assert np.max(np.abs(f.exit_bottom - bottom)) <= 1e-12
        assert np.max(np.abs(f.exit_right - right)) <= 1e-12


def test_walk_oracle_agrees_with_enumeration_at_four_spins():
    # the N=4 golden profile comes from the walk form; check it against explicit
    # enumeration for every entry/exit pair small enough to enumerate
    b = galton_board(16, 0.5, 0.5)
    m = 16
    checked = 0
    for k in range(10, m + 1):
        init0 = np.zeros(m)
        init0[b.row_labels[k - 1] - 1] = 1.0
        bottom, right = path_sum_exits(b, PopulationVector(init0, np.zeros(m)), method="walk")
        for j in range(1, m + 1):
            if math.comb(m + 1 - k + j, j) <= 2 * 10 ** 5:
                assert bottom[j - 1] == pytest.approx(path_probability(b, (k, 0), (m + 1, j)), abs=1e-14)
                checked += 1
            if j >= k and math.comb(j - k + m + 1, m + 1) <= 2 * 10 ** 5:
                assert right[j - 1] == pytest.approx(path_probability(b, (k, 0), (j, m + 1)), abs=1e-14)
                checked += 1
    assert checked > 20


def test_golden_profile():
    with GOLDEN.open() as fh:
        rows = list(csv.DictReader(fh))
    g = np.array([float(r["population"]) for r in rows])
    pops = dp_sweep(galton_board(16, 0.5, 0.5)).populations
    assert np.max(np.abs(np.concatenate([pops.manifold0, pops.manifold1]) - g)) <= 1e-12


def test_conservation_after_every_node():
    rng = np.random.default_rng(3)
    b = checkerboard_from_eta(rng.random((8, 8)), rng.random((8, 8)))
    drift = []
    dp_sweep(b, observer=lambda k, l, t: drift.append(abs(t - 1)))
    assert len(drift) == 64 and max(drift) <= 1e-12


def test_window_semantics():
    b = galton_board(4, 0.3, 0.7)
    full = dp_sweep(b).populations
    windowed = dp_sweep(b, window=(-1.0, 100.0)).populations
    assert np.allclose(full.manifold0, windowed.manifold0) and np.allclose(full.manifold1, windowed.manifold1)
    empty = dp_sweep(b, window=(50.0, 60.0))
    assert empty.window_empty
    assert np.array_equal(empty.populations.manifold0, PopulationVector.uniform(4).manifold0)
    # skipping inactive nodes must not change the answer
    part = (0.5, 2.2)
    a = dp_sweep(b, window=part, record=True).populations
    c = dp_sweep(b, window=part, record=False).populations
    assert np.array_equal(a.manifold0, c.manifold0) and np.array_equal(a.manifold1, c.manifold1)
    assert np.allclose(dp_sweep(b.with_window(part)).populations.nuclear, a.nuclear)


def test_dp_input_errors():
    with pytest.raises(BoardUninitialized):
        dp_sweep(None)
    with pytest.raises(ShapeMismatch):
        dp_sweep(galton_board(4, 0.5, 0.5), PopulationVector.uniform(2))
    with pytest.raises(ValidationError):
        dp_sweep(galton_board(2, 0.5, 0.5), PopulationVector([0.2, 0.2], [0, 0]))


@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("p", [0.5, 0.3, 0.8, 0.0, 1.0])
def test_analytic_matches_dp(n, p):
    m = 2 ** n
    a = analytic_full_sweep(m, p, 1 - p)
    d = dp_sweep(galton_board(m, p, 1 - p), record=False).populations
    assert np.max(np.abs(a.manifold0 - d.nuclear)) <= 1e-10
    assert abs(a.total - 1) <= 1e-12


@pytest.mark.parametrize("n", [2, 5, 9, 12])
@pytest.mark.parametrize("p", [0.5, 0.25, 0.9])
def test_literal_and_beta_forms_agree(n, p):
    a = analytic_full_sweep(2 ** n, p, 1 - p, method="literal").manifold0
    b = analytic_full_sweep(2 ** n, p, 1 - p, method="beta").manifold0
    assert np.max(np.abs(a - b)) <= 1e-13


def test_analytic_large_n():
    v = analytic_full_sweep(2 ** 20, 0.5, 0.5)
    assert abs(v.total - 1) <= 1e-9
    assert hyperpolarization(v) > 0


def test_analytic_deterministic_routing():
    # p=1: every ordinary node sends everything down, so each row falls straight
    # into the column that meets it on the anti-diagonal
    a = analytic_full_sweep(4, 1.0, 0.0)
    assert np.allclose(a.manifold0, [0.25, 0.75, 0.0, 0.0])
    assert hyperpolarization(a) == pytest.approx(1.0)


def test_analytic_errors():
    with pytest.raises(ProbabilityOutOfRange):
        analytic_full_sweep(4, 0.6, 0.6)
    with pytest.raises(ProbabilityOutOfRange):
        analytic_full_sweep(4, -0.1, 1.1)
    with pytest.raises(ProbabilityOutOfRange):
        analytic_full_sweep(2 ** 21, 0.5, 0.5)
    with pytest.raises(ValidationError):
        analytic_full_sweep(2 ** 13, 0.5, 0.5, method="literal")


def test_hyperpolarization_examples():
    assert hyperpolarization(PopulationVector.uniform(8)) == 0.0
    v = PopulationVector([1, 0, 0, 0], [0, 0, 0, 0])
    assert hyperpolarization(v) == 1.0
    assert hyperpolarization(analytic_full_sweep(16, 0.5, 0.5)) > 0
    with pytest.warns(NegativeHyperfineWarning):
        assert hyperpolarization(v, hyperfine_sign=-1) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_hyperpolarization_bounded(n, seed):
    rng = np.random.default_rng(seed)
    m = 2 ** n
    f = dp_sweep(checkerboard_from_eta(rng.random((m, m))))
    assert -1 - 1e-12 <= f.hyperpolarization <= 1 + 1e-12
    assert np.all(f.p_out >= 0)
    assert np.all(f.p_out.sum(axis=2) <= f.p_in.sum(axis=2) + 1e-15)


def test_path_sum_sweep_readout():
    b = galton_board(8, 0.4, 0.6)
    a = path_sum_sweep(b)
    d = dp_sweep(b).populations
    assert np.allclose(a.manifold0, d.manifold0) and np.allclose(a.manifold1, d.manifold1)
