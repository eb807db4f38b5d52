"""Landau-Zener checkerboard simulation of swept-microwave nuclear polarization."""

__version__ = "0.1.0"

from .analysis import (
    FitResult,
    Spectrum,
    center_vs_field,
    fit_biexponential,
    fit_gaussian,
    fit_relaxation,
    relaxation_spread,
    short_time_rate,
)
from .checkerboard import (
    Checkerboard,
    LacNode,
    checkerboard_from_eta,
    checkerboard_from_gaps,
    galton_board,
)
from .engine import (
    PopulationField,
    PopulationVector,
    analytic_full_sweep,
    dp_sweep,
    hyperpolarization,
    path_probability,
    path_sum_exits,
    path_sum_sweep,
)
from .errors import DegeneracyWarning, GaltonError, NegativeHyperfineWarning, NumericalError, ValidationError
from .hamming import hamming_index, hamming_state
from .landau_zener import TransferMatrix, transfer_apply, tunneling_probability
from .plotting import Series, emit_plot
from .spin_model import (
    LevelDiagram,
    NuclearSpinParams,
    SpinSystemConfig,
    build_levels,
    load_config,
    locate_lacs,
    perturbative_board,
)
from .sweep import (
    BuildupModel,
    DosModel,
    SpectralMapResult,
    SweepSpec,
    accumulate_buildup,
    compare_directions,
    field_dos,
    integrate_dos,
    map_spectrum,
    sample_board_from_dos,
    sample_ensemble_from_dos,
    simulate_window_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
