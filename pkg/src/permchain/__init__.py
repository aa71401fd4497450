"""Mixing and cutoff analysis for permuted Markov chains Q = P Pi."""

from .core import (
    ChainError,
    ChainStats,
    FillInCapError,
    ParseError,
    Permutation,
    PermutedChain,
    StochasticMatrix,
    ValidationError,
    check_assumptions,
    load_matrix,
    load_permutation,
    power,
    q_row,
    reverse,
    save_matrix,
    save_permutation,
    stats,
)
from .mixing import (
    EnsembleSummary,
    MixingReport,
    StartMode,
    TVProfile,
    cutoff_window,
    ensemble_experiment,
    mixing_time,
    propagate,
    tv_profile,
    tv_to_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "ChainError",
    "ChainStats",
    "EnsembleSummary",
    "FillInCapError",
    "MixingReport",
    "ParseError",
    "Permutation",
    "PermutedChain",
    "StartMode",
    "StochasticMatrix",
    "TVProfile",
    "ValidationError",
    "check_assumptions",
    "cutoff_window",
    "ensemble_experiment",
    "load_matrix",
    "load_permutation",
    "mixing_time",
    "power",
    "propagate",
    "q_row",
    "reverse",
    "save_matrix",
    "save_permutation",
    "stats",
    "tv_profile",
    "tv_to_uniform",
    "__version__",
]
