"""Windowed-moment analysis of shaped optical signals.

Sphere-shaping codecs, windowed kurtosis estimators, a dual-polarization
split-step fiber simulator and an EGN-style NLI predictor driven by
windowed moments.
"""
from .alphabet import (AmplitudeAlphabet, MomentSet, PdmSymbolStream, alphabet_moments,
                       classical_moments, draw_gaussian_stream, draw_iid_stream,
                       make_mb_alphabet, make_qam_alphabet)
from .egn import KappaSet, calibrate_kappas, eta_from_moments, predict_snr
from .errors import (CalibrationFailed, ConfigError, Infeasible, InvalidCodeword, InvalidInput,
                     InvalidParameter, WinkurtError)
from .formats import make_stream
from .shaping import EssCodec1D, EssCodec4D, count_sequences, shaped_stream
from .ssfm import LinkConfig, run_experiment
from .windowed import (WindowRule, iid_invariance_check, moment_profile, optimal_windows,
                       windowed_moments)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeAlphabet", "MomentSet", "PdmSymbolStream", "alphabet_moments", "classical_moments",
    "draw_gaussian_stream", "draw_iid_stream", "make_mb_alphabet", "make_qam_alphabet",
    "KappaSet", "calibrate_kappas", "eta_from_moments", "predict_snr",
    "CalibrationFailed", "ConfigError", "Infeasible", "InvalidCodeword", "InvalidInput",
    "InvalidParameter", "WinkurtError", "make_stream", "EssCodec1D", "EssCodec4D",
    "count_sequences", "shaped_stream", "LinkConfig", "run_experiment", "WindowRule",
    "iid_invariance_check", "moment_profile", "optimal_windows", "windowed_moments",
]
