"""Noise robustness of quantum measurement incompatibility.

Five noise models (depolarising, random, probabilistic, jointly measurable,
generalised), SDP-based robustness with dual certificates, analytic bounds and
sampling searches.
"""
from .noise import ALL_KINDS, NoiseModelKind, canonical_noise, mix
from .povm import (
    MeasurementSet,
    Povm,
    PostProcessing,
    PreProcessing,
    mub_pair,
    named_pair,
    prime_mub_set,
    qmub_pair,
    qubit_theta_pair,
    random_measurement_set,
)
from .robustness import (
    RobustnessResult,
    all_robustness,
    dual_upper_bound,
    is_jointly_measurable,
    robustness,
    solve_robustness,
    verify_result,
)
from .bounds import bound_report, upper_bound, universal_lower_bound
from .search import SearchConfig, estimate_chi

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS", "NoiseModelKind", "canonical_noise", "mix",
    "MeasurementSet", "Povm", "PostProcessing", "PreProcessing",
    "mub_pair", "named_pair", "prime_mub_set", "qmub_pair", "qubit_theta_pair", "random_measurement_set",
    "RobustnessResult", "all_robustness", "dual_upper_bound", "is_jointly_measurable",
    "robustness", "solve_robustness", "verify_result",
    "bound_report", "upper_bound", "universal_lower_bound",
    "SearchConfig", "estimate_chi",
]
