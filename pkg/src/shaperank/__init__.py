"""Rank- and sign-based tests for the shape matrix of elliptical data.

The null hypothesis is that the shape matrix equals a given value (the
identity gives the test of sphericity).  The battery covers John's test,
its kurtosis-adjusted Gaussian version, rank tests for the standard score
families, a parametric test at a specified radial density, and a sign test
adjusted to the wider unit-shape null.  Supporting machinery: asymptotic
efficiency calculators, simulated exact critical values, and a seeded
Monte Carlo study harness.
"""

from .efficiency import (
    LocalAlternative,
    are,
    are_quadrature,
    local_power,
    noncentrality_gaussian,
    noncentrality_parametric,
    noncentrality_rank,
    scale_loss_absolute,
    scale_loss_relative_diagonal,
    shape_deviation,
)
from .engine import (
    CriticalValue,
    TestReport,
    adjusted_sign_statistic,
    exact_critical_value,
    gaussian_adjusted_statistic,
    john_statistic,
    p_value,
    parametric_radial_statistic,
    rank_score_statistic,
)
from .linalg import ShapeMatrix
from .montecarlo import Scenario, StudyResult, generate_scenario_sample, run_study
from .radial import (
    EllipticalSpec,
    GaussianRadial,
    InfiniteMomentError,
    PowerExpRadial,
    StudentRadial,
    parse_model,
    sample_elliptical,
)
from .scores import (
    PowerScore,
    SignScore,
    StudentScore,
    VanDerWaerdenScore,
    cross_information,
    parse_score,
)
from .signrank import SignRankDecomposition, decompose, spatial_median

__all__ = [
    "CriticalValue",
    "EllipticalSpec",
    "GaussianRadial",
    "InfiniteMomentError",
    "LocalAlternative",
    "PowerExpRadial",
    "PowerScore",
    "Scenario",
    "ShapeMatrix",
    "SignRankDecomposition",
    "SignScore",
    "StudentRadial",
    "StudentScore",
    "StudyResult",
    "TestReport",
    "VanDerWaerdenScore",
    "adjusted_sign_statistic",
    "are",
    "are_quadrature",
    "cross_information",
    "decompose",
    "exact_critical_value",
    "gaussian_adjusted_statistic",
    "generate_scenario_sample",
    "john_statistic",
    "local_power",
    "noncentrality_gaussian",
    "noncentrality_parametric",
    "noncentrality_rank",
    "p_value",
    "parametric_radial_statistic",
    "parse_model",
    "parse_score",
    "rank_score_statistic",
    "run_study",
    "sample_elliptical",
    "scale_loss_absolute",
    "scale_loss_relative_diagonal",
    "shape_deviation",
    "spatial_median",
]

__version__ = "0.1.0"
