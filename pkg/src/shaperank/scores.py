"""Score functions on (0, 1) for the rank statistics.

Four kinds are supported -- sign, power, van der Waerden and Student --
each monotone increasing and square integrable, with exact first and
second moments.  Scores that depend on the data dimension (van der Waerden,
Student) carry it and are refused by the test engine when it mismatches.

Scaling a score by a positive constant leaves every induced statistic
unchanged (the second moment normalizes it away), which is why the Student
score can be evaluated through a plain beta quantile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radial import (
    GaussianRadial,
    PowerExpRadial,
    RadialModel,
    StudentRadial,
    beta_quantile,
    chi2_quantile,
    integrate_unit,
)


@dataclass(frozen=True)
class SignScore:
    """Constant score: only the directions matter."""

    name = "sign"
    dim = None

    def __call__(self, u, omu=None):
        return np.ones_like(np.asarray(u, dtype=float))

    def mean(self) -> float:
        return 1.0

    def second_moment(self) -> float:
        return 1.0


@dataclass(frozen=True)
class PowerScore:
    """Score u^a; a = 1 is the Wilcoxon score, a = 2 the Spearman score."""

    exponent: float

    dim = None

    def __post_init__(self) -> None:
        if self.exponent < 0:
            raise ValueError(f"power-score exponent must be >= 0, got {self.exponent}")

    @property
    def name(self) -> str:
        if self.exponent == 1:
            return "wilcoxon"
        if self.exponent == 2:
            return "spearman"
        return f"power:{self.exponent:g}"

    def __call__(self, u, omu=None):
        return np.asarray(u, dtype=float) ** self.exponent

    def mean(self) -> float:
        return 1.0 / (self.exponent + 1.0)

    def second_moment(self) -> float:
        return 1.0 / (2.0 * self.exponent + 1.0)


@dataclass(frozen=True)
class VanDerWaerdenScore:
    """Gaussian (chi-square quantile) score in dimension ``dim``."""

    dim: int

    name = "vdw"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("van der Waerden score needs dimension >= 2")

    def __call__(self, u, omu=None):
        return chi2_quantile(self.dim, u, omu)

    def mean(self) -> float:
        return float(self.dim)

    def second_moment(self) -> float:
        return self.dim * (self.dim + 2.0)


@dataclass(frozen=True)
class StudentScore:
    """Student score with ``df`` degrees of freedom in dimension ``dim``.

    As df falls to 0 the induced statistic converges to the sign statistic;
    as df grows it converges to the van der Waerden statistic.
    """

    dim: int
    df: float

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("Student score needs dimension >= 2")
        if not self.df > 0:
            raise ValueError(f"Student score df must be positive, got {self.df}")

    @property
    def name(self) -> str:
        return f"tnu:{self.df:g}"

    def __call__(self, u, omu=None):
        z = beta_quantile(0.5 * self.dim, 0.5 * self.df, u, omu)
        return (self.dim + self.df) * z

    def mean(self) -> float:
        return float(self.dim)

    def second_moment(self) -> float:
        k, nu = self.dim, self.df
        return k * (k + 2.0) * (k + nu) / (k + nu + 2.0)


ScoreFunction = SignScore | PowerScore | VanDerWaerdenScore | StudentScore


def parse_score(text: str, dim: int) -> ScoreFunction:
    """Build a score from a selection string.

    Accepted forms: ``sign``, ``wilcoxon``, ``spearman``, ``power:<a>``,
    ``vdw``, ``tnu:<df>``.
    """
    token = text.strip().lower()
    if token == "sign":
        return SignScore()
    if token == "wilcoxon":
        return PowerScore(1.0)
    if token == "spearman":
        return PowerScore(2.0)
    if token.startswith("power:"):
        return PowerScore(float(token.split(":", 1)[1]))
    if token == "vdw":
        return VanDerWaerdenScore(dim)
    if token.startswith("tnu:"):
        return StudentScore(dim, float(token.split(":", 1)[1]))
    raise ValueError(f"unknown score {text!r}")


def score_moments(score: ScoreFunction) -> tuple[float, float]:
    """Exact first and second moments ``(E[K], E[K^2])`` of a score."""
    return score.mean(), score.second_moment()


def score_moments_quadrature(score: ScoreFunction) -> tuple[float, float]:
    """Moments by quadrature; the fallback the closed forms are checked against."""
    first = integrate_unit(lambda u, omu: score(u, omu))
    second = integrate_unit(lambda u, omu: score(u, omu) ** 2)
    return first, second


def _matched(score: ScoreFunction, model: RadialModel) -> bool:
    if isinstance(score, VanDerWaerdenScore) and isinstance(model, GaussianRadial):
        return score.dim == model.dim
    if isinstance(score, VanDerWaerdenScore) and isinstance(model, PowerExpRadial):
        return score.dim == model.dim and model.eta == 1.0
    if isinstance(score, StudentScore) and isinstance(model, StudentRadial):
        return score.dim == model.dim and score.df == model.df
    return False


def cross_information(score: ScoreFunction, model: RadialModel) -> float:
    """Integral of the score against the model's optimal score.

    Exact values are returned where integration by parts or a matched score
    pins them down (constant scores integrate the optimal score to the
    dimension; a matched pair gives the model's shape information); the
    general case is quadrature.
    """
    if isinstance(score, SignScore):
        return float(model.dim)
    if _matched(score, model):
        return model.shape_information()
    return cross_information_quadrature(score, model)


def cross_information_quadrature(score: ScoreFunction, model: RadialModel) -> float:
    """Always-quadrature route for :func:`cross_information`."""
    if score.dim is not None and score.dim != model.dim:
        raise ValueError(
            f"score dimension {score.dim} does not match model dimension {model.dim}"
        )
    return integrate_unit(lambda u, omu: score(u, omu) * model.optimal_score(u, omu))
