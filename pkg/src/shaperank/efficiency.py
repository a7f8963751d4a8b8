"""Asymptotic quantities: noncentralities, relative efficiencies, the local
power of the chi-square tests, and the scale-nonspecification losses.

Pitman comparisons are ratios of noncentrality parameters under contiguous
shape alternatives ``V0 + v / sqrt(n)``, all sharing the common deviation
bracket ``tr((V0^-1 v)^2) - tr(V0^-1 v)^2 / k``.  The reference test is the
kurtosis-adjusted Gaussian one, so efficiencies against it are infinite
whenever the sampling family has no fourth moments.

The two numeric tables reproduced here: relative power losses caused by the
unknown scale (per family and dimension), and the rank-versus-Gaussian
shape efficiencies for the standard scores.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .linalg import as_shape_matrix, check_symmetric
from .radial import (
    GaussianRadial,
    InfiniteMomentError,
    RadialModel,
    StudentRadial,
    radial_moment,
)
from .scores import (
    PowerScore,
    ScoreFunction,
    SignScore,
    StudentScore,
    VanDerWaerdenScore,
    cross_information,
    cross_information_quadrature,
    parse_score,
)


@dataclass(frozen=True)
class LocalAlternative:
    """Contiguous shape alternative: null shape plus a scaled symmetric step.

    The step must vanish at the (1,1) entry so the perturbed matrix stays a
    shape matrix.
    """

    shape: object
    step: np.ndarray

    def __post_init__(self) -> None:
        v0 = as_shape_matrix(self.shape)
        step = check_symmetric(np.asarray(self.step, dtype=float), "shape step")
        if step.shape != (v0.dim, v0.dim):
            raise ValueError("step dimension does not match the null shape")
        if step[0, 0] != 0.0:
            raise ValueError("the (1,1) entry of the step must be zero")
        step = step.copy()
        step.flags.writeable = False
        object.__setattr__(self, "shape", v0)
        object.__setattr__(self, "step", step)

    @property
    def k(self) -> int:
        return self.shape.dim


def shape_deviation(alt: LocalAlternative) -> float:
    """Deviation bracket of an alternative; zero only for a zero step."""
    m = np.linalg.solve(alt.shape.matrix, alt.step)
    return float(np.trace(m @ m) - np.trace(m) ** 2 / alt.k)


def noncentrality_rank(score: ScoreFunction, model: RadialModel, alt: LocalAlternative) -> float:
    """Noncentrality of the rank test with the given score under `model`."""
    k = alt.k
    info = cross_information(score, model)
    return info**2 / (2.0 * k * (k + 2.0) * score.second_moment()) * shape_deviation(alt)


def noncentrality_gaussian(model: RadialModel, alt: LocalAlternative) -> float:
    """Noncentrality of the adjusted Gaussian test; needs finite kurtosis."""
    return shape_deviation(alt) / (2.0 * (1.0 + model.kurtosis()))


def noncentrality_parametric(model: RadialModel, alt: LocalAlternative) -> float:
    """Noncentrality of the parametric test at its own radial density."""
    k = alt.k
    return model.shape_information() / (2.0 * k * (k + 2.0)) * shape_deviation(alt)


def are(score: ScoreFunction, model: RadialModel) -> float:
    """Pitman efficiency of the rank test against the adjusted Gaussian test.

    Infinite when the family has no fourth moments (the Gaussian reference
    is then invalid while the rank test is not).
    """
    k = model.dim
    try:
        kappa = model.kurtosis()
    except InfiniteMomentError:
        return math.inf
    info = cross_information(score, model)
    return (1.0 + kappa) * info**2 / (k * (k + 2.0) * score.second_moment())


def are_quadrature(score: ScoreFunction, model: RadialModel) -> float:
    """Fully quadrature-based efficiency: moment integrals plus cross-information."""
    k = model.dim
    try:
        fourth = radial_moment(model, 4)
    except InfiniteMomentError:
        return math.inf
    second = radial_moment(model, 2)
    info = cross_information_quadrature(score, model)
    return fourth / second**2 * info**2 / ((k + 2.0) ** 2 * score.second_moment())


def are_sign_closed_form(model: RadialModel) -> float:
    """Closed-form sign-test efficiency at Gaussian and Student families."""
    k = model.dim
    if isinstance(model, GaussianRadial):
        return k / (k + 2.0)
    if isinstance(model, StudentRadial):
        if model.df <= 4:
            return math.inf
        return k * (model.df - 2.0) / ((k + 2.0) * (model.df - 4.0))
    raise ValueError("closed form available for Gaussian and Student families only")


def are_matched_student_closed_form(k: int, df: float) -> float:
    """Closed-form efficiency of the matched Student-score test at its own family."""
    if df <= 4:
        return math.inf
    return (k + df) * (df - 2.0) / ((k + df + 2.0) * (df - 4.0))


# ---------------------------------------------------------------------------
# Losses from the unknown scale
# ---------------------------------------------------------------------------

def scale_loss_absolute(model: RadialModel, alt: LocalAlternative) -> float:
    """Noncentrality lost to scale estimation against a given alternative.

    Vanishes whenever the step is trace-free in the null metric.
    """
    k = alt.k
    info = model.shape_information()
    trace = float(np.trace(np.linalg.solve(alt.shape.matrix, alt.step)))
    return (info - k * k) * trace**2 / (4.0 * k * k)


def relative_scale_loss_from_info(k: int, shape_info: float) -> float:
    """Relative loss for elementary diagonal deviations, from the information."""
    excess = shape_info - k * k
    return (k + 2.0) * excess / (3.0 * k * excess + 2.0 * k * k * (k - 1.0))


def scale_loss_relative_diagonal(model: RadialModel) -> float:
    """Relative power loss against elementary diagonal deviations from sphericity."""
    return relative_scale_loss_from_info(model.dim, model.shape_information())


def student_relative_loss(k: int, df: float) -> float:
    """Family closed form for the Student relative loss (cross-check)."""
    return df / (k * (k + df - 1.0))


def powerexp_relative_loss(k: int, eta: float) -> float:
    """Family closed form for the power-exponential relative loss (cross-check)."""
    return (k + 2.0) * eta / (k * (k + 3.0 * eta - 1.0))


# ---------------------------------------------------------------------------
# Local power of the chi-square tests
# ---------------------------------------------------------------------------

_POISSON_WEIGHT_FLOOR = 1e-14


def noncentral_chi2_sf(x: float, df: int, ncp: float) -> float:
    """Upper tail of the noncentral chi-square, by a truncated Poisson mixture."""
    if ncp < 0:
        raise ValueError("noncentrality must be nonnegative")
    if ncp == 0.0:
        return float(stats.chi2.sf(x, df))
    lam = 0.5 * ncp
    width = 40.0 * math.sqrt(lam) + 40.0
    j = np.arange(0, int(lam + width) + 1)
    log_w = j * math.log(lam) - lam - special.gammaln(j + 1.0)
    keep = log_w >= math.log(_POISSON_WEIGHT_FLOOR)
    j = j[keep]
    weights = np.exp(log_w[keep])
    return float(weights @ stats.chi2.sf(x, df + 2 * j))


def local_power(ncp: float, k: int, alpha: float) -> float:
    """Limiting power of the level-alpha test under a contiguous alternative."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    df = k * (k + 1) // 2 - 1
    crit = float(stats.chi2.isf(alpha, df))
    return noncentral_chi2_sf(crit, df, ncp)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EfficiencyTable:
    """A labelled numeric grid with infinity-aware rendering."""

    title: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    values: np.ndarray

    def _cell(self, value: float) -> str:
        return "+inf" if math.isinf(value) else f"{value:.3f}"

    def to_text(self) -> str:
        width = max(
            [len(c) for c in self.col_labels]
            + [len(self._cell(v)) for v in self.values.flat]
            + [6]
        )
        label_width = max(len(r) for r in self.row_labels) + 2
        out = io.StringIO()
        out.write(self.title + "\n")
        out.write(" " * label_width + " ".join(c.rjust(width) for c in self.col_labels) + "\n")
        for label, row in zip(self.row_labels, self.values):
            cells = " ".join(self._cell(v).rjust(width) for v in row)
            out.write(label.ljust(label_width) + cells + "\n")
        return out.getvalue()

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("," + ",".join(self.col_labels) + "\n")
        for label, row in zip(self.row_labels, self.values):
            out.write(label + "," + ",".join(self._cell(v) for v in row) + "\n")
        return out.getvalue()


SCALE_LOSS_DIMS = (2, 3, 4, 6, 10)
SCALE_LOSS_ETAS = (0.1, 0.5, 1.0, 2.0, 5.0)
SCALE_LOSS_DFS = (1.0, 3.0, 5.0, 8.0, 15.0)


def scale_loss_cell(family: str, k: int | None, param: float | None) -> float:
    """One relative-loss entry; ``None`` selects the printed limit columns/rows."""
    if family not in ("powerexp", "student"):
        raise ValueError(f"unknown family {family!r}")
    if k is None:
        # large-dimension limit at fixed parameter: only the heaviest column
        # survives in the power-exponential family
        if param is None and family == "powerexp":
            return 1.0 / 3.0
        return 0.0
    if param is None:
        # parameter limits: vanishing loss on the heavy side, (k+2)/(3k) or
        # 1/k on the light side
        return (k + 2.0) / (3.0 * k) if family == "powerexp" else 1.0 / k
    if family == "powerexp":
        return powerexp_relative_loss(k, param)
    return student_relative_loss(k, param)


def scale_loss_table(family: str) -> EfficiencyTable:
    """Relative scale losses over dimensions and tail parameters, with limits."""
    params = SCALE_LOSS_ETAS if family == "powerexp" else SCALE_LOSS_DFS
    head = "eta" if family == "powerexp" else "df"
    col_labels = ("->0",) + tuple(f"{p:g}" for p in params) + ("->inf",)
    row_labels = tuple(f"k={k}" for k in SCALE_LOSS_DIMS) + ("k->inf",)
    values = np.zeros((len(row_labels), len(col_labels)))
    for i, k in enumerate(SCALE_LOSS_DIMS):
        values[i, 0] = 0.0
        for j, p in enumerate(params):
            values[i, j + 1] = scale_loss_cell(family, k, p)
        values[i, -1] = scale_loss_cell(family, k, None)
    values[-1, -1] = scale_loss_cell(family, None, None)
    return EfficiencyTable(
        title=f"Relative scale-nonspecification loss, {family} family ({head} by k)",
        row_labels=row_labels,
        col_labels=col_labels,
        values=values,
    )


ARE_TABLE_SCORES = ("tnu:6", "vdw", "sign", "wilcoxon")
ARE_TABLE_DIMS = (2, 3, 4, 6, 10)
ARE_TABLE_DFS = (1.0, 3.0, 4.0, 5.0, 8.0, 15.0, 20.0, None)


def are_table(
    scores=ARE_TABLE_SCORES, dims=ARE_TABLE_DIMS, dfs=ARE_TABLE_DFS
) -> EfficiencyTable:
    """Shape efficiencies of the standard rank tests against the Gaussian test.

    Columns are Student families by degrees of freedom (``None`` for the
    Gaussian limit); entries are infinite below five degrees of freedom.
    """
    row_labels = tuple(f"{s} k={k}" for s in scores for k in dims)
    col_labels = tuple("gauss" if nu is None else f"nu={nu:g}" for nu in dfs)
    values = np.zeros((len(row_labels), len(col_labels)))
    row = 0
    for name in scores:
        for k in dims:
            score = parse_score(name, k)
            for j, nu in enumerate(dfs):
                model = GaussianRadial(k) if nu is None else StudentRadial(k, nu)
                values[row, j] = are(score, model)
            row += 1
    return EfficiencyTable(
        title="Shape efficiencies versus the adjusted Gaussian test",
        row_labels=row_labels,
        col_labels=col_labels,
        values=values,
    )
