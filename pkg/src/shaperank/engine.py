"""Test statistics for the null hypothesis that the shape matrix equals V0.

All statistics are quadratic forms in sign outer products, asymptotically
chi-square with ``k(k+1)/2 - 1`` degrees of freedom under their own validity
conditions:

* rank-score statistics (distribution-free under sphericity, no moment
  assumptions),
* John's statistic and its kurtosis-adjusted Gaussian version,
* the parametric statistic for a specified radial density (scale estimated
  by the median distance),
* the adjusted sign statistic, valid under the wider unit-shape null.

The O(n k^2) trace form is the production path throughout; the O(n^2)
double-sum forms are kept as oracles for the test suite.  Simulated exact
critical values (full enumeration of rank vectors for tiny n, or Monte
Carlo sampling) complete the module.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from .linalg import ShapeMatrix, as_shape_matrix, sym_inv_sqrt, vec, vec_identity_outer, reduced_stack_operators
from .radial import RadialModel
from .scores import ScoreFunction
from .signrank import SignRankDecomposition

ESTIMATED_CENTER_NOTE = "center estimated: distribution-freeness holds asymptotically only"


def degrees_of_freedom(k: int) -> int:
    return k * (k + 1) // 2 - 1


def p_value(statistic: float, k: int) -> float:
    """Upper chi-square tail with k(k+1)/2 - 1 degrees of freedom."""
    if statistic < 0:
        raise ValueError(f"statistic must be nonnegative, got {statistic}")
    return float(special.chdtrc(degrees_of_freedom(k), statistic))


@dataclass(frozen=True)
class TestReport:
    """Outcome of one test: statistic, chi-square reference and provenance."""

    test_name: str
    statistic: float
    df: int
    p_value: float
    n: int
    k: int
    theta_estimated: bool
    validity_notes: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "n": self.n,
            "k": self.k,
            "theta_estimated": self.theta_estimated,
            "notes": list(self.validity_notes),
        }


def _report(name: str, statistic: float, d: SignRankDecomposition, notes: tuple[str, ...]) -> TestReport:
    statistic = max(float(statistic), 0.0)
    if d.theta_estimated:
        notes = notes + (ESTIMATED_CENTER_NOTE,)
    return TestReport(
        test_name=name,
        statistic=statistic,
        df=degrees_of_freedom(d.k),
        p_value=p_value(statistic, d.k),
        n=d.n,
        k=d.k,
        theta_estimated=d.theta_estimated,
        validity_notes=notes,
    )


def _trace_quadratic(weights: np.ndarray, signs: np.ndarray) -> tuple[float, float]:
    """tr(S^2) and tr(S) for S = mean of weight_i * U_i U_i'."""
    n = signs.shape[0]
    s = (weights[:, None] * signs).T @ signs / n
    return float((s * s).sum()), float(np.trace(s))


def _weighted_statistic(weights: np.ndarray, signs: np.ndarray, norm: float) -> float:
    """Common quadratic form: norm * (tr S^2 - tr^2 S / k)."""
    k = signs.shape[1]
    tr_sq, tr = _trace_quadratic(weights, signs)
    return norm * (tr_sq - tr * tr / k)


# ---------------------------------------------------------------------------
# Rank-score statistics
# ---------------------------------------------------------------------------

def score_table(score: ScoreFunction, n: int) -> np.ndarray:
    """Score values on the rank grid i/(n+1), i = 1..n."""
    return np.asarray(score(np.arange(1, n + 1) / (n + 1.0)), dtype=float)


def _check_score_dim(score: ScoreFunction, k: int) -> None:
    if score.dim is not None and score.dim != k:
        raise ValueError(
            f"score is built for dimension {score.dim} but the data has dimension {k}"
        )


def rank_statistic_value(
    table: np.ndarray, second_moment: float, ranks: np.ndarray, signs: np.ndarray
) -> float:
    """Rank statistic from a precomputed score table (the fast inner loop)."""
    n, k = signs.shape
    weights = table[ranks - 1]
    return _weighted_statistic(weights, signs, n * k * (k + 2.0) / (2.0 * second_moment))


def rank_score_statistic(d: SignRankDecomposition, score: ScoreFunction) -> TestReport:
    """Rank test with the given score; trace form, O(n k^2)."""
    _check_score_dim(score, d.k)
    q = rank_statistic_value(score_table(score, d.n), score.second_moment(), d.ranks, d.signs)
    return _report(score.name, q, d, ())


def rank_statistic_double_sum(d: SignRankDecomposition, score: ScoreFunction) -> float:
    """O(n^2) double-sum form of the rank statistic; oracle for the trace form."""
    _check_score_dim(score, d.k)
    n, k = d.n, d.k
    weights = score_table(score, n)[d.ranks - 1]
    gram = d.signs @ d.signs.T
    outer = np.outer(weights, weights)
    total = float((outer * (gram**2 - 1.0 / k)).sum())
    return k * (k + 2.0) / (2.0 * n * score.second_moment()) * total


def rank_statistic_normalized_diagnostic(d: SignRankDecomposition, score: ScoreFunction) -> float:
    """Normalized-trace variant of the rank statistic.

    Asymptotically equivalent to the statistic but not equal to it in finite
    samples; reported as a diagnostic only.
    """
    _check_score_dim(score, d.k)
    n, k = d.n, d.k
    weights = score_table(score, n)[d.ranks - 1]
    tr_sq, tr = _trace_quadratic(weights, d.signs)
    ratio = tr_sq / tr**2 - 1.0 / k
    factor = k * (k + 2.0) * score.mean() ** 2 / (k**2 * score.second_moment())
    return factor * n * k**2 / 2.0 * ratio


# ---------------------------------------------------------------------------
# Gaussian-family statistics
# ---------------------------------------------------------------------------

def sample_kurtosis(distances: np.ndarray, k: int) -> float:
    """Plug-in estimate of the elliptical kurtosis from the distances."""
    t = np.asarray(distances, dtype=float) ** 2
    t = t / t.max()
    n = t.size
    return k * n * float((t * t).sum()) / ((k + 2.0) * float(t.sum()) ** 2) - 1.0


def _john_value(d: SignRankDecomposition) -> float:
    # scale by the largest distance first: S / tr(S) is scale-invariant and
    # fourth powers of heavy-tailed distances would overflow otherwise
    t = (d.distances / d.distances.max()) ** 2
    n, k = d.n, d.k
    s = (t[:, None] * d.signs).T @ d.signs / n
    a = s / np.trace(s) - np.eye(k) / k
    return n * k * k / 2.0 * float((a * a).sum())


def john_statistic(d: SignRankDecomposition) -> TestReport:
    """John's statistic: squared deviation of the scatter from proportionality."""
    return _report(
        "john", _john_value(d), d, ("valid under Gaussian radial densities only",)
    )


def gaussian_adjusted_statistic(d: SignRankDecomposition) -> TestReport:
    """Kurtosis-adjusted Gaussian statistic; John's statistic over 1 + kappa-hat."""
    q = _john_value(d) / (1.0 + sample_kurtosis(d.distances, d.k))
    return _report(
        "gaussian", q, d, ("requires finite fourth-order radial moments",)
    )


def gaussian_adjusted_double_sum(d: SignRankDecomposition) -> float:
    """Double-sum form of the adjusted Gaussian statistic; oracle."""
    n, k = d.n, d.k
    t = (d.distances / d.distances.max()) ** 2
    gram = d.signs @ d.signs.T
    total = float((np.outer(t, t) * (gram**2 - 1.0 / k)).sum())
    return k * (k + 2.0) / (2.0 * float((t * t).sum())) * total


# ---------------------------------------------------------------------------
# Parametric statistic for a specified radial density
# ---------------------------------------------------------------------------

def parametric_radial_statistic(d: SignRankDecomposition, model: RadialModel) -> TestReport:
    """Locally optimal statistic when the radial density is known.

    The scale nuisance is estimated by the median distance, which is
    consistent for it under the null by the standardization of the family.
    """
    if model.dim != d.k:
        raise ValueError(
            f"radial model is built for dimension {model.dim} but the data has dimension {d.k}"
        )
    sigma = float(np.median(d.distances))
    z = d.distances / sigma
    weights = z * np.asarray(model.psi(z), dtype=float)
    norm = d.n * d.k * (d.k + 2.0) / (2.0 * model.shape_information())
    q = _weighted_statistic(weights, d.signs, norm)
    return _report(
        f"parametric:{model.label}",
        q,
        d,
        (f"valid only when the sampling radial density is {model.label}",),
    )


# ---------------------------------------------------------------------------
# Adjusted sign statistic (unit-shape null)
# ---------------------------------------------------------------------------

def adjusted_sign_statistic(d: SignRankDecomposition, shape=None) -> TestReport:
    """Sign statistic with empirically estimated fourth-order sign moments.

    Valid under the unit-shape null, which does not require ellipticity; the
    price is an explicit (projected) covariance estimate in place of the
    isotropic closed form.
    """
    n, k = d.n, d.k
    p = degrees_of_freedom(k)
    if n <= p:
        raise ValueError(f"adjusted sign statistic needs n > {p}, got n = {n}")
    v0 = ShapeMatrix.identity(k) if shape is None else as_shape_matrix(shape)
    if v0.dim != k:
        raise ValueError("shape matrix dimension does not match the decomposition")

    outer = d.signs[:, :, None] * d.signs[:, None, :]
    w = outer.reshape(n, k * k)
    root = sym_inv_sqrt(v0.matrix)
    proj = reduced_stack_operators(k)[0] @ np.kron(root, root)

    score_vec = proj @ (w.sum(axis=0) - (n / k) * vec(np.eye(k)))
    middle = proj @ (w.T @ w - (n / k**2) * vec_identity_outer(k)) @ proj.T
    try:
        solved = np.linalg.solve(middle, score_vec)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "degenerate sign configuration: the estimated fourth-moment matrix is singular"
        ) from exc
    q = float(score_vec @ solved)
    return _report("adjsign", q, d, ("valid under the unit-shape null",))


def sign_statistic(d: SignRankDecomposition) -> TestReport:
    """Plain sign statistic (constant score); kept for the unadjusted contrast."""
    from .scores import SignScore

    return rank_score_statistic(d, SignScore())


# ---------------------------------------------------------------------------
# Simulated exact critical values
# ---------------------------------------------------------------------------

ENUMERATE_MAX_N = 7


@dataclass(frozen=True)
class CriticalValue:
    """Simulated upper critical value of a rank statistic under the null."""

    value: float
    n: int
    k: int
    score: str
    alpha: float
    mode: str
    pooled: int
    sign_rounds: int | None
    seed: int

    def to_record(self) -> dict:
        return {
            "critical_value": self.value,
            "n": self.n,
            "k": self.k,
            "score": self.score,
            "alpha": self.alpha,
            "mode": self.mode,
            "pooled": self.pooled,
            "sign_rounds": self.sign_rounds,
            "seed": self.seed,
        }


def _batch_statistics(
    weight_rows: np.ndarray, signs: np.ndarray, second_moment: float
) -> np.ndarray:
    """Rank statistics for a batch: weight_rows (B, n), signs (B, n, k)."""
    b, n, k = signs.shape
    s = np.einsum("bn,bni,bnj->bij", weight_rows, signs, signs) / n
    tr_sq = (s * s).sum(axis=(1, 2))
    tr = np.trace(s, axis1=1, axis2=2)
    return n * k * (k + 2.0) / (2.0 * second_moment) * (tr_sq - tr * tr / k)


def _random_signs(rng: np.random.Generator, b: int, n: int, k: int) -> np.ndarray:
    g = rng.standard_normal((b, n, k))
    norms = np.linalg.norm(g, axis=2)
    norms[norms == 0.0] = 1.0
    return g / norms[:, :, None]


def simulate_null_statistics(
    n: int,
    k: int,
    score: ScoreFunction,
    *,
    mode: str = "sample",
    n_draws: int = 100_000,
    sign_rounds: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """Null draws of the rank statistic, by enumeration or sampling.

    ``enumerate`` walks all n! rank vectors, pairing each with ``sign_rounds``
    fresh uniform sign configurations (the signs are continuous, so they are
    always simulated); ``sample`` draws (ranks, signs) pairs independently.
    """
    _check_score_dim(score, k)
    table = score_table(score, n)
    ek2 = score.second_moment()
    rng = np.random.default_rng(seed)

    if mode == "enumerate":
        if n > ENUMERATE_MAX_N:
            raise ValueError(
                f"n too large for enumerate mode (n! beyond {ENUMERATE_MAX_N}! is unsupported)"
            )
        chunks = []
        for perm in itertools.permutations(range(n)):
            weights = np.broadcast_to(table[list(perm)], (sign_rounds, n))
            signs = _random_signs(rng, sign_rounds, n, k)
            chunks.append(_batch_statistics(weights, signs, ek2))
        return np.concatenate(chunks)

    if mode == "sample":
        if n_draws < 1000:
            raise ValueError(f"sample mode needs at least 1000 draws, got {n_draws}")
        chunks = []
        chunk = max(1, min(n_draws, 10_000_000 // (n * k)))
        remaining = n_draws
        while remaining > 0:
            b = min(chunk, remaining)
            perms = np.argsort(rng.random((b, n)), axis=1)
            weights = table[perms]
            signs = _random_signs(rng, b, n, k)
            chunks.append(_batch_statistics(weights, signs, ek2))
            remaining -= b
        return np.concatenate(chunks)

    raise ValueError(f"unknown mode {mode!r}; expected 'enumerate' or 'sample'")


def exact_critical_value(
    n: int,
    k: int,
    score: ScoreFunction,
    alpha: float,
    *,
    mode: str = "sample",
    n_draws: int = 100_000,
    sign_rounds: int = 200,
    seed: int = 0,
) -> CriticalValue:
    """Empirical (1 - alpha) quantile of the simulated null distribution."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    values = simulate_null_statistics(
        n, k, score, mode=mode, n_draws=n_draws, sign_rounds=sign_rounds, seed=seed
    )
    return CriticalValue(
        value=float(np.quantile(values, 1.0 - alpha)),
        n=n,
        k=k,
        score=score.name,
        alpha=alpha,
        mode=mode,
        pooled=values.size,
        sign_rounds=sign_rounds if mode == "enumerate" else None,
        seed=seed,
    )
