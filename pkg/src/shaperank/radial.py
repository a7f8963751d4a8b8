"""Standardized radial families for elliptical data.

Three families are supported: Gaussian, Student with ``df`` degrees of
freedom, and power-exponential with tail exponent ``eta``.  Each family is
standardized so that the median of the sphericized distances equals one;
the constant achieving this is solved from the matching chi-square, Fisher
or gamma median.

Also here:

* a panelized Gauss-Legendre rule on (0, 1) used for every moment and
  cross-information integral in the package (heavy-tailed integrands are
  regularized by a power substitution and dyadic panels toward both
  endpoints, with quantiles evaluated through the upper-tail complement
  where 1 - u underflows);
* elliptical sampling.

Sampling protocol (frozen): draws use ``numpy.random.Generator`` streams
(PCG64 via ``default_rng``); a sample of size n consumes first an (n, k)
standard-normal block for the directions, then n uniforms for the radii.
Concurrent callers must use independent generators, e.g. one
``SeedSequence`` child per task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .linalg import ShapeMatrix, as_shape_matrix, sym_sqrt


class InfiniteMomentError(ValueError):
    """Signals a radial moment (or kurtosis) that does not exist."""


# ---------------------------------------------------------------------------
# Dual-branch special-function quantiles
# ---------------------------------------------------------------------------
#
# Quadrature nodes cluster so close to u = 1 that ``1 - u`` underflows in
# double precision; every quantile therefore accepts both u and its
# complement and switches to the upper-tail inverse on the right half.

def _dual(u, omu, lower, upper):
    u = np.asarray(u, dtype=float)
    omu = np.asarray(omu, dtype=float)
    out = np.empty_like(u)
    hi = omu < 0.25
    lo = ~hi
    if lo.any():
        out[lo] = lower(u[lo])
    if hi.any():
        out[hi] = upper(omu[hi])
    return out


def _betaincinv_robust(a: float, b: float, y):
    """Inverse of the regularized incomplete beta, safe for subnormal y.

    scipy's inverse fails (NaN) once y drops below roughly 1e-155 even though
    the answer is representable; the leading term of the small-tail expansion
    I_w(a, b) ~ w^a / (a B(a, b)) takes over there.
    """
    y = np.asarray(y, dtype=float)
    tiny = y < 1e-100
    if not tiny.any():
        return special.betaincinv(a, b, y)
    out = np.empty_like(y)
    out[~tiny] = special.betaincinv(a, b, y[~tiny])
    ys = y[tiny]
    out[tiny] = np.exp((np.log(ys) + math.log(a) + special.betaln(a, b)) / a)
    return out


def gamma_quantile(shape: float, u, omu=None):
    """Quantile of the unit-scale Gamma(shape) distribution."""
    if omu is None:
        return special.gammaincinv(shape, u)
    return _dual(
        u,
        omu,
        lambda x: special.gammaincinv(shape, x),
        lambda y: special.gammainccinv(shape, y),
    )


def beta_quantile(a: float, b: float, u, omu=None):
    """Quantile of the Beta(a, b) distribution."""
    if omu is None:
        return _betaincinv_robust(a, b, u)
    return _dual(
        u,
        omu,
        lambda x: _betaincinv_robust(a, b, x),
        lambda y: 1.0 - _betaincinv_robust(b, a, y),
    )


def chi2_quantile(df: float, u, omu=None):
    """Quantile of the chi-square distribution with ``df`` degrees of freedom."""
    return 2.0 * gamma_quantile(0.5 * df, u, omu)


# ---------------------------------------------------------------------------
# Quadrature on the unit interval
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitQuadrature:
    """Nodes and weights approximating integrals over (0, 1).

    ``omu`` carries ``1 - u`` without cancellation; integrands must consult
    it for tail-sensitive evaluations because ``u`` itself rounds to 1.0 on
    the innermost right panels.
    """

    u: np.ndarray
    omu: np.ndarray
    weights: np.ndarray

    def integrate(self, fn) -> float:
        """Integrate ``fn(u, omu)`` over (0, 1)."""
        return float(self.weights @ np.asarray(fn(self.u, self.omu), dtype=float))


@lru_cache(maxsize=4)
def unit_quadrature(levels: int = 40, points: int = 24, power: int = 12) -> UnitQuadrature:
    """Build the panelized rule u = 1 - (1 - t)^power on dyadic t-panels.

    The substitution tames algebraic endpoint singularities up to
    (1-u)^(-q) with q < 1 - 1/power; dyadic panels toward both endpoints
    absorb the remaining lack of smoothness.
    """
    base_x, base_w = leggauss(points)
    edges = [0.0] + [2.0 ** (-j) for j in range(levels, 0, -1)]

    t_nodes, t_weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        t_nodes.append(lo + half * (base_x + 1.0))
        t_weights.append(half * base_w)
    left_t = np.concatenate(t_nodes)
    left_w = np.concatenate(t_weights)

    p = float(power)
    # left half: t in (0, 1/2); u = 1 - (1-t)^p via expm1/log1p for accuracy
    log_omt = np.log1p(-left_t)
    u_left = -np.expm1(p * log_omt)
    omu_left = np.exp(p * log_omt)
    w_left = left_w * p * np.exp((p - 1.0) * log_omt)

    # right half handled in s = 1 - t, so tail complements stay exact
    s = left_t
    omu_right = s**p
    u_right = 1.0 - omu_right
    w_right = left_w * p * s ** (p - 1.0)

    u = np.concatenate([u_left, u_right])
    omu = np.concatenate([omu_left, omu_right])
    w = np.concatenate([w_left, w_right])
    return UnitQuadrature(u=u, omu=omu, weights=w)


def integrate_unit(fn) -> float:
    """Integrate ``fn(u, omu)`` over (0, 1) with the default rule."""
    return unit_quadrature().integrate(fn)


# ---------------------------------------------------------------------------
# Radial families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianRadial:
    """Gaussian radial density, standardized to unit median distance."""

    dim: int

    family = "gaussian"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("radial families require dimension >= 2")

    @property
    def label(self) -> str:
        return "gaussian"

    @cached_property
    def constant(self) -> float:
        # a_k: the chi-square_k median, since a_k * d^2 is chi-square_k
        return float(chi2_quantile(self.dim, 0.5))

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        return special.gammainc(0.5 * self.dim, 0.5 * self.constant * r * r)

    def quantile(self, u, omu=None):
        return np.sqrt(chi2_quantile(self.dim, u, omu) / self.constant)

    def shape_information(self) -> float:
        return self.dim * (self.dim + 2.0)

    def location_information(self) -> float:
        return self.constant * self.dim

    def kurtosis(self) -> float:
        return 0.0

    def moment_closed(self, order: int) -> float:
        _check_order(order)
        if order == 2:
            return self.dim / self.constant
        return self.dim * (self.dim + 2.0) / self.constant**2

    def optimal_score(self, u, omu=None):
        return chi2_quantile(self.dim, u, omu)

    def psi(self, r):
        return self.constant * np.asarray(r, dtype=float)


@dataclass(frozen=True)
class StudentRadial:
    """Student radial density with ``df`` degrees of freedom (any df > 0)."""

    dim: int
    df: float

    family = "student"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("radial families require dimension >= 2")
        if not self.df > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.df}")

    @property
    def label(self) -> str:
        return f"tnu:{self.df:g}"

    @cached_property
    def constant(self) -> float:
        # a_{k,nu} = k * median(F_{k,nu}); a * d^2 / k is Fisher-Snedecor
        k, nu = self.dim, self.df
        z = float(beta_quantile(0.5 * k, 0.5 * nu, 0.5))
        return nu * z / (1.0 - z)

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        t = self.constant * r * r
        return special.betainc(0.5 * self.dim, 0.5 * self.df, t / (t + self.df))

    def quantile(self, u, omu=None):
        if omu is None:
            omu = 1.0 - np.asarray(u, dtype=float)
        # z and its complement are inverted separately so neither side of the
        # ratio loses precision in the far tails
        z = beta_quantile(0.5 * self.dim, 0.5 * self.df, u, omu)
        w = beta_quantile(0.5 * self.df, 0.5 * self.dim, omu, u)
        return np.sqrt(self.df * z / (w * self.constant))

    def shape_information(self) -> float:
        k, nu = self.dim, self.df
        return k * (k + 2.0) * (k + nu) / (k + nu + 2.0)

    def location_information(self) -> float:
        k, nu = self.dim, self.df
        return self.constant * k * (k + nu) / (k + nu + 2.0)

    def kurtosis(self) -> float:
        if self.df <= 4:
            raise InfiniteMomentError(
                f"kurtosis undefined for Student df={self.df:g} (needs df > 4)"
            )
        return 2.0 / (self.df - 4.0)

    def moment_closed(self, order: int) -> float:
        _check_order(order)
        k, nu = self.dim, self.df
        if nu <= order:
            raise InfiniteMomentError(
                f"radial moment of order {order} is infinite for Student df={nu:g}"
            )
        if order == 2:
            return k * nu / (self.constant * (nu - 2.0))
        return k * (k + 2.0) * nu**2 / (self.constant**2 * (nu - 2.0) * (nu - 4.0))

    def optimal_score(self, u, omu=None):
        z = beta_quantile(0.5 * self.dim, 0.5 * self.df, u, omu)
        return (self.dim + self.df) * z

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        k, nu, a = self.dim, self.df, self.constant
        return (k + nu) * a * r / (nu + a * r * r)


@dataclass(frozen=True)
class PowerExpRadial:
    """Power-exponential radial density with tail exponent ``eta``.

    ``eta = 1`` recovers the Gaussian; smaller values give heavier tails.
    """

    dim: int
    eta: float

    family = "powerexp"

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("radial families require dimension >= 2")
        if not self.eta > 0:
            raise ValueError(f"tail exponent must be positive, got {self.eta}")

    @property
    def label(self) -> str:
        return f"powerexp:{self.eta:g}"

    @property
    def _gamma_shape(self) -> float:
        return self.dim / (2.0 * self.eta)

    @cached_property
    def constant(self) -> float:
        # b_{k,eta}: the Gamma(k / (2 eta)) median, since b * d^(2 eta) is
        # that gamma variate
        return float(gamma_quantile(self._gamma_shape, 0.5))

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        return special.gammainc(self._gamma_shape, self.constant * r ** (2.0 * self.eta))

    def quantile(self, u, omu=None):
        g = gamma_quantile(self._gamma_shape, u, omu)
        return (g / self.constant) ** (1.0 / (2.0 * self.eta))

    def shape_information(self) -> float:
        return self.dim * (self.dim + 2.0 * self.eta)

    def location_information(self) -> float:
        k, eta, b = self.dim, self.eta, self.constant
        log_ratio = special.gammaln((k + 4.0 * eta - 2.0) / (2.0 * eta)) - special.gammaln(
            self._gamma_shape
        )
        return 4.0 * eta**2 * b ** (1.0 / eta) * math.exp(log_ratio)

    def kurtosis(self) -> float:
        k = self.dim
        c = self._gamma_shape
        inv = 1.0 / self.eta
        log_ratio = (
            special.gammaln(c)
            + special.gammaln(c + 2.0 * inv)
            - 2.0 * special.gammaln(c + inv)
        )
        return k / (k + 2.0) * math.exp(log_ratio) - 1.0

    def moment_closed(self, order: int) -> float:
        _check_order(order)
        c = self._gamma_shape
        a = order / (2.0 * self.eta)
        log_ratio = special.gammaln(c + a) - special.gammaln(c)
        return self.constant ** (-a) * math.exp(log_ratio)

    def optimal_score(self, u, omu=None):
        return 2.0 * self.eta * gamma_quantile(self._gamma_shape, u, omu)

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.eta * self.constant * r ** (2.0 * self.eta - 1.0)


RadialModel = GaussianRadial | StudentRadial | PowerExpRadial


def _check_order(order: int) -> None:
    if order not in (2, 4):
        raise ValueError(f"only moment orders 2 and 4 are supported, got {order}")


def parse_model(text: str, dim: int) -> RadialModel:
    """Build a radial model from a selection string.

    Accepted forms: ``gaussian``, ``tnu:<df>``, ``powerexp:<eta>``.
    """
    token = text.strip().lower()
    if token in ("gaussian", "normal"):
        return GaussianRadial(dim)
    if token.startswith("tnu:"):
        return StudentRadial(dim, float(token.split(":", 1)[1]))
    if token.startswith("powerexp:"):
        return PowerExpRadial(dim, float(token.split(":", 1)[1]))
    raise ValueError(f"unknown radial model {text!r}")


def information_quantities(model: RadialModel) -> tuple[float, float]:
    """Location and shape information constants ``(I, J)`` of a family."""
    return model.location_information(), model.shape_information()


def kurtosis(model: RadialModel) -> float:
    return model.kurtosis()


def radial_moment(model: RadialModel, order: int) -> float:
    """Moment of the standardized distance by quadrature of the quantile.

    This is the slow, assumption-light route; ``model.moment_closed`` is the
    closed form it is cross-checked against.
    """
    _check_order(order)
    if isinstance(model, StudentRadial) and model.df <= order:
        raise InfiniteMomentError(
            f"radial moment of order {order} is infinite for Student df={model.df:g}"
        )
    return integrate_unit(lambda u, omu: model.quantile(u, omu) ** order)


@dataclass(frozen=True)
class EllipticalSpec:
    """Sampling specification: location, scale, shape and radial family."""

    theta: np.ndarray
    sigma2: float
    shape: ShapeMatrix
    model: RadialModel

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        shape = as_shape_matrix(self.shape)
        if theta.shape != (shape.dim,):
            raise ValueError(
                f"location has shape {theta.shape}, expected ({shape.dim},)"
            )
        if self.model.dim != shape.dim:
            raise ValueError("radial model dimension does not match the shape matrix")
        if not self.sigma2 > 0:
            raise ValueError("scale sigma^2 must be positive")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def spherical(cls, model: RadialModel) -> "EllipticalSpec":
        return cls(np.zeros(model.dim), 1.0, ShapeMatrix.identity(model.dim), model)


_TINY_UNIFORM = 0.5 / 2**53


def sample_elliptical(spec: EllipticalSpec, n: int, seed) -> np.ndarray:
    """Draw n observations: theta + sigma * r * V^(1/2) u.

    Directions come from normalized Gaussian vectors, radii from the radial
    quantile applied to uniforms; see the module docstring for the frozen
    draw order.  ``seed`` may be an int, a SeedSequence, or a Generator.
    """
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    x = spherical_sample(spec.model, n, rng)
    root = sym_sqrt(spec.shape.matrix)
    return spec.theta + math.sqrt(spec.sigma2) * (x @ root)


def spherical_sample(model: RadialModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Spherical draws (theta 0, unit scale, identity shape) from `model`."""
    normals = rng.standard_normal((n, model.dim))
    norms = np.linalg.norm(normals, axis=1)
    # a zero norm has probability zero; regenerating would desync streams
    norms[norms == 0.0] = 1.0
    u = rng.random(n)
    u[u == 0.0] = _TINY_UNIFORM
    radii = model.quantile(u)
    return (radii / norms)[:, None] * normals
