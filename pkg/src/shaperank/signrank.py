"""Decomposition of observations into distances, unit signs and radial ranks.

Observations are sphericized in the metric of the null shape matrix; the
statistics downstream consume only the resulting ranks and signs (plus the
distances for the parametric and Gaussian tests).  When the center of
symmetry is unknown it is estimated by the spatial median.

Everything here is pure and deterministic; decompositions are immutable
snapshots safe to share across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ShapeMatrix, as_shape_matrix, sym_inv_sqrt


class SpatialMedianError(RuntimeError):
    """Raised when the spatial-median iteration fails to converge."""


@dataclass(frozen=True)
class SignRankDecomposition:
    """Distances, unit signs and ranks of a sample relative to (theta, V0).

    ``ranks`` is a permutation of 1..n: the rank of each distance, ties
    broken by original observation index (and flagged via ``tie_flag``).
    """

    theta_used: np.ndarray
    theta_estimated: bool
    distances: np.ndarray
    signs: np.ndarray
    ranks: np.ndarray
    tie_flag: bool = False

    def __post_init__(self) -> None:
        d = np.asarray(self.distances, dtype=float)
        u = np.asarray(self.signs, dtype=float)
        r = np.asarray(self.ranks, dtype=int)
        theta = np.asarray(self.theta_used, dtype=float)
        n, k = u.shape
        if d.shape != (n,) or r.shape != (n,) or theta.shape != (k,):
            raise ValueError("decomposition arrays have inconsistent shapes")
        if not (d > 0).all():
            raise ValueError("all distances must be positive")
        if np.abs(np.linalg.norm(u, axis=1) - 1.0).max() > 1e-12:
            raise ValueError("signs must have unit norm to 1e-12")
        if not np.array_equal(np.sort(r), np.arange(1, n + 1)):
            raise ValueError("ranks must be a permutation of 1..n")
        for name, arr in (("theta_used", theta), ("distances", d), ("signs", u), ("ranks", r)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.signs.shape[0]

    @property
    def k(self) -> int:
        return self.signs.shape[1]


def decompose(
    x: np.ndarray,
    theta: np.ndarray | None = None,
    shape: ShapeMatrix | np.ndarray | None = None,
    *,
    median_tol: float | None = None,
) -> SignRankDecomposition:
    """Sphericize `x` about `theta` in the metric of `shape` and rank the radii.

    With ``theta=None`` the spatial median is used and the decomposition is
    flagged as center-estimated.  ``shape=None`` means the identity (test of
    sphericity).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"data must be an (n, k) matrix, got shape {x.shape}")
    n, k = x.shape
    if n < 2:
        raise ValueError("at least two observations are required")
    if k < 2:
        raise ValueError("the shape problem needs dimension >= 2")

    v0 = ShapeMatrix.identity(k) if shape is None else as_shape_matrix(shape)
    if v0.dim != k:
        raise ValueError(f"shape matrix is {v0.dim}x{v0.dim} but data has {k} columns")

    estimated = theta is None
    if estimated:
        center = spatial_median(x, tol=median_tol)
    else:
        center = np.asarray(theta, dtype=float)
        if center.shape != (k,):
            raise ValueError(f"theta has shape {center.shape}, expected ({k},)")

    z = (x - center) @ sym_inv_sqrt(v0.matrix)
    d = np.linalg.norm(z, axis=1)
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ValueError(f"observation {zero[0]} coincides with the center")
    u = z / d[:, None]

    order = np.argsort(d, kind="stable")
    ranks = np.empty(n, dtype=int)
    ranks[order] = np.arange(1, n + 1)
    ties = bool(np.unique(d).size < n)

    return SignRankDecomposition(
        theta_used=center,
        theta_estimated=estimated,
        distances=d,
        signs=u,
        ranks=ranks,
        tie_flag=ties,
    )


def spatial_median(
    x: np.ndarray,
    tol: float | None = None,
    max_iter: int = 500,
) -> np.ndarray:
    """Minimizer of the summed Euclidean distances, by damped Weiszfeld steps.

    Iterates that land on a data point get the classical correction step: the
    point is left out, and the pulled-back gradient decides whether it is
    itself the minimizer.  The default tolerance is 1e-9 times the data
    diameter (bounding-box diagonal).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("spatial median needs an (n, k) matrix with n >= 2")
    diameter = float(np.linalg.norm(np.ptp(x, axis=0)))
    if diameter == 0.0:
        return x[0].copy()
    if tol is None:
        tol = 1e-9 * diameter
    anchor_eps = 1e-13 * diameter

    y = np.median(x, axis=0)
    for _ in range(max_iter):
        diff = x - y
        dist = np.linalg.norm(diff, axis=1)
        anchored = dist <= anchor_eps
        free = ~anchored
        inv = 1.0 / dist[free]
        pull = diff[free] * inv[:, None]
        gradient = pull.sum(axis=0)

        if anchored.any():
            multiplicity = int(anchored.sum())
            gnorm = np.linalg.norm(gradient)
            if gnorm <= multiplicity:
                return y
            target = (x[free] * inv[:, None]).sum(axis=0) / inv.sum()
            ratio = multiplicity / gnorm
            y_new = (1.0 - ratio) * target + ratio * y
        else:
            y_new = (x * (1.0 / dist)[:, None]).sum(axis=0) / (1.0 / dist).sum()

        step = np.linalg.norm(y_new - y)
        y = y_new
        if step <= tol:
            return y

    diff = x - y
    dist = np.linalg.norm(diff, axis=1)
    gnorm = float(np.linalg.norm((diff / dist[:, None]).sum(axis=0)))
    raise SpatialMedianError(
        f"no convergence after {max_iter} iterations "
        f"(last iterate {y}, gradient norm {gnorm:.3e})"
    )
