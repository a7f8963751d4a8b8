"""Small dense-matrix kit: stacking operators, symmetric roots and the
efficient shape-information kernel that every statistic in this package is
built on.

Conventions, frozen so that golden files stay stable:

* ``vec`` stacks a matrix column by column (column-major).
* ``vech1`` walks the upper triangle row by row -- (1,2), ..., (1,k),
  (2,2), ..., (2,k), (3,3), ... -- and drops the (1,1) entry, giving a
  vector of length ``k*(k+1)//2 - 1``.

Matrices are dense; dimensions above ``MAX_DIM`` are rejected because the
k^2-by-k^2 operators grow quartically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 25

SYMMETRY_RTOL = 1e-12


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix required to be positive definite is not."""


def _as_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValueError(
            f"{name} has dimension {a.shape[0]}, above the supported cap {MAX_DIM}"
        )
    return a


def check_symmetric(a: np.ndarray, name: str = "matrix", rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Validate symmetry of `a` in max-norm relative to its own scale."""
    a = _as_square(a, name)
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric to relative tolerance {rtol:g}")
    return a


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major stacking of a square matrix into a length-k^2 vector."""
    return _as_square(a).flatten(order="F")


def unvec(x: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    x = np.asarray(x, dtype=float)
    if x.size != dim * dim:
        raise ValueError(f"expected a vector of length {dim * dim}, got {x.size}")
    return x.reshape((dim, dim), order="F")


def vech1_index_pairs(dim: int) -> list[tuple[int, int]]:
    """Upper-triangular (row, col) pairs in vech1 order, (0, 0) excluded."""
    if dim < 2:
        raise ValueError(f"dimension must be at least 2, got {dim}")
    return [(i, j) for i in range(dim) for j in range(i, dim) if (i, j) != (0, 0)]


def vech1(a: np.ndarray) -> np.ndarray:
    """Stack the upper triangle of a symmetric matrix, skipping the (1,1) entry."""
    a = check_symmetric(a, "vech1 input")
    pairs = vech1_index_pairs(a.shape[0])
    return np.array([a[i, j] for i, j in pairs])


def unvech1(x: np.ndarray, corner: float = 0.0) -> np.ndarray:
    """Rebuild the symmetric matrix whose vech1 stack is `x`.

    The (1,1) entry is not part of the stack and is set to `corner`.
    """
    x = np.asarray(x, dtype=float)
    p = x.size
    # p = k(k+1)/2 - 1  =>  k = (-1 + sqrt(9 + 8p)) / 2
    dim = int(round((-1.0 + np.sqrt(9.0 + 8.0 * p)) / 2.0))
    if dim * (dim + 1) // 2 - 1 != p:
        raise ValueError(f"vector of length {p} is not a valid vech1 stack")
    out = np.zeros((dim, dim))
    out[0, 0] = corner
    for value, (i, j) in zip(x, vech1_index_pairs(dim)):
        out[i, j] = value
        out[j, i] = value
    return out


def commutation_matrix(dim: int) -> np.ndarray:
    """Permutation matrix mapping ``vec(A)`` to ``vec(A.T)``."""
    if dim < 1 or dim > MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {dim}")
    size = dim * dim
    out = np.zeros((size, size))
    for r in range(dim):
        for c in range(dim):
            # entry (r, c) of A.T sits at vec position c*dim + r of vec(A)
            out[c * dim + r, r * dim + c] = 1.0
    return out


def vec_identity_outer(dim: int) -> np.ndarray:
    """Rank-one matrix ``vec(I) vec(I)'``; maps ``vec(A)`` to ``tr(A) vec(I)``."""
    v = vec(np.eye(dim))
    return np.outer(v, v)


def reduced_stack_operators(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Expansion and contraction operators between vech1 and vec coordinates.

    Returns ``(expand, contract)``, both of shape ``(k(k+1)/2 - 1, k^2)``:

    * ``expand.T @ vech1(v) == vec(v)`` for any symmetric ``v`` with
      ``v[0, 0] == 0``;
    * ``contract @ vec(v) == vech1(v)`` for any symmetric ``v`` (off-diagonal
      vec positions are averaged, so the map is total on symmetric input).
    """
    if dim < 2:
        raise ValueError(f"dimension must be at least 2, got {dim}")
    if dim > MAX_DIM:
        raise ValueError(f"dimension {dim} is above the supported cap {MAX_DIM}")
    pairs = vech1_index_pairs(dim)
    rows = len(pairs)
    expand = np.zeros((rows, dim * dim))
    contract = np.zeros((rows, dim * dim))
    for row, (i, j) in enumerate(pairs):
        if i == j:
            expand[row, j * dim + i] = 1.0
            contract[row, j * dim + i] = 1.0
        else:
            expand[row, j * dim + i] = 1.0
            expand[row, i * dim + j] = 1.0
            contract[row, j * dim + i] = 0.5
            contract[row, i * dim + j] = 0.5
    return expand, contract


def _spd_eigh(a: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    a = check_symmetric(a, name)
    eigval, eigvec = np.linalg.eigh(a)
    if eigval[0] <= 1e-12 * max(eigval[-1], 0.0):
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (smallest eigenvalue {eigval[0]:.3e})"
        )
    return eigval, eigvec


def sym_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric positive-definite matrix."""
    eigval, eigvec = _spd_eigh(a, "sym_sqrt input")
    return (eigvec * np.sqrt(eigval)) @ eigvec.T


def sym_inv_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of a symmetric positive-definite matrix."""
    eigval, eigvec = _spd_eigh(a, "sym_inv_sqrt input")
    return (eigvec / np.sqrt(eigval)) @ eigvec.T


@dataclass(frozen=True)
class ShapeMatrix:
    """Symmetric positive-definite matrix normalized to have unit (1,1) entry.

    Instances are immutable; the wrapped array is a read-only copy and safe
    to share across threads.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = check_symmetric(self.matrix, "shape matrix")
        if m.shape[0] < 2:
            raise ValueError("a shape matrix must be at least 2x2")
        if m[0, 0] != 1.0:
            raise ValueError(
                f"shape matrix must have top-left entry exactly 1, got {m[0, 0]!r}; "
                "use ShapeMatrix.normalized to rescale"
            )
        _spd_eigh(m, "shape matrix")
        m = 0.5 * (m + m.T)
        m[0, 0] = 1.0
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "ShapeMatrix":
        return cls(np.eye(dim))

    @classmethod
    def normalized(cls, matrix: np.ndarray) -> "ShapeMatrix":
        """Rescale a positive-definite matrix so the (1,1) entry is exactly 1."""
        m = check_symmetric(matrix, "shape matrix")
        if m[0, 0] <= 0:
            raise ValueError("cannot normalize: top-left entry is not positive")
        return cls(m / m[0, 0])


def as_shape_matrix(value) -> ShapeMatrix:
    """Coerce an array or ShapeMatrix to a validated ShapeMatrix."""
    if isinstance(value, ShapeMatrix):
        return value
    return ShapeMatrix(np.asarray(value, dtype=float))


def _kron_inv_sqrt(v: np.ndarray) -> np.ndarray:
    """(V (x) V)^{-1/2} computed as the Kronecker square of V^{-1/2}."""
    root = sym_inv_sqrt(v)
    return np.kron(root, root)


def efficient_shape_information(shape, radial_shape_info: float) -> np.ndarray:
    """Efficient Fisher information for the shape parameter.

    ``radial_shape_info`` is the radial information-for-shape constant of the
    sampling family; the result scales linearly in it.  The returned matrix
    is symmetric positive definite of dimension ``k(k+1)/2 - 1``.
    """
    if radial_shape_info <= 0:
        raise ValueError("radial shape information must be positive")
    v = as_shape_matrix(shape)
    k = v.dim
    expand, _ = reduced_stack_operators(k)
    kis = _kron_inv_sqrt(v.matrix)
    core = (
        np.eye(k * k)
        + commutation_matrix(k)
        - (2.0 / k) * vec_identity_outer(k)
    )
    gamma = expand @ kis @ core @ kis @ expand.T
    gamma *= radial_shape_info / (4.0 * k * (k + 2.0))
    return 0.5 * (gamma + gamma.T)


def shape_info_identity_residual(shape) -> float:
    """Frobenius residual of the kernel identity behind the quadratic statistics.

    The inverse of the efficient-information kernel, pushed back to vec
    coordinates through the expansion operator, must match a closed
    Kronecker-product expression anchored at the (1,1) coordinate.  Returns
    ``||lhs - rhs||_F``; a correct implementation keeps this at rounding
    level (tests require <= 1e-9 relative to ``||rhs||_F``).
    """
    v = as_shape_matrix(shape)
    k = v.dim
    expand, _ = reduced_stack_operators(k)

    kernel = efficient_shape_information(v, 1.0)
    lhs = (expand.T @ np.linalg.solve(kernel, expand)) / (k * (k + 2.0))

    vv = np.kron(v.matrix, v.matrix)
    vvec = vec(v.matrix)
    e1 = np.zeros(k * k)
    e1[0] = 1.0
    rhs = (
        (np.eye(k * k) + commutation_matrix(k)) @ vv
        - 2.0 * np.outer(vv @ e1, vvec)
        - 2.0 * np.outer(vvec, vv @ e1)
        + 2.0 * np.outer(vvec, vvec)
    )
    return float(np.linalg.norm(lhs - rhs))
