"""1D Neumann lattice operators and the band variance profile.

The variance profile of the band ensemble is J = (-W^2 Delta + 1)^{-1},
where Delta is the discrete Laplacian on the chain with Neumann boundary
conditions.  Everything here is dense-output but tridiagonal-solve backed,
so it stays cheap up to N in the thousands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatticeParams",
    "TridiagonalOperator",
    "VarianceProfile",
    "SingularSystemError",
    "neumann_laplacian",
    "variance_profile",
    "tridiagonal_solve",
    "tridiagonal_logdet",
]

# Defensive pivot floor; the operators used here are positive definite.
PIVOT_FLOOR = 1e-300


class SingularSystemError(ValueError):
    """Raised when a tridiagonal elimination pivot collapses to zero."""


@dataclass(frozen=True)
class LatticeParams:
    """Chain of N = 2n+1 sites indexed -n..n with bandwidth W."""

    n: int
    W: float

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"half-width must be nonnegative, got {self.n}")
        if not self.W > 0:
            raise ValueError(f"bandwidth must be positive, got {self.W}")

    @property
    def N(self) -> int:
        return 2 * self.n + 1


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal operator stored as diagonal + one off-diagonal."""

    diagonal: np.ndarray
    offdiagonal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diagonal", np.asarray(self.diagonal))
        object.__setattr__(self, "offdiagonal", np.asarray(self.offdiagonal))
        if self.diagonal.ndim != 1 or self.offdiagonal.ndim != 1:
            raise ValueError("diagonal and offdiagonal must be 1-d sequences")
        if len(self.offdiagonal) != max(len(self.diagonal) - 1, 0):
            raise ValueError("offdiagonal must have length m-1")

    @property
    def m(self) -> int:
        return len(self.diagonal)

    def dense(self, shift: complex = 0.0) -> np.ndarray:
        """Dense matrix of self + shift*I (test oracle helper)."""
        dtype = np.result_type(self.diagonal, self.offdiagonal, type(shift))
        a = np.zeros((self.m, self.m), dtype=dtype)
        np.fill_diagonal(a, self.diagonal + shift)
        idx = np.arange(self.m - 1)
        a[idx, idx + 1] = self.offdiagonal
        a[idx + 1, idx] = self.offdiagonal
        return a


@dataclass(frozen=True)
class VarianceProfile:
    """Entry variances J of the band ensemble; symmetric, rows sum to 1."""

    params: LatticeParams
    entries: np.ndarray


def neumann_laplacian(m: int) -> TridiagonalOperator:
    """Discrete Laplacian on m sites with Neumann (reflecting) boundaries.

    Interior rows are (1, -2, 1), boundary rows (-1, 1); all row sums vanish,
    so constants are annihilated.
    """
    if m < 1:
        raise ValueError(f"operator order must be at least 1, got {m}")
    diag = np.full(m, -2.0)
    diag[0] = -1.0
    diag[-1] = -1.0
    if m == 1:
        diag[0] = 0.0
    return TridiagonalOperator(diag, np.ones(m - 1))


def variance_profile(params: LatticeParams) -> VarianceProfile:
    """Variance profile J = (-W^2 Delta + 1)^{-1} via N tridiagonal solves."""
    N = params.N
    lap = neumann_laplacian(N)
    op = TridiagonalOperator(-params.W**2 * lap.diagonal, -params.W**2 * lap.offdiagonal)
    j = tridiagonal_solve(op, 1.0, np.eye(N))
    j = 0.5 * (j + j.T)
    return VarianceProfile(params, j)


def tridiagonal_solve(op: TridiagonalOperator, shift: complex, rhs: np.ndarray) -> np.ndarray:
    """Solve (op + shift*I) x = rhs by the Thomas algorithm.

    Parameters
    ----------
    op : TridiagonalOperator
    shift : scalar added to the diagonal (may be complex)
    rhs : vector of length m, or (m, k) matrix of stacked right-hand sides

    Raises SingularSystemError when an elimination pivot falls below the
    defensive floor.
    """
    rhs = np.asarray(rhs)
    m = op.m
    if rhs.shape[0] != m:
        raise ValueError(f"rhs has leading dimension {rhs.shape[0]}, expected {m}")
    dtype = np.result_type(op.diagonal, op.offdiagonal, type(shift), rhs)
    b = op.diagonal.astype(dtype) + shift
    e = op.offdiagonal.astype(dtype)
    x = rhs.astype(dtype).copy()
    cp = np.empty(m - 1 if m > 1 else 0, dtype=dtype)

    pivot = b[0]
    if abs(pivot) < PIVOT_FLOOR:
        raise SingularSystemError("zero pivot at row 0")
    x[0] = x[0] / pivot
    for i in range(1, m):
        cp[i - 1] = e[i - 1] / pivot
        pivot = b[i] - e[i - 1] * cp[i - 1]
        if abs(pivot) < PIVOT_FLOOR:
            raise SingularSystemError(f"zero pivot at row {i}")
        x[i] = (x[i] - e[i - 1] * x[i - 1]) / pivot
    for i in range(m - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]
    return x


def tridiagonal_logdet(op: TridiagonalOperator, shift: complex = 0.0,
                       min_pivot: float = PIVOT_FLOOR) -> complex:
    """log det(op + shift*I) as the sum of principal logs of LU pivots.

    Summing per-pivot logs keeps the imaginary part continuous in the shift
    as long as no pivot crosses the negative real axis; for operators whose
    Hermitian part is positive definite every pivot stays in the open right
    half-plane, so the branch is the one continued from real positive shifts.
    """
    b = op.diagonal + shift
    e = op.offdiagonal
    logdet = 0.0 + 0.0j
    pivot = b[0]
    scale = max(np.max(np.abs(b)), 1.0)
    for i in range(op.m):
        if i > 0:
            pivot = b[i] - e[i - 1] ** 2 / pivot
        if abs(pivot) < min_pivot * scale:
            raise SingularSystemError(f"pivot {pivot} below floor at row {i}")
        logdet += np.log(complex(pivot))
    return logdet
