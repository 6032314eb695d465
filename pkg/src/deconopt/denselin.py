"""Small dense symmetric linear algebra.

Everything the other modules need at desk scale: a cyclic Jacobi eigensolver,
an unblocked Cholesky factorization, and minimum-norm solutions of transpose
systems B^T a = c via eigendecomposition of B^T B. Jacobi over QR iteration
for implementation simplicity and unconditional symmetry handling; large-scale
performance is a non-goal.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    AllZero,
    DimensionMismatch,
    Inconsistent,
    IndefiniteInput,
    NonFinite,
    NotPositiveDefinite,
)
from .tolerances import DEFAULT, Tolerances

_MAX_JACOBI_SWEEPS = 100


class SymMatrix:
    """Dense symmetric matrix; symmetrized on construction.

    Construction refuses inputs whose absolute asymmetry exceeds the
    `symmetry` tolerance.
    """

    def __init__(self, entries, tolerances: Tolerances = DEFAULT):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFinite("matrix contains non-finite entries")
        skew = np.max(np.abs(a - a.T)) if a.size else 0.0
        if skew > tolerances.symmetry:
            raise DimensionMismatch(
                f"matrix asymmetry {skew:.3e} exceeds tolerance {tolerances.symmetry:.3e}"
            )
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self.entries = a

    @property
    def order(self) -> int:
        return self.entries.shape[0]


def _as_sym_array(a) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.entries
    return SymMatrix(a).entries


def sym_eigen(a, tolerances: Tolerances = DEFAULT):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps run until the off-diagonal Frobenius norm drops below
    `jacobi_sweep * ||A||_F`. Returns (eigenvalues ascending, orthonormal
    eigenvectors as columns, in matching order).
    """
    work = np.array(_as_sym_array(a))
    n = work.shape[0]
    vecs = np.eye(n)
    if n == 1:
        return work.ravel().copy(), vecs

    frob = math.sqrt(float(np.sum(work * work)))
    target = tolerances.jacobi_sweep * frob

    def offdiag_norm(m):
        off = m - np.diag(np.diag(m))
        return math.sqrt(float(np.sum(off * off)))

    sweeps = 0
    while offdiag_norm(work) > target:
        sweeps += 1
        if sweeps > _MAX_JACOBI_SWEEPS:
            raise AssertionError("Jacobi sweeps failed to converge")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                if apq == 0.0:
                    continue
                app, aqq = work[p, p], work[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(1.0 + theta * theta)
                )
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                work[:, p] = c * col_p - s * col_q
                work[:, q] = s * col_p + c * col_q
                row_p = work[p, :].copy()
                row_q = work[q, :].copy()
                work[p, :] = c * row_p - s * row_q
                work[q, :] = s * row_p + c * row_q
                work[p, p] = app - t * apq
                work[q, q] = aqq + t * apq
                work[p, q] = work[q, p] = 0.0
                vp = vecs[:, p].copy()
                vq = vecs[:, q].copy()
                vecs[:, p] = c * vp - s * vq
                vecs[:, q] = s * vp + c * vq

    eigvals = np.diag(work).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], vecs[:, order]


def smallest_nonzero_eig(a, zero_tol: float | None = None,
                         tolerances: Tolerances = DEFAULT) -> float:
    """Smallest eigenvalue strictly above the zero cutoff of a PSD matrix.

    The cutoff defaults to `spectrum_zero * lambda_max`. Raises IndefiniteInput
    when the matrix has an eigenvalue below -cutoff, AllZero when nothing
    exceeds the cutoff.
    """
    eigvals, _ = sym_eigen(a, tolerances)
    lam_max = float(eigvals[-1])
    if zero_tol is None:
        zero_tol = tolerances.spectrum_zero * max(lam_max, 0.0)
    if eigvals[0] < -zero_tol:
        raise IndefiniteInput(
            f"matrix has negative eigenvalue {eigvals[0]:.3e}"
        )
    above = eigvals[eigvals > zero_tol]
    if above.size == 0:
        raise AllZero(f"no eigenvalue above cutoff {zero_tol:.3e}")
    return float(above[0])


def spd_factor(a) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite on a pivot <= 0."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= 0.0:
            raise NotPositiveDefinite(f"nonpositive pivot {d:.3e} at column {j}")
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def spd_solve_factored(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = low.shape[0]
    y = np.array(b, dtype=float)
    if y.shape != (n,):
        raise DimensionMismatch(f"rhs length {y.shape} does not match order {n}")
    for j in range(n):
        y[j] /= low[j, j]
        if j + 1 < n:
            y[j + 1:] -= y[j] * low[j + 1:, j]
    for j in range(n - 1, -1, -1):
        y[j] /= low[j, j]
        if j > 0:
            y[:j] -= y[j] * low[j, :j]
    return y


def solve_spd(a, b) -> np.ndarray:
    """Cholesky solve of a positive definite system."""
    arr = a.entries if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
    return spd_solve_factored(spd_factor(arr), b)


def spd_inverse(a) -> np.ndarray:
    """Explicit inverse via one factorization; for constant-system caching."""
    arr = a.entries if isinstance(a, SymMatrix) else np.asarray(a, dtype=float)
    low = spd_factor(arr)
    n = arr.shape[0]
    inv = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        inv[:, j] = spd_solve_factored(low, eye[:, j])
    return 0.5 * (inv + inv.T)


class MinNormTransposeSolver:
    """Reusable minimum-norm solver for B^T a = c.

    The returned solution is a = B (B^T B)^+ c, the unique solution lying in
    the column space of B. Precomputes the pseudo-inverse once so per-round
    reconstructions are a pair of matmuls.
    """

    def __init__(self, b_matrix, tolerances: Tolerances = DEFAULT):
        self.b = np.array(b_matrix, dtype=float)
        if not np.all(np.isfinite(self.b)):
            raise NonFinite("matrix contains non-finite entries")
        self.tolerances = tolerances
        gram = SymMatrix(self.b.T @ self.b, tolerances)
        eigvals, eigvecs = sym_eigen(gram, tolerances)
        cutoff = tolerances.spectrum_zero * max(float(eigvals[-1]), 0.0)
        inv = np.zeros_like(eigvals)
        keep = eigvals > cutoff
        inv[keep] = 1.0 / eigvals[keep]
        self.gram_pinv = (eigvecs * inv) @ eigvecs.T

    def __call__(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.b.shape[1],):
            raise DimensionMismatch(
                f"rhs length {c.shape} does not match {self.b.shape[1]}"
            )
        alpha = self.b @ (self.gram_pinv @ c)
        resid = np.linalg.norm(self.b.T @ alpha - c)
        # absolute floor: a rhs at roundoff scale is "in range" by convention
        floor = 1e-12 * max(1.0, float(np.linalg.norm(self.b)))
        if resid > self.tolerances.minnorm_consistency * np.linalg.norm(c) + floor:
            raise Inconsistent(
                f"rhs is not in the range of the transpose (residual {resid:.3e})"
            )
        return alpha


def min_norm_solve(b_matrix, c, tolerances: Tolerances = DEFAULT) -> np.ndarray:
    """One-shot minimum-norm solution of B^T a = c."""
    return MinNormTransposeSolver(b_matrix, tolerances)(c)
