"""Block tridiagonal direct solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularLinearSystem

COND_LIMIT = 1e14


@dataclass
class BlockTridiagMatrix:
    """Square block tridiagonal matrix with ``b x b`` blocks.

    ``lower[i]`` couples block row ``i + 1`` to column ``i``; ``upper[i]``
    couples block row ``i`` to column ``i + 1``.
    """

    lower: np.ndarray  # (N-1, b, b)
    diag: np.ndarray  # (N, b, b)
    upper: np.ndarray  # (N-1, b, b)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.diag = np.asarray(self.diag, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n, b, b2 = self.diag.shape
        if b != b2:
            raise ValueError("diagonal blocks must be square")
        expect = (max(n - 1, 0), b, b)
        if self.lower.shape != expect or self.upper.shape != expect:
            raise ValueError(
                f"off-diagonal blocks must have shape {expect}, got {self.lower.shape}, {self.upper.shape}"
            )

    @property
    def n_blocks(self):
        return self.diag.shape[0]

    @property
    def block_size(self):
        return self.diag.shape[1]

    @classmethod
    def identity(cls, n_blocks, block_size=3):
        eye = np.broadcast_to(np.eye(block_size), (n_blocks, block_size, block_size)).copy()
        off = np.zeros((max(n_blocks - 1, 0), block_size, block_size))
        return cls(off, eye, off.copy())

    @classmethod
    def from_dense(cls, A, block_size):
        A = np.asarray(A, dtype=float)
        n = A.shape[0] // block_size
        A4 = A.reshape(n, block_size, n, block_size)
        idx = np.arange(n)
        diag = A4[idx, :, idx, :]
        lower = A4[idx[1:], :, idx[:-1], :]
        upper = A4[idx[:-1], :, idx[1:], :]
        return cls(lower, diag, upper)

    def to_dense(self):
        n, b = self.n_blocks, self.block_size
        A = np.zeros((n * b, n * b))
        for i in range(n):
            A[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
            if i + 1 < n:
                A[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.lower[i]
                A[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.upper[i]
        return A

    def matvec(self, x):
        x = np.asarray(x, dtype=float).reshape(self.n_blocks, self.block_size)
        y = np.einsum("nij,nj->ni", self.diag, x)
        y[1:] += np.einsum("nij,nj->ni", self.lower, x[:-1])
        y[:-1] += np.einsum("nij,nj->ni", self.upper, x[1:])
        return y.ravel()


def block_thomas_solve(A: BlockTridiagMatrix, b, cond_limit=COND_LIMIT):
    """Solve ``A x = b`` by block LU (block Thomas algorithm).

    Each pivot block is inverted with LAPACK (LU with partial pivoting);
    a pivot whose 1-norm condition number exceeds ``cond_limit`` raises
    :class:`SingularLinearSystem`. There is no pivoting across blocks.
    """
    n, bs = A.n_blocks, A.block_size
    rhs = np.asarray(b, dtype=float).reshape(n, bs)
    if not (np.all(np.isfinite(A.diag)) and np.all(np.isfinite(A.lower))
            and np.all(np.isfinite(A.upper)) and np.all(np.isfinite(rhs))):
        raise SingularLinearSystem("non-finite entries in block tridiagonal system")

    X = np.empty((max(n - 1, 0), bs, bs))  # D'_i^{-1} U_i
    y = np.empty((n, bs))
    inv_norm = np.linalg.norm
    for i in range(n):
        D = A.diag[i]
        r = rhs[i]
        if i > 0:
            L = A.lower[i - 1]
            D = D - L @ X[i - 1]
            r = r - L @ y[i - 1]
        try:
            Dinv = np.linalg.inv(D)
        except np.linalg.LinAlgError as exc:
            raise SingularLinearSystem(f"pivot block {i} is singular") from exc
        cond = inv_norm(D, 1) * inv_norm(Dinv, 1)
        if not cond < cond_limit:
            raise SingularLinearSystem(f"pivot block {i} condition number {cond:.3e}")
        if i + 1 < n:
            X[i] = Dinv @ A.upper[i]
        y[i] = Dinv @ r
    for i in range(n - 2, -1, -1):
        y[i] -= X[i] @ y[i + 1]
    return y.ravel()


def dense_solve(A: BlockTridiagMatrix, b):
    """Reference path: dense LU on the expanded matrix."""
    try:
        return np.linalg.solve(A.to_dense(), np.asarray(b, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularLinearSystem(str(exc)) from exc
