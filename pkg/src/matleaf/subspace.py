"""Orthonormal subspace carriers and SVD kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis, stored as rows of ``basis`` (shape ``(dim, ambient_dim)``)."""

    ambient_dim: int
    basis: np.ndarray
    tol_used: float = 0.0
    singular_values: tuple = ()

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(-1, self.ambient_dim)
        b.flags.writeable = False
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def project(self, w) -> np.ndarray:
        return self.projector() @ np.asarray(w, dtype=float)

    def to_dict(self) -> dict:
        return {"ambient_dim": self.ambient_dim, "dim": self.dim, "basis": self.basis.tolist()}


def nullspace(A: np.ndarray, rtol: float, ref: float | None = None):
    """Right kernel of ``A``: columns of the returned (n, n - rank) array.

    Singular values ``<= rtol * ref`` count as zero; ``ref`` defaults to the
    largest singular value of ``A``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n), np.zeros(0)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    scale = s[0] if ref is None else ref
    if scale <= 0:
        return np.eye(n), s
    rank = int(np.sum(s > rtol * scale))
    return vt[rank:].T.copy(), s


def orthonormal_span(M: np.ndarray, atol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the column space of ``M``, rank by ``atol``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > atol))
    return u[:, :rank].copy()


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles between column spaces (empty if either is trivial)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] == 0 or B.shape[1] == 0:
        return np.zeros(0)
    return subspace_angles(A, B)
