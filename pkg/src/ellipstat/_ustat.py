"""Distinct-index sums over Gram matrices, shared by several U-statistics."""

from __future__ import annotations

import numpy as np


def unit_rows(Z: np.ndarray) -> np.ndarray:
    """Row-wise spatial signs with the U(0) = 0 convention."""
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    out = np.zeros_like(Z, dtype=float)
    nz = norms > 0
    out[nz] = Z[nz] / norms[nz, None]
    return out


def gram_sums(G: np.ndarray) -> tuple[float, float, float, float]:
    """Sums of G_ij, G_ij^2, G_ij G_jk and G_ij G_kl over distinct ordered indices.

    G must be symmetric; its diagonal is ignored.
    """
    G0 = np.array(G, dtype=float, copy=True)
    np.fill_diagonal(G0, 0.0)
    s1 = float(G0.sum())
    sq = G0 * G0
    s2 = float(sq.sum())
    r = G0.sum(axis=0)
    s3 = float(r @ r - s2)
    s4 = s1 * s1 - 4.0 * s3 - 2.0 * s2
    return s1, s2, s3, s4


def falling(n: int, k: int) -> float:
    out = 1.0
    for t in range(k):
        out *= n - t
    return out


def trace_sq_ustat(X: np.ndarray) -> float:
    """Unbiased estimate of tr(Sigma^2) from distinct-index Gram sums."""
    n = X.shape[0]
    _, s2, s3, s4 = gram_sums(X @ X.T)
    return s2 / falling(n, 2) - 2.0 * s3 / falling(n, 3) + s4 / falling(n, 4)


def cross_trace_ustat(X: np.ndarray, Y: np.ndarray) -> float:
    """Unbiased estimate of tr(Sigma_1 Sigma_2) from two independent samples."""
    n1, n2 = X.shape[0], Y.shape[0]
    G = X @ Y.T
    sq = float(np.sum(G * G))
    col = G.sum(axis=0)
    row = G.sum(axis=1)
    t2 = float(col @ col) - sq  # i != k, shared j
    t3 = float(row @ row) - sq  # shared i, j != l
    tot = float(G.sum())
    t4 = tot * tot - float(row @ row) - float(col @ col) + sq
    return (
        sq / (n1 * n2)
        - t2 / (n1 * (n1 - 1) * n2)
        - t3 / (n1 * n2 * (n2 - 1))
        + t4 / (n1 * (n1 - 1) * n2 * (n2 - 1))
    )


def mean_sq_offdiag(G: np.ndarray) -> float:
    """Average of G_ij^2 over i != j."""
    n = G.shape[0]
    G0 = np.array(G, dtype=float, copy=True)
    np.fill_diagonal(G0, 0.0)
    return float(np.sum(G0 * G0) / (n * (n - 1)))
