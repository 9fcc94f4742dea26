"""Sign-based PCA, sparse leading directions, factor numbers, and sparse CCA."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import as_data, sym_eigen
from .errors import DegenerateGap, IllConditionedBlocks, InvalidInput, NonConvergence
from .estimators import GSSCM_FAMILIES, gsscm, kendall_tau_matrix, sscm

EIG_FLOOR = 1e-12
GAP_MIN = 1e-12


def orient(v: np.ndarray) -> np.ndarray:
    """Flip a vector so its largest-magnitude entry (lowest index on ties) is positive."""
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


@dataclass
class SubspaceEstimate:
    basis: np.ndarray
    eigenvalues: np.ndarray
    source: str
    gap_degenerate: bool = False


def leading_subspace(M: np.ndarray, r: int, source: str) -> SubspaceEstimate:
    p = M.shape[0]
    if not 1 <= r < p:
        raise InvalidInput("need 1 <= r < p")
    es = sym_eigen(M)
    B = es.eigenvectors[:, :r].copy()
    for j in range(r):
        B[:, j] = orient(B[:, j])
    flag = bool(es.eigenvalues[r - 1] - es.eigenvalues[r] < GAP_MIN)
    if flag:
        warnings.warn(DegenerateGap(f"eigengap at r={r} is below {GAP_MIN}"), stacklevel=3)
    return SubspaceEstimate(B, es.eigenvalues[:r].copy(), source, flag)


def spca_subspace(X, r: int) -> SubspaceEstimate:
    return leading_subspace(sscm(X).matrix, r, "sscm")


def gspca_subspace(X, family: str, r: int) -> SubspaceEstimate:
    if family not in GSSCM_FAMILIES:
        raise InvalidInput(f"unknown weight family {family!r}; choose from {GSSCM_FAMILIES}")
    return leading_subspace(gsscm(X, family=family), r, f"gsscm({family})")


def kendall_factor(X, K: int) -> SubspaceEstimate:
    return leading_subspace(kendall_tau_matrix(X).matrix, K, "kendall")


@dataclass
class SparseDirection:
    vector: np.ndarray
    support_size: int
    objective: float
    iterations: int
    converged: bool = True
    history: tuple[float, ...] = ()


def _truncate(v: np.ndarray, s: int) -> np.ndarray:
    keep = np.argsort(-np.abs(v), kind="stable")[:s]
    out = np.zeros_like(v)
    out[keep] = v[keep]
    return out


def truncated_power(M: np.ndarray, s: int, init=None, max_iter: int = 1000, tol: float = 1e-8) -> SparseDirection:
    """Multiply, keep the s largest magnitudes, normalize; M must be PSD for monotone ascent."""
    p = M.shape[0]
    if not 1 <= s <= p:
        raise InvalidInput("need 1 <= s <= p")
    v0 = sym_eigen(M).eigenvectors[:, 0] if init is None else np.asarray(init, dtype=float).reshape(-1)
    v = _truncate(v0, s)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise InvalidInput("initial vector vanishes after truncation")
    v = v / nv
    f = float(v @ M @ v)
    hist = [f]
    slack = 1e-12 * max(1.0, float(np.abs(M).max()))
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        w = _truncate(M @ v, s)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w /= nw
        fw = float(w @ M @ w)
        assert fw >= f - slack, "truncated power objective decreased"
        same = np.array_equal(w != 0, v != 0)
        angle = math.sqrt(max(0.0, 1.0 - min(1.0, float(w @ v) ** 2)))
        v, f = w, fw
        hist.append(f)
        if same and angle < tol:
            converged = True
            break
    if not converged:
        warnings.warn(NonConvergence(f"truncated power iteration stopped after {it} iterations"), stacklevel=2)
    v = orient(v)
    return SparseDirection(v, s, f, it, converged, tuple(hist))


def sspca_leading(X, s: int, init=None, max_iter: int = 1000) -> SparseDirection:
    return truncated_power(sscm(X).matrix, s, init, max_iter)


@dataclass
class FactorNumber:
    k: int
    ratios: np.ndarray
    floored: bool


def eigenratio(values, Kmax: int) -> FactorNumber:
    """argmax_j values[j-1]/values[j] for j = 1..Kmax, smallest j on ties."""
    ev = np.asarray(values, dtype=float)
    if not 1 <= Kmax < ev.shape[0]:
        raise InvalidInput("need 1 <= Kmax < number of eigenvalues")
    den = ev[1 : Kmax + 1]
    floored = bool(np.any(den < EIG_FLOOR))
    ratios = ev[:Kmax] / np.maximum(den, EIG_FLOOR)
    return FactorNumber(int(np.argmax(ratios)) + 1, ratios, floored)


def factor_number_eigenratio(X, Kmax: int, source: str = "sscm") -> int:
    X = as_data(X)
    if source == "sscm":
        M = sscm(X).matrix
    elif source == "kendall":
        M = kendall_tau_matrix(X).matrix
    else:
        raise InvalidInput("source must be 'sscm' or 'kendall'")
    return eigenratio(sym_eigen(M).eigenvalues, Kmax).k


@dataclass
class CCAPair:
    u: np.ndarray
    v: np.ndarray
    rho: float
    budgets: tuple[float, float]
    iterations: int = 0
    converged: bool = True
    floor_active: bool = False


def l1_unit_project(a: np.ndarray, c: float, iters: int = 200) -> np.ndarray:
    """Maximizer of u'a over |u|_2 <= 1, |u|_1 <= c: soft-threshold then normalize."""
    na = np.linalg.norm(a)
    if na == 0:
        return np.zeros_like(a)
    u = a / na
    if np.sum(np.abs(u)) <= c:
        return u
    lo, hi = 0.0, float(np.max(np.abs(a)))
    for _ in range(iters):
        t = 0.5 * (lo + hi)
        s = np.sign(a) * np.maximum(np.abs(a) - t, 0.0)
        u = s / np.linalg.norm(s)
        if np.sum(np.abs(u)) > c:
            lo = t
        else:
            hi = t
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    s = np.sign(a) * np.maximum(np.abs(a) - hi, 0.0)
    return s / np.linalg.norm(s)


def _floored_inv_sqrt(B: np.ndarray, floor: float) -> tuple[np.ndarray, int]:
    es = sym_eigen(B)
    w = es.eigenvalues
    hit = int(np.sum(w <= floor))
    d = 1.0 / np.sqrt(np.maximum(w, floor))
    V = es.eigenvectors
    out = (V * d) @ V.T
    return 0.5 * (out + out.T), hit


def sign_cross_matrix(X, Y, eig_floor: float | None = None) -> tuple[np.ndarray, bool]:
    """Whitened cross block of the joint SSCM of the concatenated rows."""
    X = as_data(X, "X")
    Y = as_data(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise InvalidInput("X and Y need the same number of rows")
    px = X.shape[1]
    S = sscm(np.hstack([X, Y])).matrix
    Sxx, Sxy, Syy = S[:px, :px], S[:px, px:], S[px:, px:]
    flagged = False
    roots = []
    for B in (Sxx, Syy):
        floor = 1e-6 * float(sym_eigen(B).eigenvalues[0]) if eig_floor is None else float(eig_floor)
        R, hit = _floored_inv_sqrt(B, floor)
        if hit > 0:
            flagged = True
        if 2 * hit >= B.shape[0]:
            warnings.warn(IllConditionedBlocks(f"{hit} of {B.shape[0]} block eigenvalues at the floor"), stacklevel=3)
        roots.append(R)
    return roots[0] @ Sxy @ roots[1], flagged


def sscca_fit(X, Y, c_x: float, c_y: float, max_iter: int = 500, eig_floor: float | None = None, tol: float = 1e-8) -> CCAPair:
    if c_x < 1 or c_y < 1:
        raise InvalidInput("l1 budgets must be at least 1")
    K, flagged = sign_cross_matrix(X, Y, eig_floor)
    Us, _, Vt = np.linalg.svd(K)
    v = l1_unit_project(orient(Vt[0]), c_y)
    u = l1_unit_project(K @ v, c_x)
    f = float(u @ K @ v)
    slack = 1e-12 * max(1.0, float(np.abs(K).max()))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u = l1_unit_project(K @ v, c_x)
        f_mid = float(u @ K @ v)
        assert f_mid >= f - slack, "CCA objective decreased"
        v = l1_unit_project(K.T @ u, c_y)
        f_new = float(u @ K @ v)
        assert f_new >= f_mid - slack, "CCA objective decreased"
        done = abs(f_new - f) < tol
        f = f_new
        if done:
            converged = True
            break
    if not converged:
        warnings.warn(NonConvergence(f"CCA alternation stopped after {it} iterations"), stacklevel=2)
    k = int(np.argmax(np.abs(u)))
    if u[k] < 0:
        u, v = -u, -v
    return CCAPair(u, v, float(u @ K @ v), (float(c_x), float(c_y)), it, converged, flagged)
