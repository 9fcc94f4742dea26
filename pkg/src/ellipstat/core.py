"""Linear-algebra helpers and the calibration toolbox shared by all modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInput

_SQRT_PI_INV = 1.0 / math.sqrt(math.pi)


def as_data(X, name: str = "data") -> np.ndarray:
    """Validate an observation matrix and return it as a 2-D float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty n x p matrix")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def as_sym(A, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"{name} must be square")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 1.0)
    if np.max(np.abs(arr - arr.T), initial=0.0) > 1e-12 * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigen(A) -> EigenSystem:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    S = as_sym(A)
    w, V = np.linalg.eigh(S)
    order = np.argsort(-w, kind="stable")
    return EigenSystem(w[order], V[:, order])


def sym_sqrt(A, inverse: bool = False, floor: float = 0.0) -> np.ndarray:
    """Symmetric square root (or inverse square root) via eigendecomposition."""
    es = sym_eigen(A)
    w = np.maximum(es.eigenvalues, floor)
    if inverse:
        if np.any(w <= 0):
            raise InvalidInput("matrix is not positive definite")
        d = 1.0 / np.sqrt(w)
    else:
        if np.any(w < -1e-12 * max(1.0, abs(w[0]))):
            raise InvalidInput("matrix is not positive semidefinite")
        d = np.sqrt(np.clip(w, 0.0, None))
    V = es.eigenvectors
    out = (V * d) @ V.T
    return 0.5 * (out + out.T)


def band(A, h: int) -> np.ndarray:
    """Zero every entry with |i - j| > h."""
    if h < 0:
        raise InvalidInput("bandwidth must be nonnegative")
    A = np.asarray(A, dtype=float)
    i, j = np.indices(A.shape)
    return np.where(np.abs(i - j) <= h, A, 0.0)


def sin_theta(U, W) -> float:
    """Frobenius sin-theta distance between the column spans of U and W."""
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if U.shape != W.shape:
        raise InvalidInput("bases must have the same shape")
    D = U @ U.T - W @ W.T
    return float(np.linalg.norm(D, "fro") / math.sqrt(2.0))


def gumbel_cdf(y):
    """Limiting law exp(-pi^{-1/2} exp(-y/2)) of centered squared maxima."""
    return np.exp(-_SQRT_PI_INV * np.exp(-np.asarray(y, dtype=float) / 2.0))


def gumbel_center(max_sq, count: int):
    if count < 2:
        raise InvalidInput("count must be at least 2")
    return np.asarray(max_sq, dtype=float) - 2.0 * math.log(count) + math.log(math.log(count))


def gumbel_pvalue(max_sq: float, count: int) -> float:
    y = gumbel_center(max_sq, count)
    return float(-np.expm1(-_SQRT_PI_INV * np.exp(-y / 2.0)))


def u_p(y: float, count: float) -> float:
    lc = math.log(count)
    if lc <= 0:
        raise InvalidInput("count must exceed 1")
    rad = 2.0 * lc - math.log(lc) + y
    if rad < 0:
        raise InvalidInput("negative radicand")
    return math.sqrt(rad)


def _half_tan(p: float) -> float:
    # tan(pi (1/2 - p)) written as a cotangent for accuracy near 0
    return 0.5 / math.tan(math.pi * p)


def _cauchy_sf(t: float) -> float:
    if t > 0:
        return math.atan(1.0 / t) / math.pi
    return 0.5 - math.atan(t) / math.pi


def cauchy_combine(p1: float, p2: float, truncated: bool = False) -> float:
    """Combine two p-values by the (optionally truncated) Cauchy rule."""
    for p in (p1, p2):
        if not (0.0 < p < 1.0):
            raise InvalidInput("p-values must lie strictly inside (0, 1)")
    if truncated:
        t = sum(_half_tan(p) for p in (p1, p2) if p < 0.5)
    else:
        t = _half_tan(p1) + _half_tan(p2)
    return _cauchy_sf(t)


def fisher_combine(p1: float, p2: float) -> float:
    """Fisher's rule; chi-square(4) survival in closed form."""
    for p in (p1, p2):
        if not (0.0 < p <= 1.0):
            raise InvalidInput("p-values must lie in (0, 1]")
    x = -2.0 * (math.log(p1) + math.log(p2))
    return math.exp(-x / 2.0) * (1.0 + x / 2.0)


def normal_upper_pvalue(z: float) -> float:
    return float(ndtr(-z))


@dataclass(frozen=True)
class Calibration:
    family: str
    parameters: dict[str, float] = field(default_factory=dict)


@dataclass
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    pvalue: float
    calibration: Calibration
    nuisance: dict[str, float] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "pvalue": float(self.pvalue),
            "calibration": {
                "family": self.calibration.family,
                "parameters": dict(self.calibration.parameters),
            },
            "nuisance": {k: float(v) for k, v in self.nuisance.items()},
            "meta": dict(self.meta),
        }


NORMAL = Calibration("normal")
