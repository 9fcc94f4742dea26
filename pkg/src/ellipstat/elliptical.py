"""Elliptical samplers, spatial signs and ranks, radial moments, conditionals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._ustat import unit_rows
from .core import as_data, as_sym, sym_sqrt, sym_eigen
from .errors import DegenerateObservation, InvalidInput, SingularBlock

FAMILIES = ("gaussian", "student", "gaussian_scale_mixture")


@dataclass(frozen=True)
class EllipticalSpec:
    """Location/scatter model with a radial family.

    ``nu`` is used by the student family; ``weights`` and ``scales`` define a
    finite Gaussian scale mixture (row scale drawn with probability weights).
    """

    family: str
    location: np.ndarray
    scatter: np.ndarray
    nu: float | None = None
    weights: tuple[float, ...] = ()
    scales: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown family {self.family!r}")
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        S = as_sym(np.atleast_2d(np.asarray(self.scatter, dtype=float)), "scatter")
        if S.shape[0] != loc.shape[0]:
            raise InvalidInput("location and scatter dimensions differ")
        if sym_eigen(S).eigenvalues[-1] <= 0:
            raise InvalidInput("scatter must be positive definite")
        if self.family == "student" and (self.nu is None or self.nu <= 0):
            raise InvalidInput("student family needs nu > 0")
        if self.family == "gaussian_scale_mixture":
            w = np.asarray(self.weights, dtype=float)
            s = np.asarray(self.scales, dtype=float)
            if w.size == 0 or w.shape != s.shape:
                raise InvalidInput("mixture needs matching weights and scales")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10 or np.any(s <= 0):
                raise InvalidInput("mixture weights must be a probability vector, scales > 0")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scatter", S)

    @property
    def p(self) -> int:
        return self.location.shape[0]

    @classmethod
    def spherical(cls, family: str, p: int, **kw) -> "EllipticalSpec":
        return cls(family, np.zeros(p), np.eye(p), **kw)


def spatial_sign(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    return x / nrm if nrm > 0 else np.zeros_like(x)


def spatial_signs(X) -> np.ndarray:
    """Row-wise spatial signs of a matrix."""
    return unit_rows(np.asarray(X, dtype=float))


def spatial_rank(x, sample) -> np.ndarray:
    X = as_data(sample, "sample")
    x = np.asarray(x, dtype=float).reshape(-1)
    return spatial_signs(x[None, :] - X).mean(axis=0)


def row_generator(seed: int, row: int) -> np.random.Generator:
    """Counter-based substream for a single row."""
    if seed < 0 or row < 0:
        raise InvalidInput("seed and row must be nonnegative")
    key = (int(row) << 64) | (int(seed) & ((1 << 64) - 1))
    return np.random.Generator(np.random.Philox(key=key))


def sample_elliptical(spec: EllipticalSpec, n: int, seed: int) -> np.ndarray:
    """Draw n rows; row i depends only on (seed, i) so generation order is irrelevant."""
    if n < 1:
        raise InvalidInput("n must be positive")
    p = spec.p
    A = sym_sqrt(spec.scatter)
    G = np.empty((n, p))
    radial = np.ones(n)
    if spec.family == "gaussian_scale_mixture":
        cum = np.cumsum(spec.weights)
        scales = np.asarray(spec.scales, dtype=float)
    for i in range(n):
        g = row_generator(seed, i)
        G[i] = g.standard_normal(p)
        if spec.family == "student":
            radial[i] = 1.0 / np.sqrt(g.chisquare(spec.nu) / spec.nu)
        elif spec.family == "gaussian_scale_mixture":
            k = min(int(np.searchsorted(cum, g.random(), side="right")), len(scales) - 1)
            radial[i] = scales[k]
    return spec.location + (G * radial[:, None]) @ A


@dataclass(frozen=True)
class RadialMoments:
    zeta: dict[int, float] = field(default_factory=dict)
    pos: dict[int, float] = field(default_factory=dict)


def radii(X, center, scale=None) -> np.ndarray:
    X = as_data(X)
    Z = X - np.asarray(center, dtype=float)
    if scale is not None:
        Z = Z / np.sqrt(np.asarray(scale, dtype=float))
    return np.sqrt(np.einsum("ij,ij->i", Z, Z))


def radial_moments(X, center, scale=None) -> RadialMoments:
    """Empirical inverse and positive moments of r_i = |D^{-1/2}(X_i - center)|."""
    r = radii(X, center, scale)
    if np.any(r == 0):
        raise DegenerateObservation("an observation coincides with the center")
    zeta = {k: float(np.mean(r ** (-k))) for k in (1, 2, 3, 4)}
    pos = {k: float(np.mean(r**k)) for k in (1, 2)}
    return RadialMoments(zeta, pos)


@dataclass(frozen=True)
class ConditionalParams:
    cond_location: np.ndarray
    cond_scatter: np.ndarray
    delta2: float


def conditional_params(location, scatter, q: int, x2) -> ConditionalParams:
    mu = np.asarray(location, dtype=float)
    S = as_sym(scatter, "scatter")
    p = mu.shape[0]
    if not 1 <= q < p:
        raise InvalidInput("split index must satisfy 1 <= q < p")
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    S11, S12, S22 = S[:q, :q], S[:q, q:], S[q:, q:]
    try:
        c = np.linalg.cholesky(S22)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock("conditioning block is singular") from exc
    if np.min(np.diag(c)) ** 2 <= 1e-14 * np.max(np.abs(np.diag(S22))):
        raise SingularBlock("conditioning block is singular")
    d = x2 - mu[q:]
    sol = np.linalg.solve(S22, np.column_stack([d, S12.T]))
    loc = mu[:q] + S12 @ sol[:, 0]
    cs = S11 - S12 @ sol[:, 1:]
    return ConditionalParams(loc, 0.5 * (cs + cs.T), float(max(d @ sol[:, 0], 0.0)))
