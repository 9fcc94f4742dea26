"""Robust location, scale and shape estimators built on spatial signs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ._ustat import mean_sq_offdiag, unit_rows
from .core import as_data, as_sym, band, sym_sqrt
from .errors import (
    DegenerateConfiguration,
    DegenerateObservation,
    DegenerateScale,
    DegenerateWeights,
    InsufficientSamples,
    InvalidInput,
    NonConvergence,
    SampleTooLarge,
    SingularBand,
    SingularShape,
)

TOL = 1e-8
MAX_ITER = 500
_COINCIDE = 1e-12


def _warn_nonconvergence(what: str, residual: float, iterations: int) -> None:
    warnings.warn(
        f"{what} did not converge after {iterations} iterations (residual {residual:.3e})",
        NonConvergence,
        stacklevel=3,
    )


def spatial_median(X, tol: float = TOL, max_iter: int = MAX_ITER, init=None) -> np.ndarray:
    """Sample spatial median by a Weiszfeld iteration with the Vardi-Zhang step.

    Converges when the mean spatial sign has norm at most ``tol`` or when the
    iterate sits on a data point satisfying the data-point optimality test.
    Emits :class:`NonConvergence` and returns the last iterate otherwise.
    """
    X = as_data(X)
    n = X.shape[0]
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    if n == 1:
        return X[0].copy()
    y = X.mean(axis=0) if init is None else np.asarray(init, dtype=float).copy()
    scale = max(1.0, float(np.max(np.abs(X))))
    res = np.inf
    for _ in range(max_iter):
        D = X - y
        r = np.sqrt(np.einsum("ij,ij->i", D, D))
        hit = r <= _COINCIDE * scale
        eta = int(hit.sum())
        inv = np.zeros(n)
        inv[~hit] = 1.0 / r[~hit]
        R = (D * inv[:, None]).sum(axis=0)
        rn = float(np.linalg.norm(R))
        res = rn / n
        if res <= tol:
            return y
        if eta > 0 and rn <= eta:
            return y
        T = (X * inv[:, None]).sum(axis=0) / inv.sum()
        if eta == 0:
            y = T
        else:
            a = eta / rn
            y = max(0.0, 1.0 - a) * T + min(1.0, a) * y
    _warn_nonconvergence("spatial_median", res, max_iter)
    return y


@dataclass
class LocationScale:
    theta: np.ndarray
    diag_scale: np.ndarray
    iterations: int
    residual: float
    converged: bool = True
    m: float = 0.0

    @property
    def p(self) -> int:
        return self.theta.shape[0]


def _initial_scale(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    med = np.median(X, axis=0)
    if np.any(np.ptp(X, axis=0) == 0):
        raise DegenerateScale("a coordinate is constant across all rows")
    mad = np.median(np.abs(X - med), axis=0)
    fallback = np.mean(np.abs(X - med), axis=0)
    mad = np.where(mad > 0, mad, fallback)
    return med, mad**2


def _metric_median(X: np.ndarray, y: np.ndarray, sd: np.ndarray, tol: float, max_iter: int = 100) -> np.ndarray:
    """Spatial median in the metric diag(sd)^-2: data-point test, then damped Newton.

    Plain Weiszfeld steps crawl when the median sits on or next to an
    observation; Newton steps on the convex objective do not.
    """
    n, p = X.shape
    E0 = X / sd

    def objective(z):
        return float(np.sum(np.sqrt(np.einsum("ij,ij->i", E0 - z, E0 - z))))

    z = y / sd
    for _ in range(max_iter):
        E = E0 - z
        r = np.sqrt(np.einsum("ij,ij->i", E, E))
        k = int(np.argmin(r))
        V = np.delete(E0 - E0[k], k, axis=0)
        Rk = unit_rows(V).sum(axis=0)
        if np.linalg.norm(Rk) < 1.0:
            return X[k].copy()
        if r[k] <= _COINCIDE * max(1.0, float(np.max(r))):
            # on a non-optimal observation: one Vardi-Zhang step off it
            inv = np.zeros(n)
            keep = np.arange(n) != k
            inv[keep] = 1.0 / r[keep]
            T = inv @ E0 / inv.sum()
            z = z + (1.0 - 1.0 / np.linalg.norm(Rk)) * (T - z)
            continue
        U = E / r[:, None]
        R = U.sum(axis=0)
        if np.linalg.norm(R) / n <= tol:
            break
        w = 1.0 / r
        H = np.eye(p) * w.sum() - (U * w[:, None]).T @ U
        try:
            step = np.linalg.solve(H, R)
        except np.linalg.LinAlgError:
            step = R / w.sum()
        f0 = objective(z)
        t = 1.0
        while t > 1e-10 and objective(z + t * step) > f0 - 1e-4 * t * float(R @ step):
            t *= 0.5
        if t <= 1e-10:
            z = z + R / w.sum()  # Weiszfeld step, always a descent step
        else:
            z = z + t * step
    return z * sd


def _location_scale(X, m: float, tol: float, max_iter: int) -> LocationScale:
    X = as_data(X)
    n, p = X.shape
    if n < 3:
        raise InsufficientSamples("need at least 3 observations")
    if not -1.0 <= m <= 1.0:
        raise InvalidInput("m must lie in [-1, 1]")
    theta, d = _initial_scale(X)
    log_target = float(np.sum(np.log(d)))
    res = np.inf
    # the multiplicative scale step can 2-cycle on small samples; once the
    # scale residual rises, take half steps on the log scale instead
    power, last_scale = 1.0, np.inf
    for it in range(max_iter + 1):
        sd = np.sqrt(d)
        if m == 0:
            theta = _metric_median(X, theta, sd, 0.1 * tol)
        E = (X - theta) / sd
        r = np.sqrt(np.einsum("ij,ij->i", E, E))
        # the location may sit exactly on an observation: that row has no sign
        ok = r > _COINCIDE * max(1.0, float(np.max(r)))
        eta = n - int(ok.sum())
        U = np.zeros_like(E)
        U[ok] = E[ok] / r[ok, None]
        w = np.zeros(n)
        w[ok] = r[ok] ** m
        R = w @ U
        rn = float(np.linalg.norm(R))
        if eta > 0 and m == 0 and rn <= eta:
            # location on an observation: its sign is the subgradient element
            # balancing the score, which keeps the scale map continuous there
            U[~ok] = -R / eta
            loc_res = 0.0
        else:
            loc_res = rn / w.sum()
        mass = float(np.sum(U * U))
        scale_res = float(np.max(np.abs(p * np.sum(U * U, axis=0) / mass - 1.0)))
        if scale_res > last_scale:
            power = 0.5
        last_scale = scale_res
        res = max(loc_res, scale_res)
        if res <= tol:
            return LocationScale(theta, d, it, res, True, m)
        if it == max_iter:
            break
        if m != 0:
            winv = np.zeros(n)
            winv[ok] = r[ok] ** (m - 1.0)
            theta = theta + sd * R / winv.sum()
            U = unit_rows((X - theta) / sd)
            mass = float(np.sum(U * U))
        d = d * (p * np.sum(U * U, axis=0) / mass) ** power
        if np.any(d <= 0):
            raise DegenerateScale("scale update collapsed a coordinate")
        d = d * np.exp((log_target - np.sum(np.log(d))) / p)
    _warn_nonconvergence("location-scale solver", res, max_iter)
    return LocationScale(theta, d, max_iter, res, False, m)


def scaled_spatial_median(X, tol: float = TOL, max_iter: int = MAX_ITER) -> LocationScale:
    """Joint spatial median and diagonal scale.

    The scale is identified only up to a common factor; it is pinned by keeping
    the geometric mean equal to that of the squared coordinate MADs, which keeps
    the estimator equivariant under coordinate rescaling.
    """
    return _location_scale(X, 0.0, tol, max_iter)


def weighted_spatial_median(X, m: float, tol: float = TOL, max_iter: int = MAX_ITER) -> LocationScale:
    """Location with weights K(r) = r^m, paired with the unweighted scale equation."""
    return _location_scale(X, float(m), tol, max_iter)


def standardized_signs(X, ls: LocationScale, center: bool = True) -> np.ndarray:
    Z = np.asarray(X, dtype=float)
    if center:
        Z = Z - ls.theta
    return unit_rows(Z / np.sqrt(ls.diag_scale))


@dataclass
class SSCMEstimate:
    matrix: np.ndarray
    center_used: np.ndarray


def sscm(X, center=None) -> SSCMEstimate:
    """Spatial sign covariance matrix; the center defaults to the spatial median."""
    X = as_data(X)
    c = spatial_median(X) if center is None else np.asarray(center, dtype=float)
    Z = X - c
    r = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    if np.any(r == 0):
        raise DegenerateObservation("an observation equals the center")
    U = Z / r[:, None]
    M = U.T @ U / X.shape[0]
    M = 0.5 * (M + M.T)
    return SSCMEstimate(M, c)


GSSCM_FAMILIES = ("winsor", "quad_winsor", "ball", "shell", "lr", "none")


def radius_cutoffs(r: np.ndarray) -> dict[str, float]:
    """Cutoffs from the cube-root (Wilson-Hilferty) transformed radii."""
    t = r ** (2.0 / 3.0)
    hmed = float(np.median(t))
    hmad = float(np.median(np.abs(t - hmed)))
    pw = lambda v: max(v, 0.0) ** 1.5  # noqa: E731
    return {
        "Q1": pw(hmed - hmad),
        "Q2": pw(hmed),
        "Q3": pw(hmed + hmad),
        "Q3star": pw(hmed + 1.4826 * hmad),
        # indicator families compare on the transformed scale to avoid round-trip error
        "D1": hmed - hmad,
        "D2": hmed,
        "D3": hmed + hmad,
    }


def gsscm_weights(r: np.ndarray, family: str, cuts: dict[str, float]) -> np.ndarray:
    q2, q3s = cuts["Q2"], cuts["Q3star"]
    t = r ** (2.0 / 3.0)
    pos = r > 0
    safe = np.where(pos, r, 1.0)
    if family == "winsor":
        return np.where(pos, np.minimum(1.0, q2 / safe), 1.0)
    if family == "quad_winsor":
        return np.where(pos, np.minimum(1.0, (q2 / safe) ** 2), 1.0)
    if family == "ball":
        return (t <= cuts["D2"]).astype(float)
    if family == "shell":
        return ((t > cuts["D1"]) & (t <= cuts["D3"])).astype(float)
    if family == "lr":
        w = (t <= cuts["D2"]).astype(float)
        if q3s > q2:
            mid = (w == 0) & (r <= q3s)
            w[mid] = (q3s - r[mid]) / (q3s - q2)
        return w
    if family == "none":
        return np.where(pos, 1.0 / safe, 0.0)
    raise InvalidInput(f"unknown weight family {family!r}; choose from {GSSCM_FAMILIES}")


def gsscm(X, center=None, family: str = "winsor") -> np.ndarray:
    """Generalized weighted SSCM: mean of w w^T with w = (X_i - c) xi(R_i)."""
    X = as_data(X)
    if X.shape[0] < 3:
        raise InsufficientSamples("need at least 3 observations")
    if family not in GSSCM_FAMILIES:
        raise InvalidInput(f"unknown weight family {family!r}; choose from {GSSCM_FAMILIES}")
    c = spatial_median(X) if center is None else np.asarray(center, dtype=float)
    Z = X - c
    r = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    xi = gsscm_weights(r, family, radius_cutoffs(r))
    W = Z * xi[:, None]
    if not np.any(np.einsum("ij,ij->i", W, W) > 0):
        raise DegenerateWeights(f"family {family!r} assigns zero weight to every observation")
    M = W.T @ W / X.shape[0]
    return 0.5 * (M + M.T)


@dataclass
class KendallMatrix:
    matrix: np.ndarray


def kendall_tau_matrix(X) -> KendallMatrix:
    X = as_data(X)
    n, p = X.shape
    if n < 2:
        raise InsufficientSamples("need at least 2 observations")
    K = np.zeros((p, p))
    for i in range(n - 1):
        U = unit_rows(X[i + 1 :] - X[i])
        K += U.T @ U
    K *= 2.0 / (n * (n - 1))
    return KendallMatrix(0.5 * (K + K.T))


@dataclass
class ShapeEstimate:
    shape: np.ndarray
    trace_normalized: bool = True
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


def _check_general_position(Z: np.ndarray) -> None:
    n, p = Z.shape
    if n <= p:
        raise InsufficientSamples(f"need n > p (got n={n}, p={p})")
    r = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    if np.any(r == 0):
        raise DegenerateObservation("an observation equals the center")
    if np.linalg.matrix_rank(Z) < p:
        raise DegenerateConfiguration("centered data do not span R^p")
    if p == 1:
        return
    U = Z / r[:, None]
    lead = np.argmax(np.abs(U) > 1e-9, axis=1)
    U = U * np.sign(U[np.arange(n), lead])[:, None]
    _, counts = np.unique(np.round(U, 9), axis=0, return_counts=True)
    if counts.max() >= n / p:
        raise DegenerateConfiguration("too many observations on a single line through the center")


def _tyler_map(Z: np.ndarray, V: np.ndarray) -> np.ndarray:
    p = Z.shape[1]
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise SingularShape("shape iterate lost positive definiteness") from exc
    Y = np.linalg.solve(L, Z.T)
    q = np.einsum("ij,ij->j", Y, Y)
    H = (Z / q[:, None]).T @ Z / Z.shape[0]
    H = 0.5 * (H + H.T)
    return p * H / np.trace(H)


def tyler(X, center=None, tol: float = TOL, max_iter: int = MAX_ITER, init=None) -> ShapeEstimate:
    """Tyler's shape estimator about a known center (origin by default), trace p."""
    X = as_data(X)
    p = X.shape[1]
    Z = X if center is None else X - np.asarray(center, dtype=float)
    _check_general_position(Z)
    V = np.eye(p) if init is None else as_sym(init, "init")
    V = p * V / np.trace(V)
    res = np.inf
    for it in range(max_iter + 1):
        V_new = _tyler_map(Z, V)
        res = float(np.linalg.norm(V_new - V, "fro"))
        if res <= tol:
            return ShapeEstimate(V, True, it, res, True)
        if it < max_iter:
            V = V_new
    _warn_nonconvergence("tyler", res, max_iter)
    return ShapeEstimate(V, True, max_iter, res, False)


def acg_loglik(W, V) -> float:
    """Angular central Gaussian log-likelihood of unit vectors under shape V."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    V = as_sym(V, "V")
    n, p = W.shape
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise SingularShape("V is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    Y = np.linalg.solve(L, W.T)
    q = np.einsum("ij,ij->j", Y, Y)
    return -0.5 * n * logdet - 0.5 * p * float(np.sum(np.log(q)))


@dataclass
class HREstimate:
    location: np.ndarray
    shape: ShapeEstimate
    inverse_shape: np.ndarray | None = None
    scatter: np.ndarray | None = None
    log: list[dict[str, float]] = field(default_factory=list)


def _root_pair(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, Q = np.linalg.eigh(V)
    if w[0] <= 0:
        raise SingularShape("shape iterate lost positive definiteness")
    s = np.sqrt(w)
    return (Q * s) @ Q.T, (Q / s) @ Q.T


def hr_estimator(X, tol: float = TOL, max_iter: int = MAX_ITER) -> HREstimate:
    """Hettmansperger-Randles location and shape.

    Started from the sample mean and trace-normalized covariance, both affine
    equivariant, so every iterate is equivariant as well.
    """
    X = as_data(X)
    n, p = X.shape
    mu = X.mean(axis=0)
    _check_general_position(X - mu)
    C = np.cov(X, rowvar=False, bias=True).reshape(p, p)
    V = p * C / np.trace(C)
    log: list[dict[str, float]] = []
    res = np.inf
    for it in range(max_iter + 1):
        R, Rinv = _root_pair(V)
        E = (X - mu) @ Rinv
        r = np.sqrt(np.einsum("ij,ij->i", E, E))
        if np.any(r == 0):
            raise DegenerateObservation("an observation equals the location iterate")
        U = E / r[:, None]
        loc_res = float(np.linalg.norm(U.mean(axis=0)))
        shape_res = float(np.linalg.norm(p * U.T @ U / n - np.eye(p), "fro"))
        res = max(loc_res, shape_res)
        log.append({"location": loc_res, "shape": shape_res})
        if res <= tol:
            return HREstimate(mu, ShapeEstimate(V, True, it, res, True), log=log)
        if it == max_iter:
            break
        mu = mu + R @ U.sum(axis=0) / np.sum(1.0 / r)
        E = (X - mu) @ Rinv
        U = unit_rows(E)
        V = R @ (U.T @ U / n) @ R
        V = 0.5 * (V + V.T)
        V = p * V / np.trace(V)
    _warn_nonconvergence("hr_estimator", res, max_iter)
    return HREstimate(mu, ShapeEstimate(V, True, max_iter, res, False), log=log)


def hd_hr(X, pilot_inverse_shape, h: int, tol: float = TOL, max_iter: int = MAX_ITER) -> HREstimate:
    """Banded high-dimensional HR step from a pilot inverse shape.

    The raw shape is mapped back from the pilot-whitened coordinates, i.e.
    Omega^{-1/2} (p mean U U^T) Omega^{-1/2}, so that it estimates the shape itself.
    """
    X = as_data(X)
    n, p = X.shape
    if h < 0:
        raise InvalidInput("bandwidth must be nonnegative")
    Om = as_sym(pilot_inverse_shape, "pilot")
    W, Winv = _root_pair(Om)
    Y = X @ W
    mu_w = spatial_median(Y, tol=tol, max_iter=max_iter)
    mu = Winv @ mu_w
    U = unit_rows(Y - mu_w)
    raw = Winv @ (p * U.T @ U / n) @ Winv
    raw = p * raw / np.trace(raw)
    V = band(0.5 * (raw + raw.T), h)
    try:
        np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise SingularBand(f"banded shape is not positive definite at h={h}; try a larger bandwidth") from exc
    Om_hr = band(np.linalg.inv(V), h)
    Om_hr = 0.5 * (Om_hr + Om_hr.T)
    Z = X - mu
    eta = float(np.sum(Z * Z) / n / p)
    loc_res = float(np.linalg.norm(U.mean(axis=0)))
    est = ShapeEstimate(V, True, 0, loc_res, loc_res <= tol or n == 1)
    return HREstimate(mu, est, Om_hr, eta * V, [{"location": loc_res}])


def trace_estimator(X) -> float:
    """U-statistic over distinct triples of (X_i - X_j)^T (X_k - X_j); unbiased for tr(Sigma).

    Summing the kernel over the free index collapses it to the trace of the
    unbiased sample covariance, which is what is evaluated here.
    """
    X = as_data(X)
    n = X.shape[0]
    if n < 3:
        raise InsufficientSamples("need at least 3 observations")
    Z = X - X.mean(axis=0)
    return float(np.sum(Z * Z) / (n - 1))


def leave_two_out_scales(
    X, tol: float = TOL, max_iter: int = MAX_ITER, base: LocationScale | None = None, chunk_elems: int = 2_000_000
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Location-scale fits with each pair (i, j), i < j, removed.

    All pairs are iterated together from the full-sample fit, using the same
    fixed-point map as :func:`scaled_spatial_median`. The common scale factor is
    pinned to the full-sample geometric mean; signs do not depend on it.
    Returns ``(pairs, thetas, scales)`` with one row per pair.
    """
    X = as_data(X)
    n, p = X.shape
    if n < 5:
        raise InsufficientSamples("leave-two-out fits need at least 5 observations")
    base = base if base is not None else scaled_spatial_median(X, tol, max_iter)
    pairs = np.array(list(combinations(range(n), 2)), dtype=int)
    P = len(pairs)
    thetas = np.empty((P, p))
    scales = np.empty((P, p))
    log_target = float(np.sum(np.log(base.diag_scale)))
    Xc = X - base.theta
    Xc2 = Xc * Xc
    step = max(1, chunk_elems // (n * p))
    worst = 0.0

    def moments(a, d, keep):
        # radii of every row under each pair's (theta, d), via matrix products
        big = (1.0 / d) @ Xc2.T + np.sum(a * a / d, axis=1)[:, None]
        r2 = big - 2.0 * (a / d) @ Xc.T
        # rows the iterate sits on (up to cancellation error) carry no sign
        hit = (keep > 0) & (r2 <= 1e-13 * big)
        r = np.sqrt(np.clip(r2, 0.0, None))
        live = (keep > 0) & ~hit
        inv = np.divide(1.0, r, out=np.zeros_like(r), where=live)
        return inv, hit.sum(axis=1)

    for lo in range(0, P, step):
        pr = pairs[lo : lo + step]
        k = len(pr)
        keep = np.ones((k, n))
        keep[np.arange(k), pr[:, 0]] = 0.0
        keep[np.arange(k), pr[:, 1]] = 0.0
        a = np.zeros((k, p))
        d = np.repeat(base.diag_scale[None], k, axis=0)
        res = np.full(k, np.inf)
        power = np.ones(k)
        last_scale = np.full(k, np.inf)
        for _ in range(max_iter + 1):
            sd = np.sqrt(d)
            inv, eta = moments(a, d, keep)
            score = (inv @ Xc - inv.sum(axis=1)[:, None] * a) / sd
            i2 = inv * inv
            S = (i2 @ Xc2 - 2.0 * a * (i2 @ Xc) + a * a * i2.sum(axis=1)[:, None]) / d
            rn = np.linalg.norm(score, axis=1)
            at_point = (eta > 0) & (rn <= eta)
            # subgradient signs on coincident rows, as in _location_scale
            S = S + np.where(at_point[:, None], score * score / np.maximum(eta, 1)[:, None], 0.0)
            mass = S.sum(axis=1)
            loc_res = np.where(at_point, 0.0, rn / (n - 2 - eta))
            scale_res = np.max(np.abs(p * S / mass[:, None] - 1.0), axis=1)
            power[scale_res > last_scale] = 0.5
            last_scale = scale_res
            res = np.maximum(loc_res, scale_res)
            if np.all(res <= tol):
                break
            shrink = np.where(eta > 0, np.clip(1.0 - eta / np.where(rn > 0, rn, np.inf), 0.0, 1.0), 1.0)
            a = a + shrink[:, None] * sd * score / inv.sum(axis=1)[:, None]
            inv, eta = moments(a, d, keep)
            score = (inv @ Xc - inv.sum(axis=1)[:, None] * a) / sd
            i2 = inv * inv
            S = (i2 @ Xc2 - 2.0 * a * (i2 @ Xc) + a * a * i2.sum(axis=1)[:, None]) / d
            at_point = (eta > 0) & (np.linalg.norm(score, axis=1) <= eta)
            S = S + np.where(at_point[:, None], score * score / np.maximum(eta, 1)[:, None], 0.0)
            d = d * (p * S / S.sum(axis=1)[:, None]) ** power[:, None]
            d = d * np.exp((log_target - np.sum(np.log(d), axis=1)) / p)[:, None]
        th = base.theta + a
        # pairs the joint iteration leaves unsettled (typically a median on an
        # observation at small n) are refit one by one with the robust solver
        for q in np.flatnonzero(res > tol):
            i, j = pr[q]
            f = _location_scale(np.delete(X, [i, j], axis=0), 0.0, tol, 10 * max_iter)
            th[q] = f.theta
            d[q] = f.diag_scale * np.exp((log_target - np.sum(np.log(f.diag_scale))) / p)
            res[q] = f.residual
        thetas[lo : lo + k] = th
        scales[lo : lo + k] = d
        worst = max(worst, float(np.max(res)))
    if worst > tol:
        _warn_nonconvergence("leave-two-out fits", worst, max_iter)
    return pairs, thetas, scales


def leave_two_out_fits(X, tol: float = TOL, max_iter: int = MAX_ITER) -> dict[tuple[int, int], LocationScale]:
    """Dictionary view of :func:`leave_two_out_scales` (exact mode, n <= 60)."""
    X = as_data(X)
    if X.shape[0] > 60:
        raise SampleTooLarge("exact leave-two-out refits are capped at n <= 60")
    pairs, th, d = leave_two_out_scales(X, tol, max_iter)
    return {(int(i), int(j)): LocationScale(th[k], d[k], 0, 0.0) for k, (i, j) in enumerate(pairs)}


def pair_sign_products(Z, pairs, thetas, scales, center: bool) -> np.ndarray:
    """u_i^T u_j for each pair, where u are signs under that pair's own fit."""
    Z = np.asarray(Z, dtype=float)
    i, j = pairs[:, 0], pairs[:, 1]
    sd = np.sqrt(scales)
    A = Z[i] - thetas if center else Z[i]
    B = Z[j] - thetas if center else Z[j]
    return np.einsum("kj,kj->k", unit_rows(A / sd), unit_rows(B / sd))


def trace_r2_estimator(X, loc_scale: LocationScale | None = None, exact: bool = False, lto=None) -> float:
    """p^2 times the mean squared inner product of standardized signs over pairs.

    ``exact`` replaces the full-sample fit by the fit without each pair;
    ``lto`` may pass a precomputed ``leave_two_out_scales`` result.
    """
    X = as_data(X)
    n, p = X.shape
    if n < 2:
        raise InsufficientSamples("need at least 2 observations")
    if exact:
        if n > 60:
            raise SampleTooLarge("exact leave-two-out refits are capped at n <= 60")
        pairs, th, d = lto if lto is not None else leave_two_out_scales(X)
        return p * p * float(np.mean(pair_sign_products(X, pairs, th, d, True) ** 2))
    ls = loc_scale if loc_scale is not None else scaled_spatial_median(X)
    U = standardized_signs(X, ls)
    return p * p * mean_sq_offdiag(U @ U.T)
