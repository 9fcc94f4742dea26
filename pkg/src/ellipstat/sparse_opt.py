"""Constrained l1 solvers: Dantzig-type ADMM, SCLIME, SGLASSO, sign-based sparse LDA."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import ndtr

from .core import as_data, as_sym
from .errors import DegenerateDirection, Infeasible, InvalidInput, NonConvergence
from .estimators import spatial_median, sscm

RHO = 1.0
RELAX = 1.6


@dataclass(frozen=True)
class DantzigProblem:
    """min |g|_1 subject to |gram @ g - target|_inf <= lam (target may hold several columns)."""

    gram: np.ndarray
    target: np.ndarray
    lam: float

    def __post_init__(self):
        G = as_sym(self.gram, "gram")
        b = np.asarray(self.target, dtype=float)
        if b.shape[0] != G.shape[0] or b.ndim > 2:
            raise InvalidInput("target must have as many rows as gram")
        if not np.all(np.isfinite(b)):
            raise InvalidInput("target has non-finite entries")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidInput("lambda must be finite and nonnegative")
        object.__setattr__(self, "gram", G)
        object.__setattr__(self, "target", b)


@dataclass
class DantzigSolution:
    gamma: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    violation: float
    gap: float
    converged: bool


def _soft(x: np.ndarray, t) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _dual_bound(A: np.ndarray, b: np.ndarray, lam: float, y: np.ndarray) -> np.ndarray:
    """Per-column dual objective b'y - lam|y|_1 after scaling y into |A'y|_inf <= 1."""
    s = np.maximum(np.max(np.abs(A.T @ y), axis=0), 1.0)
    y = y / s
    return np.sum(b * y, axis=0) - lam * np.sum(np.abs(y), axis=0)


def _polish(A: np.ndarray, b: np.ndarray, lam: float, w: np.ndarray, tol: float):
    """Refit on the active set of an ADMM iterate and certify it with a matching dual point.

    Candidate active rows are those with the least slack. The candidate support
    is the nonzero set of w, or that set plus one or two zero coordinates picked
    by pricing against a dual estimate (a tiny optimal entry can stay
    thresholded to zero for many iterations). Returns (gamma, gap) when a refit
    is feasible and its duality gap is within tol*(1 + |gamma|_1).
    """
    S0 = np.flatnonzero(w)
    if S0.size == 0:
        return None
    r = A @ w - b
    order = np.argsort(lam - np.abs(r), kind="stable")
    outside = np.flatnonzero(w == 0)
    price = np.zeros(b.shape[0])
    for m in (S0.size + 1, S0.size + 2):
        E = order[:m]
        y = np.linalg.lstsq(A[np.ix_(E, S0)].T, np.sign(w[S0]), rcond=None)[0]
        price = np.maximum(price, np.abs(A[E].T @ y))
    top = outside[np.argsort(-price[outside], kind="stable")[:4]]
    supports = [S0] + [np.sort(np.append(S0, extra)) for size in (1, 2) for extra in combinations(top, size)]
    for S in supports:
        for m in range(S.size, min(S.size + 3, b.shape[0] + 1)):
            E = order[:m]
            t = np.sign(r[E])
            t[t == 0] = 1.0
            sub = A[np.ix_(E, S)]
            x = np.linalg.lstsq(sub, b[E] + lam * t, rcond=None)[0]
            if np.any(np.sign(w[S0]) != np.sign(x[np.searchsorted(S, S0)])) or np.any(x == 0):
                continue
            g = np.zeros_like(w)
            g[S] = x
            if np.max(np.abs(A @ g - b)) > lam + 1e-12 * max(1.0, lam):
                continue
            yE = np.linalg.lstsq(sub.T, np.sign(x), rcond=None)[0]
            if np.any(np.sign(yE) == t):
                continue
            y = np.zeros_like(b)
            y[E] = yE
            l1 = float(np.sum(np.abs(g)))
            gap = l1 - float(_dual_bound(A, b[:, None], lam, y[:, None])[0])
            if gap <= tol * (1.0 + l1):
                return g, gap
    return None


def dantzig_solve(prob: DantzigProblem, tol: float = 1e-8, max_iter: int = 100_000, polish_every: int = 50) -> DantzigSolution:
    """Over-relaxed ADMM on the split  A g - z = b (z in the lam-box),  g = w (w carries the l1 term).

    Columns of a matrix target are solved simultaneously; they share one
    factorization of A'A + I. Every ``polish_every`` iterations the active set
    of each unfinished column is refit and accepted once a dual point certifies it.
    """
    A, b0, lam = prob.gram, prob.target, float(prob.lam)
    b = b0.reshape(b0.shape[0], -1)
    p, k = b.shape
    out = np.zeros((p, k))
    gaps = np.zeros(k)
    done = np.max(np.abs(b), axis=0) <= lam  # zero is feasible, hence optimal
    if done.all():
        return DantzigSolution(out.reshape(b0.shape), 0, 0.0, 0.0, float(np.max(np.abs(b), initial=0.0)), 0.0, True)

    chol = np.linalg.cholesky(A.T @ A + np.eye(p))

    def solve(rhs):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

    z = np.clip(-b, -lam, lam)
    w = np.zeros((p, k))
    u1 = np.zeros((p, k))
    u2 = np.zeros((p, k))
    scale = max(1.0, float(np.max(np.abs(b))))
    r_pri = r_dual = math.inf
    du1 = np.zeros((p, k))
    it = 0
    for it in range(1, max_iter + 1):
        g = solve(A.T @ (b + z - u1) + (w - u2))
        Ag = A @ g
        Ah = RELAX * Ag + (1.0 - RELAX) * (z + b)
        gh = RELAX * g + (1.0 - RELAX) * w
        z_old, w_old = z, w
        z = np.clip(Ah - b + u1, -lam, lam)
        w = _soft(gh + u2, 1.0 / RHO)
        du1 = Ah - b - z
        u1 = u1 + du1
        u2 = u2 + gh - w
        if it % polish_every == 0:
            for j in np.flatnonzero(~done):
                hit = _polish(A, b[:, j], lam, w[:, j], tol)
                if hit is not None:
                    out[:, j], gaps[j] = hit
                    done[j] = True
            if done.all():
                break
        r_pri = math.sqrt(float(np.sum((Ag - b - z) ** 2) + np.sum((g - w) ** 2)))
        r_dual = RHO * float(np.linalg.norm(A.T @ (z - z_old) + (w - w_old)))
        if r_pri <= tol * scale and r_dual <= tol * scale:
            rest = ~done
            if np.max(np.abs(A @ w[:, rest] - b[:, rest])) <= lam + tol:
                out[:, rest] = w[:, rest]
                l1 = np.sum(np.abs(w[:, rest]), axis=0)
                gaps[rest] = l1 - _dual_bound(A, b[:, rest], lam, -RHO * u1[:, rest])
                done[:] = True
                break

    if not done.all():
        rest = ~done
        out[:, rest] = w[:, rest]
        viol = float(np.max(np.abs(A @ w[:, rest] - b[:, rest])))
        # A persistent dual drift y with A'y ~ 0 and |b'y| > lam|y|_1 certifies infeasibility.
        y = du1[:, rest]
        ny = np.sum(np.abs(y), axis=0)
        cert = (ny > 1e-12) & (np.max(np.abs(A.T @ y), axis=0) <= 1e-6 * ny) & (
            np.abs(np.sum(b[:, rest] * y, axis=0)) > lam * ny * (1 + 1e-9)
        )
        if viol > lam + tol and np.any(cert):
            cols = np.flatnonzero(rest)[cert].tolist()
            raise Infeasible(f"constraint violation {viol:.3g} exceeds lambda {lam:.3g}; columns {cols}")
        warnings.warn(
            NonConvergence(f"ADMM stopped after {it} iterations (primal {r_pri:.2e}, dual {r_dual:.2e}, excess {viol - lam:.2e})"),
            stacklevel=2,
        )
    violation = float(np.max(np.abs(A @ out - b)))
    return DantzigSolution(out.reshape(b0.shape), it, r_pri, r_dual, violation, float(gaps.max()), bool(done.all()))


def sign_cov_scaled(X) -> np.ndarray:
    """p times the spatial-median-centered SSCM."""
    X = as_data(X)
    return X.shape[1] * sscm(X).matrix


def clime_lambda(n: int, p: int, c: float = 2.0) -> float:
    return c * (math.sqrt(math.log(p) / n) + p**-0.5)


def _symmetrize_min(V: np.ndarray) -> np.ndarray:
    keep = np.abs(V) <= np.abs(V.T)
    return np.where(keep, V, V.T)


@dataclass
class ClimeResult:
    matrix: np.ndarray
    raw: np.ndarray
    lam: float
    iterations: int
    converged: bool


def sclime(sign_cov, lam: float | None = None, *, n: int | None = None, c: float = 2.0, tol: float = 1e-8,
           max_iter: int = 50_000) -> ClimeResult:
    """Column-wise Dantzig fits of p*S against the identity, symmetrized by the smaller entry."""
    S = as_sym(sign_cov, "sign covariance")
    p = S.shape[0]
    if lam is None:
        if n is None:
            raise InvalidInput("give lambda or the sample size n")
        lam = clime_lambda(n, p, c)
    if lam <= 0:
        raise InvalidInput("lambda must be positive")
    sol = dantzig_solve(DantzigProblem(S, np.eye(p), lam), tol, max_iter)
    return ClimeResult(_symmetrize_min(sol.gamma), sol.gamma, lam, sol.iterations, sol.converged)


@dataclass
class GlassoResult:
    precision: np.ndarray
    covariance: np.ndarray
    objective: list[float] = field(default_factory=list)
    kkt: float = math.inf
    sweeps: int = 0
    converged: bool = False


def glasso_objective(S: np.ndarray, V: np.ndarray, lam: float) -> float:
    sign, logdet = np.linalg.slogdet(V)
    if sign <= 0:
        return math.inf
    off = np.sum(np.abs(V)) - np.sum(np.abs(np.diag(V)))
    return float(np.sum(S * V) - logdet + lam * off)


def glasso_kkt(S: np.ndarray, V: np.ndarray, W: np.ndarray, lam: float) -> float:
    """Largest entrywise violation of the stationarity conditions (W = V^{-1})."""
    R = W - S
    on = V != 0
    viol = np.where(on, np.abs(R - lam * np.sign(V)), np.maximum(np.abs(R) - lam, 0.0))
    np.fill_diagonal(viol, np.abs(np.diag(R)))
    return float(viol.max())


def _lasso_cd(Q: np.ndarray, s: np.ndarray, lam: float, beta: np.ndarray, tol: float, max_iter: int = 10_000) -> np.ndarray:
    """Coordinate descent for  s'b + b'Qb/2 + lam|b|_1, warm started at beta."""
    grad = s + Q @ beta
    d = np.diag(Q)
    for _ in range(max_iter):
        delta = 0.0
        for j in range(beta.shape[0]):
            old = beta[j]
            z = old * d[j] - grad[j]
            new = math.copysign(max(abs(z) - lam, 0.0), z) / d[j]
            if new != old:
                grad += Q[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old) * math.sqrt(d[j]))
        if delta <= tol:
            break
    return beta


def sglasso(sign_cov, lam: float, tol: float = 1e-8, max_sweeps: int = 500) -> GlassoResult:
    """Graphical lasso on p*S with an unpenalized diagonal, by exact column updates of the precision."""
    S = as_sym(sign_cov, "sign covariance")
    if not lam > 0:
        raise InvalidInput("lambda must be positive")
    p = S.shape[0]
    sd = np.diag(S).copy()
    if np.any(sd <= 0):
        raise InvalidInput("diagonal of the input must be positive")
    V = np.diag(1.0 / sd)
    W = np.diag(sd)
    res = GlassoResult(V, W)
    res.objective.append(glasso_objective(S, V, lam))
    res.kkt = glasso_kkt(S, V, W, lam)
    if res.kkt <= tol:
        res.converged = True
        return res
    idx_all = np.arange(p)
    for sweep in range(1, max_sweeps + 1):
        for j in range(p):
            o = idx_all != j
            w22 = W[j, j]
            w12 = W[o, j]
            M = W[np.ix_(o, o)] - np.outer(w12, w12) / w22  # inverse of V[o, o]
            M = 0.5 * (M + M.T)
            beta = _lasso_cd(sd[j] * M, S[o, j], lam, V[o, j].copy(), tol * 1e-2)
            Mb = M @ beta
            V[o, j] = V[j, o] = beta
            V[j, j] = 1.0 / sd[j] + beta @ Mb
            W[np.ix_(o, o)] = M + sd[j] * np.outer(Mb, Mb)
            W[o, j] = W[j, o] = -sd[j] * Mb
            W[j, j] = sd[j]
        f = glasso_objective(S, V, lam)
        prev = res.objective[-1]
        assert f <= prev + 1e-9 * max(1.0, abs(prev)), "objective increased"
        res.objective.append(f)
        W = np.linalg.inv(V)
        W = 0.5 * (W + W.T)
        res.kkt = glasso_kkt(S, V, W, lam)
        res.sweeps = sweep
        if res.kkt <= tol:
            res.converged = True
            break
    if not res.converged:
        warnings.warn(NonConvergence(f"SGLASSO KKT residual {res.kkt:.2e} after {res.sweeps} sweeps"), stacklevel=2)
    res.precision, res.covariance = V, W
    return res


def threshold_support(V, tau: float) -> np.ndarray:
    if tau < 0:
        raise InvalidInput("threshold must be nonnegative")
    V = np.asarray(V, dtype=float)
    P = np.abs(V) > tau
    return P & P.T


@dataclass
class LDAModel:
    gamma: np.ndarray
    midpoint: np.ndarray
    lambda_used: float
    support: np.ndarray
    violation: float = 0.0
    converged: bool = True


def sslda_auto_lambda(gram: np.ndarray, delta: np.ndarray, n: int, c: float = 2.0) -> float:
    p = gram.shape[0]
    ridge = math.sqrt(math.log(p) / n)
    pilot = np.linalg.solve(gram + ridge * np.eye(p), delta)
    return c * math.sqrt(max(float(delta @ pilot), 0.0) * math.log(p) / n)


def sslda_fit(X1, X2, lam: float | str = "auto", c: float = 2.0, tol: float = 1e-8, max_iter: int = 50_000) -> LDAModel:
    X1 = as_data(X1, "first sample")
    X2 = as_data(X2, "second sample")
    n1, n2 = X1.shape[0], X2.shape[0]
    if n1 < 4 or n2 < 4:
        raise InvalidInput("each class needs at least 4 observations")
    if X1.shape[1] != X2.shape[1]:
        raise InvalidInput("classes have different dimensions")
    p = X1.shape[1]
    m1, m2 = spatial_median(X1), spatial_median(X2)
    S = (n1 * sscm(X1, m1).matrix + n2 * sscm(X2, m2).matrix) / (n1 + n2)
    gram = p * 0.5 * (S + S.T)
    delta = m1 - m2
    if isinstance(lam, str):
        if lam != "auto":
            raise InvalidInput("lambda must be a number or 'auto'")
        lam = sslda_auto_lambda(gram, delta, n1 + n2, c)
    try:
        sol = dantzig_solve(DantzigProblem(gram, delta, float(lam)), tol, max_iter)
    except Infeasible as exc:
        raise Infeasible(f"{exc}; try a larger lambda") from exc
    g = sol.gamma
    assert sol.violation <= lam + 1e-8 or not sol.converged
    return LDAModel(g, 0.5 * (m1 + m2), float(lam), np.flatnonzero(g != 0), sol.violation, sol.converged)


def sslda_predict(model: LDAModel, z) -> np.ndarray | int:
    """Class 1 when (z - midpoint)'gamma >= 0, else class 2; rows of a matrix are classified separately."""
    z = np.asarray(z, dtype=float)
    score = (z - model.midpoint) @ model.gamma
    out = np.where(score >= 0, 1, 2)
    return int(out) if out.ndim == 0 else out


def sslda_risk_gaussian(gamma, mu1, mu2, Sigma, midpoint=None) -> float:
    """Conditional misclassification rate of the linear rule under Gaussian classes, equal priors."""
    g = np.asarray(gamma, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    S = as_sym(Sigma, "Sigma")
    mid = 0.5 * (mu1 + mu2) if midpoint is None else np.asarray(midpoint, dtype=float)
    sd = math.sqrt(max(float(g @ S @ g), 0.0))
    if sd == 0.0:
        warnings.warn(DegenerateDirection("zero discriminant direction"), stacklevel=2)
        return 0.5
    a = float((mid - mu1) @ g) / sd
    b = float((mid - mu2) @ g) / sd
    return float(1.0 - 0.5 * ndtr(-a) - 0.5 * ndtr(b))
