"""Command-line harness: CSV ingestion, tests, estimators, Monte Carlo simulation, reports."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import estimators as est
from . import location_tests as lt
from . import matrix_tests as mt
from . import pca_cca, sparse_opt
from .core import TestResult, band
from .elliptical import FAMILIES, EllipticalSpec, sample_elliptical
from .errors import EllipstatError, InvalidInput

EXIT_OK, EXIT_USAGE, EXIT_STAT = 0, 2, 3


class UsageError(Exception):
    """Bad arguments, unreadable input, or an invalid config (exit code 2)."""


# ---------------------------------------------------------------- registries


@dataclass(frozen=True)
class TestEntry:
    func: Callable[..., TestResult]
    samples: int
    options: dict[str, type] = field(default_factory=dict)


TESTS: dict[str, TestEntry] = {
    "one_sample_sign": TestEntry(lt.one_sample_sign_test, 1, {"exact_leave_out": bool}),
    "inst": TestEntry(lt.inst_test, 1, {"exact_leave_out": bool}),
    "max_sign": TestEntry(lt.max_sign_test, 1),
    "maxsum": TestEntry(lt.maxsum_test, 1, {"m": float}),
    "sphericity_sign": TestEntry(mt.sphericity_sign_test, 1),
    "sphericity_spearman": TestEntry(mt.sphericity_rank_spearman, 1),
    "sphericity_kendall": TestEntry(mt.sphericity_rank_kendall, 1),
    "sphericity_max": TestEntry(mt.sphericity_max_test, 1),
    "sphericity_adaptive": TestEntry(mt.sphericity_adaptive, 1),
    "cq_two_sample": TestEntry(lt.cq_two_sample, 2),
    "sst_two_sample": TestEntry(lt.sst_two_sample, 2),
    "rank_two_sample": TestEntry(lt.rank_two_sample, 2, {"exact": bool}),
    "proportionality": TestEntry(mt.proportionality_test, 2),
    "sscm_equality": TestEntry(mt.sscm_equality_test, 2),
}


def _coerce(name: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lstrip("-").isdigit():
            return int(value)
    elif kind is str and isinstance(value, str):
        return value
    raise UsageError(f"option {name!r} expects {kind.__name__}, got {value!r}")


def _check_options(allowed: dict[str, type], given: dict[str, Any], where: str) -> dict[str, Any]:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise UsageError(f"{where}: unknown option(s) {unknown}; allowed {sorted(allowed)}")
    return {k: _coerce(k, v, allowed[k]) for k, v in given.items()}


def run_test(name: str, X1: np.ndarray, X2: np.ndarray | None = None, options: dict | None = None) -> TestResult:
    if name not in TESTS:
        raise UsageError(f"unknown test {name!r}; available: {', '.join(sorted(TESTS))}")
    entry = TESTS[name]
    opts = _check_options(entry.options, options or {}, name)
    if entry.samples == 2:
        if X2 is None:
            raise UsageError(f"{name} needs a second sample")
        return entry.func(X1, X2, **opts)
    if X2 is not None:
        raise UsageError(f"{name} is a one-sample test")
    return entry.func(X1, **opts)


def _est_spatial_median(X, X2, o):
    return {"theta": est.spatial_median(X)}, {}


def _est_location_scale(X, X2, o):
    ls = est.weighted_spatial_median(X, o.get("m", 0.0))
    return {"theta": ls.theta, "diag_scale": ls.diag_scale}, {
        "iterations": ls.iterations, "residual": ls.residual, "converged": ls.converged}


def _est_sscm(X, X2, o):
    s = est.sscm(X)
    return {"sscm": s.matrix, "center": s.center_used}, {"trace": float(np.trace(s.matrix))}


def _est_gsscm(X, X2, o):
    M = est.gsscm(X, family=o.get("family", "winsor"))
    return {"gsscm": M}, {"trace": float(np.trace(M))}


def _est_kendall(X, X2, o):
    K = est.kendall_tau_matrix(X).matrix
    return {"kendall": K}, {"trace": float(np.trace(K))}


def _shape_out(s):
    return {"shape": s.shape}, {"iterations": s.iterations, "residual": s.residual, "converged": s.converged,
                                "trace": float(np.trace(s.shape))}


def _est_tyler(X, X2, o):
    return _shape_out(est.tyler(X))


def _est_hr(X, X2, o):
    h = est.hr_estimator(X)
    out, diag = _shape_out(h.shape)
    out["location"] = h.location
    return out, diag


def _est_trace(X, X2, o):
    return {"trace": np.array([est.trace_estimator(X)])}, {}


def _est_spca(X, X2, o):
    s = pca_cca.spca_subspace(X, o.get("r", 1))
    return {"basis": s.basis, "eigenvalues": s.eigenvalues}, {"gap_degenerate": s.gap_degenerate}


def _est_sspca(X, X2, o):
    d = pca_cca.sspca_leading(X, o.get("s", 1))
    return {"vector": d.vector}, {"objective": d.objective, "iterations": d.iterations, "converged": d.converged}


def _est_factor(X, X2, o):
    k = pca_cca.factor_number_eigenratio(X, o.get("kmax", min(10, X.shape[1] - 1)), o.get("source", "sscm"))
    return {"k": np.array([k])}, {}


def _est_sclime(X, X2, o):
    r = sparse_opt.sclime(sparse_opt.sign_cov_scaled(X), o.get("lam"), n=X.shape[0], c=o.get("c", 2.0))
    return {"precision": r.matrix}, {"lambda": r.lam, "iterations": r.iterations, "converged": r.converged}


def _est_sglasso(X, X2, o):
    if "lam" not in o:
        raise UsageError("sglasso needs lam=<value>")
    r = sparse_opt.sglasso(sparse_opt.sign_cov_scaled(X), o["lam"])
    return {"precision": r.precision}, {"kkt": r.kkt, "sweeps": r.sweeps, "converged": r.converged}


def _est_sslda(X, X2, o):
    if X2 is None:
        raise UsageError("sslda needs a second sample")
    m = sparse_opt.sslda_fit(X, X2, o.get("lam", "auto"), c=o.get("c", 2.0))
    return {"gamma": m.gamma, "midpoint": m.midpoint}, {"lambda": m.lambda_used, "violation": m.violation,
                                                        "converged": m.converged}


ESTIMATORS: dict[str, tuple[Callable, dict[str, type]]] = {
    "spatial_median": (_est_spatial_median, {}),
    "scaled_spatial_median": (_est_location_scale, {}),
    "weighted_spatial_median": (_est_location_scale, {"m": float}),
    "sscm": (_est_sscm, {}),
    "gsscm": (_est_gsscm, {"family": str}),
    "kendall": (_est_kendall, {}),
    "tyler": (_est_tyler, {}),
    "hr": (_est_hr, {}),
    "trace": (_est_trace, {}),
    "spca": (_est_spca, {"r": int}),
    "sspca": (_est_sspca, {"s": int}),
    "factor_number": (_est_factor, {"kmax": int, "source": str}),
    "sclime": (_est_sclime, {"lam": float, "c": float}),
    "sglasso": (_est_sglasso, {"lam": float}),
    "sslda": (_est_sslda, {"lam": float, "c": float}),
}


# ---------------------------------------------------------------- data io


def read_csv_matrix(path: str | os.PathLike) -> np.ndarray:
    """Comma-separated numbers; one optional header row; no missing or non-finite values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise UsageError(f"{path}: no data rows")

    def parse(row, lineno):
        vals = []
        for c in row:
            c = c.strip()
            if c == "":
                raise UsageError(f"{path}:{lineno}: missing value")
            vals.append(float(c))
        return vals

    try:
        parse(rows[0], 1)
        start = 0
    except ValueError:
        start = 1
    data = []
    for i, row in enumerate(rows[start:], start=start + 1):
        try:
            data.append(parse(row, i))
        except ValueError as exc:
            raise UsageError(f"{path}:{i}: not a number ({exc})") from exc
    if not data:
        raise UsageError(f"{path}: header but no data rows")
    width = {len(r) for r in data}
    if len(width) != 1:
        raise UsageError(f"{path}: rows have differing lengths {sorted(width)}")
    X = np.array(data, dtype=float)
    if not np.all(np.isfinite(X)):
        raise UsageError(f"{path}: non-finite values")
    return X


def _fmt(x: float) -> str:
    return repr(float(x))


def write_matrix_csv(M: np.ndarray) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in M)


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


# ---------------------------------------------------------------- scenarios


def build_sigma(desc: dict[str, Any], p: int) -> np.ndarray:
    kind = desc.get("type")
    rho = float(desc.get("rho", 0.0))
    idx = np.arange(p)
    if kind == "identity":
        S = np.eye(p)
    elif kind in ("ar1", "banded"):
        if not abs(rho) < 1:
            raise InvalidInput("ar1 needs |rho| < 1")
        S = rho ** np.abs(idx[:, None] - idx[None, :])
        if kind == "banded":
            k = int(desc.get("k", 1))
            if k < 0:
                raise InvalidInput("bandwidth must be nonnegative")
            S = band(S, k)
    elif kind == "compound":
        if not -1.0 / max(p - 1, 1) < rho < 1:
            raise InvalidInput("compound symmetry needs -1/(p-1) < rho < 1")
        S = (1 - rho) * np.eye(p) + rho * np.ones((p, p))
    elif kind == "spiked":
        K = int(desc.get("K", 1))
        s = float(desc.get("strength", 1.0))
        if not 1 <= K <= p or s < 0:
            raise InvalidInput("spiked needs 1 <= K <= p and strength >= 0")
        V = np.zeros((p, K))
        for j in range(K):
            # fixed orthonormal directions: disjoint blocks of equal entries
            blk = np.arange(j, p, K)
            V[blk, j] = 1.0 / math.sqrt(blk.size)
        S = np.eye(p) + s * V @ V.T
    else:
        raise InvalidInput(f"unknown sigma structure {kind!r}")
    if np.linalg.eigvalsh(S)[0] <= 1e-12:
        raise InvalidInput(f"{kind} structure is not positive definite for these parameters")
    return S


_TOP_KEYS = {"distribution", "n", "n1", "n2", "p", "sigma_structure", "signal", "tests", "reps", "alpha", "seed", "threads"}
_DIST_KEYS = {"family", "nu", "weights", "scales"}
_SIGMA_KEYS = {"type", "rho", "k", "K", "strength"}
_SIGNAL_KEYS = {"type", "delta", "sparsity", "factor"}
_SIGNAL_TYPES = ("location_shift", "scatter_scale", "shape_spike")


@dataclass(frozen=True)
class ScenarioConfig:
    distribution: dict[str, Any]
    p: int
    sigma_structure: dict[str, Any]
    tests: tuple[tuple[str, tuple[tuple[str, Any], ...]], ...]
    reps: int
    alpha: float = 0.05
    seed: int = 0
    threads: int = 1
    n: int | None = None
    n1: int | None = None
    n2: int | None = None
    signal: dict[str, Any] | None = None

    def sizes(self) -> tuple[int, int]:
        return (self.n1 if self.n1 is not None else self.n), (self.n2 if self.n2 is not None else self.n)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("threads")
        blob = json.dumps(_jsonable(d), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise UsageError(f"config field {where}: {msg}")


def _int(v, where, lo=None):
    _require(isinstance(v, int) and not isinstance(v, bool), where, "must be an integer")
    if lo is not None:
        _require(v >= lo, where, f"must be >= {lo}")
    return v


def _strict(d: Any, allowed: set[str], where: str) -> dict:
    _require(isinstance(d, dict), where, "must be an object")
    extra = sorted(set(d) - allowed)
    _require(not extra, where, f"unknown key(s) {extra}")
    return d


def parse_config(obj: Any) -> ScenarioConfig:
    d = _strict(obj, _TOP_KEYS, "<root>")
    for key in ("distribution", "p", "sigma_structure", "tests", "reps"):
        _require(key in d, key, "is required")
    dist = _strict(d["distribution"], _DIST_KEYS, "distribution")
    _require(dist.get("family") in FAMILIES, "distribution.family", f"must be one of {list(FAMILIES)}")
    p = _int(d["p"], "p", 1)
    sig = _strict(d["sigma_structure"], _SIGMA_KEYS, "sigma_structure")
    try:
        build_sigma(sig, p)
    except InvalidInput as exc:
        raise UsageError(f"config field sigma_structure: {exc}") from exc
    try:
        EllipticalSpec(dist["family"], np.zeros(p), np.eye(p), dist.get("nu"), tuple(dist.get("weights", ())),
                       tuple(dist.get("scales", ())))
    except (InvalidInput, TypeError) as exc:
        raise UsageError(f"config field distribution: {exc}") from exc
    n = _int(d["n"], "n", 2) if "n" in d else None
    n1 = _int(d["n1"], "n1", 2) if "n1" in d else None
    n2 = _int(d["n2"], "n2", 2) if "n2" in d else None
    tests_raw = d["tests"]
    _require(isinstance(tests_raw, list) and tests_raw, "tests", "must be a non-empty list")
    tests = []
    for i, t in enumerate(tests_raw):
        where = f"tests[{i}]"
        if isinstance(t, str):
            t = {"name": t}
        t = _strict(t, {"name", "options"}, where)
        name = t.get("name")
        _require(name in TESTS, f"{where}.name", f"unknown test {name!r}; available: {', '.join(sorted(TESTS))}")
        try:
            opts = _check_options(TESTS[name].options, t.get("options", {}) or {}, where)
        except UsageError as exc:
            raise UsageError(f"config field {where}.options: {exc}") from exc
        if TESTS[name].samples == 1:
            _require(n is not None or n1 is not None, "n", f"one-sample test {name} needs n")
        else:
            _require(n is not None or (n1 is not None and n2 is not None), "n1/n2", f"two-sample test {name} needs n or n1 and n2")
        tests.append((name, tuple(sorted(opts.items()))))
    reps = _int(d["reps"], "reps", 1)
    alpha = d.get("alpha", 0.05)
    _require(isinstance(alpha, (int, float)) and not isinstance(alpha, bool) and 0 < alpha < 1, "alpha", "must lie in (0, 1)")
    seed = _int(d.get("seed", 0), "seed", 0)
    threads = _int(d.get("threads", 1), "threads", 1)
    signal = None
    if d.get("signal") is not None:
        signal = dict(_strict(d["signal"], _SIGNAL_KEYS, "signal"))
        _require(signal.get("type") in _SIGNAL_TYPES, "signal.type", f"must be one of {list(_SIGNAL_TYPES)}")
        if signal["type"] == "location_shift":
            _require(isinstance(signal.get("delta"), (int, float)), "signal.delta", "must be a number")
            s = _int(signal.get("sparsity", p), "signal.sparsity", 1)
            _require(s <= p, "signal.sparsity", "must be <= p")
        else:
            f = signal.get("factor")
            _require(isinstance(f, (int, float)) and f > 0, "signal.factor", "must be a positive number")
    return ScenarioConfig(dict(dist), p, dict(sig), tuple(tests), reps, float(alpha), seed, threads, n, n1, n2, signal)


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(obj)


def replication_seed(seed: int, rep: int, sample: int) -> int:
    """Counter-based child seed of the master seed for (replication, sample)."""
    return int(np.random.SeedSequence([seed, rep, sample]).generate_state(1, np.uint64)[0])


def _specs(cfg: ScenarioConfig) -> tuple[EllipticalSpec, EllipticalSpec]:
    p = cfg.p
    S = build_sigma(cfg.sigma_structure, p)
    dist = cfg.distribution
    kw = dict(nu=dist.get("nu"), weights=tuple(dist.get("weights", ())), scales=tuple(dist.get("scales", ())))
    loc1 = np.zeros(p)
    loc2 = np.zeros(p)
    S2 = S.copy()
    sig = cfg.signal
    if sig is not None:
        if sig["type"] == "location_shift":
            s = int(sig.get("sparsity", p))
            loc2[:s] += float(sig["delta"])
        elif sig["type"] == "scatter_scale":
            S2 = S2 * float(sig["factor"])
        else:
            S2[0, 0] *= float(sig["factor"])
    return EllipticalSpec(dist["family"], loc1, S, **kw), EllipticalSpec(dist["family"], loc2, S2, **kw)


def draw_replication(cfg: ScenarioConfig, rep: int) -> tuple[np.ndarray, np.ndarray]:
    """Data of one replication. One-sample tests use the second spec (where signals live)."""
    spec1, spec2 = _specs(cfg)
    n1, n2 = cfg.sizes()
    one_sample = any(TESTS[name].samples == 1 for name, _ in cfg.tests)
    two_sample = any(TESTS[name].samples == 2 for name, _ in cfg.tests)
    X1 = sample_elliptical(spec1, n1, replication_seed(cfg.seed, rep, 0)) if two_sample else None
    X2 = sample_elliptical(spec2, n2 if two_sample else (cfg.n if cfg.n is not None else n1),
                           replication_seed(cfg.seed, rep, 1)) if (one_sample or two_sample) else None
    return X1, X2


def _one_replication(args: tuple[ScenarioConfig, int]) -> list[tuple[float, float] | str]:
    cfg, rep = args
    X1, X2 = draw_replication(cfg, rep)
    out: list[tuple[float, float] | str] = []
    for name, opts in cfg.tests:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if TESTS[name].samples == 1:
                    res = run_test(name, X2, None, dict(opts))
                else:
                    res = run_test(name, X1, X2, dict(opts))
            out.append((float(res.statistic), float(res.pvalue)))
        except (EllipstatError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


@dataclass
class ResultRow:
    test: str
    scenario: str
    rejection_rate: float
    se: float
    mean_statistic: float
    reps_completed: int
    failures: int
    wall_time: float = 0.0

    def record(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("wall_time")  # kept out of results.* so they are reproducible byte for byte
        return d


RESULT_FIELDS = ("test", "scenario", "rejection_rate", "se", "mean_statistic", "reps_completed", "failures")


def simulate(cfg: ScenarioConfig, threads: int | None = None) -> tuple[list[ResultRow], list[dict[str, Any]]]:
    workers = threads or cfg.threads
    jobs = [(cfg, r) for r in range(cfg.reps)]
    t0 = time.perf_counter()
    if workers <= 1:
        per_rep = [_one_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_one_replication, jobs, chunksize=max(1, cfg.reps // (4 * workers))))
    elapsed = time.perf_counter() - t0
    rows = []
    failures_log = []
    digest = cfg.digest()
    for k, (name, _) in enumerate(cfg.tests):
        vals = [rep[k] for rep in per_rep]
        ok = [v for v in vals if not isinstance(v, str)]
        for r, v in enumerate(vals):
            if isinstance(v, str):
                failures_log.append({"test": name, "rep": r, "error": v})
        if ok:
            rej = float(np.mean([pv <= cfg.alpha for _, pv in ok]))
            se = math.sqrt(rej * (1 - rej) / len(ok))
            mean_stat = float(np.mean([s for s, _ in ok]))
        else:
            rej = se = mean_stat = float("nan")
        rows.append(ResultRow(name, digest, rej, se, mean_stat, len(ok), len(vals) - len(ok), elapsed))
    return rows, failures_log


def write_results(rows: list[ResultRow], failures: list[dict], cfg: ScenarioConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        rec = r.record()
        w.writerow([_fmt(rec[f]) if isinstance(rec[f], float) else rec[f] for f in RESULT_FIELDS])
    (out / "results.csv").write_text(buf.getvalue())
    payload = {"scenario": cfg.digest(), "config": _jsonable(asdict(cfg) | {"threads": None}),
               "rows": [_jsonable(r.record()) for r in rows], "failures": failures}
    (out / "results.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    timing = {"wall_time": rows[0].wall_time if rows else 0.0, "threads": cfg.threads}
    (out / "timing.json").write_text(json.dumps(timing) + "\n")


def render_report(payload: dict[str, Any]) -> str:
    cfg = payload.get("config", {})
    lines = [f"# Simulation {payload.get('scenario', '?')}", ""]
    n_desc = cfg.get("n") if cfg.get("n") is not None else f"{cfg.get('n1')}/{cfg.get('n2')}"
    lines.append(f"- distribution: {json.dumps(cfg.get('distribution'), sort_keys=True)}")
    lines.append(f"- n = {n_desc}, p = {cfg.get('p')}, reps = {cfg.get('reps')}, alpha = {cfg.get('alpha')}")
    lines.append(f"- sigma: {json.dumps(cfg.get('sigma_structure'), sort_keys=True)}")
    if cfg.get("signal"):
        lines.append(f"- signal: {json.dumps(cfg.get('signal'), sort_keys=True)}")
    lines += ["", "| test | rejection rate | se | mean statistic | completed | failed |", "|---|---|---|---|---|---|"]
    for r in payload.get("rows", []):
        def f(v):
            return "nan" if v is None else f"{v:.4f}"
        lines.append(f"| {r['test']} | {f(r['rejection_rate'])} | {f(r['se'])} | {f(r['mean_statistic'])} | "
                     f"{r['reps_completed']} | {r['failures']} |")
    if payload.get("failures"):
        lines += ["", f"{len(payload['failures'])} replication(s) failed; see results.json."]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def _parse_kv(items: list[str] | None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"option {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_test(args) -> int:
    if args.method not in TESTS:
        raise UsageError(f"unknown test {args.method!r}; available: {', '.join(sorted(TESTS))}")
    X1 = read_csv_matrix(args.data[0])
    X2 = read_csv_matrix(args.data2) if args.data2 else (read_csv_matrix(args.data[1]) if len(args.data) > 1 else None)
    opts = _parse_kv(args.options)
    entry = TESTS[args.method]
    used = _check_options(entry.options, opts, args.method)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_test(args.method, X1, X2, used)
    payload = {"name": res.name, "statistic": res.statistic, "pvalue": res.pvalue,
               "nuisance": res.nuisance, "options_used": used}
    print(json.dumps(_jsonable(payload), sort_keys=True))
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.method not in ESTIMATORS:
        raise UsageError(f"unknown estimator {args.method!r}; available: {', '.join(sorted(ESTIMATORS))}")
    func, allowed = ESTIMATORS[args.method]
    X = read_csv_matrix(args.data)
    X2 = read_csv_matrix(args.data2) if args.data2 else None
    opts = _check_options(allowed, _parse_kv(args.options), args.method)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        outputs, diag = func(X, X2, opts)
    diag = dict(diag)
    diag["method"] = args.method
    diag["options_used"] = opts
    diag["warnings"] = [f"{w.category.__name__}: {w.message}" for w in caught]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for key, val in outputs.items():
            (out / f"{key}.csv").write_text(write_matrix_csv(np.atleast_2d(val)))
        (out / f"{args.method}.json").write_text(json.dumps(_jsonable(diag), sort_keys=True, indent=2) + "\n")
    else:
        for key, val in outputs.items():
            sys.stdout.write(f"# {key}\n")
            sys.stdout.write(write_matrix_csv(np.atleast_2d(val)))
        sys.stderr.write(json.dumps(_jsonable(diag), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    env = os.environ.get("ELLIPSTAT_THREADS")
    threads = cfg.threads
    if env:
        try:
            threads = int(env)
        except ValueError as exc:
            raise UsageError("ELLIPSTAT_THREADS must be an integer") from exc
        if threads < 1:
            raise UsageError("ELLIPSTAT_THREADS must be >= 1")
    rows, failures = simulate(cfg, threads)
    write_results(rows, failures, cfg, Path(args.out))
    sys.stdout.write((Path(args.out) / "results.csv").read_text())
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.input) / "results.json"
    try:
        payload = json.loads(src.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {src}: {exc}") from exc
    text = render_report(payload)
    (Path(args.input) / "report.md").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ellipstat", description="Robust high-dimensional tests and estimators.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", help="run a Monte Carlo scenario from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    t = sub.add_parser("test", help="run a test on CSV data")
    t.add_argument("--data", required=True, action="append", help="CSV file; repeat for a second sample")
    t.add_argument("--data2")
    t.add_argument("--method", required=True)
    t.add_argument("--options", nargs="*", metavar="KEY=VALUE")
    e = sub.add_parser("estimate", help="run an estimator on CSV data")
    e.add_argument("--data", required=True)
    e.add_argument("--data2")
    e.add_argument("--method", required=True)
    e.add_argument("--options", nargs="*", metavar="KEY=VALUE")
    e.add_argument("--out")
    r = sub.add_parser("report", help="write a Markdown summary of a simulate output directory")
    r.add_argument("--in", dest="input", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        handler = {"simulate": cmd_simulate, "test": cmd_test, "estimate": cmd_estimate, "report": cmd_report}[args.verb]
        return handler(args)
    except UsageError as exc:
        sys.stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return EXIT_USAGE
    except EllipstatError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "type": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_STAT


if __name__ == "__main__":
    sys.exit(main())
