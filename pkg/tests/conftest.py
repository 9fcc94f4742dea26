from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ellipstat.elliptical import EllipticalSpec, sample_elliptical

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def draw(family: str, n: int, p: int, seed: int, scatter=None, location=None, nu: float = 4.0) -> np.ndarray:
    kw = {"nu": nu} if family == "student" else {}
    if family == "gaussian_scale_mixture":
        kw = {"weights": (0.7, 0.3), "scales": (1.0, 3.0)}
    loc = np.zeros(p) if location is None else location
    S = np.eye(p) if scatter is None else scatter
    return sample_elliptical(EllipticalSpec(family, loc, S, **kw), n, seed)


def random_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
