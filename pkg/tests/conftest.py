import numpy as np
import pytest


def random_spd(rng, d, jitter=0.3):
    A = rng.normal(size=(d, d))
    return A @ A.T + jitter * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sun(rng, d, p=1):
    from metacond.elliptical import SunParams
    S = random_spd(rng, p + d, 0.5)
    s = np.sqrt(np.diag(S))
    R = S / np.outer(s, s)
    return SunParams(rng.normal(size=d), rng.normal(scale=0.5, size=p),
                     rng.uniform(0.5, 2.0, d), R)


def sun_conditional_ks(p, x2, rng, h=0.05, n_min=10_000):
    """KS p-value of a windowed rejection draw of X1 | X2 ~ x2 against sun_condition."""
    from scipy.stats import ks_2samp
    from metacond.elliptical import sun_condition, sun_sample
    from metacond.gaussian import IndexSplit
    kept = []
    total = 0
    while total < n_min:
        Y = sun_sample(p, 400_000, rng)
        sel = Y[np.abs(Y[:, 1] - x2) < h, 0]
        kept.append(sel)
        total += sel.size
    ref = np.concatenate(kept)
    c = sun_condition(p, IndexSplit((0,), (1,)), [x2])
    model = sun_sample(c, ref.size, rng)[:, 0]
    return ks_2samp(ref, model).pvalue, ref.size


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
