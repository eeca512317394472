import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fdaudit.panel import PanelDataset

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_panel(Y, D, Z=None, weight=None, cluster=None, periods=None):
    """Long panel from (units, periods) arrays."""
    Y = np.asarray(Y, dtype=float)
    D = np.asarray(D, dtype=float)
    G, T = Y.shape
    periods = np.arange(T) if periods is None else np.asarray(periods)
    return PanelDataset.from_arrays(
        unit=np.repeat(np.arange(G), T),
        period=np.tile(periods, G),
        y=Y.ravel(),
        d=D.ravel(),
        z=None if Z is None else np.asarray(Z, dtype=float).ravel(),
        weight=None if weight is None else np.repeat(weight, T),
        cluster=None if cluster is None else np.repeat(cluster, T),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: str, passed, detail: str) -> None:
    """Store one acceptance outcome; ``passed`` is True, False or None (skipped)."""
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        passed, detail = ACCEPTANCE[key]
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"criterion {key:<5} {status:<5} {detail}")
