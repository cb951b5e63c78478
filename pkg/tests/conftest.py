import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from panelfe.data import PanelData  # noqa: E402


def make_panel(N, T, family="logit", seed=0, beta=(1.0, -0.5), K=2, drop=0.0,
               effects=(True, True), scale=1.0):
    """Simulated panel; x1 binary, other covariates normal; ``drop`` removes random cells."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta[:K], dtype=float)
    a = rng.normal(size=N) * scale if effects[0] else np.zeros(N)
    g = rng.normal(size=T) * scale if effects[1] else np.zeros(T)
    X = rng.normal(size=(N, T, K))
    X[..., 0] = rng.random((N, T)) < 0.4
    z = X @ beta + a[:, None] + g[None, :]
    if family == "logit":
        y = (rng.random((N, T)) < 1 / (1 + np.exp(-z))).astype(float)
    else:
        y = (z + rng.normal(size=(N, T)) > 0).astype(float)
    keep = rng.random((N, T)) >= drop
    i, t = np.nonzero(keep)
    return PanelData.from_long(i, t + 1, y[i, t], X[i, t],
                               [f"x{k + 1}" for k in range(K)])


def gap_panel():
    """Two units observed over periods 1..7 with gaps."""
    rows = [(1, 1), (1, 2), (1, 4), (1, 5), (1, 7), (2, 2), (2, 3), (2, 5), (2, 6), (2, 7)]
    unit = [r[0] for r in rows]
    period = [r[1] for r in rows]
    y = [1, 0, 1, 0, 1, 0, 1, 1, 0, 1]
    x = np.linspace(-1, 1, len(rows))
    return PanelData.from_long(unit, period, y, x, ["x"])


@pytest.fixture
def small_panel():
    return make_panel(12, 10, seed=3)


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail=""):
    """Keep a one-line verdict for the terminal summary; ``ok=None`` marks a skip."""
    verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"criterion {label}: {verdict}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
