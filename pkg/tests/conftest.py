import numpy as np
import pytest

from hteval.data import TrialDataset


def toy_dataset(n=200, p=3, seed=0, effect=0.0, region=None):
    """Randomized toy trial: logistic outcome with an optional constant log-odds effect."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    t = np.arange(n) % 2
    rng.shuffle(t)
    eta = -0.3 + X[:, 0] * 0.8 + effect * t
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    return TrialDataset(X, t, y, tuple(f"x{j}" for j in range(p)), region=region, source_label="toy")


@pytest.fixture
def toy():
    return toy_dataset()


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
