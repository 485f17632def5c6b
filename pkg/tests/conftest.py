import numpy as np
import pytest

from dgimvcm import make_gaussian_blobs, normalize_views, simulate_missing


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs():
    return make_gaussian_blobs(seed=0)


@pytest.fixture(scope="session")
def small_incomplete():
    full = make_gaussian_blobs(n_samples=12, n_views=2, n_clusters=3, dim=5, seed=3)
    return normalize_views(simulate_missing(full, 0.5, 2))


def rel_err(a, b, floor=1e-12):
    """Relative L2 error; two vectors both below ``floor`` in norm count as equal (0)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale <= floor:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_REPORT = {}


def report_criterion(number, ok, detail, status=None):
    status = status or ("PASS" if ok else "FAIL")
    ACCEPTANCE_REPORT[number] = f"criterion {number:>2}: {status}  {detail}"
    print(ACCEPTANCE_REPORT[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_REPORT):
        terminalreporter.write_line(ACCEPTANCE_REPORT[number])
