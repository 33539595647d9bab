import numpy as np
import pytest


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function at each row of x."""
    x = np.atleast_2d(x)
    out = np.empty_like(x)
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = h
        out[:, i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return out


def fd_jac(f, x, h=1e-5):
    """Central-difference Jacobian of a vector function at each row of x: (n, d, d)."""
    x = np.atleast_2d(x)
    n, d = x.shape
    out = np.empty((n, d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out[:, :, i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance results, one entry per check; printed per criterion after the run.
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        ok = sum(p for p, _ in checks)
        status = "PASS" if ok == len(checks) else "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status} ({ok}/{len(checks)} checks)")
        for p, detail in checks:
            terminalreporter.write_line(f"    {'ok  ' if p else 'FAIL'} {detail}")
