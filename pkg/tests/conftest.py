import numpy as np
import pytest


def commuting_pair(seed=0, n=2, lo=0.2, hi=0.8, lo2=None, hi2=None):
    """Seed matrix and a quadratic polynomial in it, both with eigenvalues in a window."""
    from mofrac.verify import commuting_partner, random_order

    rng = np.random.default_rng(seed)
    M = random_order(rng, n, lo, hi)
    N = commuting_partner(rng, M, lo if lo2 is None else lo2, hi if hi2 is None else hi2)
    return M, N


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[str, list] = {}


@pytest.fixture
def criterion():
    """Record ``(name, passed, detail)`` parts of an acceptance criterion."""

    def record(key, passed, detail):
        _ACCEPTANCE.setdefault(key, []).append((bool(passed), detail))
        print(f"[{key}] {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        parts = _ACCEPTANCE[key]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} ({detail})")
