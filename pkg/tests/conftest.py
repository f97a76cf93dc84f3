import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gscr.config import load_case  # noqa: E402


@pytest.fixture(scope="session")
def case():
    return load_case()


@pytest.fixture(scope="session")
def case_red(case):
    return case.red


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable(rng, n, m=2, p=2, shift=0.1):
    """Dense random state-space matrices with every pole left of ``-shift``."""
    a = rng.standard_normal((n, n))
    a -= (np.max(np.linalg.eigvals(a).real) + shift + rng.uniform(0, 1)) * np.eye(n)
    return a, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))


# -- acceptance report -------------------------------------------------------------------

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one outcome; a criterion passes only if every recorded part passes."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[num]
        ok = all(p for p, _ in parts)
        tr.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  "
                      + "; ".join(d for _, d in parts))
