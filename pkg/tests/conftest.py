from __future__ import annotations

import contextlib
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mnemos.twentyq_env import load_corpus  # noqa: E402

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """``with criterion(n, "title") as note:`` records one PASS/FAIL line for acceptance criterion n."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    @contextlib.contextmanager
    def record(number: int, title: str):
        details: list[str] = []
        start = time.perf_counter()
        passed = False
        try:
            yield details.append
            passed = True
        finally:
            elapsed = time.perf_counter() - start
            detail = "; ".join(details + [f"{elapsed:.1f}s"])
            line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
            results[number] = line
            print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
