"""Exit criteria 1-10, each at its stated tolerance and runtime budget.

One ``PASS``/``FAIL criterion N`` line per criterion is printed in the
terminal summary (see ``conftest.py``).
"""

import time

import pytest

from semimax.suites import DEFAULT_SEED, RUNTIME_BUDGET, run_criterion

pytestmark = pytest.mark.acceptance

SUMMARY: list = []


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    t0 = time.perf_counter()
    checks = run_criterion(number, DEFAULT_SEED)
    elapsed = time.perf_counter() - t0
    failed = [c for c in checks if not c.passed]
    ok = not failed and elapsed <= RUNTIME_BUDGET[number]
    detail = f"{len(checks)} checks, {elapsed:.2f} s of {RUNTIME_BUDGET[number]:g} s"
    if failed:
        detail += "; failing: " + ", ".join(c.name for c in failed)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({detail})"
    SUMMARY.append((number, line))
    print(line)
    for c in checks:
        print("  " + c.line())
    assert checks
    assert not failed, "\n".join(c.line() for c in failed)
    assert elapsed <= RUNTIME_BUDGET[number]
