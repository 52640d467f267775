"""Shared record of acceptance outcomes, printed at the end of the run by conftest."""

from __future__ import annotations

import time
from contextlib import contextmanager

RESULTS: dict[int, tuple[str, bool, float, str]] = {}


@contextmanager
def criterion(number: int, title: str, budget: float | None = None):
    """Time the block and record PASS only if it exits cleanly within ``budget`` seconds.

    The yielded list collects detail strings for the summary line.
    """
    notes: list[str] = []
    t0 = time.perf_counter()
    ok = False
    try:
        yield notes
        spent = time.perf_counter() - t0
        assert budget is None or spent <= budget, f"took {spent:.1f} s, budget {budget:.0f} s"
        ok = True
    finally:
        RESULTS[number] = (title, ok, time.perf_counter() - t0, "; ".join(notes))


def summary_lines() -> list[str]:
    out = []
    for n in sorted(RESULTS):
        title, ok, secs, detail = RESULTS[n]
        line = f"criterion {n} {'PASS' if ok else 'FAIL'} ({secs:.1f} s) {title}"
        out.append(line + (f": {detail}" if detail else ""))
    return out
