"""Run-time tallies of normalisation invariants.

Hot paths call :func:`check` with a name and a boolean; nothing is raised,
the counters are inspected afterwards (tests, acceptance runs, summaries).
"""

from __future__ import annotations

from collections import defaultdict

_counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])


def check(name: str, ok: bool) -> bool:
    c = _counts[name]
    c[0] += 1
    if not ok:
        c[1] += 1
    return ok


def snapshot() -> dict[str, tuple[int, int]]:
    """``{name: (checked, violated)}``."""
    return {k: (v[0], v[1]) for k, v in _counts.items()}


def reset() -> None:
    _counts.clear()
