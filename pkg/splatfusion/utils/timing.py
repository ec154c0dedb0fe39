"""Stage timers and duration formatting."""

import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Dict, Iterator, Union


class StageTimer:
    """Accumulates wall-clock seconds per named stage."""

    def __init__(self) -> None:
        self._totals: Dict[str, float] = defaultdict(float)
        self._calls: Dict[str, int] = defaultdict(int)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self._totals[name] += time.perf_counter() - start
            self._calls[name] += 1

    def add(self, name: str, seconds: float) -> None:
        self._totals[name] += seconds
        self._calls[name] += 1

    @property
    def totals(self) -> Dict[str, float]:
        return dict(self._totals)

    def calls(self, name: str) -> int:
        return self._calls.get(name, 0)

    @property
    def total(self) -> float:
        return float(sum(self._totals.values()))


def format_duration(seconds: Union[int, float]) -> str:
    """
    Format seconds into a short human-readable duration.

    Examples:
        >>> format_duration(0.0123)
        '12.3ms'
        >>> format_duration(75)
        '1m 15s'
    """
    if seconds < 1:
        return f"{seconds * 1000:.1f}ms"
    if seconds < 60:
        return f"{seconds:.2f}s"
    whole = int(seconds)
    if whole < 3600:
        mins, secs = divmod(whole, 60)
        return f"{mins}m {secs}s" if secs else f"{mins}m"
    hours = whole // 3600
    mins = (whole % 3600) // 60
    return f"{hours}h {mins}m" if mins else f"{hours}h"
