"""Unicode strips for cost histories and error profiles in the terminal."""

from typing import Optional, Sequence

_BLOCKS = [" ", "▁", "▂", "▃", "▄", "▅", "▆", "▇", "█"]


def sparkline(
    data: Sequence[float],
    min_val: Optional[float] = None,
    max_val: Optional[float] = None,
) -> str:
    """
    Generate a one-line sparkline; non-finite values render as '·'.

    Args:
        data: Numeric values
        min_val: Minimum value for scaling. If None, uses min(data)
        max_val: Maximum value for scaling. If None, uses max(data)

    Examples:
        >>> sparkline([1, 2, 3, 4, 5])
        '▁▃▅▆█'
        >>> sparkline([5, 4, 3, 2, 1])
        '█▆▅▃▁'
    """
    values = [float(v) for v in data]
    if not values:
        return ""
    finite = [v for v in values if v == v and abs(v) != float("inf")]
    if not finite:
        return "·" * len(values)

    lo = min_val if min_val is not None else min(finite)
    hi = max_val if max_val is not None else max(finite)
    if hi == lo:
        return "".join("▄" if v in finite else "·" for v in values)

    out = []
    for v in values:
        if v != v or abs(v) == float("inf"):
            out.append("·")
            continue
        level = int(round((v - lo) / (hi - lo) * 7)) + 1
        out.append(_BLOCKS[min(max(level, 1), 8)])
    return "".join(out)


def horizontal_bar(
    value: float,
    max_value: float,
    width: int = 20,
    filled: str = "█",
    empty: str = "░",
) -> str:
    """
    Generate horizontal bar chart.

    Examples:
        >>> horizontal_bar(50, 100, width=10)
        '█████░░░░░'
    """
    if max_value <= 0:
        return empty * width
    filled_width = min(max(int((value / max_value) * width), 0), width)
    return filled * filled_width + empty * (width - filled_width)
