"""Nonparametric tests: Kruskal-Wallis H and Mann-Whitney U.

Both use midrank ties with the standard tie correction; p-values come from
the chi-square approximation (H) and either exact enumeration of the U
distribution (small tie-free samples) or the tie-corrected normal
approximation with continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaincc


class DegenerateDataError(ValueError):
    """All observations identical: rank tests are undefined (tie correction
    divides by zero)."""


class StatTest(Enum):
    KRUSKAL_WALLIS = "kruskal_wallis"
    MANN_WHITNEY_U = "mann_whitney_u"


@dataclass(frozen=True)
class StatResult:
    test: StatTest
    statistic: float
    p_value: float
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0 + 1e-12):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_correction(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    n = len(values)
    return 1.0 - float((counts.astype(float) ** 3 - counts).sum()) / (n ** 3 - n)


def _chi2_sf(x: float, df: int) -> float:
    return float(gammaincc(df / 2.0, x / 2.0))


def kruskal_wallis(groups) -> StatResult:
    """Rank-based H with tie correction; p from chi-square with k-1 df."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    pooled = np.concatenate(groups)
    correction = _tie_correction(pooled)
    if correction == 0.0:
        raise DegenerateDataError("all observations identical")
    ranks = _midranks(pooled)
    n = len(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + len(g)]
        h += r.sum() ** 2 / len(g)
        start += len(g)
    h = (12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)) / correction
    p = _chi2_sf(h, len(groups) - 1)
    return StatResult(StatTest.KRUSKAL_WALLIS, float(h), p,
                      tuple(len(g) for g in groups))


def _u_exact_sf_table(n1: int, n2: int) -> np.ndarray:
    """Counts of interleavings per U value (no ties).

    f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u): the largest remaining value
    is either an x (beating all j y's) or a y (beating none).
    """
    max_u = n1 * n2
    f = np.zeros((n2 + 1, max_u + 1), dtype=np.float64)
    f[:, 0] = 1.0  # zero x's: U is always 0
    for _ in range(n1):
        g = np.zeros_like(f)
        for j in range(n2 + 1):
            if j > 0:
                g[j] = g[j - 1]
            g[j, j:] = g[j, j:] + f[j, :max_u + 1 - j]
        f = g
    return f[n2]


def mann_whitney_u(a, b) -> StatResult:
    """Two-sided Mann-Whitney U for group a.

    Exact p by enumeration of the U distribution when n1*n2 <= 400 and the
    data are tie-free; otherwise the tie-corrected normal approximation with
    continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u_a = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)

    has_ties = len(np.unique(pooled)) != len(pooled)
    if n1 * n2 <= 400 and not has_ties:
        counts = _u_exact_sf_table(n1, n2)
        total = counts.sum()
        u_int = int(round(u_a))
        p_low = counts[:u_int + 1].sum() / total
        p_high = counts[u_int:].sum() / total
        p = min(1.0, 2.0 * min(p_low, p_high))
    else:
        correction = _tie_correction(pooled)
        if correction == 0.0:
            p = 1.0
        else:
            mean = n1 * n2 / 2.0
            sd = math.sqrt(correction * n1 * n2 * (n1 + n2 + 1) / 12.0)
            if sd == 0.0:
                p = 1.0
            else:
                z = (abs(u_a - mean) - 0.5) / sd  # continuity correction
                p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
    return StatResult(StatTest.MANN_WHITNEY_U, u_a, p, (n1, n2))
