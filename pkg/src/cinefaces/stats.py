"""Nonparametric statistics kernel.

Pure-Python implementations of the four procedures the analysis layer
relies on: fractional ranks, Spearman rank correlation, Mann-Whitney U,
and the chi-square independence test, plus exact and sketched quantiles.
No third-party numerics; everything here is deliberately self-contained
so results are reproducible bit-for-bit across environments.
"""

from __future__ import annotations

import bisect
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

# Largest |a|*|b| for which the exact Mann-Whitney permutation
# distribution is computed; beyond it the normal approximation is used.
EXACT_MW_LIMIT = 400


class DegenerateInput(ValueError):
    """Input admits no meaningful statistic (zero variance, zero marginal)."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "exact" | "normal_approx" | "chi_square"
    df: Optional[int] = None

    def as_dict(self) -> dict:
        d = {"statistic": self.statistic, "p_value": self.p_value, "method": self.method}
        if self.df is not None:
            d["df"] = self.df
        return d


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; ties receive the mean of the rank span they cover."""
    if not values:
        raise ValueError("average_ranks: empty input")
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((v - mx) ** 2 for v in x)
    syy = sum((v - my) ** 2 for v in y)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of the fractional ranks."""
    if len(x) != len(y):
        raise ValueError(f"spearman: length mismatch {len(x)} != {len(y)}")
    if len(x) < 2:
        raise ValueError("spearman: need at least 2 observations")
    return _pearson(average_ranks(x), average_ranks(y))


def _norm_sf(z: float) -> float:
    """Survival function of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _mw_u2(a: Sequence[float], b: Sequence[float]) -> int:
    """Twice the U statistic for sample ``a`` (integer; ties count 1)."""
    u2 = 0
    for x in a:
        for y in b:
            if x > y:
                u2 += 2
            elif x == y:
                u2 += 1
    return u2


def _mw_exact_distribution(pooled: Sequence[float], n_a: int) -> dict[int, int]:
    """Permutation distribution of 2*U_a over all |a|-subsets of the pool.

    Computed group-by-group over the tied value groups in ascending order,
    so it is exactly the full-enumeration distribution without enumerating
    the C(N, n_a) subsets one by one.
    """
    groups = [len(list(g)) for _, g in itertools.groupby(sorted(pooled))]
    n = len(pooled)
    n_b = n - n_a
    states: dict[int, dict[int, int]] = {0: {0: 1}}
    done = 0
    for m in groups:
        nxt: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
        for a_taken, dist in states.items():
            b_taken = done - a_taken
            for j in range(0, min(m, n_a - a_taken) + 1):
                if b_taken + (m - j) > n_b:
                    continue
                ways = math.comb(m, j)
                # j new a-members beat every earlier (smaller) b-member
                # and tie with the m-j same-valued b-members.
                du2 = 2 * j * b_taken + j * (m - j)
                bucket = nxt[a_taken + j]
                for u2, cnt in dist.items():
                    bucket[u2 + du2] += cnt * ways
        done += m
        states = {k: dict(v) for k, v in nxt.items()}
    return states[n_a]


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = "auto") -> TestResult:
    """Two-sided Mann-Whitney U test; U is for sample ``a``.

    U counts pairs (x, y) with x from ``a`` and y from ``b`` where x > y,
    plus half for each tie. The p-value is exact (full permutation
    distribution, deviation-from-center two-sided rule) whenever
    |a|*|b| <= EXACT_MW_LIMIT, otherwise a normal approximation with tie
    and continuity corrections. ``method`` forces one branch.
    """
    if not a or not b:
        raise ValueError("mann_whitney_u: both samples must be non-empty")
    if method not in ("auto", "exact", "normal_approx"):
        raise ValueError(f"mann_whitney_u: unknown method {method!r}")
    n_a, n_b = len(a), len(b)
    u2_obs = _mw_u2(a, b)
    u_obs = u2_obs / 2.0

    if method == "exact" or (method == "auto" and n_a * n_b <= EXACT_MW_LIMIT):
        dist = _mw_exact_distribution(list(a) + list(b), n_a)
        total = sum(dist.values())
        center2 = n_a * n_b  # 2 * E[U]
        dev = abs(u2_obs - center2)
        tail = sum(c for u2, c in dist.items() if abs(u2 - center2) >= dev)
        return TestResult(statistic=u_obs, p_value=min(1.0, tail / total), method="exact")

    n = n_a + n_b
    ranks = average_ranks(list(a) + list(b))
    tie_sizes = [len(list(g)) for _, g in itertools.groupby(sorted(ranks))]
    tie_term = sum(t ** 3 - t for t in tie_sizes) / (n * (n - 1))
    var_u = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var_u <= 0.0:
        return TestResult(statistic=u_obs, p_value=1.0, method="normal_approx")
    mu = n_a * n_b / 2.0
    z = max(0.0, abs(u_obs - mu) - 0.5) / math.sqrt(var_u)
    return TestResult(statistic=u_obs, p_value=min(1.0, 2.0 * _norm_sf(z)), method="normal_approx")


# ---------------------------------------------------------------------------
# chi-square
# ---------------------------------------------------------------------------

def _gamma_upper_reg(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x), accurate to ~1e-14.

    Series expansion for x < a+1, continued fraction (modified Lentz)
    otherwise; the standard pairing that converges everywhere on x >= 0.
    """
    if a <= 0.0 or x < 0.0:
        raise ValueError("gamma_upper_reg: need a > 0 and x >= 0")
    if x == 0.0:
        return 1.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        # lower series: P(a,x) = e^{-x} x^a / Gamma(a) * sum x^n / (a)_{n+1}
        ap = a
        term = total = 1.0 / a
        for _ in range(1000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        p = total * math.exp(-x + a * math.log(x) - lg)
        return max(0.0, min(1.0, 1.0 - p))
    # continued fraction for Q(a,x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return max(0.0, min(1.0, q))


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1:
        raise ValueError("chi_square_sf: df must be >= 1")
    if x <= 0.0:
        return 1.0
    return _gamma_upper_reg(df / 2.0, x / 2.0)


def chi_square(table: Sequence[Sequence[float]]) -> TestResult:
    """Chi-square test of independence on an r x c contingency table.

    Rows or columns whose marginal is zero have expected count zero in
    every cell; such lines are pooled away (their zero counts fold into a
    neighbor, which leaves the statistic unchanged) and df shrinks
    accordingly. A table left with fewer than 2 rows or columns is
    degenerate.
    """
    if len(table) < 2 or any(len(row) != len(table[0]) for row in table):
        raise ValueError("chi_square: need a rectangular table with >= 2 rows")
    if len(table[0]) < 2:
        raise ValueError("chi_square: need >= 2 columns")
    if any(v < 0 for row in table for v in row):
        raise ValueError("chi_square: negative count")

    rows = [list(map(float, row)) for row in table]
    row_sums = [sum(r) for r in rows]
    col_sums = [sum(r[j] for r in rows) for j in range(len(rows[0]))]
    keep_rows = [i for i, s in enumerate(row_sums) if s > 0]
    keep_cols = [j for j, s in enumerate(col_sums) if s > 0]
    if len(keep_rows) < 2 or len(keep_cols) < 2:
        raise DegenerateInput("chi_square: table degenerate after pooling zero marginals")

    pooled = [[rows[i][j] for j in keep_cols] for i in keep_rows]
    r_sums = [sum(row) for row in pooled]
    c_sums = [sum(row[j] for row in pooled) for j in range(len(keep_cols))]
    total = sum(r_sums)
    stat = 0.0
    for i, row in enumerate(pooled):
        for j, obs in enumerate(row):
            expected = r_sums[i] * c_sums[j] / total
            stat += (obs - expected) ** 2 / expected
    df = (len(keep_rows) - 1) * (len(keep_cols) - 1)
    return TestResult(statistic=stat, p_value=chi_square_sf(stat, df), method="chi_square", df=df)


# ---------------------------------------------------------------------------
# quantiles
# ---------------------------------------------------------------------------

def quantile(values: Sequence[float], q: float) -> float:
    """Exact quantile by linear interpolation between closest ranks (type 7)."""
    if not values:
        raise ValueError("quantile: empty input")
    if not 0.0 <= q <= 1.0:
        raise ValueError("quantile: q must be in [0, 1]")
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    if lo == len(xs) - 1:
        return float(xs[-1])
    frac = h - lo
    return xs[lo] + frac * (xs[lo + 1] - xs[lo])


class QuantileSketch:
    """Greenwald-Khanna streaming quantile summary.

    Deterministic, mergeable, with rank error <= eps * n per summary. The
    default eps of 0.002 leaves headroom so that merging partial sketches
    from parallel workers (which adds the operands' errors) stays inside
    the 0.5%-of-rank contract the analysis layer assumes.
    """

    def __init__(self, eps: float = 0.002):
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must be in (0, 1)")
        self.eps = eps
        self.n = 0
        # entries: (value, g, delta) sorted by value; _values mirrors the
        # sort keys so inserts avoid rebuilding a key list every time
        self._entries: list[tuple[float, int, int]] = []
        self._values: list[float] = []
        self._since_compress = 0
        self._min = math.inf
        self._max = -math.inf

    def insert(self, x: float) -> None:
        x = float(x)
        self.n += 1
        if x < self._min:
            self._min = x
        if x > self._max:
            self._max = x
        i = bisect.bisect_left(self._values, x)
        if i == 0 or i == len(self._entries):
            self._entries.insert(i, (x, 1, 0))
        else:
            delta = max(0, math.floor(2 * self.eps * self.n) - 1)
            self._entries.insert(i, (x, 1, delta))
        self._values.insert(i, x)
        self._since_compress += 1
        if self._since_compress >= max(1, int(1.0 / (2.0 * self.eps))):
            self._compress()

    def extend(self, xs) -> None:
        for x in xs:
            self.insert(x)

    def _compress(self) -> None:
        self._since_compress = 0
        if len(self._entries) < 3:
            return
        cap = math.floor(2 * self.eps * self.n)
        out = [self._entries[-1]]
        for i in range(len(self._entries) - 2, 0, -1):
            v, g, d = self._entries[i]
            nv, ng, nd = out[-1]
            if g + ng + nd <= cap:
                out[-1] = (nv, g + ng, nd)
            else:
                out.append((v, g, d))
        out.append(self._entries[0])
        out.reverse()
        self._entries = out
        self._values = [e[0] for e in out]

    def merge(self, other: "QuantileSketch") -> "QuantileSketch":
        """Combine two summaries; the result's rank error is bounded by the
        sum of the operands' errors (then compressed at the larger eps)."""
        merged = QuantileSketch(eps=max(self.eps, other.eps))
        merged.n = self.n + other.n
        merged._min = min(self._min, other._min)
        merged._max = max(self._max, other._max)
        merged._entries = sorted(self._entries + other._entries, key=lambda e: e[0])
        merged._values = [e[0] for e in merged._entries]
        merged._compress()
        return merged

    def query(self, q: float) -> float:
        """Value whose rank is within eps*n of q's target rank."""
        if self.n == 0:
            raise ValueError("query on empty sketch")
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must be in [0, 1]")
        if q == 0.0:
            return self._min
        if q == 1.0:
            return self._max
        target = q * self.n
        slack = self.eps * self.n
        rmin = 0
        for v, g, d in self._entries:
            rmin += g
            if rmin + d >= target - slack and rmin <= target + slack:
                return v
        return self._entries[-1][0]

    def __len__(self) -> int:
        return self.n
