"""Brute-force reference implementations used to check the fast paths.

Everything here trades efficiency for obviousness: plain enumeration,
closed-form recurrences, exhaustive search. Kept independent of the
package internals on purpose.
"""

from __future__ import annotations

import itertools
import math


def rank_oracle(values):
    """Fractional ranks by counting wins and ties against every element."""
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        # ranks occupied: less+1 .. less+equal -> mean
        out.append(less + (equal + 1) / 2.0)
    return out


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def spearman_oracle(x, y):
    return pearson_oracle(rank_oracle(x), rank_oracle(y))


def mw_u_oracle(a, b):
    """U for sample a: count pairs a>b, half credit for ties."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def mw_exact_p_oracle(a, b):
    """Two-sided exact p by enumerating every |a|-subset of the pool.

    p = P(|U - nm/2| >= |u_obs - nm/2|) under the permutation null.
    """
    pooled = list(a) + list(b)
    n_a = len(a)
    center = n_a * len(b) / 2.0
    dev_obs = abs(mw_u_oracle(a, b) - center)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n_a):
        chosen = set(idx)
        aa = [pooled[i] for i in idx]
        bb = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        if abs(mw_u_oracle(aa, bb) - center) >= dev_obs - 1e-12:
            hits += 1
    return hits / total


def chi2_stat_oracle(table):
    """Sum (O-E)^2/E straight from the marginals."""
    r = len(table)
    c = len(table[0])
    row = [sum(table[i]) for i in range(r)]
    col = [sum(table[i][j] for i in range(r)) for j in range(c)]
    n = sum(row)
    stat = 0.0
    for i in range(r):
        for j in range(c):
            e = row[i] * col[j] / n
            stat += (table[i][j] - e) ** 2 / e
    return stat


def chi2_sf_oracle(x, df):
    """Upper-tail chi-square via the closed-form df recurrence.

    Base cases df=1 (erfc) and df=2 (exp); then
    Q(x; df+2) = Q(x; df) + (x/2)^(df/2) * exp(-x/2) / Gamma(df/2 + 1).
    """
    if df % 2 == 1:
        q = math.erfc(math.sqrt(x / 2.0))
        d = 1
    else:
        q = math.exp(-x / 2.0)
        d = 2
    while d < df:
        q += (x / 2.0) ** (d / 2.0) * math.exp(-x / 2.0) / math.gamma(d / 2.0 + 1.0)
        d += 2
    return q


def quantile_oracle(values, q):
    """Type-7 quantile on a fully sorted copy."""
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def split_periods_oracle(years, k):
    """Exhaustive search over all year cut points.

    Returns (best_dev, cuts) where cuts are the chosen boundaries
    (indices into the sorted distinct years marking period ends),
    minimizing max |size - n/k|, ties broken by lexicographically
    earliest cut positions.
    """
    distinct = sorted(set(years))
    counts = [sum(1 for y in years if y == d) for d in distinct]
    n = len(years)
    target = n / k
    best = None
    for cuts in itertools.combinations(range(len(distinct) - 1), k - 1):
        bounds = [-1] + list(cuts) + [len(distinct) - 1]
        sizes = [sum(counts[bounds[i] + 1:bounds[i + 1] + 1]) for i in range(k)]
        dev = max(abs(s - target) for s in sizes)
        key = (dev, cuts)
        if best is None or key < best:
            best = key
    return best
