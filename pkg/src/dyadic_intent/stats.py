"""Negotiation-time statistics: box-plot summaries, one-way ANOVA, Tukey HSD."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.stats import studentized_range

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class NegotiationSample:
    session_id: str
    interaction_type: object
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidInputError("negotiation duration must be non-negative")


@dataclass
class AnovaResult:
    F: float
    p: float
    df_between: int
    df_within: int
    ss_between: float
    ss_within: float
    ss_total: float
    means: list
    counts: list
    names: list = field(default_factory=list)

    @property
    def ms_within(self):
        return self.ss_within / self.df_within


@dataclass(frozen=True)
class PairComparison:
    a: object
    b: object
    mean_diff: float   # mean(a) - mean(b)
    q: float
    p_adj: float
    significant: bool


@dataclass
class TukeyResult:
    alpha: float
    pairs: list

    def pair(self, a, b):
        for c in self.pairs:
            if (c.a, c.b) == (a, b):
                return c
            if (c.a, c.b) == (b, a):
                return PairComparison(a, b, -c.mean_diff, c.q, c.p_adj, c.significant)
        raise KeyError((a, b))

    @property
    def significant_pairs(self):
        return [(c.a, c.b) for c in self.pairs if c.significant]


def _groups(groups):
    if isinstance(groups, Mapping):
        names = list(groups)
        data = [np.asarray(groups[k], dtype=float) for k in names]
    else:
        data = [np.asarray(g, dtype=float) for g in groups]
        names = list(range(len(data)))
    if len(data) < 2:
        raise InvalidInputError("need at least two groups")
    for name, g in zip(names, data):
        if g.ndim != 1 or len(g) < 2:
            raise InvalidInputError(f"group {name!r} needs at least two samples")
        if not np.all(np.isfinite(g)):
            raise InvalidInputError(f"group {name!r} has non-finite samples")
    return names, data


def f_sf(F, df1, df2):
    """Upper tail of the F distribution via the regularised incomplete beta."""
    if np.isinf(F):
        return 0.0
    if F <= 0:
        return 1.0
    return float(special.betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F)))


def anova(groups):
    """One-way fixed-effects ANOVA.

    With zero within-group variance the statistic is reported as ``inf`` with
    ``p = 0`` (or ``0`` with ``p = 1`` when all groups are also equal).
    """
    names, data = _groups(groups)
    allx = np.concatenate(data)
    grand = allx.mean()
    means = [float(g.mean()) for g in data]
    counts = [len(g) for g in data]
    ssb = float(sum(n * (m - grand) ** 2 for n, m in zip(counts, means)))
    ssw = float(sum(np.sum((g - g.mean()) ** 2) for g in data))
    sst = float(np.sum((allx - grand) ** 2))
    k, n = len(data), len(allx)
    dfb, dfw = k - 1, n - k
    if ssw == 0.0:
        F = np.inf if ssb > 0 else 0.0
    else:
        F = (ssb / dfb) / (ssw / dfw)
    return AnovaResult(F=float(F), p=f_sf(F, dfb, dfw), df_between=dfb, df_within=dfw,
                       ss_between=ssb, ss_within=ssw, ss_total=sst, means=means,
                       counts=counts, names=names)


def tukey_hsd(groups, alpha=0.05):
    """Tukey-Kramer pairwise comparisons on the pooled within-group variance."""
    names, data = _groups(groups)
    res = anova(dict(zip(names, data)))
    msw = res.ss_within / res.df_within
    k = len(data)
    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = res.means[i] - res.means[j]
            se = np.sqrt(msw / 2.0 * (1.0 / res.counts[i] + 1.0 / res.counts[j]))
            if se == 0.0:
                q = np.inf if diff != 0 else 0.0
            else:
                q = abs(diff) / se
            if np.isinf(q):
                p = 0.0
            elif q == 0.0:
                p = 1.0
            else:
                p = float(min(1.0, max(0.0, studentized_range.sf(q, k, res.df_within))))
            pairs.append(PairComparison(names[i], names[j], float(diff), float(q), p, p < alpha))
    return TukeyResult(alpha=alpha, pairs=pairs)


@dataclass(frozen=True)
class BoxStats:
    n: int
    mean: float
    q1: float
    median: float
    q3: float
    lower_whisker: float
    upper_whisker: float
    outliers: tuple

    @property
    def iqr(self):
        return self.q3 - self.q1


def box_stats(values):
    """Box-plot numbers; percentiles interpolate linearly between order statistics.

    Whiskers reach the most extreme samples inside ``[q1 - 1.5 IQR, q3 + 1.5 IQR]``.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if len(x) == 0:
        raise InvalidInputError("no samples")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    outliers = tuple(float(v) for v in x[(x < lo) | (x > hi)])
    return BoxStats(len(x), float(x.mean()), float(q1), float(med), float(q3),
                    float(inside.min()), float(inside.max()), outliers)


def negotiation_summary(samples):
    """Box statistics of negotiation duration per interaction type.

    Returns a dict keyed by interaction type in first-seen order.
    """
    if not samples:
        raise InvalidInputError("no negotiation samples")
    by_type = {}
    for s in samples:
        by_type.setdefault(s.interaction_type, []).append(s.duration)
    return {k: box_stats(v) for k, v in by_type.items()}


def durations_by_type(samples):
    out = {}
    for s in samples:
        out.setdefault(s.interaction_type, []).append(s.duration)
    return out
