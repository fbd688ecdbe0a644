"""Label-distribution drift detection via a chi-square goodness-of-fit test.

The monitor accumulates the first N annotations' label vectors as the
baseline, then keeps a ring of the last W vectors. When the window is full,
its label counts are tested against the baseline proportions; p < alpha
means the annotation stream has drifted and the loop should freeze the
current model and re-initiate training.

Pooling rule: window categories the baseline has never seen carry an
expected count of zero, which the test cannot divide by, so their observed
counts are pooled into the baseline's smallest-count category before the
statistic is computed.

The p-value comes from a self-contained regularized incomplete gamma
implementation (series + continued fraction), verified against scipy in the
test suite.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass

_MAX_ITER = 500
_EPS = 3e-14


def _lower_gamma_series(a, x):
    """P(a, x) by series expansion; valid for x < a + 1."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _upper_gamma_cf(a, x):
    """Q(a, x) by continued fraction; valid for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
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
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi_square_sf(statistic, df):
    """Survival function of the chi-square distribution: P(X >= statistic)."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if statistic <= 0:
        return 1.0
    a = df / 2.0
    x = statistic / 2.0
    if x < a + 1.0:
        return max(0.0, min(1.0, 1.0 - _lower_gamma_series(a, x)))
    return max(0.0, min(1.0, _upper_gamma_cf(a, x)))


@dataclass(frozen=True)
class DriftResult:
    drifted: bool
    statistic: float
    p_value: float
    df: int


class DriftMonitor:
    def __init__(self, baseline_size=50, window_size=50, alpha=0.01):
        if baseline_size < 1 or window_size < 1:
            raise ValueError("baseline and window sizes must be >= 1")
        self.baseline_size = baseline_size
        self.window_size = window_size
        self.alpha = alpha
        self.baseline_counts = Counter()
        self._baseline_seen = 0
        self.window = deque(maxlen=window_size)

    def observe(self, labels):
        """Feed one annotation's label vector."""
        labels = [str(v) for v in labels]
        if self._baseline_seen < self.baseline_size:
            self.baseline_counts.update(labels)
            self._baseline_seen += 1
        else:
            self.window.append(tuple(labels))

    @property
    def ready(self):
        return len(self.window) == self.window_size

    def check(self) -> DriftResult | None:
        """Goodness-of-fit of the window against baseline proportions.

        Returns None while the window is not yet full (no decision).
        """
        if not self.ready:
            return None
        observed = Counter()
        for vec in self.window:
            observed.update(vec)
        baseline_total = sum(self.baseline_counts.values())
        if baseline_total == 0 or len(self.baseline_counts) < 2:
            return DriftResult(False, 0.0, 1.0, 0)  # degenerate baseline: no test possible

        pooled = Counter(observed)
        unseen = [cat for cat in observed if cat not in self.baseline_counts]
        if unseen:
            smallest = min(self.baseline_counts, key=lambda c: (self.baseline_counts[c], c))
            for cat in unseen:
                pooled[smallest] += pooled.pop(cat)

        window_total = sum(pooled.values())
        statistic = 0.0
        for cat, base_count in self.baseline_counts.items():
            expected = base_count / baseline_total * window_total
            diff = pooled.get(cat, 0) - expected
            statistic += diff * diff / expected
        df = len(self.baseline_counts) - 1
        p = chi_square_sf(statistic, df)
        return DriftResult(p < self.alpha, statistic, p, df)

    def reset_baseline(self):
        """After a freeze/reinit, the current window becomes the new normal."""
        self.baseline_counts = Counter()
        for vec in self.window:
            self.baseline_counts.update(vec)
        self._baseline_seen = self.baseline_size  # keep accepting window samples
        self.window.clear()
        if not self.baseline_counts:
            self._baseline_seen = 0  # nothing observed yet; rebuild from scratch

    def state_dict(self):
        return {
            "baseline_counts": dict(self.baseline_counts),
            "baseline_seen": self._baseline_seen,
            "window": [list(v) for v in self.window],
        }

    def load_state(self, d):
        self.baseline_counts = Counter(d.get("baseline_counts", {}))
        self._baseline_seen = d.get("baseline_seen", 0)
        self.window = deque((tuple(v) for v in d.get("window", [])), maxlen=self.window_size)
