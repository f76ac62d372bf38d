#!/usr/bin/env python3
# Copyright 2026 The dplane Authors.
# SPDX-License-Identifier: Apache-2.0
"""Recomputes the derived constants the C++ tests assert, from first
principles, so each hard-coded expectation has an independent source."""
import math
from fractions import Fraction

from scipy import stats


def shvs_law_by_lattice(logits, hot, n=200):
    """Outcome law of propose/accept/fallback by midpoint lattice."""
    w = [math.exp(z - max(logits)) for z in logits]
    total = sum(w)
    hot_sorted = sorted(hot)
    tail = [v for v in range(len(logits)) if v not in hot]
    s_h = sum(w[v] for v in hot_sorted)
    alpha = min(1.0, s_h / total)
    q = [w[v] / s_h for v in hot_sorted]
    r = [w[t] / sum(w[x] for x in tail) for t in tail] if tail else []

    def inv_cdf(p, u):
        c = 0.0
        for i, x in enumerate(p):
            c += x
            if c > u:
                return i
        return len(p) - 1

    law = [0.0] * len(logits)
    cell = 1.0 / n**3
    for a in range(n):
        ua = (a + 0.5) / n
        for b in range(n):
            ub = (b + 0.5) / n
            for c in range(n):
                uc = (c + 0.5) / n
                if ub < alpha:
                    law[hot_sorted[inv_cdf(q, ua)]] += cell
                else:
                    law[tail[inv_cdf(r, uc)]] += cell
    return alpha, law


def main():
    print("softmax([1,0])[0] =", repr(math.e / (math.e + 1)))
    print("chi2 critical, 63 dof, p=0.001 =", stats.chi2.ppf(0.999, 63))
    alpha, law = shvs_law_by_lattice([math.log(4), math.log(2), 0.0, 0.0], {0, 1}, n=100)
    print("V=4 shvs alpha =", alpha, "law =", law)
    print("bubble [10,10,12] + 3 =", Fraction(5 + 5 + 3, 3 * 15))
    print("f'(0.2, 2) =", Fraction(2, 10) / (Fraction(2, 10) + Fraction(8, 10) / 2))
    zipf = [(r + 1) ** -1.2 for r in range(1 << 17)]
    print("top-32768 mass, s=1.2, V=2^17 =", sum(zipf[:32768]) / sum(zipf))
    # Linear hit curve: F(H) = (H^2 + (V-H)^2) / V is minimized at V/2.
    V = 1000
    print("linear argmin =", min(range(1, V + 1), key=lambda h: (h * h + (V - h) ** 2) / V))


if __name__ == "__main__":
    main()
