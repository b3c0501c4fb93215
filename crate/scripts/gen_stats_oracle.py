#!/usr/bin/env python3
"""High-precision reference values for Pearson r and Student-t tails.

Writes crates/core/tests/fixtures/stats_oracle.json:
  series: 1000 random (x, y) pairs with r and the two-sided p-value
  t_tail: two-sided tail probabilities on t in [-10, 10], df in 1..200
All references are evaluated with mpmath at 50 significant digits from
the exact binary values of the stored doubles.
"""
import json
import os
import random

import mpmath

mpmath.mp.dps = 50

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures",
                   "stats_oracle.json")


def pearson(x, y):
    x = [mpmath.mpf(v) for v in x]
    y = [mpmath.mpf(v) for v in y]
    n = len(x)
    mx = mpmath.fsum(x) / n
    my = mpmath.fsum(y) / n
    sxy = mpmath.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = mpmath.fsum((a - mx) ** 2 for a in x)
    syy = mpmath.fsum((b - my) ** 2 for b in y)
    return sxy / mpmath.sqrt(sxx * syy)


def two_sided_t(t, df):
    t = mpmath.mpf(t)
    df = mpmath.mpf(df)
    return mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True)


def p_from_r(r, n):
    df = n - 2
    if abs(r) >= 1:
        return mpmath.mpf(0)
    t2 = r * r * df / (1 - r * r)
    return mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, df / (df + t2), regularized=True)


def main():
    rng = random.Random(20250531)
    series = []
    while len(series) < 1000:
        n = rng.randint(3, 80)
        kind = rng.random()
        x = [rng.gauss(0, 1) * rng.choice([1, 10, 1000]) for _ in range(n)]
        if kind < 0.25:
            y = [rng.gauss(0, 1) for _ in range(n)]
        elif kind < 0.5:
            slope = rng.uniform(-3, 3)
            y = [slope * v + rng.gauss(0, 0.01 * abs(v) + 1e-3) for v in x]
        elif kind < 0.75:
            y = [float(rng.randint(0, 10)) for _ in range(n)]
            x = [float(min(10, max(0, round(v + rng.gauss(0, 2))))) for v in y]
        else:
            y = [v * 0.5 + rng.gauss(0, 1) + 1e6 for v in x]
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        r = pearson(x, y)
        series.append({"x": x, "y": y, "r": mpmath.nstr(r, 30), "p": mpmath.nstr(p_from_r(r, n), 30)})

    grid = []
    for df in range(1, 201):
        for k in range(-40, 41):
            t = k / 4
            grid.append({"t": t, "df": df, "p": mpmath.nstr(two_sided_t(t, df), 30)})

    with open(OUT, "w") as f:
        json.dump({"series": series, "t_tail": grid}, f, separators=(",", ":"))
        f.write("\n")
    print(f"{len(series)} series, {len(grid)} tail points -> {OUT}")


if __name__ == "__main__":
    main()
