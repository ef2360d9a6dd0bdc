"""Brute-force agreement statistics used to freeze expected values in tests.

Krippendorff's alpha is computed straight from the pairable-value
definition (every ordered pair of values within a unit, weighted by
1/(m_u - 1)), not from a coincidence matrix. Cohen's kappa enumerates
every (rater A category, rater B category) cell for p_e.
"""
import itertools

NAN = None


def kappa(pairs):
    n = len(pairs)
    cats = sorted({c for p in pairs for c in p})
    po = sum(1 for a, b in pairs if a == b) / n
    pe = 0.0
    for ca, cb in itertools.product(cats, cats):
        if ca != cb:
            continue
        pa = sum(1 for a, _ in pairs if a == ca) / n
        pb = sum(1 for _, b in pairs if b == cb) / n
        pe += pa * pb
    return (po - pe) / (1 - pe)


def alpha(matrix, level):
    units = []
    for j in range(len(matrix[0])):
        vals = [row[j] for row in matrix if row[j] is not None]
        if len(vals) >= 2:
            units.append(vals)
    allvals = [v for u in units for v in u]
    n = len(allvals)
    cats = sorted(set(allvals))
    freq = {c: allvals.count(c) for c in cats}

    def delta(a, b):
        if level == "nominal":
            return 0.0 if a == b else 1.0
        if level == "interval":
            return float(a - b) ** 2
        lo, hi = min(a, b), max(a, b)
        s = sum(freq[g] for g in cats if lo <= g <= hi)
        return (s - (freq[a] + freq[b]) / 2.0) ** 2

    do = 0.0
    for u in units:
        m = len(u)
        for i, k in itertools.permutations(range(m), 2):
            do += delta(u[i], u[k]) / (m - 1)
    do /= n
    de = 0.0
    for i, k in itertools.permutations(range(n), 2):
        de += delta(allvals[i], allvals[k])
    de /= n * (n - 1)
    return 1.0 - do / de


if __name__ == "__main__":
    table = [(0, 0)] * 20 + [(0, 1)] * 5 + [(1, 0)] * 10 + [(1, 1)] * 15
    print("kappa 2x2", repr(kappa(table)))
    N = NAN
    kdata = [
        [1, 2, 3, 3, 2, 1, 4, 1, 2, N, N, N],
        [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, N, 3],
        [N, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, N],
        [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, N],
    ]
    for level in ("nominal", "ordinal"):
        print("alpha", level, repr(alpha(kdata, level)))
    with_empty = [row + [N] for row in kdata]
    print("alpha nominal + all-missing unit", repr(alpha(with_empty, "nominal")))
