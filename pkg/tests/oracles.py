"""Independent reference computations used only by the tests.

Nothing here calls into tutorsim; each oracle follows the textbook formula
step by step in plain Python.
"""

import math

from scipy.integrate import quad


def sample_var(xs):
    m = sum(xs) / len(xs)
    return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def cronbach_alpha(matrix):
    n, k = len(matrix), len(matrix[0])
    item_vars = [sample_var([matrix[i][j] for i in range(n)]) for j in range(k)]
    totals = [sum(row) for row in matrix]
    return k / (k - 1) * (1 - sum(item_vars) / sample_var(totals))


def pearson_r(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def t_density(t, df):
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc - (df + 1) / 2 * math.log1p(t * t / df))


def t_two_tailed(t, df):
    """2 * integral of the t density from |t| to infinity, by adaptive quadrature."""
    tail, _ = quad(t_density, abs(t), math.inf, args=(df,), epsabs=1e-13, epsrel=1e-12, limit=200)
    return min(1.0, 2 * tail)


def pearson_p(x, y):
    r = pearson_r(x, y)
    n = len(x)
    if abs(r) >= 1:
        return 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return t_two_tailed(t, n - 2)


def confusion_prf(gold, pred, positive):
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if p == positive and g == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif g == positive:
            fn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1
