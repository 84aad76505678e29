"""Definitional brute-force statistics, kept independent of squim.metrics."""

import math


def brute_mae(a, b):
    return sum(abs(float(x) - float(y)) for x, y in zip(a, b)) / len(a)


def brute_pcc(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def brute_ranks(a):
    # rank = number strictly below + average position within the tie group
    out = []
    for x in a:
        below = sum(1 for y in a if y < x)
        equal = sum(1 for y in a if y == x)
        out.append(below + (equal + 1) / 2)
    return out


def brute_srcc(a, b):
    return brute_pcc(brute_ranks(list(a)), brute_ranks(list(b)))
