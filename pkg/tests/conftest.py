"""Shared generators for randomized algebra tests."""

import random
from fractions import Fraction

from tidyscale.exactmath import mat_mul, mat_inverse
from tidyscale.padic import PAdicAutomorphism


def random_unimodular(rng, n, shears=4):
    m = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for _ in range(shears):
        i, j = rng.randrange(n), rng.randrange(n)
        if i == j:
            continue
        c = rng.choice([-1, 1])
        for r in range(n):
            m[r][i] += c * m[r][j]
    return m


def random_separable(rng, n, p):
    """Random slope-separable automorphism of Q_p^n.

    Block diagonal pieces (p-power diagonal entries with unit cofactors, or a
    2x2 companion of x^2 - p) conjugated by a small unimodular matrix, so the
    slope data is known by construction but the matrix is not triangular.
    """
    unit = 3 if p == 2 else 2
    blocks = []
    dims = 0
    while dims < n:
        if n - dims >= 2 and rng.random() < 0.4:
            j = rng.choice([1, 3])
            blocks.append([[Fraction(0), Fraction(1)], [Fraction(p) ** j, Fraction(0)]])
            dims += 2
        else:
            k = rng.randint(-2, 2)
            u = rng.choice([1, unit])
            blocks.append([[Fraction(u) * Fraction(p) ** k]])
            dims += 1
    mat = [[Fraction(0)] * n for _ in range(n)]
    at = 0
    for b in blocks:
        d = len(b)
        for i in range(d):
            for j in range(d):
                mat[at + i][at + j] = b[i][j]
        at += d
    t = random_unimodular(rng, n)
    conj = mat_mul(mat_mul(t, mat), mat_inverse(t))
    return PAdicAutomorphism(tuple(tuple(r) for r in conj), p)


def seeded_rng(seed):
    return random.Random(seed)
