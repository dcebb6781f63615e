"""Brute-force reference implementations, written independently of the package.

They work on plain Python lists and tuples and loop over everything, so they
share no code path with the optimised versions under test.
"""

from __future__ import annotations

import itertools
import math

from sympy.utilities.iterables import multiset_partitions


def subsets(n):
    for mask in range(1 << n):
        yield mask, [i for i in range(n) if mask >> i & 1]


def mass(p, atoms):
    return sum(p[i] for i in atoms)


def envelope(rows, atoms):
    return max(mass(p, atoms) for p in rows)


def vc_dim(rows):
    rows = [tuple(r) for r in rows]
    n = len(rows[0])
    best = 0
    for k in range(1, n + 1):
        for pts in itertools.combinations(range(n), k):
            patterns = {tuple(r[i] for i in pts) for r in rows}
            if len(patterns) == 2**k:
                best = k
    return best


def ld(rows):
    """Littlestone dimension by the defining recursion, no memo, no pruning."""
    rows = sorted({tuple(r) for r in rows})
    if len(rows) <= 1:
        return 0
    best = 0
    for x in range(len(rows[0])):
        zero = [r for r in rows if r[x] == 0]
        one = [r for r in rows if r[x] == 1]
        if zero and one:
            best = max(best, 1 + min(ld(zero), ld(one)))
    return best


def fragmentation(rows, eps, tol=1e-12):
    """Max number of blocks carrying ``eps`` envelope mass, over all set partitions."""
    n = len(rows[0])
    best = 0
    for partition in multiset_partitions(list(range(n))):
        best = max(best, sum(envelope(rows, block) >= eps - tol for block in partition))
    return best


def certificate_holds(rows, base, rho, tol=1e-12):
    n = len(base)
    for _, atoms in subsets(n):
        if envelope(rows, atoms) > rho(mass(base, atoms)) + tol:
            return False
    return True


def implication_holds(rows, base, small, bound, tol=1e-12):
    for _, atoms in subsets(len(base)):
        if mass(base, atoms) <= small + tol and envelope(rows, atoms) > bound + tol:
            return False
    return True


def cover_residual(hyps, cover, p):
    def dist(f, g):
        return sum(pi for pi, a, b in zip(p, f, g) if a != b)

    return max(min(dist(f, g) for g in cover) for f in hyps)


def dp_max_log_ratio(law, domain, m):
    """Largest ``|log P(h|S) - log P(h|S')|`` over neighbouring datasets (loops only)."""
    entries = [(a, y) for a in range(domain) for y in (0, 1)]
    worst = 0.0
    for data in itertools.product(entries, repeat=m):
        p = law(list(data))
        for i in range(m):
            for e in entries:
                other = list(data)
                other[i] = e
                q = law(other)
                for a, b in zip(p, q):
                    if a == 0 and b == 0:
                        continue
                    if a == 0 or b == 0:
                        return math.inf
                    worst = max(worst, abs(math.log(a) - math.log(b)))
    return worst


def exp_mech_law(hyps, data, alpha):
    errs = [sum(h[a] != y for a, y in data) for h in hyps]
    w = [math.exp(-alpha * e / 2) for e in errs]
    s = sum(w)
    return [v / s for v in w]


def best_loss(hyps, atoms, labels):
    return min(sum(h[a] != y for a, y in zip(atoms, labels)) for h in hyps)
