"""Finite atomic spaces, distributions, hypothesis families and exact combinatorics.

Subsets of a space with ``n`` atoms are plain Python ``int`` bitmasks: bit ``i``
set means atom ``i`` is in the set. Atom id ``n`` is reserved for the dummy
point used by couplings and never appears in user subsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, InputError, MaskRangeError

DEFAULT_TOL = 1e-12
PROB_SUM_TOL = 1e-9
EXHAUSTIVE_CUTOFF = 20
LD_BEHAVIOR_GUARD = 4096


# --------------------------------------------------------------------------- subsets


def mask_from_atoms(atoms: Iterable[int]) -> int:
    mask = 0
    for a in atoms:
        mask |= 1 << int(a)
    return mask


def atoms_of(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def full_mask(n: int) -> int:
    return (1 << n) - 1


def check_mask(n: int, mask: int) -> int:
    if mask < 0 or mask >> n:
        raise MaskRangeError(f"subset mask {mask:#x} has bits beyond atom_count={n}")
    return mask


def subset_masses(probs: np.ndarray) -> np.ndarray:
    """Mass of every subset, indexed by bitmask (length ``2**n``)."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        table = np.zeros(1)
        for p in probs:
            table = np.concatenate([table, table + p])
        return table
    # one row per distribution
    table = np.zeros((probs.shape[0], 1))
    for j in range(probs.shape[1]):
        table = np.concatenate([table, table + probs[:, j : j + 1]], axis=1)
    return table


def popcounts(n: int) -> np.ndarray:
    counts = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        counts = np.concatenate([counts, counts + 1])
    return counts


def _guard_exhaustive(n: int, cutoff: int = EXHAUSTIVE_CUTOFF) -> None:
    if n > cutoff:
        raise CapacityError(f"exhaustive enumeration of 2^{n} subsets exceeds cutoff n <= {cutoff}")


# --------------------------------------------------------------------------- types


@dataclass(frozen=True)
class FiniteSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            raise InputError("a finite space needs at least one atom")
        if len(set(labels)) != len(labels):
            raise InputError("atom labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, n: int) -> "FiniteSpace":
        return cls(tuple(f"x{i}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dummy(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over the atoms of a finite space.

    ``decimals`` keeps the exact strings an instance file supplied so the
    file can be written back unchanged.
    """

    probs: np.ndarray
    decimals: tuple[str, ...] | None = None

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise InputError("empty probability vector")
        if np.any(p < 0) or np.any(p > 1):
            raise InputError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise InputError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, atom: int) -> "Distribution":
        p = np.zeros(n)
        p[atom] = 1.0
        return cls(p)

    @property
    def n(self) -> int:
        return self.probs.size

    def mass(self, mask: int) -> float:
        check_mask(self.n, mask)
        return float(sum(self.probs[i] for i in atoms_of(mask)))

    @cached_property
    def table(self) -> np.ndarray:
        _guard_exhaustive(self.n)
        return subset_masses(self.probs)

    def __eq__(self, other):
        return isinstance(other, Distribution) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"Distribution({np.round(self.probs, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class DistributionFamily:
    members: tuple[Distribution, ...]

    def __post_init__(self):
        members = tuple(m if isinstance(m, Distribution) else Distribution(m) for m in self.members)
        if not members:
            raise InputError("a distribution family needs at least one member")
        n = members[0].n
        if any(m.n != n for m in members):
            raise InputError("family members live on different spaces")
        seen, unique = set(), []
        for m in members:
            key = m.probs.tobytes()
            if key not in seen:
                seen.add(key)
                unique.append(m)
        object.__setattr__(self, "members", tuple(unique))

    @classmethod
    def of(cls, *rows: Sequence[float]) -> "DistributionFamily":
        return cls(tuple(Distribution(np.asarray(r, dtype=float)) for r in rows))

    @property
    def n(self) -> int:
        return self.members[0].n

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> Distribution:
        return self.members[i]

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.vstack([m.probs for m in self.members])

    @cached_property
    def tables(self) -> np.ndarray:
        """``(members, 2**n)`` array of subset masses."""
        _guard_exhaustive(self.n)
        t = subset_masses(self.matrix)
        t.setflags(write=False)
        return t

    @cached_property
    def envelope_table(self) -> np.ndarray:
        t = self.tables.max(axis=0)
        t.setflags(write=False)
        return t

    def mixture(self, weights: Sequence[float] | None = None) -> Distribution:
        w = np.full(len(self), 1.0 / len(self)) if weights is None else np.asarray(weights, float)
        p = w @ self.matrix
        return Distribution(p / p.sum())


def envelope_mass(family: DistributionFamily, a: int) -> tuple[float, int]:
    """Largest mass any member puts on ``a``, with the lowest-index maximiser."""
    check_mask(family.n, a)
    idx = atoms_of(a)
    masses = family.matrix[:, idx].sum(axis=1) if idx else np.zeros(len(family))
    k = int(np.argmax(masses))
    return float(masses[k]), k


@dataclass(frozen=True, eq=False)
class HypothesisFamily:
    """Binary labelings of all atoms, one row per hypothesis.

    ``preorder`` optionally tags the family as generalized thresholds: it gives
    a rank per atom (ties allowed) and every member must be the indicator of a
    rank-downward-closed set. Members are then totally ordered pointwise.
    """

    members: np.ndarray
    preorder: tuple[int, ...] | None = None

    def __post_init__(self):
        h = np.array(self.members, dtype=np.int8)
        if h.ndim == 1:
            h = h.reshape(1, -1)
        if h.size == 0 or h.shape[0] == 0:
            raise InputError("a hypothesis family needs at least one member")
        if not np.isin(h, (0, 1)).all():
            raise InputError("hypotheses must be 0/1 labelings")
        _, first = np.unique(h, axis=0, return_index=True)
        h = h[np.sort(first)]
        h.setflags(write=False)
        object.__setattr__(self, "members", h)
        if self.preorder is not None:
            ranks = tuple(int(r) for r in self.preorder)
            if len(ranks) != h.shape[1]:
                raise InputError("preorder must rank every atom")
            object.__setattr__(self, "preorder", ranks)
            if not self._is_threshold_family(ranks):
                raise InputError("members are not downward-closed sets of the preorder")

    def _is_threshold_family(self, ranks: tuple[int, ...]) -> bool:
        r = np.asarray(ranks)
        for row in self.members:
            ones, zeros = r[row == 1], r[row == 0]
            if ones.size and zeros.size and ones.max() >= zeros.min():
                return False
        return True

    @property
    def n(self) -> int:
        return self.members.shape[1]

    def __len__(self) -> int:
        return self.members.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.members[i]

    @property
    def is_threshold(self) -> bool:
        return self.preorder is not None

    @cached_property
    def codes(self) -> tuple[int, ...]:
        """Each member as a bitmask of the atoms it labels 1."""
        weights = [1 << i for i in range(self.n)]
        return tuple(sum(w for w, b in zip(weights, row) if b) for row in self.members.tolist())

    def disagreement(self, i: int, j: int) -> int:
        return self.codes[i] ^ self.codes[j]

    def subset(self, indices: Sequence[int]) -> "HypothesisFamily":
        return HypothesisFamily(self.members[list(indices)], self.preorder)

    def extended(self) -> np.ndarray:
        """Members on the dummy-extended space: every hypothesis labels the dummy 0."""
        return np.hstack([self.members, np.zeros((len(self), 1), dtype=np.int8)])


def threshold_family(ranks: Sequence[int]) -> HypothesisFamily:
    """All generalized thresholds ``1[rank(x) <= r]`` of a preorder, plus the empty set.

    Members come ordered from the all-zero labeling upward.
    """
    r = np.asarray(ranks)
    levels = np.unique(r)
    rows = [np.zeros(r.size, dtype=np.int8)]
    rows += [(r <= lvl).astype(np.int8) for lvl in levels]
    return HypothesisFamily(np.vstack(rows), tuple(int(x) for x in r))


def upward_thresholds(n: int) -> HypothesisFamily:
    """The ``n + 1`` functions ``1[i >= k]`` for ``k = 0..n`` on ordered atoms."""
    rows = [(np.arange(n) >= k).astype(np.int8) for k in range(n + 1)]
    # 1[i >= k] is downward closed for the reversed order
    return HypothesisFamily(np.vstack(rows), tuple(n - 1 - i for i in range(n)))


def all_labelings(n: int) -> HypothesisFamily:
    rows = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.int8)
    return HypothesisFamily(rows)


# --------------------------------------------------------------------------- dimensions


def vc_dimension(h: HypothesisFamily, cap: int | None = None) -> int:
    """Largest shattered atom set of size at most ``cap`` (exhaustive)."""
    n = h.n
    cap = n if cap is None else cap
    if cap < 0 or cap > n:
        raise InputError(f"cap must lie in [0, {n}]")
    rows = h.members
    best = 0
    for d in range(1, cap + 1):
        if 2**d > len(h):
            break
        weights = 1 << np.arange(d)
        found = False
        for cols in combinations(range(n), d):
            patterns = rows[:, cols].astype(np.int64) @ weights
            if np.unique(patterns).size == 2**d:
                found = True
                break
        if not found:
            break  # shattering is hereditary
        best = d
    return best


def littlestone_dimension(h: HypothesisFamily, guard: int = LD_BEHAVIOR_GUARD) -> int:
    if len(h) > guard:
        raise CapacityError(f"{len(h)} behaviors exceed the Littlestone guard {guard}")
    n = h.n
    memo: dict[frozenset, int] = {}

    def ld(behaviors: frozenset) -> int:
        k = len(behaviors)
        if k <= 1:
            return 0
        if behaviors in memo:
            return memo[behaviors]
        ceiling = k.bit_length() - 1  # floor(log2 k)
        best = 0
        for x in range(n):
            bit = 1 << x
            ones = frozenset(b for b in behaviors if b & bit)
            if not ones or len(ones) == k:
                continue
            zeros = behaviors - ones
            if min(len(ones), len(zeros)).bit_length() <= best:
                continue
            best = max(best, 1 + min(ld(zeros), ld(ones)))
            if best == ceiling:
                break
        memo[behaviors] = best
        return best

    return ld(frozenset(h.codes))


# --------------------------------------------------------------------------- covers / packings


@dataclass
class CoverResult:
    cover: HypothesisFamily
    indices: list[int]
    delta: float
    max_residual: float
    verified: bool
    assignment: list[int] = field(default_factory=list)


def _pair_masses(h: HypothesisFamily, probs: np.ndarray) -> np.ndarray:
    """``(|h|, |h|)`` matrix of ``probs``-mass of pairwise disagreement sets."""
    m = h.members.astype(float)
    p = np.asarray(probs, dtype=float)
    # mass(f != g) = p.f + p.g - 2 p.(f*g)
    pf = m @ p
    return pf[:, None] + pf[None, :] - 2.0 * (m * p) @ m.T


def build_uniform_cover(
    h: HypothesisFamily, mu0: Distribution, delta: float, tol: float = DEFAULT_TOL
) -> CoverResult:
    """Greedy ``delta``-cover of ``h`` under ``mu0``, checked exhaustively afterwards."""
    if not 0 < delta <= 1:
        raise InputError("delta must lie in (0, 1]")
    if mu0.n != h.n:
        raise InputError("hypotheses and base measure live on different spaces")
    dist = _pair_masses(h, mu0.probs)
    covered = np.zeros(len(h), dtype=bool)
    chosen: list[int] = []
    while not covered.all():
        g = int(np.argmin(covered))  # first uncovered member
        chosen.append(g)
        covered |= dist[g] <= delta + tol
    sub = dist[:, chosen]
    residual = float(sub.min(axis=1).max())
    return CoverResult(
        cover=h.subset(chosen),
        indices=chosen,
        delta=delta,
        max_residual=residual,
        verified=residual <= delta + tol,
        assignment=[chosen[k] for k in sub.argmin(axis=1)],
    )


def uniform_cover_residual(
    cover: HypothesisFamily, h: HypothesisFamily, family: DistributionFamily
) -> float:
    """``max_mu max_f min_g mu(f != g)`` over members of ``family``."""
    worst = 0.0
    c = cover.members.astype(float)
    for mu in family.members:
        p = mu.probs
        # mass of disagreement between every f in h and every g in cover
        f = h.members.astype(float)
        d = (f @ p)[:, None] + (c @ p)[None, :] - 2.0 * (f * p) @ c.T
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


def max_packing(
    h: HypothesisFamily, family: DistributionFamily, eps: float, tol: float = DEFAULT_TOL
) -> HypothesisFamily:
    """Greedy maximal set of members pairwise ``eps``-separated under the envelope."""
    if not eps > 0:
        raise InputError("eps must be positive")
    env = np.max([_pair_masses(h, mu.probs) for mu in family.members], axis=0)
    chosen = [0]
    for i in range(1, len(h)):
        if all(env[i, j] >= eps - tol for j in chosen):
            chosen.append(i)
    return h.subset(chosen)
