"""Tolerance profiles, fragmentation numbers and smoothness certificates.

All exact routines enumerate every subset of the space through the subset-mass
tables of :mod:`gensmooth.measure`, so they are limited to small spaces and
raise :class:`CapacityError` beyond their cutoffs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError, InputError
from .measure import (
    DEFAULT_TOL,
    EXHAUSTIVE_CUTOFF,
    Distribution,
    DistributionFamily,
    atoms_of,
    full_mask,
    mask_from_atoms,
    subset_masses,
)

FRAGMENTATION_CUTOFF = 15


# --------------------------------------------------------------------------- profiles


@dataclass(frozen=True, eq=False)
class ToleranceProfile:
    """Non-decreasing step function on [0, 1].

    A breakpoint ``(z_k, v_k)`` means the profile equals ``v_k`` on
    ``(z_{k-1}, z_k]``. Above the last breakpoint the profile is
    ``max(1, v_last)``, which is always a valid bound on a probability.
    When ``fn`` is given it is evaluated directly and the breakpoints are only
    its samples on a grid (used for the ``well_behaved`` flag).
    """

    breakpoints: tuple[tuple[float, float], ...]
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    exact: bool = True

    def __post_init__(self):
        bps = tuple((float(z), float(v)) for z, v in self.breakpoints)
        if not bps:
            raise InputError("a tolerance profile needs at least one breakpoint")
        zs = np.array([z for z, _ in bps])
        vs = np.array([v for _, v in bps])
        if np.any(np.diff(zs) <= 0) or zs[0] < 0 or zs[-1] > 1 + 1e-12:
            raise InputError("breakpoints must be strictly ascending inside [0, 1]")
        if np.any(vs < 0) or np.any(np.diff(vs) < -1e-12):
            raise InputError("profile values must be non-negative and non-decreasing")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def from_callable(
        cls, fn: Callable[[np.ndarray], np.ndarray], grid: Sequence[float] | None = None
    ) -> "ToleranceProfile":
        grid = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, float)
        vals = np.asarray(fn(grid), dtype=float)
        return cls(tuple(zip(grid.tolist(), vals.tolist())), fn=fn)

    @property
    def zs(self) -> np.ndarray:
        return np.array([z for z, _ in self.breakpoints])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints])

    def __call__(self, z, tol: float = DEFAULT_TOL):
        if self.fn is not None:
            return self.fn(np.asarray(z, dtype=float)) if np.ndim(z) else float(self.fn(np.float64(z)))
        zs, vs = self.zs, self.values
        top = max(1.0, vs[-1])
        ext = np.append(vs, top)
        idx = np.searchsorted(zs, np.asarray(z, dtype=float) - tol, side="left")
        out = ext[idx]
        return out if np.ndim(z) else float(out)

    @property
    def well_behaved(self) -> bool:
        """``rho(z)/z`` non-increasing over the positive breakpoints."""
        zs, vs = self.zs, self.values
        pos = zs > 0
        ratios = vs[pos] / zs[pos]
        return bool(np.all(np.diff(ratios) <= 1e-9 * np.maximum(1.0, ratios[:-1])))

    def inverse(self, eps: float, tol: float = DEFAULT_TOL) -> float:
        """Largest breakpoint ``z`` with ``rho(z) <= eps`` (0 when none qualifies)."""
        zs = self.zs
        ok = self(zs) <= eps + tol
        return float(zs[ok].max()) if ok.any() else 0.0


def linear_profile(slope: float, grid: Sequence[float] | None = None) -> ToleranceProfile:
    """``rho(z) = min(slope * z, 1)``: classical smoothness with parameter ``1/slope``."""
    return ToleranceProfile.from_callable(lambda z: np.minimum(slope * z, 1.0), grid)


def tolerance_profile(
    family: DistributionFamily,
    mu0: Distribution,
    grid: Sequence[float],
    cutoff: int = EXHAUSTIVE_CUTOFF,
    tol: float = DEFAULT_TOL,
) -> ToleranceProfile:
    """Smallest valid tolerance on a grid: max member mass over sets with base mass <= eps.

    Exact for ``n <= cutoff``; above it a density-ordering greedy gives a lower
    bound and the returned profile is flagged ``exact=False``.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size == 0 or grid[0] < 0 or grid[-1] > 1:
        raise InputError("grid must be a non-empty subset of [0, 1]")
    if mu0.n != family.n:
        raise InputError("base measure and family live on different spaces")
    if family.n <= cutoff:
        base = mu0.table
        order = np.argsort(base, kind="stable")
        sorted_base = base[order]
        prefix = np.maximum.accumulate(family.envelope_table[order])
        counts = np.searchsorted(sorted_base, grid + tol, side="right")
        values = prefix[counts - 1]  # the empty set always qualifies
        exact = True
    else:
        values = np.array([_greedy_tolerance(family, mu0, eps, tol) for eps in grid])
        values = np.maximum.accumulate(values)
        exact = False
    values = np.minimum(values, 1.0)
    return ToleranceProfile(tuple(zip(grid.tolist(), values.tolist())), exact=exact)


def well_behaved_majorant(
    family: DistributionFamily, mu0: Distribution, grid: Sequence[float] | None = None
) -> ToleranceProfile:
    """Least well-behaved profile valid for ``(family, mu0)``.

    ``rho(z) = max_A envelope(A) * min(1, z / mu0(A))``: each term is
    non-decreasing with ``term / z`` non-increasing, and so is their maximum.
    Sets with ``mu0(A) = 0`` but positive envelope make every profile invalid
    and are rejected.
    """
    env, base = family.envelope_table, mu0.table
    if np.any((base <= 0) & (env > DEFAULT_TOL)):
        raise InputError("some member charges a set of base mass 0")
    keep = base > 0
    e, b = env[keep], base[keep]
    # only the Pareto frontier (largest envelope for each base mass) matters
    order = np.lexsort((-e, b))
    e, b = e[order], b[order]
    front = np.flatnonzero(e > np.concatenate(([-1.0], np.maximum.accumulate(e)[:-1])))
    e, b = e[front], b[front]

    def rho(z):
        z = np.asarray(z, dtype=float)
        vals = (e[None, :] * np.minimum(1.0, z.reshape(-1, 1) / b[None, :])).max(axis=1)
        return vals.reshape(z.shape)

    return ToleranceProfile.from_callable(rho, grid)


def _greedy_tolerance(family: DistributionFamily, mu0: Distribution, eps: float, tol: float) -> float:
    base = mu0.probs
    best = 0.0
    for mu in family.members:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(base > 0, mu.probs / base, np.where(mu.probs > 0, np.inf, 0.0))
        budget, got = eps + tol, 0.0
        for x in np.argsort(-ratio, kind="stable"):
            if base[x] <= budget:
                budget -= base[x]
                got += mu.probs[x]
        best = max(best, got)
    return best


# --------------------------------------------------------------------------- certificates


@dataclass
class ScaleRecord:
    """One scale of the certificate construction."""

    eps: float
    selections: list[tuple[int, int]]  # (member index, subset mask)
    finite_measure: np.ndarray
    total: float
    total_used: float
    delta: float


@dataclass
class SmoothnessCertificate:
    base: Distribution
    profile: ToleranceProfile
    verified: bool
    witness: int | None = None
    scales: list[ScaleRecord] = field(default_factory=list)
    eq1_holds: bool | None = None


def verify_certificate(
    family: DistributionFamily,
    mu0: Distribution,
    profile: ToleranceProfile,
    tol: float = DEFAULT_TOL,
) -> SmoothnessCertificate:
    """Check ``mu(A) <= rho(mu0(A))`` for every member and every subset.

    On failure the witness is the smallest violating mask.
    """
    if mu0.n != family.n:
        raise InputError("base measure and family live on different spaces")
    bound = profile(mu0.table)
    bad = np.flatnonzero(family.envelope_table > bound + tol)
    witness = int(bad[0]) if bad.size else None
    return SmoothnessCertificate(mu0, profile, witness is None, witness)


def verify_implication(
    family: DistributionFamily,
    base: Distribution,
    small: float,
    bound: float,
    tol: float = DEFAULT_TOL,
) -> int | None:
    """Smallest mask with ``base(A) <= small`` but envelope above ``bound``; ``None`` if none."""
    bad = np.flatnonzero((base.table <= small + tol) & (family.envelope_table > bound + tol))
    return int(bad[0]) if bad.size else None


def _check_eps_sequence(eps_sequence: Sequence[float]) -> list[float]:
    eps = [float(e) for e in eps_sequence]
    if not eps:
        raise InputError("eps_sequence must not be empty")
    if any(not 0 < e <= 1 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputError("eps_sequence must be strictly decreasing inside (0, 1]")
    return eps


def _certificate_scale(family: DistributionFamily, eps: float, tol: float) -> tuple[list, np.ndarray]:
    """Greedy selections at one scale; returns them with the dominating finite measure.

    The running table ``weighted`` holds ``sum_{j<i} 2^(i-j) mu_j(A)``; a pair
    ``(mu, A)`` is admissible when ``mu(A) >= eps`` and
    ``mu(A) >= (2/eps) * weighted(A)``.
    """
    tables = family.tables
    weighted_table = np.zeros(tables.shape[1])
    weighted_atoms = np.zeros(family.n)
    selections: list[tuple[int, int]] = []
    guard = int(4 * len(family) / eps) + 4
    while True:
        ok = (tables >= eps - tol) & (tables >= (2.0 / eps) * weighted_table - tol)
        flat = np.flatnonzero(ok)  # row-major: member first, then mask
        if flat.size == 0:
            break
        k, mask = divmod(int(flat[0]), tables.shape[1])
        selections.append((k, mask))
        if len(selections) > guard:
            raise RuntimeError("certificate construction failed to terminate")
        weighted_table = 2.0 * (weighted_table + tables[k])
        weighted_atoms = 2.0 * (weighted_atoms + family.matrix[k])
    if not selections:
        # nothing carries eps mass: any finite measure satisfies the envelope bound
        return selections, family.mixture().probs.copy()
    return selections, (2.0 / eps) * weighted_atoms


def construct_certificate(
    family: DistributionFamily,
    eps_sequence: Sequence[float],
    tol: float = DEFAULT_TOL,
) -> SmoothnessCertificate:
    """Build a base measure and step tolerance for ``family`` over the given scales.

    For each scale the selected pairs yield a finite measure ``M`` with
    ``envelope(A) <= eps + M(A)``. Normalising ``M = C * nu``, forcing ``C``
    non-decreasing, mixing the ``nu`` with weights ``2^-i`` and placing the
    steps at ``eps_i / (2^i C_i)`` gives the profile; the result is then
    verified over every subset.
    """
    eps_list = _check_eps_sequence(eps_sequence)
    env = family.envelope_table
    scales: list[ScaleRecord] = []
    eq1 = True
    running = 0.0
    nus = []
    for i, eps in enumerate(eps_list, start=1):
        selections, measure = _certificate_scale(family, eps, tol)
        total = float(measure.sum())
        eq1 &= bool(np.all(env <= eps + subset_masses(measure) + tol * max(1.0, total)))
        running = max(running, total)
        nus.append(measure / total)
        scales.append(ScaleRecord(eps, selections, measure, total, running, eps / (2**i * running)))
    depth = len(eps_list)
    weights = np.array([2.0**-i for i in range(1, depth + 1)])
    mu0 = Distribution(np.clip((weights / weights.sum()) @ np.vstack(nus), 0.0, 1.0))
    breakpoints = [(0.0, eps_list[-1])]
    breakpoints += [(s.delta, 2 * s.eps) for s in reversed(scales)]
    breakpoints.append((1.0, 2.0))
    profile = ToleranceProfile(tuple(breakpoints))
    cert = verify_certificate(family, mu0, profile, tol)
    cert.scales = scales
    cert.eq1_holds = eq1
    return cert


# --------------------------------------------------------------------------- fragmentation


@dataclass
class FragmentationWitness:
    count: int
    parts: list[int]
    witnesses: list[int]
    eps: float
    exact: bool = True

    @property
    def lower_bound(self) -> bool:
        return not self.exact


def _minimal_feasible(feasible: np.ndarray, n: int) -> np.ndarray:
    minimal = feasible.copy()
    masks = np.arange(feasible.size)
    for i in range(n):
        bit = 1 << i
        has = (masks & bit) != 0
        minimal[has] &= ~feasible[masks[has] ^ bit]
    return np.flatnonzero(minimal)


def fragmentation_number(
    family: DistributionFamily,
    eps: float,
    mode: str = "exact",
    cutoff: int = FRAGMENTATION_CUTOFF,
    tol: float = DEFAULT_TOL,
) -> FragmentationWitness:
    """Maximum number of disjoint sets each carrying ``eps`` envelope mass.

    ``mode="exact"`` runs a dynamic program over subsets: the lowest atom of the
    remaining set is either discarded or belongs to an inclusion-minimal
    feasible part. ``mode="greedy"`` returns a feasible packing (lower bound).
    """
    if not 0 < eps:
        raise InputError("eps must be positive")
    if mode == "greedy":
        return _greedy_fragmentation(family, eps, tol)
    if mode != "exact":
        raise InputError(f"unknown mode {mode!r}")
    n = family.n
    if n > cutoff:
        raise CapacityError(f"exact fragmentation needs n <= {cutoff}, got {n}")
    env = family.envelope_table
    minimal = _minimal_feasible(env >= eps - tol, n)
    lowest = np.array([(m & -m).bit_length() - 1 for m in minimal.tolist()], dtype=np.int64)
    by_low = [minimal[lowest == i] for i in range(n)]
    size = 1 << n
    best = np.zeros(size, dtype=np.int64)
    choice = np.full(size, -1, dtype=np.int64)  # part taken at this state, -1 = drop lowest atom
    for s in range(1, size):
        i = (s & -s).bit_length() - 1
        best[s] = best[s ^ (1 << i)]
        cand = by_low[i]
        if cand.size:
            cand = cand[(cand & ~s) == 0]
            if cand.size:
                vals = 1 + best[s ^ cand]
                k = int(np.argmax(vals))
                if vals[k] >= best[s]:
                    best[s], choice[s] = vals[k], cand[k]
    parts = []
    s = full_mask(n)
    while s:
        if choice[s] >= 0:
            parts.append(int(choice[s]))
            s ^= int(choice[s])
        else:
            s ^= s & -s
    return FragmentationWitness(int(best[-1]), parts, _witness_members(family, parts), eps, True)


def _witness_members(family: DistributionFamily, parts: list[int]) -> list[int]:
    out = []
    for p in parts:
        masses = family.matrix[:, atoms_of(p)].sum(axis=1)
        out.append(int(np.argmax(masses)))
    return out


def _greedy_fragmentation(family: DistributionFamily, eps: float, tol: float) -> FragmentationWitness:
    remaining = np.ones(family.n, dtype=bool)
    parts: list[int] = []
    while True:
        best = None
        for k, mu in enumerate(family.members):
            p = np.where(remaining, mu.probs, 0.0)
            if p.sum() < eps - tol:
                continue
            order = np.argsort(-p, kind="stable")
            cum = np.cumsum(p[order])
            size = int(np.searchsorted(cum, eps - tol)) + 1
            if best is None or size < best[0]:
                best = (size, k, order[:size])
        if best is None:
            break
        parts.append(mask_from_atoms(best[2]))
        remaining[best[2]] = False
    return FragmentationWitness(len(parts), parts, _witness_members(family, parts), eps, False)


# --------------------------------------------------------------------------- scaled base


@dataclass
class ScaledBase:
    distribution: Distribution
    iterations: int
    selections: list[tuple[int, int]]
    fragmentation: int
    threshold: float  # eps / N^2
    verified: bool
    witness: int | None = None


def construct_scaled_base(
    family: DistributionFamily,
    eps: float,
    fragmentation: int | None = None,
    tol: float = DEFAULT_TOL,
) -> ScaledBase:
    """Base measure such that ``base(A) <= eps/N^2`` forces ``envelope(A) <= 2 eps``.

    Pairs ``(mu_i, A_i)`` are chosen while some set has ``mu(A) >= 2 eps`` and
    carries at most ``eps/N`` total mass under the members already chosen; the
    base is their uniform mixture. ``N`` is the exact fragmentation number.
    """
    if not 0 < eps <= 1:
        raise InputError("eps must lie in (0, 1]")
    if fragmentation is None:
        fragmentation = fragmentation_number(family, eps).count
    big_n = max(int(fragmentation), 1)
    tables = family.tables
    charged = np.zeros(tables.shape[1])
    selections: list[tuple[int, int]] = []
    while len(selections) <= big_n:
        ok = (tables >= 2 * eps - tol) & (charged <= eps / big_n + tol)
        flat = np.flatnonzero(ok)
        if flat.size == 0:
            break
        k, mask = divmod(int(flat[0]), tables.shape[1])
        selections.append((k, mask))
        charged = charged + tables[k]
    if selections:
        dist = Distribution(np.mean([family.matrix[k] for k, _ in selections], axis=0))
    else:
        dist = family.mixture()
    threshold = eps / big_n**2
    witness = verify_implication(family, dist, threshold, 2 * eps, tol)
    return ScaledBase(dist, len(selections), selections, int(fragmentation), threshold,
                      witness is None, witness)


# --------------------------------------------------------------------------- Turán refinement


def turan_refine(
    sets: Sequence[int],
    dists: Sequence[Distribution],
    eps: float,
    delta: float,
    tol: float = DEFAULT_TOL,
) -> list[int]:
    """Indices of a large sub-collection with pairwise cross-mass below ``delta``.

    Conflict edges join ``i`` and ``j`` when either distribution puts at least
    ``delta`` on the other's set; a greedy minimum-degree independent set is
    returned (size at least ``N / (1 + average degree)``).
    """
    sets = [int(s) for s in sets]
    if len(sets) != len(dists):
        raise InputError("sets and dists must have the same length")
    if not 0 < delta <= 1:
        raise InputError("delta must lie in (0, 1]")
    for i, a in enumerate(sets):
        for b in sets[i + 1 :]:
            if a & b:
                raise InputError("sets must be pairwise disjoint")
    cross = np.array([[d.mass(s) for s in sets] for d in dists])
    if np.any(np.diag(cross) < eps - tol):
        raise InputError("every distribution must put at least eps on its own set")
    adj = (cross >= delta - tol) | (cross.T >= delta - tol)
    np.fill_diagonal(adj, False)
    alive = set(range(len(sets)))
    chosen = []
    while alive:
        v = min(alive, key=lambda u: (sum(adj[u, w] for w in alive), u))
        chosen.append(v)
        alive -= {v} | {w for w in alive if adj[v, w]}
    return sorted(chosen)


def conflict_graph(sets: Sequence[int], dists: Sequence[Distribution], delta: float) -> np.ndarray:
    cross = np.array([[d.mass(s) for s in sets] for d in dists])
    adj = (cross >= delta) | (cross.T >= delta)
    np.fill_diagonal(adj, False)
    return adj
