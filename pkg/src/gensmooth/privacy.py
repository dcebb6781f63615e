"""Private learning with the exponential mechanism, exact privacy audits, and
the reduction from private threshold learning over disjoint parts.
"""

from __future__ import annotations

import functools
import itertools
import math
import operator
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError, InputError
from .measure import DEFAULT_TOL, Distribution, DistributionFamily, HypothesisFamily, atoms_of
from .smoothness import ToleranceProfile

DP_ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class LabeledDataset:
    examples: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ex = tuple((int(a), int(y)) for a, y in self.examples)
        if any(a < 0 for a, _ in ex):
            raise InputError("atoms must be non-negative")
        if any(y not in (0, 1) for _, y in ex):
            raise InputError("labels must be 0 or 1")
        object.__setattr__(self, "examples", ex)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def atoms(self) -> np.ndarray:
        return np.array([a for a, _ in self.examples], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.examples], dtype=np.int8)


@dataclass(frozen=True)
class MechanismSpec:
    cover: HypothesisFamily
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise InputError("alpha must be non-negative")


def error_counts(cover: HypothesisFamily, data: LabeledDataset) -> np.ndarray:
    if len(data) == 0:
        return np.zeros(len(cover), dtype=np.int64)
    atoms = data.atoms
    if atoms.max() >= cover.n:
        raise InputError("dataset atom outside the hypothesis space")
    return (cover.members[:, atoms] != data.labels[None, :]).sum(axis=1)


def _gibbs(errors: np.ndarray, alpha: float) -> np.ndarray:
    logits = -0.5 * alpha * np.asarray(errors, dtype=float)
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def exp_mech_output_law(spec: MechanismSpec, data: LabeledDataset) -> np.ndarray:
    """``P(h)`` proportional to ``exp(-alpha * errors(h) / 2)`` over the cover."""
    return _gibbs(error_counts(spec.cover, data), spec.alpha)


def exp_mech_learn(spec: MechanismSpec, data: LabeledDataset, seed: int) -> int:
    law = exp_mech_output_law(spec, data)
    return int(np.random.default_rng(seed).choice(law.size, p=law))


def erm_output_law(spec: MechanismSpec, data: LabeledDataset) -> np.ndarray:
    """Deterministic lowest-index error minimiser, as a one-hot law (not private)."""
    law = np.zeros(len(spec.cover))
    law[int(np.argmin(error_counts(spec.cover, data)))] = 1.0
    return law


# --------------------------------------------------------------------------- audit


@dataclass
class DPAudit:
    max_log_ratio: float
    passed: bool
    alpha_claim: float
    witness: tuple[LabeledDataset, LabeledDataset, int] | None
    datasets: int


def verify_dp(
    mechanism: MechanismSpec | Callable[[LabeledDataset], np.ndarray],
    domain_size: int,
    m: int,
    alpha_claim: float,
    cover_size: int | None = None,
    tol: float = 1e-9,
) -> DPAudit:
    """Exact pure-DP audit by enumerating every dataset of length ``m``.

    Datasets are sequences over ``[domain_size] x {0, 1}``; neighbours differ
    in one entry. With ``beta = 0`` singleton output events suffice, so the
    audit is the largest ``|log P(h|S) - log P(h|S')|``. The witness is the
    first neighbouring pair (and output) attaining it.
    """
    if domain_size < 1 or m < 1:
        raise InputError("domain_size and m must be at least 1")
    values = 2 * domain_size
    if values**m > DP_ENUMERATION_GUARD:
        raise CapacityError(f"(2 * {domain_size})^{m} datasets exceed the enumeration guard")
    law_of = (lambda d: exp_mech_output_law(mechanism, d)) if isinstance(mechanism, MechanismSpec) else mechanism
    entries = [(a, y) for a in range(domain_size) for y in (0, 1)]
    laws = np.array([law_of(LabeledDataset(ds)) for ds in itertools.product(entries, repeat=m)], dtype=float)
    if cover_size is not None and laws.shape[1] != cover_size:
        raise InputError("mechanism output size does not match cover_size")
    if not np.allclose(laws.sum(axis=1), 1.0, atol=1e-9):
        raise InputError("mechanism output laws must sum to 1")
    with np.errstate(divide="ignore"):
        logs = np.log(laws).reshape((values,) * m + (laws.shape[1],))
    best, where = 0.0, None
    for axis in range(m):
        hi, lo = logs.max(axis=axis), logs.min(axis=axis)
        with np.errstate(invalid="ignore"):
            gap = np.where(np.isneginf(hi), 0.0, hi - lo)
        top = float(gap.max())
        if top > best:
            best, where = top, (axis, np.unravel_index(int(np.argmax(gap)), gap.shape))
    witness = None
    if where is not None:
        axis, idx = where
        rest, h = idx[:-1], int(idx[-1])
        column = logs[(*rest[:axis], slice(None), *rest[axis:], h)]
        a, b = int(np.argmax(column)), int(np.argmin(column))

        def dataset(v: int) -> LabeledDataset:
            slots = list(rest[:axis]) + [v] + list(rest[axis:])
            return LabeledDataset(tuple(entries[s] for s in slots))

        witness = (dataset(a), dataset(b), h)
    return DPAudit(best, best <= alpha_claim + tol, alpha_claim, witness, values**m)


# --------------------------------------------------------------------------- reduction


def conditional_means(h: np.ndarray, parts: Sequence[int], dists: Sequence[Distribution]) -> np.ndarray:
    """``E_{x ~ dists[i]}[h(x) | x in parts[i]]`` for every part, exactly."""
    out = np.empty(len(parts))
    for i, (mask, mu) in enumerate(zip(parts, dists)):
        atoms = atoms_of(mask)
        mass = mu.probs[atoms]
        if mass.sum() <= 0:
            raise InputError(f"part {i} has zero mass under its distribution")
        out[i] = float(mass @ np.asarray(h)[atoms]) / float(mass.sum())
    return out


def reduce_to_threshold_learner(
    private_learner: Callable[[LabeledDataset, int], np.ndarray],
    parts: Sequence[int],
    dists: Sequence[Distribution],
    eta: float,
    seed: int,
    infinite_rule: bool = False,
    prefix: int = 0,
) -> Callable[[Sequence[tuple[int, int]]], np.ndarray]:
    """Turn a learner over the base space into a learner for thresholds on ``[K]``.

    Each example ``(a, y)`` becomes ``(x, y * 1[x in parts[a]])`` with
    ``x ~ dists[a]``; the base learner's hypothesis is read back per part by
    thresholding its conditional mean at 1/2. With ``infinite_rule`` a lifted
    point inside ``prefix`` (union of lower-indexed sets) is always labelled 1.
    ``private_learner(data, seed)`` must return a 0/1 labeling of the atoms.
    """
    if len(parts) != len(dists) or not parts:
        raise InputError("need one distribution per part and at least one part")
    n = dists[0].n
    for i, (mask, mu) in enumerate(zip(parts, dists)):
        if mu.mass(mask) < eta - DEFAULT_TOL:
            raise InputError(f"part {i} carries less than eta under its distribution")
    if sum(bin(p).count("1") for p in parts) != bin(functools.reduce(operator.or_, parts, 0)).count("1"):
        raise InputError("parts must be disjoint")
    cdfs = [np.cumsum(mu.probs) for mu in dists]
    ss = np.random.SeedSequence(seed)

    def learner(kdata: Sequence[tuple[int, int]]) -> np.ndarray:
        rng = np.random.default_rng(ss.spawn(1)[0])
        lifted = []
        for a, y in kdata:
            if not 0 <= a < len(parts):
                raise InputError(f"threshold example {a} outside [K]")
            x = min(int(np.searchsorted(cdfs[a], rng.random(), side="right")), n - 1)
            y2 = int(y) * ((parts[a] >> x) & 1)
            if infinite_rule and (prefix >> x) & 1:
                y2 = 1
            lifted.append((x, y2))
        h = private_learner(LabeledDataset(tuple(lifted)), int(rng.integers(2**63)))
        return (conditional_means(h, parts, dists) >= 0.5).astype(np.int8)

    return learner


def convexify(family: DistributionFamily, max_size: int = 2) -> DistributionFamily:
    """Add uniform mixtures of every group of at most ``max_size`` members."""
    if max_size < 1:
        raise InputError("max_size must be at least 1")
    mats = family.matrix
    rows = [mats[list(c)].mean(axis=0) for k in range(1, max_size + 1)
            for c in itertools.combinations(range(len(family)), k)]
    return DistributionFamily(tuple(Distribution(r / r.sum()) for r in rows))


# --------------------------------------------------------------------------- sample size


@dataclass
class SampleSize:
    m: int
    statistical: float
    privacy: float
    rho_inverse: float
    constant: float
    kasiviswanathan_form: float | None


def required_sample_size(
    d: int,
    eps: float,
    delta: float,
    alpha: float,
    profile: ToleranceProfile,
    constant: float = 1.0,
    cover_size: int | None = None,
) -> SampleSize:
    """``C (d log(1/eps) + log(1/delta)) / eps^2 + C d log(1/rho^-1(eps)) / (alpha eps)``.

    ``rho^-1(eps)`` is the largest breakpoint with ``rho <= eps``. With
    ``cover_size`` the finite-class form ``(d + log(1/delta)) / eps^2 +
    log|cover| / (alpha eps)`` is reported as well.
    """
    if not (0 < eps <= 1 and 0 < delta < 1 and alpha > 0 and d >= 0):
        raise InputError("need 0 < eps <= 1, 0 < delta < 1, alpha > 0, d >= 0")
    z = profile.inverse(eps)
    if z <= 0:
        raise InputError("the profile never drops to eps: rho^-1(eps) is 0")
    stat = constant * (d * math.log(1 / eps) + math.log(1 / delta)) / eps**2
    priv = constant * d * math.log(1 / z) / (alpha * eps)
    kv = None
    if cover_size is not None:
        kv = (d + math.log(1 / delta)) / eps**2 + math.log(cover_size) / (alpha * eps)
    return SampleSize(math.ceil(stat + priv), stat, priv, z, constant, kv)


def excess_error(
    h: np.ndarray, target: np.ndarray, mu: Distribution, noise: float, comparator: HypothesisFamily
) -> float:
    """Exact excess risk of ``h`` on ``mu`` with labels from ``target`` flipped w.p. ``noise``."""

    def risk(f):
        return noise + (1 - 2 * noise) * float(mu.probs @ (np.asarray(f) != target))

    best = min(risk(f) for f in comparator.members)
    return risk(h) - best


@dataclass
class AccuracyTrials:
    excess: np.ndarray
    sampled: np.ndarray
    m: int

    def success_rate(self, bound: float, tol: float = DEFAULT_TOL) -> float:
        return float(np.mean(self.excess <= bound + tol))


def accuracy_trials(
    spec: MechanismSpec,
    mu: Distribution,
    target: np.ndarray,
    noise: float,
    m: int,
    trials: int,
    seed: int,
    comparator: HypothesisFamily | None = None,
) -> AccuracyTrials:
    """Run the exponential mechanism on ``trials`` fresh datasets of size ``m``.

    Examples are ``x ~ mu`` labelled by ``target`` with flip probability
    ``noise``. Excess error is exact, against the best hypothesis of
    ``comparator`` (the cover itself by default).
    """
    if m < 0 or trials < 1:
        raise InputError("need m >= 0 and trials >= 1")
    cover = spec.cover
    comparator = comparator or cover
    target = np.asarray(target, dtype=np.int8)
    rng = np.random.default_rng(seed)
    n = mu.n
    atoms = rng.choice(n, size=(trials, m), p=mu.probs)
    flips = rng.random((trials, m)) < noise
    labels = target[atoms] ^ flips
    # per-trial counts of (atom, label) pairs
    keys = atoms * 2 + labels
    counts = np.zeros((trials, 2 * n), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(trials), m), keys.ravel()), 1)
    c0, c1 = counts[:, 0::2], counts[:, 1::2]
    hyp = cover.members.astype(np.int64)
    errors = c0 @ hyp.T + c1 @ (1 - hyp).T
    law = _gibbs(errors, spec.alpha)
    u = rng.random(trials)
    sampled = np.minimum((law.cumsum(axis=1) < u[:, None]).sum(axis=1), len(cover) - 1)
    disagree = (cover.members != target[None, :]).astype(float) @ mu.probs
    best = float(((comparator.members != target[None, :]).astype(float) @ mu.probs).min())
    excess = (1 - 2 * noise) * (disagree[sampled] - best)
    return AccuracyTrials(excess, sampled, m)
