"""Protocol engine and adversaries.

Each round: the adversary picks a family member, the learner commits a
prediction function, an atom is drawn from the member, the adversary reveals
its label, and everybody updates (full information).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .learners import Learner
from .measure import (
    DistributionFamily,
    HypothesisFamily,
    atoms_of,
    littlestone_dimension,
    threshold_family,
    vc_dimension,
)
from .smoothness import FRAGMENTATION_CUTOFF, FragmentationWitness, fragmentation_number


# --------------------------------------------------------------------------- transcript


@dataclass
class Transcript:
    member_index: np.ndarray
    atom: np.ndarray
    label: np.ndarray
    prediction: np.ndarray
    loss: np.ndarray
    expected_loss: np.ndarray
    comparator_losses: np.ndarray
    dummy: np.ndarray | None = None
    realizable_target: int | None = None
    hits: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.atom.size

    @property
    def best_comparator_loss(self) -> int:
        return int(self.comparator_losses.min())

    @property
    def regret(self) -> float:
        return float(self.loss.sum()) - self.best_comparator_loss

    @property
    def expected_regret(self) -> float:
        return float(self.expected_loss.sum()) - self.best_comparator_loss

    @property
    def dummy_rounds(self) -> int:
        return int(self.dummy.sum()) if self.dummy is not None else 0

    def records(self):
        """Line records: round, member_index, atom, label, prediction, loss."""
        for t in range(len(self)):
            yield {
                "round": t,
                "member_index": int(self.member_index[t]),
                "atom": int(self.atom[t]),
                "label": int(self.label[t]),
                "prediction": int(self.prediction[t]),
                "loss": int(self.loss[t]),
            }


def comparator_losses(comparator: HypothesisFamily, atoms: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cumulative loss of every comparator hypothesis, by full enumeration."""
    return (comparator.members[:, atoms] != labels[None, :]).sum(axis=1)


def is_realized_by(comparator: HypothesisFamily, index: int, transcript: Transcript) -> bool:
    return bool(np.all(comparator.members[index, transcript.atom] == transcript.label))


# --------------------------------------------------------------------------- engine


class Adversary:
    kind = "abstract"
    realizable_target: int | None = None

    def begin(self, horizon: int) -> None:
        """Told the horizon before the first round."""

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def select(self, t: int, learner: Learner) -> int:
        raise NotImplementedError

    def label(self, t: int, atom: int, learner: Learner) -> int:
        raise NotImplementedError

    def finish(self) -> None:
        """Called after the last round (adversaries may settle their target)."""


def run_protocol(
    adversary: Adversary,
    learner: Learner,
    family: DistributionFamily,
    horizon: int,
    seed: int,
    comparator: HypothesisFamily,
    keep_masks: list[int] | None = None,
) -> Transcript:
    """Run ``horizon`` rounds; bit-deterministic given ``seed``.

    ``keep_masks[k]`` (optional) is the kept-atom mask of the coupling for
    member ``k``; rounds whose atom falls outside it are counted as dummy rounds.
    """
    if horizon < 1:
        raise InputError("horizon must be at least 1")
    if comparator.n != family.n:
        raise InputError("comparator and family live on different spaces")
    if getattr(adversary, "n", family.n) != family.n:
        raise InputError("adversary is bound to a different space")
    adv_ss, learn_ss, draw_ss = np.random.SeedSequence(seed).spawn(3)
    adversary.begin(horizon)
    adversary.reset(np.random.default_rng(adv_ss))
    learner.reset(np.random.default_rng(learn_ss))
    draws = np.random.default_rng(draw_ss).random(horizon)
    cdf = np.cumsum(family.matrix, axis=1)
    m, n = len(family), family.n

    members = np.empty(horizon, dtype=np.int64)
    atoms = np.empty(horizon, dtype=np.int64)
    labels = np.empty(horizon, dtype=np.int8)
    preds = np.empty(horizon, dtype=np.int8)
    exp_loss = np.empty(horizon)
    comp = np.zeros(len(comparator), dtype=np.int64)
    for t in range(horizon):
        k = adversary.select(t, learner)
        if not 0 <= k < m:
            raise InputError(f"adversary chose member {k} outside the family")
        f, p1 = learner.commit()
        x = min(int(np.searchsorted(cdf[k], draws[t], side="right")), n - 1)
        while family.matrix[k, x] == 0:  # rounding at the top of the cdf
            x -= 1
        y = int(adversary.label(t, x, learner))
        members[t], atoms[t], labels[t], preds[t] = k, x, y, f[x]
        exp_loss[t] = p1[x] if y == 0 else 1.0 - p1[x]
        comp += comparator.members[:, x] != y
        learner.update(x, y)
    adversary.finish()

    dummy = None
    if keep_masks is not None:
        keep = np.array([[(km >> a) & 1 for a in range(n)] for km in keep_masks], dtype=bool)
        dummy = ~keep[members, atoms]
    loss = (preds != labels).astype(np.int8)
    return Transcript(
        members, atoms, labels, preds, loss, exp_loss, comp, dummy,
        adversary.realizable_target, getattr(adversary, "hit_log", None),
    )


# --------------------------------------------------------------------------- i.i.d. / oblivious


class IIDAdversary(Adversary):
    """Oblivious adversary: a fixed member schedule and labels from a target with flip noise.

    ``schedule`` is a member index, a per-round sequence (cycled), or
    ``"random"`` for a uniformly random member each round.
    """

    kind = "iid"

    def __init__(self, family: DistributionFamily, target: np.ndarray, schedule=0, noise: float = 0.0,
                 target_index: int | None = None):
        if not 0 <= noise <= 1:
            raise InputError("noise must lie in [0, 1]")
        self.family = family
        self.n = family.n
        self.target = np.asarray(target, dtype=np.int8)
        if self.target.shape != (family.n,):
            raise InputError("target must label every atom")
        self.schedule = schedule
        self.noise = noise
        self.realizable_target = target_index if noise == 0 else None

    def select(self, t, learner):
        s = self.schedule
        if isinstance(s, str):
            if s != "random":
                raise InputError(f"unknown schedule {s!r}")
            return int(self.rng.integers(len(self.family)))
        if np.ndim(s):
            return int(s[t % len(s)])
        return int(s)

    def label(self, t, atom, learner):
        y = int(self.target[atom])
        if self.noise and self.rng.random() < self.noise:
            y = 1 - y
        return y


# --------------------------------------------------------------------------- threshold hiding


def _part_of(parts: list[int], n: int) -> np.ndarray:
    """Part index of every atom, ``-1`` outside all parts."""
    owner = np.full(n, -1, dtype=np.int64)
    for j, mask in enumerate(parts):
        for a in atoms_of(mask):
            if owner[a] != -1:
                raise InputError("parts must be disjoint")
            owner[a] = j
    return owner


def part_threshold_family(parts: list[int], n: int) -> HypothesisFamily:
    """Generalized thresholds over ordered parts: ``f_r`` labels parts ``0..r-1`` with 1."""
    owner = _part_of(parts, n)
    ranks = np.where(owner >= 0, owner, len(parts))
    return threshold_family(ranks)


def _threshold_index(comparator: HypothesisFamily, owner: np.ndarray, r: int) -> int:
    row = ((owner >= 0) & (owner < r)).astype(np.int8)
    return int(np.flatnonzero((comparator.members == row).all(axis=1))[0])


class ThresholdHidingAdversary(Adversary):
    """Binary search that hides a threshold over ordered disjoint parts.

    Candidate thresholds form ``[lo, hi]``, starting at ``[0, K]``. Each round
    the adversary plays the witness member of the part at the midpoint. A
    sample landing in that part gets the label opposite to the learner's
    likelier prediction there, which halves the interval. Samples landing in
    other parts get a label consistent with the interval (shrinking it if
    needed), so some threshold always explains the whole stream. Once the
    interval is a single threshold the adversary is an i.i.d. source
    labelled by it.
    """

    kind = "threshold-hiding"

    def __init__(self, family: DistributionFamily, parts: FragmentationWitness, depth: int, probe_budget: int = 1):
        if depth < 0:
            raise InputError("depth must be non-negative")
        needed = 2**depth - 1
        if parts.count < needed:
            raise InputError(f"depth {depth} needs {needed} disjoint parts, got {parts.count}")
        if probe_budget < 1:
            raise InputError("probe_budget must be at least 1")
        self.family = family
        self.n = family.n
        self.parts = list(parts.parts[:needed])
        self.witnesses = list(parts.witnesses[:needed])
        self.depth = depth
        self.probe_budget = probe_budget
        self.owner = _part_of(self.parts, family.n)
        self.comparator = part_threshold_family(self.parts, family.n)

    def reset(self, rng):
        super().reset(rng)
        self.lo, self.hi = 0, len(self.parts)
        self.halvings = 0
        self.realizable_target = None

    @property
    def settled(self) -> bool:
        return self.lo == self.hi

    def _midpoint(self) -> int:
        return (self.lo + self.hi + 1) // 2

    def select(self, t, learner):
        if self.settled:
            # i.i.d. phase: keep playing the first part's witness (member 0 without parts)
            return self.witnesses[0] if self.witnesses else 0
        return self.witnesses[self._midpoint() - 1]

    def _likelier_prediction(self, k: int, part: int, learner: Learner) -> int:
        """``argmax_z P(prediction = z, x in part)`` by replaying learner clones."""
        atoms = atoms_of(self.parts[part])
        mass = self.family.matrix[k, atoms]
        budget = 1 if learner.deterministic else self.probe_budget
        ones = 0.0
        for _ in range(budget):
            probe = learner.clone(int(self.rng.integers(2**63)))
            f, _ = probe.commit()
            ones += float(mass @ f[atoms])
        ones /= budget
        zeros = float(mass.sum()) - ones
        return 1 if ones > zeros else 0

    def label(self, t, atom, learner):
        j = int(self.owner[atom])
        if j < 0:
            return 0
        if self.settled:
            return int(j < self.lo)
        c = self._midpoint()
        if j == c - 1:
            y = 1 - self._likelier_prediction(self.witnesses[c - 1], j, learner)
            self.halvings += 1
        else:
            y = int(j < c)  # f_c decides atoms whose label is still open
        # keep only thresholds r consistent with part j labelled y: y = 1 iff r > j
        if y:
            self.lo = max(self.lo, j + 1)
        else:
            self.hi = min(self.hi, j)
        return y

    def finish(self):
        self.realizable_target = _threshold_index(self.comparator, self.owner, self.lo)


def make_threshold_hiding_adversary(
    family: DistributionFamily, disjoint_parts: FragmentationWitness, depth: int, probe_budget: int = 1
) -> ThresholdHidingAdversary:
    return ThresholdHidingAdversary(family, disjoint_parts, depth, probe_budget)


# --------------------------------------------------------------------------- fragmentation lower bound


def block_threshold_family(parts: list[int], n: int, d: int) -> tuple[HypothesisFamily, list[list[int]]]:
    """Product of threshold families over ``d`` contiguous blocks of parts.

    Block ``j`` contributes thresholds ``1[part position in block < r]``; a
    product hypothesis is the union of one threshold per block.
    """
    if d < 1 or d > len(parts):
        raise InputError("need 1 <= d <= number of parts")
    blocks = [list(map(int, b)) for b in np.array_split(np.arange(len(parts)), d)]
    rows = [np.zeros(n, dtype=np.int8)]
    for block in blocks:
        prefixes = [np.zeros(n, dtype=np.int8)]
        acc = np.zeros(n, dtype=np.int8)
        for j in block:
            acc = acc.copy()
            acc[atoms_of(parts[j])] = 1
            prefixes.append(acc)
        rows = [r | p for r in rows for p in prefixes]
    return HypothesisFamily(np.vstack(rows)), blocks


def threshold_ld(k: int) -> int:
    """Littlestone dimension of the ``k + 1`` thresholds over ``k`` ordered points."""
    return int(math.floor(math.log2(k + 1)))


class FragmentationAdversary(Adversary):
    """Random-label lower-bound adversary embedded on disjoint heavy parts.

    The effective horizon ``T' = ceil(eps T / 2)`` counts rounds whose sample
    hits the queried part. It is split into segments, one per level of each
    block's binary search; within a segment the adversary keeps querying the
    same part, and the majority hit label decides the branch. Every label is
    a fair coin, whether or not the sample hits.
    """

    kind = "fragmentation-lb"

    def __init__(self, family: DistributionFamily, witness: FragmentationWitness, d: int):
        self.family = family
        self.n = family.n
        self.eps = witness.eps
        self.witness = witness
        self.comparator, self.blocks = block_threshold_family(witness.parts, family.n, d)
        self.d = d
        self.levels = [(b, lvl) for b, block in enumerate(self.blocks) for lvl in range(threshold_ld(len(block)))]
        self.begin(1)

    def begin(self, horizon):
        self.horizon = horizon
        self.effective = max(1, math.ceil(self.eps * horizon / 2))
        self.segment = max(1, self.effective // max(1, len(self.levels)))

    def reset(self, rng):
        super().reset(rng)
        self.intervals = [[0, len(b)] for b in self.blocks]
        self.level = 0
        self.seg_hits = 0
        self.seg_ones = 0
        self.hits_total = 0
        self.hit_log = np.zeros(self.horizon, dtype=bool)
        self.last_part = self.blocks[0][0]

    def _current_part(self) -> int:
        if self.level >= len(self.levels):
            return self.last_part
        b, _ = self.levels[self.level]
        lo, hi = self.intervals[b]
        c = (lo + hi + 1) // 2
        return self.blocks[b][c - 1]

    def select(self, t, learner):
        self._part = self._current_part()
        return self.witness.witnesses[self._part]

    def label(self, t, atom, learner):
        y = int(self.rng.integers(2))
        if not (self.witness.parts[self._part] >> atom) & 1:
            return y
        self.hit_log[t] = True
        self.hits_total += 1
        if self.level < len(self.levels):
            self.seg_hits += 1
            self.seg_ones += y
            if self.seg_hits >= self.segment:
                b, _ = self.levels[self.level]
                lo, hi = self.intervals[b]
                c = (lo + hi + 1) // 2
                if 2 * self.seg_ones >= self.seg_hits:
                    self.intervals[b][0] = c
                else:
                    self.intervals[b][1] = c - 1
                self.last_part = self._part
                self.level += 1
                self.seg_hits = self.seg_ones = 0
        return y


def make_fragmentation_adversary(
    family: DistributionFamily, eps: float, d: int, cutoff: int = FRAGMENTATION_CUTOFF
) -> tuple[FragmentationAdversary, HypothesisFamily]:
    """Lower-bound adversary and its block-threshold comparator (VC dimension ``<= d``)."""
    if d < 1:
        raise InputError("d must be at least 1")
    mode = "exact" if family.n <= cutoff else "greedy"
    witness = fragmentation_number(family, eps, mode=mode, cutoff=cutoff)
    if witness.count < 3 * d:
        raise InputError(f"fragmentation number {witness.count} is below 3d = {3 * d}")
    adv = FragmentationAdversary(family, witness, d)
    if vc_dimension(adv.comparator, cap=d + 1) > d:
        raise AssertionError("block-threshold comparator exceeds VC dimension d")
    return adv, adv.comparator


def block_ld_formula(blocks: list[list[int]]) -> int:
    return sum(threshold_ld(len(b)) for b in blocks)


def comparator_ld(adv: FragmentationAdversary) -> int:
    return littlestone_dimension(adv.comparator)
