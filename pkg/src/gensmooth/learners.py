"""Online learners driven by the protocol engine.

A learner commits a prediction function each round, is shown the drawn atom
and its label, and updates. ``commit`` returns the realized labeling plus the
per-atom probability of predicting 1, so the engine can record the expected
loss next to the realized one.
"""

from __future__ import annotations

import copy
import math

import numpy as np

from .errors import InputError
from .measure import DEFAULT_TOL, CoverResult, Distribution, DistributionFamily, HypothesisFamily, build_uniform_cover
from .smoothness import ToleranceProfile


class Learner:
    kind = "abstract"
    deterministic = True

    def reset(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def commit(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def update(self, atom: int, label: int) -> None:
        raise NotImplementedError

    def clone(self, seed: int | None = None) -> "Learner":
        """State snapshot with a fresh random stream (used by replay probes)."""
        twin = copy.deepcopy(self)
        twin.rng = np.random.default_rng(seed)
        return twin


class ConstantLearner(Learner):
    kind = "constant"

    def __init__(self, n: int, label: int = 0):
        if label not in (0, 1):
            raise InputError("label must be 0 or 1")
        self.labels = np.full(n, label, dtype=np.int8)
        self.rng = np.random.default_rng(0)

    def commit(self):
        return self.labels, self.labels.astype(float)

    def update(self, atom, label):
        pass


class ERMLearner(Learner):
    """Lowest-index consistent hypothesis, else the lowest-index loss minimiser."""

    kind = "erm"

    def __init__(self, h: HypothesisFamily):
        self.h = h
        self.rng = np.random.default_rng(0)
        self.losses = np.zeros(len(h), dtype=np.int64)

    def reset(self, rng):
        super().reset(rng)
        self.losses[:] = 0

    @property
    def version_space(self) -> np.ndarray:
        return np.flatnonzero(self.losses == 0)

    def choice(self) -> int:
        # argmin already breaks ties by lowest index, and loss 0 is the minimum when any is consistent
        return int(np.argmin(self.losses))

    def commit(self):
        row = self.h.members[self.choice()]
        return row, row.astype(float)

    def update(self, atom, label):
        self.losses += self.h.members[:, atom] != label


def make_erm_learner(h: HypothesisFamily) -> ERMLearner:
    return ERMLearner(h)


class HedgeLearner(Learner):
    """Exponential weights over a finite set of experts, predicting with a sampled expert."""

    kind = "hedge"
    deterministic = False

    def __init__(self, experts: HypothesisFamily, rate: float, horizon: int | None = None):
        if rate < 0:
            raise InputError("rate must be non-negative")
        self.experts = experts
        self.rate = float(rate)
        self.horizon = horizon
        self.rng = np.random.default_rng(0)
        self._clear()

    def _clear(self):
        k = len(self.experts)
        self.log_weights = np.zeros(k)
        self.expert_losses = np.zeros(k)
        self.expected_loss = 0.0
        self.rounds = 0

    def reset(self, rng):
        super().reset(rng)
        self._clear()

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def commit(self):
        w = self.weights
        k = int(self.rng.choice(len(w), p=w))
        return self.experts.members[k], w @ self.experts.members

    def update(self, atom, label):
        loss = (self.experts.members[:, atom] != label).astype(float)
        self.expected_loss += float(self.weights @ loss)
        self.expert_losses += loss
        self.log_weights -= self.rate * loss
        self.rounds += 1

    def regret_bound(self) -> float:
        """``ln K / rate + rate * T / 8``; equals ``sqrt(T/2 ln K)`` at the tuned rate."""
        k = len(self.experts)
        if k == 1:
            return 0.0
        t = self.rounds
        if self.rate == 0:
            return float(t)
        return math.log(k) / self.rate + self.rate * t / 8.0

    def bound_holds(self, tol: float = 1e-9) -> bool:
        return self.expected_loss <= self.expert_losses.min() + self.regret_bound() + tol


def tuned_rate(k: int, horizon: int) -> float:
    return math.sqrt(8.0 * math.log(k) / horizon) if k > 1 else 0.0


def make_hedge_learner(experts: HypothesisFamily, horizon: int) -> HedgeLearner:
    return HedgeLearner(experts, tuned_rate(len(experts), horizon), horizon)


def make_hedge_cover_learner(
    h: HypothesisFamily,
    family: DistributionFamily,
    mu0: Distribution,
    profile: ToleranceProfile | None,
    eps: float,
    horizon: int,
    tol: float = DEFAULT_TOL,
) -> HedgeLearner:
    """Hedge over a cover of ``h`` that is ``eps``-accurate under every family member.

    The cover is built under ``mu0`` at scale ``delta = rho^-1(eps)`` so that
    the profile transfers it to the whole family; without a profile ``mu0``
    itself is taken as the scale-``eps`` base.
    """
    if horizon < 1:
        raise InputError("horizon must be at least 1")
    delta = profile.inverse(eps) if profile is not None else eps
    cover: CoverResult = build_uniform_cover(h, mu0, max(delta, tol), tol)
    learner = make_hedge_learner(cover.cover, horizon)
    learner.cover = cover
    learner.eps = eps
    learner.delta = delta
    return learner
