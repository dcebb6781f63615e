"""Per-round couplings onto the dummy-extended space.

A round's distribution ``mu_t`` is turned into a distribution on ``n + 1``
atoms: atoms with a moderate density ratio against the base keep their mass,
the rest is moved onto the dummy atom (id ``n``). The extended base is
``(mu0 / 2, 1/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .measure import DEFAULT_TOL, Distribution, DistributionFamily, atoms_of, mask_from_atoms
from .smoothness import ToleranceProfile


@dataclass
class CoupledStep:
    kept_mask: int
    dummy_prob: float
    coupled_dist: np.ndarray  # length n + 1, dummy last
    smooth_bound: float  # density-ratio bound on real atoms vs the extended base
    dummy_bound: float  # density-ratio bound on the dummy atom
    contract_bound: float  # the coupling promises dummy_prob <= this

    @property
    def within_contract(self) -> bool:
        return self.dummy_prob <= self.contract_bound + DEFAULT_TOL

    @property
    def kept(self) -> list[int]:
        return atoms_of(self.kept_mask)


def extended_base(mu0: Distribution) -> np.ndarray:
    return np.append(mu0.probs / 2.0, 0.5)


def density_ratios(coupled: np.ndarray, mu0: Distribution) -> np.ndarray:
    """Per-atom ratio of a coupled distribution to the extended base (0/0 read as 0)."""
    base = extended_base(mu0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(base > 0, coupled / base, np.where(coupled > 0, np.inf, 0.0))
    return r


def _couple(mu_t: Distribution, keep: np.ndarray) -> tuple[int, float, np.ndarray]:
    p = mu_t.probs
    coupled = np.append(np.where(keep, p, 0.0), 0.0)
    dummy = float(p[~keep].sum())
    coupled[-1] = dummy
    return mask_from_atoms(np.flatnonzero(keep)), dummy, coupled


def _ratio_keep(p: np.ndarray, base: np.ndarray, cap: float, tol: float) -> np.ndarray:
    # mu0(x) = 0 with mu_t(x) > 0 is an infinite ratio: dropped
    return np.where(base > 0, p <= cap * base + tol, p <= 0)


def couple_step(
    mu_t: Distribution,
    mu0: Distribution,
    profile: ToleranceProfile,
    eps: float,
    tol: float = DEFAULT_TOL,
) -> CoupledStep:
    """Keep atoms whose density ratio is at most ``rho(eps)/eps``; drop the rest."""
    if not profile.well_behaved:
        raise InputError("couple_step needs a well-behaved tolerance profile")
    if not 0 < eps <= 1:
        raise InputError("eps must lie in (0, 1]")
    if mu_t.n != mu0.n:
        raise InputError("mu_t and mu0 live on different spaces")
    rho = float(profile(eps))
    eta = rho / eps
    keep = _ratio_keep(mu_t.probs, mu0.probs, eta, tol)
    mask, dummy, coupled = _couple(mu_t, keep)
    return CoupledStep(mask, dummy, coupled, 2.0 * eta, 2.0, rho)


def couple_step_capped(
    mu_t: Distribution,
    mu0: Distribution,
    eps: float,
    eta: float,
    tol: float = DEFAULT_TOL,
) -> CoupledStep:
    """Coupling for a base with ``mu0(A) <= eps  =>  envelope(A) <= eta``.

    Atoms are kept when their ratio is at most ``2 eta / eps`` or when they are
    heavy under the base (``mu0({x}) > eps``). Smoothness bound ``4/eps``.
    """
    if not 0 < eps <= 1 or not 0 < eta <= 1:
        raise InputError("eps and eta must lie in (0, 1]")
    if mu_t.n != mu0.n:
        raise InputError("mu_t and mu0 live on different spaces")
    sigma = eta / eps
    base = mu0.probs
    keep = _ratio_keep(mu_t.probs, base, 2.0 * sigma, tol) | (base > eps)
    mask, dummy, coupled = _couple(mu_t, keep)
    return CoupledStep(mask, dummy, coupled, 4.0 / eps, 4.0 / eps, eta)


def extract_small_set(mu: Distribution, a: int, eps: float, tol: float = DEFAULT_TOL) -> int:
    """Subset ``B`` of ``a`` with ``mu(B)`` in ``(eps/2, eps]``.

    Needs ``mu(a) > eps`` and every atom of ``a`` at most ``eps``. Atoms are
    scanned by decreasing mass; a single atom above ``eps/2`` is returned
    alone, otherwise atoms accumulate until the sum first exceeds ``eps/2``.
    """
    atoms = atoms_of(a)
    if any(x >= mu.n for x in atoms):
        raise InputError("subset has atoms outside the space")
    p = mu.probs
    if not sum(p[x] for x in atoms) > eps:
        raise InputError("extract_small_set needs mu(a) > eps")
    if any(p[x] > eps + tol for x in atoms):
        raise InputError("extract_small_set needs every atom of a to carry at most eps")
    order = sorted(atoms, key=lambda x: (-p[x], x))
    if p[order[0]] > eps / 2:
        return 1 << order[0]
    total, chosen = 0.0, []
    for x in order:
        chosen.append(x)
        total += p[x]
        if total > eps / 2:
            break
    return mask_from_atoms(chosen)


def capped_precondition(
    family: DistributionFamily, mu0: Distribution, eps: float, eta: float, tol: float = DEFAULT_TOL
) -> bool:
    """Exhaustive check of ``mu0(A) <= eps  =>  envelope(A) <= eta``."""
    from .smoothness import verify_implication

    return verify_implication(family, mu0, eps, eta, tol) is None


def simulate_dummy_counts(
    family: DistributionFamily,
    steps: list[CoupledStep],
    horizon: int,
    runs: int,
    seed: int,
    schedule: str = "worst",
) -> np.ndarray:
    """Number of dummy rounds in each of ``runs`` simulated runs of length ``horizon``.

    ``steps[k]`` is the coupling of member ``k``. Each round the adversary plays
    the member with the largest dummy probability (``schedule="worst"``) or a
    uniformly random member (``"random"``); an atom is drawn and the round is
    a dummy round when that atom was dropped by the coupling.
    """
    rng = np.random.default_rng(seed)
    m = len(family)
    if schedule == "worst":
        members = np.full((runs, horizon), int(np.argmax([s.dummy_prob for s in steps])))
    elif schedule == "random":
        members = rng.integers(0, m, size=(runs, horizon))
    else:
        raise InputError(f"unknown schedule {schedule!r}")
    u = rng.random((runs, horizon))
    dropped = np.zeros((runs, horizon), dtype=bool)
    for k in range(m):
        sel = members == k
        if not sel.any():
            continue
        cdf = np.cumsum(family.matrix[k])
        atoms = np.minimum(np.searchsorted(cdf, u[sel], side="right"), family.n - 1)
        keep = np.zeros(family.n, dtype=bool)
        keep[steps[k].kept] = True
        dropped[sel] = ~keep[atoms]
    return dropped.sum(axis=1)
