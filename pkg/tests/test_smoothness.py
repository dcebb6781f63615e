import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_family
from gensmooth.errors import CapacityError, InputError
from gensmooth.measure import Distribution, DistributionFamily, atoms_of
from gensmooth.smoothness import (
    ToleranceProfile,
    conflict_graph,
    construct_certificate,
    construct_scaled_base,
    fragmentation_number,
    linear_profile,
    tolerance_profile,
    turan_refine,
    verify_certificate,
)


# --------------------------------------------------------------------------- profiles


def test_profile_step_semantics():
    p = ToleranceProfile(((0.0, 0.1), (0.2, 0.4), (0.5, 0.8)))
    assert p(0.0) == 0.1
    assert p(0.1) == 0.4 and p(0.2) == 0.4
    assert p(0.3) == 0.8
    assert p(0.9) == 1.0


def test_profile_rejects_decreasing_values():
    with pytest.raises(InputError):
        ToleranceProfile(((0.1, 0.5), (0.2, 0.4)))


def test_profile_inverse_is_largest_admissible_breakpoint():
    p = linear_profile(2, np.linspace(0, 1, 101))
    assert p.inverse(0.1) == pytest.approx(0.05)
    assert p.well_behaved


def test_sqrt_profile_is_well_behaved():
    assert ToleranceProfile.from_callable(np.sqrt).well_behaved


def test_square_profile_is_not_well_behaved():
    assert not ToleranceProfile.from_callable(np.square).well_behaved


def test_tolerance_of_uniform_against_itself():
    u = Distribution.uniform(4)
    prof = tolerance_profile(DistributionFamily((u,)), u, [0.3])
    assert prof(0.3) == pytest.approx(0.25)


def test_tolerance_of_pair_family(pair_family, uniform4):
    assert tolerance_profile(pair_family, uniform4, [0.25])(0.25) == pytest.approx(0.7)


def test_tolerance_at_one_is_one(pair_family):
    base = Distribution([0.4, 0.3, 0.2, 0.1])
    assert tolerance_profile(pair_family, base, [1.0])(1.0) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 4))
def test_tolerance_profile_is_nondecreasing_and_sound(seed, n, m):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, n, m)
    base = Distribution(rng.dirichlet(np.ones(n)))
    grid = np.linspace(0, 1, 21)
    prof = tolerance_profile(fam, base, grid)
    vals = prof(grid)
    assert np.all(np.diff(vals) >= -1e-12)
    rows = fam.matrix.tolist()
    for z, v in zip(grid, vals):
        brute = max([oracles.envelope(rows, a) for _, a in oracles.subsets(n)
                     if oracles.mass(base.probs, a) <= z + 1e-12])
        assert v == pytest.approx(brute, abs=1e-12)


# --------------------------------------------------------------------------- certificates


def test_verify_linear_certificate(pair_family, uniform4):
    assert verify_certificate(pair_family, uniform4, linear_profile(2.8)).verified


def test_verify_identity_fails_on_first_atom(pair_family, uniform4):
    cert = verify_certificate(pair_family, uniform4, linear_profile(1.0))
    assert not cert.verified and cert.witness == 0b0001


def test_verify_identity_smoothness():
    u = Distribution([0.1, 0.2, 0.3, 0.4])
    assert verify_certificate(DistributionFamily((u,)), u, linear_profile(1.0)).verified


def test_construct_certificate_single_member():
    u = Distribution.uniform(4)
    cert = construct_certificate(DistributionFamily((u,)), [0.5, 0.25])
    assert cert.verified and cert.eq1_holds


def test_construct_certificate_pair(pair_family):
    cert = construct_certificate(pair_family, [0.5, 0.25, 0.125])
    assert cert.verified and cert.eq1_holds
    assert cert.profile(1e-9) == pytest.approx(2 * 0.125)
    assert np.all(np.diff(cert.profile.values) >= 0)
    rows = pair_family.matrix.tolist()
    assert oracles.certificate_holds(rows, cert.base.probs.tolist(), cert.profile)


def test_certificate_scale_totals_nondecreasing(pair_family):
    cert = construct_certificate(pair_family, [0.5, 0.25, 0.125, 0.0625])
    used = [s.total_used for s in cert.scales]
    assert used == sorted(used)


def test_certificate_rejects_bad_sequence(pair_family):
    with pytest.raises(InputError):
        construct_certificate(pair_family, [0.25, 0.5])


def test_certificate_on_two_uniform_halves_terminates():
    fam = DistributionFamily.of([0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5])
    cert = construct_certificate(fam, [0.5, 0.25])
    assert cert.verified


# --------------------------------------------------------------------------- fragmentation


def test_fragmentation_uniform_quarter():
    assert fragmentation_number(DistributionFamily.of([0.25] * 4), 0.25).count == 4


def test_fragmentation_uniform_just_above_quarter():
    assert fragmentation_number(DistributionFamily.of([0.25] * 4), 0.26).count == 2


def test_fragmentation_pair_parts(pair_family):
    w = fragmentation_number(pair_family, 0.7)
    assert w.count == 2 and sorted(w.parts) == [0b0001, 0b0010]
    assert w.exact and not w.lower_bound


def test_fragmentation_witnesses_are_valid(pair_family):
    w = fragmentation_number(pair_family, 0.2)
    seen = 0
    for part, k in zip(w.parts, w.witnesses):
        assert part & seen == 0
        seen |= part
        assert pair_family[k].mass(part) >= 0.2 - 1e-12


def test_fragmentation_cutoff():
    fam = DistributionFamily.of([1 / 16] * 16)
    with pytest.raises(CapacityError):
        fragmentation_number(fam, 0.1)
    assert fragmentation_number(fam, 0.1, mode="greedy").lower_bound


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 3), st.floats(0.05, 1.0))
def test_fragmentation_matches_partition_oracle(seed, n, m, eps):
    fam = random_family(np.random.default_rng(seed), n, m)
    exact = fragmentation_number(fam, eps).count
    assert exact == oracles.fragmentation(fam.matrix.tolist(), eps)
    assert fragmentation_number(fam, eps, mode="greedy").count <= exact
    assert exact * eps <= m + 1e-9  # each part charges eps to some member


# --------------------------------------------------------------------------- scaled base


def test_scaled_base_pair_family(pair_family):
    sb = construct_scaled_base(pair_family, 0.35)
    assert np.allclose(sb.distribution.probs, [0.4, 0.4, 0.1, 0.1])
    assert sb.iterations == 2 and sb.verified


def test_scaled_base_fallback():
    mu = Distribution([0.3, 0.7])
    sb = construct_scaled_base(DistributionFamily((mu,)), 0.6)
    assert sb.iterations == 0 and sb.distribution == mu


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 4), st.sampled_from([0.1, 0.2, 0.35]))
def test_scaled_base_implication(seed, n, m, eps):
    fam = random_family(np.random.default_rng(seed), n, m)
    sb = construct_scaled_base(fam, eps)
    big_n = fragmentation_number(fam, eps).count
    assert sb.iterations <= big_n
    assert oracles.implication_holds(fam.matrix.tolist(), sb.distribution.probs.tolist(),
                                     eps / max(big_n, 1) ** 2, 2 * eps)


# --------------------------------------------------------------------------- Turán refinement


def _matching_instance():
    # four singleton sets; dist i puts 0.5 on its own atom and 0.5 on its partner's
    dists = [Distribution([0.5, 0.5, 0, 0]), Distribution([0.5, 0.5, 0, 0]),
             Distribution([0, 0, 0.5, 0.5]), Distribution([0, 0, 0.5, 0.5])]
    return [1, 2, 4, 8], dists


def test_turan_on_matching():
    sets, dists = _matching_instance()
    assert conflict_graph(sets, dists, 0.3).sum() == 4
    assert turan_refine(sets, dists, 0.5, 0.3) == [0, 2]


def test_turan_without_conflicts():
    dists = [Distribution.point(3, i) for i in range(3)]
    assert turan_refine([1, 2, 4], dists, 1.0, 0.5) == [0, 1, 2]


def test_turan_complete_graph():
    u = Distribution.uniform(3)
    assert len(turan_refine([1, 2, 4], [u, u, u], 0.3, 0.3)) == 1


def test_turan_rejects_overlap():
    u = Distribution.uniform(2)
    with pytest.raises(InputError):
        turan_refine([3, 1], [u, u], 0.1, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.floats(0.1, 0.6))
def test_turan_output_is_independent(seed, n, delta):
    rng = np.random.default_rng(seed)
    sets = [1 << i for i in range(n)]
    dists = []
    for i in range(n):
        p = rng.dirichlet(np.ones(n)) * 0.5
        p[i] += 0.5
        dists.append(Distribution(p))
    chosen = turan_refine(sets, dists, 0.5, delta)
    adj = conflict_graph(sets, dists, delta)
    assert not any(adj[i, j] for i in chosen for j in chosen)
    degrees = adj.sum(axis=1)
    assert len(chosen) >= n / (1 + degrees.mean()) - 1e-9
    if degrees.max() <= 1 / delta:
        assert len(chosen) >= np.ceil(n * delta / 2)
    for i in chosen:
        assert atoms_of(sets[i]) == [i]
