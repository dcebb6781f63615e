import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gensmooth.errors import CapacityError, InputError
from gensmooth.measure import Distribution, DistributionFamily, HypothesisFamily, upward_thresholds
from gensmooth.privacy import (
    LabeledDataset,
    MechanismSpec,
    accuracy_trials,
    conditional_means,
    convexify,
    erm_output_law,
    error_counts,
    excess_error,
    exp_mech_learn,
    exp_mech_output_law,
    reduce_to_threshold_learner,
    required_sample_size,
    verify_dp,
)
from gensmooth.smoothness import linear_profile

PAIR = HypothesisFamily(np.array([[0, 0], [1, 1]]))


def _data(*pairs):
    return LabeledDataset(tuple(pairs))


# --------------------------------------------------------------------------- exponential mechanism


def test_law_two_hypotheses():
    # errors (0, 2) at alpha = 1: weights 1 and e^-1
    law = exp_mech_output_law(MechanismSpec(PAIR, 1.0), _data((0, 0), (1, 0)))
    assert law[0] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-4)
    assert law[0] == pytest.approx(0.7311, abs=1e-4)


def test_equal_errors_give_uniform_law():
    law = exp_mech_output_law(MechanismSpec(PAIR, 3.0), _data((0, 0), (1, 1)))
    assert np.allclose(law, 0.5)


def test_zero_alpha_is_uniform():
    h = upward_thresholds(4)
    law = exp_mech_output_law(MechanismSpec(h, 0.0), _data((0, 1), (3, 0)))
    assert np.allclose(law, 1 / 5)


def test_single_hypothesis_cover():
    spec = MechanismSpec(HypothesisFamily(np.array([1, 0, 1])), 1.0)
    assert exp_mech_learn(spec, _data((0, 0)), 4) == 0


def test_learn_is_seed_deterministic():
    spec = MechanismSpec(upward_thresholds(5), 0.5)
    data = _data((0, 0), (2, 1), (4, 1))
    assert [exp_mech_learn(spec, data, s) for s in range(20)] == [exp_mech_learn(spec, data, s) for s in range(20)]


def test_negative_alpha_rejected():
    with pytest.raises(InputError):
        MechanismSpec(PAIR, -0.1)


def test_error_counts_reject_foreign_atoms():
    with pytest.raises(InputError):
        error_counts(PAIR, _data((5, 1)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1)), max_size=10), st.floats(0.0, 3.0))
def test_law_matches_oracle(pairs, alpha):
    h = upward_thresholds(4)
    law = exp_mech_output_law(MechanismSpec(h, alpha), LabeledDataset(tuple(pairs)))
    assert np.allclose(law, oracles.exp_mech_law(h.members.tolist(), pairs, alpha))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1)), max_size=8))
def test_law_ignores_examples_every_hypothesis_gets_right(pairs):
    # every hypothesis labels atom 0 as 0, so (0, 0) costs nobody anything
    h = HypothesisFamily(np.array([[0, 1, 1, 1], [0, 0, 1, 1], [0, 0, 0, 1]]))
    spec = MechanismSpec(h, 1.3)
    base = LabeledDataset(tuple(pairs))
    extra = LabeledDataset(tuple(pairs) + ((0, 0),))
    assert np.allclose(exp_mech_output_law(spec, base), exp_mech_output_law(spec, extra))


# --------------------------------------------------------------------------- DP audit


@pytest.mark.parametrize("domain, m, alpha", [(1, 1, 1.0), (2, 2, 0.5), (2, 3, 1.0), (3, 2, 0.1)])
def test_dp_audit_matches_oracle(domain, m, alpha):
    h = upward_thresholds(domain)
    spec = MechanismSpec(h, alpha)
    audit = verify_dp(spec, domain, m, alpha, cover_size=len(h))
    brute = oracles.dp_max_log_ratio(
        lambda d: oracles.exp_mech_law(h.members.tolist(), d, alpha), domain, m)
    assert audit.max_log_ratio == pytest.approx(brute, abs=1e-9)
    assert audit.passed and audit.max_log_ratio <= alpha + 1e-9
    assert audit.datasets == (2 * domain) ** m


def test_dp_audit_witness_is_neighbouring():
    spec = MechanismSpec(upward_thresholds(2), 1.0)
    audit = verify_dp(spec, 2, 2, 1.0)
    s, s2, h = audit.witness
    assert sum(a != b for a, b in zip(s.examples, s2.examples)) == 1
    gap = abs(math.log(exp_mech_output_law(spec, s)[h]) - math.log(exp_mech_output_law(spec, s2)[h]))
    assert gap == pytest.approx(audit.max_log_ratio)


def test_erm_fails_the_audit():
    spec = MechanismSpec(upward_thresholds(2), 1.0)
    audit = verify_dp(lambda d: erm_output_law(spec, d), 2, 2, 1.0)
    assert not audit.passed and math.isinf(audit.max_log_ratio)


def test_dp_audit_capacity_guard():
    with pytest.raises(CapacityError):
        verify_dp(MechanismSpec(upward_thresholds(10), 1.0), 10, 6, 1.0)


def test_dp_audit_rejects_unnormalised_laws():
    with pytest.raises(InputError):
        verify_dp(lambda d: np.array([0.5, 0.6]), 1, 1, 1.0)


# --------------------------------------------------------------------------- reduction


def _threshold_erm(n):
    h = upward_thresholds(n)

    def learn(data, seed):
        return h.members[int(np.argmin(error_counts(h, data)))]

    return learn


def test_reduction_with_point_masses_recovers_threshold():
    k = 4
    parts = [1 << i for i in range(k)]
    dists = [Distribution.point(k, i) for i in range(k)]
    learner = reduce_to_threshold_learner(_threshold_erm(k), parts, dists, 1.0, seed=0)
    for cut in range(k + 1):
        kdata = [(a, int(a >= cut)) for a in range(k)]
        assert learner(kdata).tolist() == [int(a >= cut) for a in range(k)]


def test_reduction_single_part():
    learner = reduce_to_threshold_learner(_threshold_erm(2), [0b01], [Distribution([0.9, 0.1])], 0.9, seed=1)
    assert learner([(0, 1)] * 5).tolist() == [1]


def test_reduction_rejects_bad_parts():
    u = Distribution.uniform(2)
    with pytest.raises(InputError):
        reduce_to_threshold_learner(_threshold_erm(2), [0b11, 0b01], [u, u], 0.5, seed=0)
    with pytest.raises(InputError):
        reduce_to_threshold_learner(_threshold_erm(2), [0b01], [u], 0.9, seed=0)
    learner = reduce_to_threshold_learner(_threshold_erm(2), [0b01], [u], 0.5, seed=0)
    with pytest.raises(InputError):
        learner([(3, 1)])


def test_reduction_prefix_rule_labels_prefix_one():
    seen = []

    def spy(data, seed):
        seen.extend(data.examples)
        return np.ones(2, dtype=np.int8)

    u = Distribution.uniform(2)
    learner = reduce_to_threshold_learner(spy, [0b10], [u], 0.5, seed=3, infinite_rule=True, prefix=0b01)
    learner([(0, 0)] * 30)
    assert all(y == 1 for x, y in seen if x == 0)
    assert all(y == 0 for x, y in seen if x == 1)


def test_conditional_means():
    mu = Distribution([0.2, 0.2, 0.6])
    assert conditional_means(np.array([1, 0, 1]), [0b011, 0b100], [mu, mu]).tolist() == [0.5, 1.0]
    with pytest.raises(InputError):
        conditional_means(np.array([1, 0]), [0b01], [Distribution([0.0, 1.0])])


def test_reduction_error_transfers_from_base_learner():
    # exp mechanism on a threshold cover; the reduced learner's error on [K]
    # is at most 2 / eta times the base learner's excess error
    k, eta = 4, 0.5
    n = 2 * k
    parts = [0b11 << (2 * i) for i in range(k)]
    dists = [Distribution(np.where(np.arange(n) // 2 == i, eta / 2, (1 - eta) / (n - 2))) for i in range(k)]
    h = upward_thresholds(n)
    spec = MechanismSpec(h, 2.0)
    base_law = []

    def private(data, seed):
        idx = exp_mech_learn(spec, data, seed)
        base_law.append(idx)
        return h.members[idx]

    learner = reduce_to_threshold_learner(private, parts, dists, eta, seed=9)
    cut = 2
    target = np.array([int(a >= cut) for a in range(k)])
    lifted_target = np.repeat(target, 2)
    rng = np.random.default_rng(0)
    errs, base_excess = [], []
    for _ in range(200):
        kdata = [(int(a), int(target[a])) for a in rng.integers(0, k, size=40)]
        out = learner(kdata)
        errs.append(float(np.mean(out != target)))
        mix = Distribution(np.mean([d.probs for d in dists], axis=0))
        base_excess.append(excess_error(h.members[base_law[-1]], lifted_target, mix, 0.0, h))
    assert np.mean(errs) <= 2 / eta * np.mean(base_excess) + 0.1


def test_convexify_adds_pairwise_mixtures():
    fam = DistributionFamily.of([1.0, 0.0], [0.0, 1.0], [0.5, 0.5])
    conv = convexify(fam)
    # the mixture of the two point masses duplicates the third member
    assert len(conv) == 5
    assert {tuple(m.probs) for m in conv.members} == {(1, 0), (0, 1), (0.5, 0.5), (0.75, 0.25), (0.25, 0.75)}
    with pytest.raises(InputError):
        convexify(fam, 0)


# --------------------------------------------------------------------------- sample size and accuracy


def test_sample_size_linear_profile():
    ss = required_sample_size(1, 0.1, 0.05, 1.0, linear_profile(2.0, np.linspace(0, 1, 1001)))
    assert ss.m == 560
    assert ss.rho_inverse == pytest.approx(0.05)
    assert ss.m == math.ceil((math.log(10) + math.log(20)) / 0.01 + math.log(20) / 0.1)


def test_sample_size_finite_class_form():
    ss = required_sample_size(1, 0.1, 0.05, 1.0, linear_profile(2.0), cover_size=21)
    assert ss.kasiviswanathan_form == pytest.approx((1 + math.log(20)) / 0.01 + math.log(21) / 0.1)


def test_sample_size_rejects_bad_arguments():
    with pytest.raises(InputError):
        required_sample_size(1, 0.0, 0.05, 1.0, linear_profile(2.0))
    with pytest.raises(InputError):
        required_sample_size(1, 0.1, 0.05, 1.0, linear_profile(1e6, [0.5, 1.0]))


def test_sample_size_grows_as_alpha_shrinks():
    prof = linear_profile(2.0, np.linspace(0, 1, 1001))
    sizes = [required_sample_size(2, 0.1, 0.05, a, prof).m for a in (1.0, 0.5, 0.1)]
    assert sizes == sorted(sizes)


def test_excess_error_zero_at_target():
    h = upward_thresholds(4)
    mu = Distribution.uniform(4)
    assert excess_error(h[2], h[2], mu, 0.2, h) == 0
    assert excess_error(h[0], h[2], mu, 0.0, h) == pytest.approx(0.5)


def test_accuracy_trials_reproducible_and_exact():
    h = upward_thresholds(6)
    spec = MechanismSpec(h, 1.0)
    mu = Distribution.uniform(6)
    a = accuracy_trials(spec, mu, h[3], 0.1, 100, 50, seed=2)
    b = accuracy_trials(spec, mu, h[3], 0.1, 100, 50, seed=2)
    assert np.array_equal(a.sampled, b.sampled)
    for idx, ex in zip(a.sampled, a.excess):
        assert ex == pytest.approx(excess_error(h[idx], h[3], mu, 0.1, h))
    assert 0 <= a.success_rate(0.1) <= 1


def test_accuracy_improves_with_m():
    h = upward_thresholds(6)
    spec = MechanismSpec(h, 0.5)
    mu = Distribution.uniform(6)
    small = accuracy_trials(spec, mu, h[3], 0.1, 5, 500, seed=1).excess.mean()
    large = accuracy_trials(spec, mu, h[3], 0.1, 400, 500, seed=1).excess.mean()
    assert large < small
