import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnaregime.channels import GrowthModel, quaternary_entropy, run_length_pmf_constrained
from dnaregime.homopolymer import (
    EntropyEstimate,
    EstimatorConfig,
    StructuralError,
    achievable_rate_constrained,
    achievable_rate_unconstrained,
    average_estimates,
    build_hmm,
    build_input_chain,
    check_ergodic,
    closed_form_entropy_rate,
    constrained_subtrahend,
    effective_substitution,
    estimate_output_entropy,
    stationary_distribution,
    unconstrained_subtrahend,
)


def block_entropy_bounds(hmm, L):
    """Upper bound H(Y_L | Y^{L-1}) and lower bound H(Y_L | Y^{L-1}, S_0) on the
    output entropy rate, by exhaustive forward recursion over output strings."""
    pi = stationary_distribution(hmm.B)

    def joint_entropies(start):
        layer = [start]
        ents = []
        for _ in range(L):
            nxt = []
            h = 0.0
            for a in layer:
                for y in range(4):
                    v = a @ hmm.By[y]
                    p = v.sum()
                    if p > 1e-300:
                        nxt.append(v)
                        h -= p * math.log2(p)
            layer = nxt
            ents.append(h)
        return ents

    full = joint_entropies(pi)
    upper = full[-1] - full[-2]
    lower = 0.0
    for s in np.flatnonzero(pi):
        e = np.zeros_like(pi)
        e[s] = 1.0
        cond = joint_entropies(e)
        lower += pi[s] * (cond[-1] - cond[-2])
    return lower, upper


# -- input chain --------------------------------------------------------------

def test_input_chain_rows_and_next_symbol():
    for m in range(1, 7):
        T = build_input_chain(m).transition
        assert T.shape == (4 * m, 4 * m)
        assert np.allclose(T.sum(axis=1), 1.0)
    chain = build_input_chain(3)
    assert chain.next_symbol_probs("AAA") == {"A": 0.0, "C": 1 / 3, "G": 1 / 3, "T": 1 / 3}
    assert chain.next_symbol_probs("CAA")["A"] == 0.25
    with pytest.raises(ValueError):
        chain.next_symbol_probs("AXA")
    with pytest.raises(ValueError):
        build_input_chain(0)


def test_m1_nucleotide_matrix():
    M = build_input_chain(1).nucleotide_matrix()
    assert np.allclose(M, (np.ones((4, 4)) - np.eye(4)) / 3)
    with pytest.raises(ValueError):
        build_input_chain(2).nucleotide_matrix()


def test_input_chain_entropy_closed_form():
    # noiseless: one bit-count per position from the chain's own transition law
    assert closed_form_entropy_rate(build_input_chain(1)) == pytest.approx(math.log2(3), abs=1e-12)
    # m=2: stationary mass on k=2 states is 1/5
    assert closed_form_entropy_rate(build_input_chain(2)) == pytest.approx(0.8 * 2 + 0.2 * math.log2(3), abs=1e-12)


def test_stationary_run_counter_law():
    # counter k is in state k with weight proportional to P(run length >= k)
    for m in range(1, 7):
        pi = stationary_distribution(build_input_chain(m).transition)
        by_k = pi.reshape(m, 4).sum(axis=1)
        w = np.array([0.25 ** (k - 1) for k in range(1, m + 1)])
        assert np.allclose(by_k, w / w.sum(), atol=1e-10)
        assert np.allclose(pi.reshape(m, 4), by_k[:, None] / 4, atol=1e-10)


# -- structure checks ------------------------------------------------------------

def test_ergodicity_of_chains():
    for m in range(1, 6):
        assert check_ergodic(build_input_chain(m).transition).ergodic
        rep = check_ergodic(build_hmm(m, GrowthModel("linear", 0.05, 0.01)).B)
        assert rep.ergodic and rep.closed_classes == 1


def test_noiseless_hmm_is_reducible_but_has_unique_stationary_law():
    h = build_hmm(3, GrowthModel("linear", 0.0, 0.0))
    rep = check_ergodic(h.B)
    assert not rep.irreducible and rep.closed_classes == 1 and rep.aperiodic
    pi = stationary_distribution(h.B)
    states = [h.decode_state(i) for i in np.flatnonzero(pi)]
    assert all(x == y for _, x, y in states)


def test_structural_errors():
    with pytest.raises(StructuralError):
        check_ergodic(np.array([[0.5, 0.4], [0.0, 1.0]]))
    with pytest.raises(StructuralError):
        check_ergodic(np.ones((2, 3)) / 3)
    periodic = np.array([[0.0, 1.0], [1.0, 0.0]])
    rep = check_ergodic(periodic)
    assert rep.irreducible and rep.period == 2 and not rep.ergodic
    with pytest.raises(StructuralError):
        stationary_distribution(periodic)
    two_closed = np.eye(2)
    assert check_ergodic(two_closed).closed_classes == 2
    with pytest.raises(StructuralError):
        stationary_distribution(two_closed)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_stationary_is_fixed_point(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.random((n, n)) + 0.01
    B /= B.sum(axis=1, keepdims=True)
    pi = stationary_distribution(B)
    assert np.all(pi >= 0) and pi.sum() == pytest.approx(1)
    assert np.max(np.abs(pi @ B - pi)) < 1e-10


# -- hidden Markov channel ---------------------------------------------------------

def test_hmm_shape_and_emission_split():
    model = GrowthModel("linear", 0.02, 0.01)
    h = build_hmm(4, model)
    assert h.B.shape == (64, 64)
    assert np.allclose(h.B.sum(axis=1), 1)
    assert np.allclose(h.By.sum(axis=0), h.B)
    for i in range(64):
        k, x, y = h.decode_state(i)
        assert h.state(k, x, y) == i
    with pytest.raises(ValueError):
        build_hmm(2, GrowthModel("gc", 1.0))


def test_effective_substitution_is_averaged_over_run_completion():
    model = GrowthModel("linear", 0.02, 0.01)
    m = 3
    # at k=1 the run ends at length 1 w.p. 3/4, length 2 w.p. 3/16, length 3 w.p. 1/16
    expect = 0.75 * model.rate(1) + 0.1875 * model.rate(2) + 0.0625 * model.rate(3)
    assert effective_substitution(1, m, model) == pytest.approx(expect)
    assert effective_substitution(3, m, model) == model.rate(3)
    with pytest.raises(ValueError):
        effective_substitution(4, m, model)


def test_noiseless_output_entropy_equals_input_entropy():
    for m in (1, 2, 4):
        h = build_hmm(m, GrowthModel("linear", 0.0, 0.0))
        est = estimate_output_entropy(h, EstimatorConfig.fixed(100_000), seed=1)
        exact = closed_form_entropy_rate(build_input_chain(m))
        assert est.value == pytest.approx(exact, abs=0.01)


# forward-recursion oracle values (conditional block entropies, L = 6 to 8), frozen
ORACLE = {
    (1, 0.0, 0.01): 1.62772572,
    (3, 0.0, 0.01): 1.9835335,
    (3, 0.02, 0.01): 1.985891,
}


@pytest.mark.parametrize("key", list(ORACLE))
def test_estimator_against_forward_oracle(key):
    m, alpha, p = key
    h = build_hmm(m, GrowthModel("linear", alpha, p))
    est = estimate_output_entropy(h, EstimatorConfig.fixed(400_000), seed=3)
    assert abs(est.value - ORACLE[key]) < max(4 * est.stderr, 3e-3)


def test_oracle_bounds_bracket_frozen_values():
    for (m, alpha, p), value in ORACLE.items():
        lo, hi = block_entropy_bounds(build_hmm(m, GrowthModel("linear", alpha, p)), 6)
        assert lo - 1e-8 <= value <= hi + 1e-8
        assert hi - lo < 1e-5


def test_estimator_deterministic_and_seed_dependent():
    h = build_hmm(3, GrowthModel("exponential", 0.1, 0.01))
    cfg = EstimatorConfig.fixed(50_000)
    a = estimate_output_entropy(h, cfg, seed=7)
    b = estimate_output_entropy(h, cfg, seed=7)
    c = estimate_output_entropy(h, cfg, seed=8)
    assert a == b
    assert a.value != c.value
    assert a.steps == 50_000


def test_estimator_chunking_does_not_change_result():
    h = build_hmm(2, GrowthModel("linear", 0.03, 0.01))
    cfg = EstimatorConfig.fixed(30_000)
    a = estimate_output_entropy(h, cfg, seed=2, chunk=1 << 18)
    b = estimate_output_entropy(h, cfg, seed=2, chunk=777)
    assert a.value == pytest.approx(b.value, rel=1e-13)


def test_stopping_rule_and_budget():
    h = build_hmm(2, GrowthModel("linear", 0.0, 0.0))
    est = estimate_output_entropy(h, EstimatorConfig(conv_thresh=1e-3, stab_req=10, max_steps=10 ** 6), seed=0)
    assert est.achieved and est.steps < 10 ** 6
    capped = estimate_output_entropy(h, EstimatorConfig(conv_thresh=1e-15, stab_req=10 ** 6, max_steps=5000), seed=0)
    assert not capped.achieved and capped.steps == 5000
    with pytest.raises(ValueError):
        EstimatorConfig(conv_thresh=0)
    with pytest.raises(ValueError):
        EstimatorConfig(min_steps=10, max_steps=5)


def test_estimate_json_round_trip():
    h = build_hmm(2, GrowthModel("logarithmic", 0.1, 0.02))
    est = estimate_output_entropy(h, EstimatorConfig.fixed(20_000), seed=11)
    d = json.loads(est.to_json())
    assert {"convThresh", "stabReq", "prng", "seed", "steps"} <= set(d)
    assert EntropyEstimate.from_dict(d) == est


def test_average_estimates():
    h = build_hmm(2, GrowthModel("linear", 0.01, 0.01))
    cfg = EstimatorConfig.fixed(20_000)
    ests = [estimate_output_entropy(h, cfg, seed=s) for s in range(3)]
    avg = average_estimates(ests)
    assert avg.value == pytest.approx(np.mean([e.value for e in ests]))
    assert avg.steps == 60_000
    other = estimate_output_entropy(build_hmm(3, GrowthModel("linear", 0.01, 0.01)), cfg)
    with pytest.raises(ValueError):
        average_estimates([ests[0], other])
    with pytest.raises(ValueError):
        average_estimates([])


# -- rates ---------------------------------------------------------------------

def test_unconstrained_rate_zero_growth():
    for p in (0.0, 0.01, 0.1):
        r = achievable_rate_unconstrained(GrowthModel("linear", 0.0, p))
        assert r == pytest.approx(2 - quaternary_entropy(p), abs=1e-12)


def test_unconstrained_subtrahend_saturated_and_bounded():
    sub, bound = unconstrained_subtrahend(GrowthModel("linear", 0.74, 0.01))
    # saturates at r=2
    assert sub == pytest.approx(0.5625 * quaternary_entropy(0.01) + 0.4375 * 2.0)
    assert bound == 0.0
    sub, bound = unconstrained_subtrahend(GrowthModel("logarithmic", 0.01, 0.01))
    assert 0 <= bound < 1e-10


def test_constrained_rate_and_provenance():
    m = 3
    model = GrowthModel("linear", 0.02, 0.01)
    est = estimate_output_entropy(build_hmm(m, model), EstimatorConfig.fixed(20_000), seed=0)
    sub = sum(run_length_pmf_constrained(m, r) * quaternary_entropy(model.rate(r)) for r in range(1, m + 1))
    assert constrained_subtrahend(m, model) == pytest.approx(sub)
    rate = achievable_rate_constrained(m, model, est)
    assert rate.value == pytest.approx(est.value - sub)
    assert rate.uncertainty == est.stderr
    with pytest.raises(ValueError):
        achievable_rate_constrained(4, model, est)
    with pytest.raises(ValueError):
        achievable_rate_constrained(m, GrowthModel("linear", 0.03, 0.01), est)


def test_constrained_noiseless_m1_rate():
    model = GrowthModel("linear", 0.0, 0.0)
    est = estimate_output_entropy(build_hmm(1, model), EstimatorConfig.fixed(10_000), seed=0)
    # the first symbol carries 2 bits, every later one log2(3)
    expect = (2 + 9_999 * math.log2(3)) / 10_000
    assert achievable_rate_constrained(1, model, est).value == pytest.approx(expect, abs=1e-12)
