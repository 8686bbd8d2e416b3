import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, TOSSES, check_golden
from netgen import all_assignments, random_dag, random_evidence
from prenv.argument import Qualifier
from prenv.errors import ImpossibleEvidenceError, NetTooLargeError, ParseError, UnknownNodeError
from prenv.inference import (
    dumps_evidence,
    elimination_order,
    enumerate_oracle,
    evidence_probability,
    joint_probability,
    marginal_table,
    node_factors,
    parse_evidence,
    posterior,
    posteriors,
)
from prenv.network import BayesNet, Node

MAID, KIDS, MISSING = "maid-dishonest", "children-playing", "necklace-missing"


def single(p=0.3):
    return BayesNet.build([Node("x", (), Qualifier.full_table((p,)))])


# -- joint -----------------------------------------------------------------


def test_necklace_all_false(necklace_net):
    a = {MAID: False, KIDS: False, MISSING: False}
    assert joint_probability(necklace_net, a) == pytest.approx(0.9 * 0.7 * 0.99, abs=1e-12)
    assert joint_probability(necklace_net, a) == pytest.approx(0.6237, abs=1e-12)


def test_single_node_joint():
    assert joint_probability(single(), {"x": True}) == pytest.approx(0.3)


def test_joint_requires_full_assignment(necklace_net):
    with pytest.raises(ValueError):
        joint_probability(necklace_net, {MAID: True})


def test_joint_normalized(necklace_net):
    total = sum(joint_probability(necklace_net, a) for a in all_assignments(necklace_net.ids))
    assert total == pytest.approx(1.0, abs=1e-12)


# -- posterior -------------------------------------------------------------


def test_explaining_away(necklace_net):
    p1 = posterior(necklace_net, MAID, {MISSING: True})
    p2 = posterior(necklace_net, MAID, {MISSING: True, KIDS: True})
    assert p1 == pytest.approx(enumerate_oracle(necklace_net, MAID, {MISSING: True}), abs=1e-12)
    assert p1 - p2 >= 1e-3
    # hand values: P(m|e) = .1*(1-.99*.1*(.3*.3+.7)) / P(e)
    p_e = 1 - 0.99 * (1 - 0.1 * 0.9) * (1 - 0.3 * 0.7)
    assert p1 == pytest.approx(0.1 * (1 - 0.99 * 0.1 * (1 - 0.3 * 0.7)) / p_e, abs=1e-12)


def test_no_evidence_gives_prior(necklace_net):
    assert posterior(necklace_net, MAID) == pytest.approx(0.1, abs=1e-12)


def test_tweety_posterior(tweety_kb):
    from conftest import frames_forward
    from prenv.network import compile_network

    net = compile_network(frames_forward(tweety_kb, {"bird"}), tweety_kb)
    assert posterior(net, "flies", {"bird": True}) == pytest.approx(0.9, abs=1e-12)


def test_query_in_evidence_rejected(necklace_net):
    with pytest.raises(ValueError):
        posterior(necklace_net, MAID, {MAID: True})


def test_unknown_nodes(necklace_net):
    with pytest.raises(UnknownNodeError):
        posterior(necklace_net, "butler")
    with pytest.raises(UnknownNodeError):
        evidence_probability(necklace_net, {"butler": True})


def deterministic_net():
    return BayesNet.build([
        Node("a", (), Qualifier.full_table((0.5,))),
        Node("b", ("a",), Qualifier.full_table((1.0, 0.0))),
    ])


def test_impossible_evidence():
    net = deterministic_net()
    assert evidence_probability(net, {"a": True, "b": False}) == 0.0
    certain = BayesNet.build([
        Node("a", (), Qualifier.full_table((1.0,))),
        Node("b", ("a",), Qualifier.full_table((1.0, 0.0))),
    ])
    with pytest.raises(ImpossibleEvidenceError):
        posterior(certain, "a", {"b": False})
    with pytest.raises(ImpossibleEvidenceError):
        posteriors(net, {"a": True, "b": False})


def test_posteriors_cover_all_nodes(necklace_net):
    post = posteriors(necklace_net, {MISSING: True})
    assert post[MISSING] == 1.0
    assert set(post) == set(necklace_net.ids)


# -- evidence probability --------------------------------------------------


def test_coin_ten_heads(coin_model):
    _, net = coin_model
    p = evidence_probability(net, {t: True for t in TOSSES})
    assert abs(p - 0.9**10) <= 1e-12
    assert p == pytest.approx(0.3486784401, abs=1e-12)


def test_single_root_evidence():
    assert evidence_probability(single(), {"x": True}) == pytest.approx(0.3)


def test_evidence_probability_matches_sum_of_joints(necklace_net):
    e = {MISSING: True}
    brute = sum(
        joint_probability(necklace_net, a)
        for a in all_assignments(necklace_net.ids)
        if a[MISSING]
    )
    assert evidence_probability(necklace_net, e) == pytest.approx(brute, abs=1e-12)


def test_marginal_table_sums_to_evidence_probability(necklace_net):
    t = marginal_table(necklace_net, [MAID, KIDS], {MISSING: True})
    assert t.scope == (KIDS, MAID) or t.scope == (MAID, KIDS)
    assert t.values.sum() == pytest.approx(evidence_probability(necklace_net, {MISSING: True}))


# -- oracle ----------------------------------------------------------------


def test_oracle_single_node():
    assert enumerate_oracle(single(0.3), "x") == pytest.approx(0.3)


def test_oracle_size_cap():
    nodes = [Node(f"v{i:02d}", (), Qualifier.full_table((0.5,))) for i in range(21)]
    with pytest.raises(NetTooLargeError):
        enumerate_oracle(BayesNet.build(nodes), "v00")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_oracle_equivalence(seed, n):
    rng = np.random.default_rng(seed)
    net = random_dag(rng, n)
    ev = random_evidence(rng, net, max_size=n - 1)
    free = [v for v in net.ids if v not in ev]
    for q in free:
        assert abs(posterior(net, q, ev) - enumerate_oracle(net, q, ev)) <= 1e-9
    if ev:
        assert abs(evidence_probability(net, ev) - enumerate_oracle(net, None, ev)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_normalization(seed, n):
    rng = np.random.default_rng(seed)
    net = random_dag(rng, n)
    ev = random_evidence(rng, net, max_size=n - 1)
    q = next(v for v in net.ids if v not in ev)
    t = marginal_table(net, [q], ev).values
    assert abs(t[0] / t.sum() + t[1] / t.sum() - 1.0) <= 1e-12
    assert abs(posterior(net, q, ev) + t[1] / t.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_explaining_away_property(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        p1, p2 = rng.uniform(0.05, 0.95, size=2)
        leak = rng.uniform(0.0, 0.2)
        q1, q2 = rng.uniform(leak + 0.01, 0.99, size=2)
        net = BayesNet.build([
            Node("c1", (), Qualifier.full_table((p1,))),
            Node("c2", (), Qualifier.full_table((p2,))),
            Node("e", ("c1", "c2"), Qualifier.noisy_or((q1, q2), leak)),
        ])
        assert posterior(net, "c1", {"e": True}) > posterior(net, "c1", {"e": True, "c2": True})


def test_elimination_order_deterministic(necklace_net):
    factors = node_factors(necklace_net)
    order = elimination_order(factors, [MAID, KIDS, MISSING])
    assert order == elimination_order(list(reversed(factors)), [MISSING, KIDS, MAID])


# -- evidence files --------------------------------------------------------


def test_parse_evidence_file():
    ev = parse_evidence((FIXTURES / "necklace_alibi.ev").read_text())
    assert ev == {MISSING: True, MAID: False, KIDS: False}
    check_golden("necklace_alibi.ev.canonical", dumps_evidence(ev))
    assert parse_evidence(dumps_evidence(ev)) == ev


def test_parse_evidence_errors():
    with pytest.raises(ParseError) as err:
        parse_evidence("a = true\nb = maybe\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_evidence("a = true\na = false\n")
    with pytest.raises(ParseError):
        parse_evidence("a true\n")


def test_parse_evidence_empty():
    assert parse_evidence("# nothing\n\n") == {}
