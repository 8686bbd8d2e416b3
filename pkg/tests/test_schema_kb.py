from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, check_golden, fixture_kb
from prenv.errors import (
    DanglingReferenceError,
    KBValidationError,
    NoBackingError,
    ParseError,
    StrengthRangeError,
    TierViolationError,
    UnknownPropositionError,
)
from prenv.schema_kb import (
    BACKGROUND,
    CAUSAL,
    DIAGNOSTIC,
    IMPLICIT,
    CausalLink,
    JointTable,
    activate_backward,
    activate_forward,
    build_index,
    dumps_kb,
    expand_exceptions,
    load_kb,
    parse_kb,
)

HEADER = "[propositions]\na 0\nb 1\nc 1\nd 2\n"


# -- loading ---------------------------------------------------------------


def test_two_cause_necklace_has_three_propositions():
    kb = fixture_kb("necklace_two_causes")
    assert sorted(kb.propositions) == ["children-playing", "maid-dishonest", "necklace-missing"]
    assert list(kb.schemata) == ["theft"]
    assert len(kb.schemata["theft"].links) == 2


def test_necklace_fixture_contents(necklace_kb):
    theft = necklace_kb.schemata["theft"]
    assert theft.prior_assignments == {
        "maid-dishonest": 0.1,
        "children-playing": 0.3,
        "necklace-misplaced": 0.2,
    }
    assert theft.rebuttals == ("necklace-misplaced",)
    assert necklace_kb.tier("necklace-missing") == 1


def test_empty_document_gives_empty_kb():
    kb = parse_kb("")
    assert not kb.propositions and not kb.schemata
    assert parse_kb("# only a comment\n\n") == kb
    assert load_kb(FIXTURES / "empty.kb") == kb


def test_tier_violation_names_link():
    with pytest.raises(TierViolationError) as err:
        parse_kb(HEADER + "[schema s]\nlink b -> c : 0.5 0.1\n")
    assert err.value.link == CausalLink("b", "c", 0.5, 0.1, statement=1)
    assert "b -> c" in str(err.value)


def test_backwards_tier_rejected():
    with pytest.raises(TierViolationError):
        parse_kb(HEADER + "[schema s]\nlink d -> a : 0.5 0.1\n")


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse_kb(HEADER + "[schema s]\nlink a => b : 0.5 0.1\n")
    assert err.value.line == 7
    assert err.value.column == 8


def test_statement_outside_section():
    with pytest.raises(ParseError) as err:
        parse_kb("a 0\n")
    assert (err.value.line, err.value.column) == (1, 1)


@pytest.mark.parametrize("value", ["1.5", "-0.1", "abc"])
def test_bad_strength(value):
    with pytest.raises((StrengthRangeError, ParseError)):
        parse_kb(HEADER + f"[schema s]\nlink a -> b : {value} 0.1\n")


def test_strength_out_of_range_type():
    with pytest.raises(StrengthRangeError):
        parse_kb(HEADER + "[schema s]\nlink a -> b : 1.5 0.1\n")


def test_dangling_reference():
    with pytest.raises(DanglingReferenceError):
        parse_kb(HEADER + "[schema s]\nlink a -> zz : 0.5 0.1\n")
    with pytest.raises(DanglingReferenceError):
        parse_kb(HEADER + "[schema s]\nprior zz : 0.5\n")


def test_duplicate_proposition():
    with pytest.raises(ParseError) as err:
        parse_kb("[propositions]\na 0\na 1\n")
    assert err.value.line == 3


def test_exception_must_be_disjoint_from_links():
    with pytest.raises(KBValidationError):
        parse_kb(
            HEADER
            + "[schema s]\nlink a -> b : 0.5 0.1\n"
            + "implicit_exception a : link a -> c : 0.5 0.1\n"
        )


def test_conflicting_priors_across_schemata():
    with pytest.raises(KBValidationError):
        parse_kb(HEADER + "[schema s]\nprior a : 0.2\n[schema t]\nprior a : 0.3\n")


def test_table_rows_are_reordered_to_sorted_causes():
    kb = parse_kb(HEADER + "[schema s]\ntable d | c b : 0.1 0.2 0.3 0.4\n")
    (table,) = kb.schemata["s"].tables
    # rows were given as (c,b) = TT TF FT FF; stored as (b,c)
    assert table == JointTable("d", ("b", "c"), (0.1, 0.3, 0.2, 0.4), statement=1)


def test_multi_effect_link_shares_statement(coin_kb):
    links = coin_kb.schemata["weighted-coin"].links
    assert len(links) == 10
    assert {l.statement for l in links} == {1}


def test_unknown_backing_rejected():
    with pytest.raises(KBValidationError):
        parse_kb(HEADER + "[schema s]\nbacking nowhere\n")


# -- golden grammar --------------------------------------------------------


@pytest.mark.parametrize("name", ["necklace", "tweety", "coin", "lawn"])
def test_canonical_dump_golden(name):
    kb = fixture_kb(name)
    text = dumps_kb(kb)
    check_golden(f"{name}.kb.canonical", text)
    assert parse_kb(text) == kb


# -- index -----------------------------------------------------------------


@pytest.mark.parametrize("name", ["necklace", "tweety", "coin", "lawn", "empty"])
def test_index_rebuild_identical(name):
    kb = fixture_kb(name)
    assert build_index(kb.schemata) == kb.index
    activate_forward(kb, set(kb.propositions))
    assert build_index(dict(reversed(list(kb.schemata.items())))) == kb.index


def test_index_contents(necklace_kb):
    assert necklace_kb.index.forward == {"children-playing": ("theft",), "maid-dishonest": ("theft",)}
    assert necklace_kb.index.backward == {"necklace-missing": ("theft",)}


# -- activation ------------------------------------------------------------


def test_forward_maid(necklace_kb):
    (act,) = activate_forward(necklace_kb, {"maid-dishonest"})
    assert act.schema_id == "theft"
    assert act.direction == CAUSAL
    assert act.trigger == ("maid-dishonest",)
    assert {l.cause for l in act.links} == {"maid-dishonest", "children-playing"}


def test_forward_empty(necklace_kb):
    assert activate_forward(necklace_kb, set()) == []


def test_forward_tweety(tweety_kb):
    (act,) = activate_forward(tweety_kb, {"bird"})
    assert {l.effect for l in act.links} == {"flies"}


def test_forward_unknown(necklace_kb):
    with pytest.raises(UnknownPropositionError):
        activate_forward(necklace_kb, {"butler"})


def linear_scan_backward(kb, claim):
    out = {}
    for sid, schema in kb.schemata.items():
        deps = [d for d in schema.dependencies() if d.effect == claim]
        if deps:
            out[sid] = set(deps)
    return out


def test_backward_necklace(necklace_kb):
    acts = activate_backward(necklace_kb, "necklace-missing")
    assert len(acts) == 1
    assert acts[0].direction == DIAGNOSTIC
    assert {a.schema_id: set(a.dependencies()) for a in acts} == linear_scan_backward(
        necklace_kb, "necklace-missing"
    )
    assert len(acts[0].links) == 2


def test_backward_no_match(necklace_kb):
    assert activate_backward(necklace_kb, "maid-dishonest") == []


def test_backward_tweety(tweety_kb):
    (act,) = activate_backward(tweety_kb, "flies")
    assert [l.cause for l in act.links] == ["bird"]


def test_backward_unknown(necklace_kb):
    with pytest.raises(UnknownPropositionError):
        activate_backward(necklace_kb, "butler")


def test_forward_depth_follows_chain():
    kb = parse_kb(HEADER + "[schema s]\nlink a -> b : 0.5 0.1\n[schema t]\nlink b -> d : 0.5 0.1\n")
    assert [a.schema_id for a in activate_forward(kb, {"a"})] == ["s"]
    assert [a.schema_id for a in activate_forward(kb, {"a"}, depth=2)] == ["s", "t"]
    assert [a.schema_id for a in activate_backward(kb, "d", depth=2)] == ["s", "t"]


CHAIN_KB = parse_kb(
    "[propositions]\n"
    + "".join(f"p{i} {i // 3}\n" for i in range(9))
    + "[schema s1]\nlink p0 -> p3 : 0.5 0.1\nlink p1 -> p3 : 0.6 0.1\n"
    + "[schema s2]\nlink p2 -> p4 : 0.5 0.1\nlink p3 -> p6 : 0.7 0.1\n"
    + "[schema s3]\nlink p4 -> p7 : 0.5 0.1\nlink p5 -> p8 : 0.5 0.1\nlink p1 -> p5 : 0.2 0.1\n"
)


def _by_schema(acts):
    return {a.schema_id: (set(a.dependencies()), set(a.trigger)) for a in acts}


@settings(max_examples=60, deadline=None)
@given(
    st.sets(st.sampled_from(sorted(CHAIN_KB.propositions))),
    st.sets(st.sampled_from(sorted(CHAIN_KB.propositions))),
)
def test_forward_union_property(g1, g2):
    both = _by_schema(activate_forward(CHAIN_KB, g1 | g2))
    a, b = _by_schema(activate_forward(CHAIN_KB, g1)), _by_schema(activate_forward(CHAIN_KB, g2))
    assert set(both) == set(a) | set(b)
    for sid, (deps, trigger) in both.items():
        da, ta = a.get(sid, (set(), set()))
        db, tb = b.get(sid, (set(), set()))
        assert deps == da | db
        assert trigger == ta | tb


# -- exceptions ------------------------------------------------------------


def test_implicit_exceptions_necklace(necklace_kb):
    (exc,) = expand_exceptions(necklace_kb, "theft", IMPLICIT)
    assert exc.proposition == "necklace-misplaced"
    assert exc.fragments == (CausalLink("necklace-misplaced", "necklace-missing", 0.95, 0.01),)
    assert exc.exportable


def test_implicit_exceptions_empty(coin_kb):
    assert expand_exceptions(coin_kb, "weighted-coin", IMPLICIT) == []


def test_background_requires_backing(necklace_kb):
    with pytest.raises(NoBackingError):
        expand_exceptions(necklace_kb, "theft", BACKGROUND)


def test_background_exceptions():
    kb = fixture_kb("lawn")
    (exc,) = expand_exceptions(kb, "wet-lawn", BACKGROUND)
    assert exc.proposition == "pipe-burst"
    assert exc.tier == BACKGROUND
    assert [f.cause for f in exc.fragments] == ["pipe-burst"]
    assert expand_exceptions(kb, "wet-lawn", BACKGROUND, present={"pipe-burst"}) == []


@pytest.mark.parametrize("name,sid,tier", [
    ("necklace", "theft", IMPLICIT),
    ("tweety", "bird-flight", IMPLICIT),
    ("lawn", "wet-lawn", BACKGROUND),
])
def test_expand_exceptions_pure(name, sid, tier):
    kb = fixture_kb(name)
    before = dumps_kb(kb)
    first = expand_exceptions(kb, sid, tier)
    assert all(expand_exceptions(kb, sid, tier) == first for _ in range(3))
    assert dumps_kb(kb) == before


def test_load_accepts_path_and_text():
    path = FIXTURES / "tweety.kb"
    assert load_kb(path) == load_kb(Path(path).read_text()) == load_kb(str(path.read_text()))
