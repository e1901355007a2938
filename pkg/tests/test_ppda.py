from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from decmc.chain import Label
from decmc.errors import ModelError, ParseError
from decmc.ppda import (Configuration as C, Polynomial, check_divergence, level, load_bundled, min_n0_for_p,
                        parse_model, render, step_distribution, target_avoid_predicates, validate_avoid)

PTA_SRC = """
ppda
states: q
alphabet: A B C
initial: q A
rule: q A -> q C [1]
rule: q A -> q BB [n]
rule: q B -> q eps [5]
rule: q B -> q AA [n]
rule: q C -> q C [1]
target: empty_stack
avoid: contains C
"""


def test_parse_pta_source():
    m = parse_model(PTA_SRC)
    assert len(m.rules) == 5 and m.states == ("q",)
    assert m.initial_state == C("q", "A")
    pop = [r for r in m.rules if r.read == "B" and r.push == ""][0]
    assert pop.delta == -1 and pop.weight(7) == 5


def test_polynomial_parsing():
    assert Polynomial.parse("10+n").coeffs == (10, 1)
    assert Polynomial.parse("n").coeffs == (0, 1)
    assert Polynomial.parse("3*n^2 + 2").coeffs == (2, 0, 3)
    assert Polynomial.parse("n^3")(2) == 8
    with pytest.raises(ValueError):
        Polynomial.parse("n-1")


def test_paper_steps(pta, pta7):
    d = step_distribution(pta, C("q", "BB"))
    assert d.as_dict() == {C("q", "B"): F(5, 7), C("q", "BAA"): F(2, 7)}
    d = step_distribution(pta, C("q", "A"))
    assert d.as_dict() == {C("q", "C"): F(1, 2), C("q", "BB"): F(1, 2)}
    d = step_distribution(pta7, C("q", "B"))
    assert d.as_dict() == {C("q", ""): F(10, 21), C("q", "AA"): F(11, 21)}


def test_levels_and_absorption(pta):
    assert level(C("q", "")) == 0 and level(C("q", "BAA")) == 3
    assert step_distribution(pta, C("q", "")).as_dict() == {C("q", ""): 1}
    with pytest.raises(ModelError):
        step_distribution(pta, C("q", "Z"))


def test_stuck_configuration_is_absorbing():
    m = parse_model("ppda\nstates: q\nalphabet: A B\ninitial: q A\nrule: q A -> q B [1]\n"
                    "target: empty_stack\navoid: none\n")
    assert step_distribution(m, C("q", "B")).as_dict() == {C("q", "B"): 1}
    assert m.is_stuck(C("q", "B"))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["pta", "pta7", "fig1"]), st.text(alphabet="AB", min_size=1, max_size=30))
def test_rows_are_exact_and_drop_at_most_one_level(name, word):
    m = load_bundled(name)
    if name == "fig1":
        word = "X" * len(word)
    c = C(m.states[0], word)
    d = step_distribution(m, c)
    assert sum(p for _, p in d) == 1
    assert all(isinstance(p, F) for _, p in d)
    assert all(level(t) >= level(c) - 1 for t, _ in d)


def test_target_and_avoid_predicates(pta, pta7):
    spec = target_avoid_predicates(pta)
    assert spec.classify(C("q", "")) is Label.TARGET
    assert spec.classify(C("q", "BCA")) is Label.AVOID
    assert spec.classify(C("q", "BA")) is Label.NEITHER
    spec7 = target_avoid_predicates(pta7)
    assert spec7.classify(C("q", "CCC")) is Label.NEITHER


def test_render_round_trip():
    for name in ("pta", "pta7", "fig1"):
        m = load_bundled(name)
        again = parse_model(render(m), name=name)
        assert again.rules == m.rules and again.initial_state == m.initial_state
        assert again.target == m.target and again.avoid == m.avoid


@pytest.mark.parametrize("text,kind", [
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> r eps [1]\ntarget: empty_stack\n", "unknown-state"),
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> q Z [1]\ntarget: empty_stack\n", "unknown-letter"),
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> q eps [0]\ntarget: empty_stack\n", "zero-weight"),
    ("ppda\nstates: q\nalphabet: A B\ninitial: q B\nrule: q A -> q eps [1]\ntarget: empty_stack\n",
     "unreachable-initial"),
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> q eps [1]\n", "missing-target"),
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> q eps [1]\ntarget: full\n", "unsupported-target"),
    ("ppda\nstates: q\nalphabet: A\ninitial: q A\nrule: q A -> q eps [1]\ntarget: empty_stack\n"
     "avoid: none\navoid: contains A\n", "conflicting-avoid"),
])
def test_semantic_errors_are_distinct(text, kind):
    with pytest.raises(ParseError) as ei:
        parse_model(text)
    assert ei.value.kind == kind


def test_syntax_error_has_position():
    with pytest.raises(ParseError) as ei:
        parse_model("ppda\nstates: q\nrule: q A => q eps [1]\n")
    assert ei.value.line == 3 and ei.value.column is not None and ei.value.kind == "syntax"
    with pytest.raises(ParseError) as ei:
        parse_model("model\n")
    assert ei.value.line == 1


def test_divergence_examples(pta, pta7):
    assert not check_divergence(pta, 0.6, 3).divergent
    assert check_divergence(pta, 0.6, 8).divergent
    rep = check_divergence(pta7, 0.51, 1)
    assert rep.divergent and rep.complete
    assert min_n0_for_p(pta, 0.6) == 8
    assert min_n0_for_p(pta7, 0.51) == 1
    assert min_n0_for_p(pta, 0.999, n_max=100) is None


def test_pop_only_class_is_reported():
    m = parse_model("ppda\nstates: q\nalphabet: A B\ninitial: q A\nrule: q A -> q AB [1]\n"
                    "rule: q B -> q eps [1]\ntarget: empty_stack\navoid: none\n")
    rep = check_divergence(m, 0.6, 0)
    assert not rep.divergent
    assert rep.witnesses and rep.witnesses[0][:2] == ("q", "B")


def test_avoid_validation(pta):
    assert not validate_avoid(pta, depth=20).refuted
    wrong = parse_model(PTA_SRC.replace("avoid: contains C", "avoid: contains B"))
    diag = validate_avoid(wrong, depth=5)
    assert diag.refuted
    assert [c.stack for c in diag.witness] == ["BB", "B", ""]
    assert not validate_avoid(load_bundled("pta7"), depth=5).refuted
