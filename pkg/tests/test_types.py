from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from binsub.lattice import default_lattice
from binsub.types import (
    NEG,
    POS,
    AtomT,
    Bottom,
    FieldKey,
    Function,
    IllFormedType,
    Inter,
    Mu,
    NotRecursive,
    Ptr,
    Record,
    Top,
    TypeSyntaxError,
    Union,
    Var,
    canonical,
    check_polarity,
    free_vars,
    is_guarded,
    join_all,
    meet_all,
    parse_type,
    show,
    size,
    substitute,
    unroll,
    well_formed,
)

from conftest import polar_types

ATOM = lambda n: n.startswith("int")  # noqa: E731


def P(text):
    return parse_type(text, ATOM)


def test_polarity_flip():
    assert -POS is NEG and -NEG is POS


def test_parse_and_show_round_trip():
    for text in ["ptr(a, {0:32: b | int32})",
                 "(0: a, 1: b) -> (0: c)",
                 "mu r. ptr(r, {4:32: r}) & x",
                 "top", "bot", "a & b & c"]:
        assert show(P(text)) == text or canonical(P(show(P(text)))) == canonical(P(text))


def test_parse_structure():
    t = P("ptr(a, {4:32: b, 0:8: int32})")
    assert isinstance(t, Ptr)
    assert isinstance(t.load, Record)
    assert [k for k, _ in t.load.fields] == [FieldKey(0, 8), FieldKey(4, 32)]
    assert t.load.field_map[FieldKey(0, 8)] == AtomT("int32")
    f = P("() -> (0: x)")
    assert f == Function.of({}, {0: Var("x")})
    assert P("(a)") == Var("a")


@pytest.mark.parametrize("text,col", [("ptr(a b)", 7), ("{0: a}", 5), ("a $", 3), ("(0: a) ->", 10)])
def test_parse_errors_report_column(text, col):
    with pytest.raises(TypeSyntaxError) as err:
        P(text)
    assert err.value.col == col


def test_record_and_function_validation():
    with pytest.raises(IllFormedType):
        Record.of({(0, 0): Var("a")})
    with pytest.raises(IllFormedType):
        Function.of({-1: Var("a")}, {})
    # unsorted input is normalized
    r = Record(((FieldKey(4, 32), Var("b")), (FieldKey(0, 32), Var("a"))))
    assert [k.offset for k, _ in r.fields] == [0, 4]


def test_check_polarity():
    assert check_polarity(P("a | b"), POS)
    assert not check_polarity(P("a | b"), NEG)
    assert check_polarity(P("a & b"), NEG)
    # the store slot flips polarity
    assert check_polarity(P("ptr(a & b, c | d)"), POS)
    assert not check_polarity(P("ptr(a | b, c)"), POS)
    assert check_polarity(P("(0: a & b) -> (0: c | d)"), POS)
    # binder used at the other polarity
    assert not check_polarity(P("mu r. ptr(r, r)"), POS)


def test_guardedness():
    assert is_guarded(P("mu r. ptr(a, r)"))
    assert is_guarded(P("mu r. r & ptr(a, r)"))
    assert not is_guarded(P("mu r. r & a"))
    assert not is_guarded(P("mu r. r"))
    # a mu in the top chain is the type itself: its guarded binder counts
    assert is_guarded(P("mu r. r & (mu s. s & r & {0:32: s})"))
    # but a same-named variable outside its scope does not
    assert not is_guarded(P("mu r. {0:32: s} & (mu s. r & s)"))
    assert not well_formed(P("mu r. a"), POS)


def test_unroll_and_substitute():
    t = P("mu r. ptr(a, {0:32: r})")
    u = unroll(t)
    assert u == Ptr(Var("a"), Record.of({(0, 32): t}))
    with pytest.raises(NotRecursive):
        unroll(Var("a"))
    with pytest.raises(IllFormedType):
        unroll(P("mu r. r & a"))
    # capture avoidance
    s = substitute(P("mu a. ptr(x, a)"), "x", Var("a"))
    assert isinstance(s, Mu) and s.binder != "a"
    assert free_vars(s) == {"a"}


def test_join_meet_all():
    assert join_all([]) == Bottom()
    assert meet_all([]) == Top()
    assert join_all([Var("a")]) == Var("a")
    assert join_all([Var("a"), Var("b")]) == Union(Var("a"), Var("b"))
    assert meet_all([Var("a"), Var("b")]) == Inter(Var("a"), Var("b"))


def test_canonical_ignores_association_and_binder_names():
    assert canonical(P("a & (b & c)")) == canonical(P("(c & a) & b"))
    assert canonical(P("mu r. ptr(a, r)")) == canonical(P("mu s. ptr(a, s)"))
    assert canonical(P("a | a")) == canonical(Var("a"))
    assert canonical(P("a | b")) != canonical(P("a & b"))


@settings(max_examples=200, deadline=None, suppress_health_check=list(HealthCheck))
@given(p=st.sampled_from([POS, NEG]), data=st.data())
def test_generated_types_are_well_formed(p, data):
    t = data.draw(polar_types(p))
    assert well_formed(t, p)
    assert size(t) >= 1
    is_atom = lambda n: n in default_lattice().atoms  # noqa: E731
    assert canonical(parse_type(show(t), is_atom)) == canonical(t)
