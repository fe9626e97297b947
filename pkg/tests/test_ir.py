from __future__ import annotations

import pytest

from binsub.constraints import ParseError, SubtypeConstraint, parse_constraints
from binsub.ir import (
    Assign,
    BinOpInt,
    Call,
    IrFunction,
    Load,
    MissingCalleeType,
    Store,
    UnresolvedCall,
    constraint_lines,
    gen_constraints,
    parse_ir,
)
from binsub.synth import render_ir, synthetic_function
from binsub.types import AtomT, Function, Var


def test_parse_running_example(samples):
    prog = parse_ir((samples / "fig4.ir").read_text())
    f = prog.functions["list_inc"]
    assert f.params == ["x", "y"] and f.returns == []
    assert [b.name for b in f.blocks] == ["block_1", "block_2"]
    stmts = list(f.statements())
    assert len(stmts) == 8
    assert stmts[3] == Load("t1", "stack_slot_2", 4, 4, stmts[3].line)
    assert isinstance(stmts[6], BinOpInt) and stmts[6].b == "1"
    assert isinstance(stmts[7], Store) and stmts[7].offset == 0 and stmts[7].width == 4


def test_running_example_matches_native_file(samples):
    f = parse_ir((samples / "fig4.ir").read_text()).functions["list_inc"]
    assert gen_constraints(f) == parse_constraints((samples / "fig5.cons").read_text())


def test_statement_forms():
    prog = parse_ir("""
        extern ext(a) -> (r)
        func g(p) -> (r) { r = p }
        func f(a, b) -> (c) {
          entry:
            c = a; d = load [b], 2
            store [a + 8], 1, d
            e = a + b, 8
            (x, y) = call g(a)
            call g(3)
            z = call ext(a)
        }
    """)
    f = prog.functions["f"]
    kinds = [type(s) for s in f.statements()]
    assert kinds == [Assign, Load, Store, BinOpInt, Call, Call, Call]
    calls = f.calls()
    assert calls[0].outs == ("x", "y") and calls[1].args == ("3",)
    assert calls[2].target == "ext" and "ext" in prog.externs
    assert prog.call_graph == [("f", "g"), ("f", "ext")]


def test_store_of_constant_has_no_value_constraint():
    prog = parse_ir("func f(p) -> () { store [p + 4], 4, 7 }")
    cs = gen_constraints(prog.functions["f"])
    assert len(cs) == 2


def test_binop_width_selects_atom():
    prog = parse_ir("func f(a) -> (b) { b = a + 1, 2 }")
    cs = gen_constraints(prog.functions["f"])
    assert cs == [SubtypeConstraint(Var("a"), AtomT("int16")), SubtypeConstraint(AtomT("int16"), Var("b"))]


def test_call_constraint_uses_callee_type():
    prog = parse_ir("func g(p) -> (r) { r = p }\nfunc f(a) -> (b) { (b) = call g(a) }")
    callee = Function.of({0: Var("gp")}, {0: Var("gr")})
    cs = gen_constraints(prog.functions["f"], {"g": callee})
    assert cs == [SubtypeConstraint(callee, Function.of({0: Var("a")}, {0: Var("b")}))]
    with pytest.raises(MissingCalleeType):
        gen_constraints(prog.functions["f"])
    seen = []
    gen_constraints(prog.functions["f"], instantiate=lambda c: seen.append(c) or callee)
    assert seen[0].target == "g"


def test_rename_namespaces_variables():
    prog = parse_ir("func f(a) -> () { t = load [a], 4 }")
    cs = gen_constraints(prog.functions["f"], rename=lambda v: f"f${v}")
    names = {n for c in cs for n in (str(c.lhs), str(c.rhs))}
    assert any(n.startswith("f$") for n in names)
    assert "a" not in names


def test_constraint_lines_group_by_statement(samples):
    f = parse_ir((samples / "fig4.ir").read_text()).functions["list_inc"]
    groups = constraint_lines(f)
    assert [len(cs) for _, cs in groups] == [1, 1, 1, 3, 1, 3, 2, 3]


@pytest.mark.parametrize("text,exc", [
    ("func f( {", ParseError),
    ("func f() -> () {\n  x = frob y\n}", ParseError),
    ("func f() -> () {\n  x = y", ParseError),
    ("func f() -> () { }\nfunc f() -> () { }", ParseError),
    ("func f() -> () { call g() }", UnresolvedCall),
    ("func f(a) -> () { b = load [a], 0 }", ParseError),
    ("x = y", ParseError),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_ir(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse_ir("func f() -> () {\n  a = b\n  ??\n}")
    assert err.value.line == 3 and err.value.col == 3


@pytest.mark.parametrize("n", [1, 7, 64, 200])
def test_synthetic_functions_round_trip(n):
    f = synthetic_function(n, seed=3)
    assert len(gen_constraints(f)) == n
    g = parse_ir(render_ir(f)).functions[f.name]
    assert gen_constraints(g) == gen_constraints(f)
    assert isinstance(g, IrFunction)
