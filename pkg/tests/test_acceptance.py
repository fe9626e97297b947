"""Acceptance suite: one marked group per criterion, summarized at the end of
the run as ``criterion N: PASS|FAIL``."""

from __future__ import annotations

import random
import re
import time
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from binsub.automata import (
    LOAD,
    STORE,
    RecLabel,
    build_automaton,
    decompile_automaton,
    determinize,
    minimize,
    path_folds,
    path_language,
    prune,
    simplify,
)
from binsub.biunify import coalesce, oracle_derivable, solve
from binsub.constraints import (
    DerivedTypeVariable,
    Field,
    Load,
    Store,
    parse_constraints,
    translate_retypd_set,
)
from binsub.interproc import infer
from binsub.ir import constraint_lines, gen_constraints, parse_ir
from binsub.lattice import default_lattice
from binsub.lowering import (
    CPtr,
    Prim,
    Struct,
    StructField,
    TypeEnvironment,
    lower,
    merge_functions,
    merge_pointers,
    merge_records,
    render_env,
    render_signature,
)
from binsub.metrics import type_distance
from binsub.report import growth_exponent
from binsub.synth import synthetic_function
from binsub.types import (
    NEG,
    POS,
    Function,
    Inter,
    Ptr,
    Record,
    Union,
    Var,
    canonical,
    parse_type,
    rename_vars,
    well_formed,
)

from conftest import SAMPLES, ctypes, polar_types

L = default_lattice()

# Running example constraints, one entry per source line; parts joined by
# "&&" belong to the same line.  Field keys are (offset bytes, size bytes).
RUNNING_EXAMPLE = {
    1: "x <= stack_slot_1",
    2: "y <= stack_slot_2",
    3: "stack_slot_1 <= stack_slot_2",
    4: "stack_slot_2 <= ptr(a, {(4,4): b}) && a <= {(4,4): b} && b <= t1",
    5: "t1 <= stack_slot_1",
    6: "stack_slot_2 <= ptr(c, {(0,4): d}) && c <= {(0,4): d} && d <= t2",
    7: "t2 <= int32 && int32 <= t3",
    8: "stack_slot_2 <= ptr({(0,4): e}, f) && {(0,4): e} <= f && t3 <= e",
}

COALESCED_SS1 = ("mu alpha. alpha & stack_slot_2 & ptr(a, {4:32: b & (t1 & alpha)}) & "
                 "ptr(c, {0:32: d & (t2 & int32)}) & ptr({0:32: e | int32}, f)")


def _bytes_to_bits(text: str) -> str:
    return re.sub(r"\((\d+),(\d+)\):", lambda m: f"{m.group(1)}:{int(m.group(2)) * 8}:", text)


def _alpha(cs, keep):
    """Rename variables outside ``keep`` by first occurrence."""
    names = {}

    def ren(v):
        if v in keep:
            return v
        return names.setdefault(v, f"_{len(names)}")

    return [(canonical(rename_vars(c.lhs, ren)), canonical(rename_vars(c.rhs, ren))) for c in cs]


def _expected_lines():
    out = {}
    for line, text in RUNNING_EXAMPLE.items():
        out[line] = parse_constraints("\n".join(_bytes_to_bits(p) for p in text.split("&&")))
    return out


def _fig4():
    return parse_ir((SAMPLES / "fig4.ir").read_text())


# --------------------------------------------------------------- criterion 1

@pytest.mark.criterion(1, "running example end to end")
def test_running_example_constraints_line_for_line():
    f = _fig4().functions["list_inc"]
    got = [cs for _, cs in constraint_lines(f)]
    want = [cs for _, cs in sorted(_expected_lines().items())]
    assert len(got) == len(want) == 8
    keep = f.variables()
    flat_got = _alpha([c for cs in got for c in cs], keep)
    flat_want = _alpha([c for cs in want for c in cs], keep)
    assert flat_got == flat_want
    assert [len(cs) for cs in got] == [len(cs) for cs in want]


@pytest.mark.criterion(1, "running example end to end")
def test_running_example_coalesced_type():
    store = solve(gen_constraints(_fig4().functions["list_inc"]), L)
    t = coalesce(store, Var("stack_slot_1"), NEG)
    assert canonical(t) == canonical(parse_type(COALESCED_SS1, lambda n: n in L.atoms))


@pytest.mark.criterion(1, "running example end to end")
def test_running_example_automaton_labels():
    store = solve(gen_constraints(_fig4().functions["list_inc"]), L)
    a = simplify(Var("stack_slot_1"), NEG, L, store.bounds_of)
    assert len(a) == 6
    root = a.labels[a.start]
    assert root.P and root.polarity is NEG
    out = dict(a.out(a.start))
    # store side: a record at offset 0 whose field is int32
    st_state = out[STORE]
    assert a.labels[st_state].polarity is POS
    assert (0, 32) in a.labels[st_state].R
    sf = a.labels[dict(a.out(st_state))[RecLabel(0, 32)]]
    assert sf.atom == "int32" and "e" in sf.vars
    # load side: the two loads merge into one record state
    ld = out[LOAD]
    assert a.labels[ld].R == {(0, 32), (4, 32)}
    lf = a.labels[dict(a.out(ld))[RecLabel(0, 32)]]
    assert {"d", "t2"} <= lf.vars and lf.atom == "int32" and lf.polarity is NEG
    # the recursive field leads back to a pointer state carrying t1 and b
    back = dict(a.out(ld))[RecLabel(4, 32)]
    bl = a.labels[back]
    assert bl.P and {"t1", "b", "stack_slot_1"} <= bl.vars
    assert dict(a.out(back))[LOAD] == ld


@pytest.mark.criterion(1, "running example end to end")
def test_running_example_lowering_and_runtime():
    t0 = time.perf_counter()
    f = _fig4().functions["list_inc"]
    store = solve(gen_constraints(f), L)
    env = TypeEnvironment()
    ct = lower(simplify(Var("stack_slot_1"), NEG, L, store.bounds_of), env, L)
    elapsed = time.perf_counter() - t0
    assert isinstance(ct, CPtr)
    body = env.decls[ct.pointee.name]
    assert isinstance(body, Struct)
    fields = {fl.offset: fl for fl in body.fields}
    assert sorted(fields) == [0, 4]
    assert fields[0].type == Prim("int32", 32)
    assert fields[4].type == CPtr(ct.pointee)
    text = render_signature("stack_slot_1", ct) + "\n" + render_env(env)
    assert "int32 field_0;" in text and f"struct {ct.pointee.name} * field_4;" in text
    assert elapsed < 1.0


# --------------------------------------------------------------- criterion 2

POINTER_SETS = [
    "q <= p\nx <= p.store\nq.load <= y",
    "q <= p\nx <= q.store\np.load <= y",
]


@pytest.mark.criterion(2, "pointer variance")
@pytest.mark.parametrize("text", POINTER_SETS)
def test_pointer_variance(text):
    cs = parse_constraints(text, form="retypd")
    assert oracle_derivable(cs, ("x", "y"), lattice=L)
    assert not oracle_derivable(cs, ("y", "x"), lattice=L)
    store = solve(cs, L)
    assert store.consistent
    upper = canonical(coalesce(store, Var("x"), NEG))
    assert ("var", "y") in upper[1]


# --------------------------------------------------------------- criterion 3

def _pointer_sides(cs):
    for c in cs:
        if isinstance(c.rhs, Ptr):
            yield c.rhs.store, c.rhs.load


def _random_retypd(rng: random.Random, n: int):
    bases = [f"v{i}" for i in range(4)]
    caps = [Load(), Store(), Field(0, 32), Field(4, 32)]

    def dtv():
        path = []
        for _ in range(rng.randint(0, 2)):
            path.append(rng.choice(caps))
        return DerivedTypeVariable(rng.choice(bases), tuple(path))

    return [(dtv(), dtv()) for _ in range(n)]


@pytest.mark.criterion(3, "store below load for every pointer")
def test_s_pointer_ir_frontend():
    checked = 0
    progs = [gen_constraints(_fig4().functions["list_inc"])]
    progs += [gen_constraints(synthetic_function(n, seed=s)) for s in range(6) for n in (12, 24)]
    for cs in progs:
        for s, l in _pointer_sides(cs):
            assert oracle_derivable(cs, (s, l), lattice=L)
            checked += 1
    assert checked > 20


@pytest.mark.criterion(3, "store below load for every pointer")
def test_s_pointer_retypd_frontend():
    rng = random.Random(7)
    checked = 0
    for _ in range(40):
        cs = translate_retypd_set(_random_retypd(rng, rng.randint(1, 4)))
        for s, l in _pointer_sides(cs):
            assert oracle_derivable(cs, (s, l), lattice=L)
            checked += 1
    assert checked > 20


# --------------------------------------------------------------- criterion 4

@pytest.mark.criterion(4, "automata correctness")
@settings(max_examples=500, deadline=None, suppress_health_check=list(HealthCheck))
@given(p=st.sampled_from([POS, NEG]), data=st.data())
def test_automata_properties(p, data):
    t = data.draw(polar_types(p))
    assert well_formed(t, p)
    nfa = build_automaton(t, p, L)
    dfa = determinize(nfa)
    assert dfa.is_deterministic()
    # determinization keeps the language and the oracle fold of every path
    assert path_folds(nfa, 6, L) == path_folds(dfa, 6, L)
    m = minimize(dfa, L)
    assert len(m) <= len(dfa)
    assert minimize(m, L).key() == m.key()
    assert path_folds(m, 6, L) == path_folds(dfa, 6, L)
    back = decompile_automaton(m)
    assert well_formed(back, p)
    rebuilt = build_automaton(back, p, L)
    assert path_language(prune(m), 6) == path_language(rebuilt, 6)
    assert path_folds(prune(m), 6, L) == path_folds(rebuilt, 6, L)


# --------------------------------------------------------------- criterion 5

def _p(text):
    return parse_type(text, lambda n: n in L.atoms)


@pytest.mark.criterion(5, "merge identities")
def test_record_identity():
    same = merge_records(_p("{0:32: c}"), _p("{0:32: f}"))
    assert canonical(same) == canonical(Record.of({(0, 32): Inter(Var("c"), Var("f"))}))
    diff = merge_records(_p("{0:32: c}"), _p("{4:32: f}"))
    assert canonical(diff) == canonical(_p("{0:32: c, 4:32: f}"))
    # same offset, different size: distinct keys
    assert len(merge_records(_p("{0:32: c}"), _p("{0:16: f}")).fields) == 2


@pytest.mark.criterion(5, "merge identities")
def test_pointer_identity():
    a, b, c, d = (Var(n) for n in "abcd")
    got = merge_pointers(Ptr(a, b), Ptr(c, d))
    bd = Inter(b, d)
    want = Ptr(Inter(Union(a, c), bd), bd)
    assert canonical(got) == canonical(want)


@pytest.mark.criterion(5, "merge identities")
@pytest.mark.parametrize("a_idx,c_idx,e_idx,g_idx", [(0, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0), (0, 0, 1, 1)])
def test_function_identity(a_idx, c_idx, e_idx, g_idx):
    b, d, f, h = (Var(n) for n in "bdfh")
    got = merge_functions(Function.of({a_idx: b}, {c_idx: d}), Function.of({e_idx: f}, {g_idx: h}))
    if a_idx == e_idx:
        params = {a_idx: Union(b, f)}
    else:
        params = {a_idx: b, e_idx: f}
    if c_idx == g_idx:
        rets = {c_idx: Union(d, h)}
    else:
        rets = {c_idx: d, g_idx: h}
    assert canonical(got) == canonical(Function.of(params, rets))


@pytest.mark.criterion(5, "merge identities")
def test_merge_normalization():
    r1, r2 = _p("{0:32: a, 4:32: b}"), _p("{4:32: c, 8:32: d}")
    assert canonical(merge_records(r1, r2)) == canonical(merge_records(r2, r1))
    assert canonical(merge_records(r1, r1)) == canonical(r1)
    p1, p2 = Ptr(Var("a"), Var("b")), Ptr(Var("c"), Var("d"))
    assert canonical(merge_pointers(p1, p2)) == canonical(merge_pointers(p2, p1))
    f1, f2 = _p("(0: a) -> (0: b)"), _p("(1: c) -> (0: d)")
    assert canonical(merge_functions(f1, f2)) == canonical(merge_functions(f2, f1))
    assert canonical(merge_functions(f1, f1)) == canonical(f1)


# --------------------------------------------------------------- criterion 6

def _field_caps(a):
    return {w for w in path_language(prune(a), 4) if w and w[-1].kind == "rec"}


@pytest.mark.criterion(6, "callsite polymorphism")
def test_polymorphic_callsites_disjoint():
    program = parse_ir((SAMPLES / "alloc.ir").read_text())
    res = infer(program, L)
    sites = {c.caller: _field_caps(c.automaton) for c in res.callsites if c.callee == "alloc"}
    assert set(sites) == {"make_a", "make_b"}
    assert sites["make_a"] and sites["make_b"]
    assert sites["make_a"].isdisjoint(sites["make_b"])
    # the refined signature joins both uses
    assert _field_caps(res.refined["alloc"]) == sites["make_a"] | sites["make_b"]
    ret = res.refined_lowered["alloc"].returns[0][1]
    assert isinstance(ret, CPtr) and isinstance(ret.pointee, Struct)
    assert [f.offset for f in ret.pointee.fields] == [0, 8]


@pytest.mark.criterion(6, "callsite polymorphism")
def test_monomorphic_control_leaks():
    program = parse_ir((SAMPLES / "alloc.ir").read_text())
    poly = infer(program, L)
    mono = infer(program, L, polymorphic=False)
    sites = {c.caller: _field_caps(c.automaton) for c in mono.callsites if c.callee == "alloc"}
    assert sites["make_a"] == sites["make_b"]
    poly_a = {c.caller: _field_caps(c.automaton) for c in poly.callsites}["make_a"]
    assert sites["make_a"] > poly_a


# --------------------------------------------------------------- criterion 7

@pytest.mark.criterion(7, "metric properties")
@settings(max_examples=200, deadline=None)
@given(t=ctypes(), u=ctypes())
def test_metric_identity_and_bound(t, u):
    assert type_distance(t, t, L) == 0
    d = type_distance(t, u, L)
    assert 0 <= d <= L.max_distance


def _struct(*fields):
    return Struct(None, tuple(StructField(o, 8 * w, Prim(n, 8 * w)) for o, w, n in fields))


@pytest.mark.criterion(7, "metric properties")
def test_metric_hand_values():
    worst = Fraction(L.max_distance)
    assert worst == 2
    assert type_distance(Prim("int32", 32), Prim("int64", 64), L) == 1
    # ground field absent from the inferred record counts as the maximum
    assert type_distance(_struct((0, 4, "int32")), _struct((0, 4, "int32"), (4, 4, "int32")), L) == 1
    # inferred field over ground padding is dropped before matching
    pad = type_distance(_struct((0, 4, "int32"), (4, 4, "int32")), _struct((0, 4, "int32"), (8, 8, "int64")), L)
    assert pad == 1
    # overlapping fields are kept: one mismatch at 0, one extra at 4
    assert type_distance(_struct((0, 4, "int32"), (4, 2, "int16")), _struct((0, 8, "int64")), L) == Fraction(3, 2)
    assert type_distance(CPtr(Prim("int32", 32)), Prim("int32", 32), L) == worst


# --------------------------------------------------------------- criterion 8

@pytest.mark.criterion(8, "performance smoke")
def test_704_constraints_under_250ms():
    f = synthetic_function(704, seed=0)
    cs = gen_constraints(f)
    assert len(cs) == 704
    best = min(_timed(lambda: solve(cs, L)) for _ in range(3))
    assert best < 0.250


@pytest.mark.criterion(8, "performance smoke")
def test_growth_subquadratic():
    from binsub.ir import IrProgram

    sizes = [16, 32, 64, 128, 256, 512, 1024]
    times = []
    for n in sizes:
        f = synthetic_function(n, seed=1)
        prog = IrProgram({f.name: f})
        times.append(min(_timed(lambda: infer(prog, L)) for _ in range(3)))
    assert growth_exponent(sizes, [t * 1e9 for t in times]) < 2.0


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0
