from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import strategies as st

from binsub.lattice import default_lattice
from binsub.lowering import CPtr, Func, Prim, Struct, StructField, Unknown
from binsub.types import (
    POS,
    AtomT,
    Bottom,
    FieldKey,
    Function,
    Inter,
    Mu,
    Ptr,
    Record,
    Top,
    Union,
    Var,
    free_vars,
)

SAMPLES = Path(__file__).resolve().parents[1] / "samples"

VAR_NAMES = ["a", "b", "c", "d"]
ATOMS = ["int8", "int32", "int64", "float32", "bool", "code"]
KEYS = [FieldKey(0, 32), FieldKey(4, 32), FieldKey(8, 64), FieldKey(0, 8)]


@pytest.fixture
def lattice():
    return default_lattice()


@pytest.fixture
def samples():
    return SAMPLES


@st.composite
def polar_types(draw, p=POS, depth=5, binders=(), guarded=True):
    """Well-polarized, guarded types of the given depth bound.

    ``binders`` holds (name, polarity) of enclosing ``mu``; a binder is only
    referenced below a constructor and at its own polarity.
    """
    leaves = [
        st.sampled_from(VAR_NAMES).map(Var),
        st.sampled_from(ATOMS).map(AtomT),
        st.just(Top()),
        st.just(Bottom()),
    ]
    usable = [b for b, bp in binders if bp is p and guarded]
    if usable:
        leaves.append(st.sampled_from(usable).map(Var))
    if depth <= 0:
        return draw(st.one_of(leaves))
    kind = draw(st.sampled_from(["leaf", "leaf", "ptr", "rec", "fn", "op", "op", "mu"]))
    sub = lambda q, g=True: polar_types(q, depth - 1, binders, g)  # noqa: E731
    if kind == "leaf":
        return draw(st.one_of(leaves))
    if kind == "ptr":
        return Ptr(draw(sub(-p)), draw(sub(p)))
    if kind == "rec":
        keys = draw(st.lists(st.sampled_from(KEYS), min_size=1, max_size=2, unique=True))
        return Record.of({k: draw(sub(p)) for k in keys})
    if kind == "fn":
        params = draw(st.lists(st.integers(0, 1), max_size=2, unique=True))
        rets = draw(st.lists(st.integers(0, 1), max_size=1, unique=True))
        return Function.of({i: draw(sub(-p)) for i in params}, {j: draw(sub(p)) for j in rets})
    if kind == "op":
        cls = Union if p is POS else Inter
        return cls(draw(sub(p, guarded)), draw(sub(p, guarded)))
    name = f"m{depth}"
    inner = polar_types(p, depth - 1, tuple(binders) + ((name, p),), False)
    body = draw(inner)
    if name not in free_vars(body):
        # ensure one guarded occurrence of the binder
        back = Ptr(draw(polar_types(-p, 0)), Var(name))
        body = (Union if p is POS else Inter)(body, back)
    return Mu(name, body)


@st.composite
def ctypes(draw, depth=3):
    prim = st.sampled_from(ATOMS).map(lambda n: Prim(n, default_lattice().width(n)))
    leaves = st.one_of(prim, st.just(Unknown()), st.just(Unknown(32)))
    if depth <= 0:
        return draw(leaves)
    kind = draw(st.sampled_from(["leaf", "ptr", "struct", "func"]))
    if kind == "leaf":
        return draw(leaves)
    if kind == "ptr":
        return CPtr(draw(ctypes(depth - 1)))
    if kind == "struct":
        offs = draw(st.lists(st.sampled_from([0, 4, 8, 16]), min_size=1, max_size=3, unique=True))
        return Struct(None, tuple(StructField(o, 32, draw(ctypes(depth - 1))) for o in sorted(offs)))
    params = draw(st.lists(ctypes(depth - 1), max_size=2))
    rets = draw(st.lists(ctypes(depth - 1), max_size=1))
    return Func(tuple(enumerate(params)), tuple(enumerate(rets)))





# ----------------------------------------------------- acceptance reporting

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n, title = mark.args
    prev = _CRITERIA.get(n, (title, True))
    _CRITERIA[n] = (title, prev[1] and not rep.failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
