"""Lowering of simplified type automata to C-like types.

Loops are broken by redirecting edges to named placeholder states, then each
state picks one constructor by priority (record, pointer, function, atom).
Pointer store and load sides are merged into a single pointee, following the
pointer merge identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .automata import (
    LOAD,
    STORE,
    FnIn,
    FnOut,
    NodeLabel,
    RecLabel,
    TypeAutomaton,
    minimize,
)
from .lattice import AtomicLattice, default_lattice
from .types import (
    Function,
    Inter,
    PolarType,
    Ptr,
    Record,
    Union,
    _flatten,
)

# --------------------------------------------------------- polar-level merges


def _normalize(t: PolarType) -> PolarType:
    """Drop duplicate operands of a top-level union/intersection chain."""
    if not isinstance(t, (Union, Inter)):
        return t
    ops = list(dict.fromkeys(_flatten(t, type(t))))
    out = ops[-1]
    for o in reversed(ops[:-1]):
        out = type(t)(o, out)
    return out


def meet(a: PolarType, b: PolarType) -> PolarType:
    return _normalize(Inter(a, b))


def join(a: PolarType, b: PolarType) -> PolarType:
    return _normalize(Union(a, b))


def merge_records(a: Record, b: Record, mode: str = "meet") -> Record:
    """Record identity: equal keys combine their field types; in meet mode
    distinct keys are all kept, in join mode only shared keys survive."""
    am, bm = a.field_map, b.field_map
    op = meet if mode == "meet" else join
    out = {}
    for k in sorted(set(am) | set(bm)):
        if k in am and k in bm:
            out[k] = op(am[k], bm[k])
        elif mode == "meet":
            out[k] = am.get(k, bm.get(k))
    return Record(tuple(out.items()))


def merge_pointers(a: Ptr, b: Ptr) -> Ptr:
    """ptr(a, b) ⊓ ptr(c, d) = ptr((a ⊔ c) ⊓ (b ⊓ d), b ⊓ d)."""
    load = meet(a.load, b.load)
    return Ptr(meet(join(a.store, b.store), load), load)


def merge_pointers_all(ptrs: List[Ptr]) -> Ptr:
    """Meet all loads, join all stores, then meet the store join with the
    load aggregate."""
    load = ptrs[0].load
    store = ptrs[0].store
    for p in ptrs[1:]:
        load = meet(load, p.load)
        store = join(store, p.store)
    return Ptr(meet(store, load), load)


def merge_functions(a: Function, b: Function, mode: str = "meet") -> Function:
    """Function identity: matching parameter indices and matching return
    indices are joined, others are kept.  Join mode keeps only shared
    indices, meeting parameters and joining returns."""
    def side(x, y, op):
        xm, ym = dict(x), dict(y)
        out = {}
        for i in sorted(set(xm) | set(ym)):
            if i in xm and i in ym:
                out[i] = op(xm[i], ym[i])
            elif mode == "meet":
                out[i] = xm.get(i, ym.get(i))
        return out

    if mode == "meet":
        return Function.of(side(a.params, b.params, join), side(a.returns, b.returns, join))
    return Function.of(side(a.params, b.params, meet), side(a.returns, b.returns, join))


# ------------------------------------------------------------------ C types

class CType:
    pass


@dataclass(frozen=True)
class Prim(CType):
    name: str
    width: Optional[int] = None


@dataclass(frozen=True)
class Unknown(CType):
    width: Optional[int] = None


@dataclass(frozen=True)
class CPtr(CType):
    pointee: CType


@dataclass(frozen=True)
class Named(CType):
    name: str


@dataclass(frozen=True)
class StructField:
    offset: int  # bytes
    size: int  # bits
    type: CType


@dataclass(frozen=True)
class Struct(CType):
    name: Optional[str]
    fields: Tuple[StructField, ...]


@dataclass(frozen=True)
class Func(CType):
    params: Tuple[Tuple[int, CType], ...]
    returns: Tuple[Tuple[int, CType], ...]


@dataclass
class TypeEnvironment:
    decls: Dict[str, CType] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)
    counter: int = 0

    def fresh_name(self) -> str:
        while True:
            name = f"t{self.counter}"
            self.counter += 1
            if name not in self.decls:
                return name

    def dangling(self) -> List[str]:
        out = []
        for d in self.decls.values():
            for n in _named_refs(d):
                if n not in self.decls:
                    out.append(n)
        return out


def _named_refs(t: CType):
    if isinstance(t, Named):
        yield t.name
    elif isinstance(t, CPtr):
        yield from _named_refs(t.pointee)
    elif isinstance(t, Struct):
        for f in t.fields:
            yield from _named_refs(f.type)
    elif isinstance(t, Func):
        for _, x in t.params + t.returns:
            yield from _named_refs(x)


# -------------------------------------------------------------- loop breaking

def _graph(a: TypeAutomaton) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(a.states)
    for s in a.states:
        for _, t in a.out(s):
            g.add_edge(s, t)
    return g


def break_loops(a: TypeAutomaton) -> Tuple[TypeAutomaton, Dict[str, int]]:
    """Redirect edges into fresh named states until the automaton is acyclic.

    Edges from a record field into a pointer state are consumed first; other
    cycles are broken at the smallest (source state, label) edge.  Returns the
    new automaton and a map from each name to the state it stands for.
    """
    labels = list(a.labels)
    edges = {s: list(out) for s, out in a.edges.items()}
    named: Dict[int, str] = {}
    names: Dict[str, int] = {}
    placeholder: Dict[int, int] = {}
    counter = 0
    work = TypeAutomaton(labels, a.start, edges, named)
    while True:
        g = _graph(work)
        cyclic = set()
        for comp in nx.strongly_connected_components(g):
            if len(comp) > 1 or any(g.has_edge(s, s) for s in comp):
                cyclic.add(frozenset(comp))
        if not cyclic:
            break
        comp_of = {s: c for c in cyclic for s in c}
        inner = [(s, e, t) for s in sorted(comp_of) for e, t in edges.get(s, [])
                 if t in comp_of.get(s, ())]
        preferred = [x for x in inner if x[1].kind == "rec" and labels[x[2]].P]
        s, e, t = min(preferred or inner, key=lambda x: (x[0], x[1].sort_key(), x[2]))
        if t not in placeholder:
            name = f"t{counter}"
            counter += 1
            placeholder[t] = len(labels)
            labels.append(NodeLabel(labels[t].polarity))
            named[placeholder[t]] = name
            names[name] = t
        edges[s] = [(x, placeholder[t] if (x, y) == (e, t) else y) for x, y in edges[s]]
    return TypeAutomaton(labels, a.start, {s: o for s, o in edges.items() if o}, named), names


# ----------------------------------------------------------------- lowering

def select_constructor(l: NodeLabel) -> str:
    if l.R:
        return "record"
    if l.P:
        return "pointer"
    if l.I is not None:
        return "function"
    return "atom"


_RANK = {Struct: 0, CPtr: 1, Named: 1, Func: 2, Prim: 3, Unknown: 4}


def ctype_merge(a: CType, b: CType, mode: str, lattice: AtomicLattice, env: TypeEnvironment) -> CType:
    """Combine two C types; ``mode`` is meet or join."""
    if a == b:
        return a
    if isinstance(a, Unknown):
        return b
    if isinstance(b, Unknown):
        return a
    if type(a) is not type(b):
        return a if _RANK[type(a)] <= _RANK[type(b)] else b
    if isinstance(a, Struct):
        am = {(f.offset, f.size): f.type for f in a.fields}
        bm = {(f.offset, f.size): f.type for f in b.fields}
        keys = sorted(set(am) | set(bm)) if mode == "meet" else sorted(set(am) & set(bm))
        fields = []
        for k in keys:
            if k in am and k in bm:
                fields.append(StructField(k[0], k[1], ctype_merge(am[k], bm[k], mode, lattice, env)))
            else:
                fields.append(StructField(k[0], k[1], am.get(k, bm.get(k))))
        return Struct(a.name or b.name, tuple(fields))
    if isinstance(a, CPtr):
        return CPtr(ctype_merge(a.pointee, b.pointee, mode, lattice, env))
    if isinstance(a, Prim):
        if a.name in lattice.atoms and b.name in lattice.atoms:
            m = lattice.meet(a.name, b.name) if mode == "meet" else lattice.join(a.name, b.name)
            if m in (lattice.top, lattice.bottom):
                return Unknown(a.width or b.width)
            return Prim(m, lattice.width(m))
        return a
    if isinstance(a, Func):
        def side(x, y):
            xm, ym = dict(x), dict(y)
            return tuple((i, ctype_merge(xm[i], ym[i], mode, lattice, env) if i in xm and i in ym
                          else xm.get(i, ym.get(i))) for i in sorted(set(xm) | set(ym)))
        return Func(side(a.params, b.params), side(a.returns, b.returns))
    env.diagnostics.append(f"cannot merge {a} and {b}")
    return a


def absorb_overlaps(fields: List[StructField], env: TypeEnvironment) -> Tuple[StructField, ...]:
    """Fields inside a larger field's byte range are absorbed by it; a
    partially overlapping field loses to the one at the lower offset."""
    ordered = sorted(fields, key=lambda f: (f.offset, -f.size))
    out: List[StructField] = []
    for f in ordered:
        if out:
            last = out[-1]
            last_end = last.offset * 8 + last.size
            if f.offset * 8 < last_end:
                if f.offset * 8 + f.size > last_end:
                    env.diagnostics.append(
                        f"dropped field at offset {f.offset} overlapping field at offset {last.offset}")
                continue
        out.append(f)
    return tuple(out)


class _Lowerer:
    def __init__(self, a: TypeAutomaton, names: Dict[str, int], env: TypeEnvironment,
                 lattice: AtomicLattice):
        self.a = a
        self.env = env
        self.lattice = lattice
        # names are re-issued from the environment so several lowerings can share it
        self.rename = {n: env.fresh_name() for n in names}
        for n in self.rename.values():
            env.decls.setdefault(n, Unknown())
        self.target_name = {t: self.rename[n] for n, t in names.items()}
        self.placeholder_target = {ph: names[n] for ph, n in a.named.items()}
        self.memo: Dict[Tuple[int, Optional[int]], CType] = {}

    def pointer_to_struct(self, s: int) -> bool:
        a = self.a
        if select_constructor(a.labels[s]) != "pointer":
            return False
        for e in (STORE, LOAD):
            t = a.succ(s, e)
            if t is not None:
                t = self._deref(t)
                if select_constructor(a.labels[t]) == "record":
                    return True
        return False

    def _deref(self, s: int) -> int:
        return self.placeholder_target.get(s, s)

    def reference(self, target: int) -> CType:
        name = self.target_name[target]
        if self.pointer_to_struct(target):
            return CPtr(Named(name))
        return Named(name)

    def declare(self, target: int):
        name = self.target_name[target]
        body = self.body(target, None)
        if self.pointer_to_struct(target) and isinstance(body, CPtr) and isinstance(body.pointee, Struct):
            self.env.decls[name] = Struct(name, body.pointee.fields)
        else:
            self.env.decls[name] = body

    def lower(self, s: int, size: Optional[int] = None) -> CType:
        if s in self.a.named:
            return self.reference(self._deref(s))
        if s in self.target_name:
            return self.reference(s)
        return self.body(s, size)

    def body(self, s: int, size: Optional[int]) -> CType:
        key = (s, size)
        if key in self.memo:
            return self.memo[key]
        a, lab = self.a, self.a.labels[s]
        kind = select_constructor(lab)
        if kind == "record":
            fields = []
            for k in sorted(lab.R):
                t = a.succ(s, RecLabel(*k))
                ct = self.lower(t, k.size) if t is not None else Unknown(k.size)
                fields.append(StructField(k.offset, k.size, ct))
            out: CType = Struct(None, absorb_overlaps(fields, self.env))
        elif kind == "pointer":
            st, ld = a.succ(s, STORE), a.succ(s, LOAD)
            parts = [self.lower(t) for t in (st, ld) if t is not None]
            pointee: CType = Unknown()
            for p in parts:
                pointee = ctype_merge(pointee, p, "meet", self.lattice, self.env)
            out = CPtr(pointee)
        elif kind == "function":
            params = tuple((i, self.lower(a.succ(s, FnIn(i))) if a.succ(s, FnIn(i)) is not None else Unknown())
                           for i in sorted(lab.I))
            rets = tuple((j, self.lower(a.succ(s, FnOut(j))) if a.succ(s, FnOut(j)) is not None else Unknown())
                         for j in sorted(lab.O or ()))
            out = Func(params, rets)
        else:
            atom = lab.atom
            if atom is None or atom in (self.lattice.top, self.lattice.bottom) or atom not in self.lattice.atoms:
                out = Unknown(size)
            else:
                out = Prim(atom, self.lattice.width(atom))
        self.memo[key] = out
        return out


def lower(a: TypeAutomaton, env: Optional[TypeEnvironment] = None,
          lattice: Optional[AtomicLattice] = None) -> CType:
    """Lower an automaton to a C type, registering named types in ``env``."""
    lattice = lattice or default_lattice()
    env = env if env is not None else TypeEnvironment()
    coarse = minimize(a, lattice, partition="novars")
    acyclic, names = break_loops(coarse)
    lw = _Lowerer(acyclic, names, env, lattice)
    for target in sorted(names.values()):
        lw.declare(target)
    return lw.lower(acyclic.start)


# ---------------------------------------------------------------- rendering

def render(t: CType) -> str:
    """C spelling of a type used in a declarator position."""
    if isinstance(t, Prim):
        return t.name
    if isinstance(t, Unknown):
        return f"undefined{t.width}" if t.width else "undefined"
    if isinstance(t, Named):
        return f"struct {t.name}"
    if isinstance(t, CPtr):
        return render(t.pointee) + " *"
    if isinstance(t, Struct):
        if t.name:
            return f"struct {t.name}"
        inner = " ".join(f"{render(f.type)} field_{f.offset};" for f in t.fields)
        return "struct { " + inner + " }"
    if isinstance(t, Func):
        rets = [render(r) for _, r in t.returns]
        ret = "void" if not rets else rets[0] if len(rets) == 1 else "struct { " + " ".join(
            f"{r} r{i};" for i, r in enumerate(rets)) + " }"
        params = ", ".join(render(p) for _, p in t.params) or "void"
        return f"{ret} (*)({params})"
    raise TypeError(t)


def render_decl(name: str, t: CType) -> str:
    if isinstance(t, Struct):
        lines = [f"struct {name} {{"]
        for f in t.fields:
            lines.append(f"    {render(f.type)} field_{f.offset};  /* offset {f.offset}, {f.size} bits */")
        lines.append("};")
        return "\n".join(lines)
    return f"typedef {render(t)} {name};"


def render_signature(name: str, t: CType) -> str:
    if isinstance(t, Func):
        rets = [render(r) for _, r in t.returns]
        ret = "void" if not rets else rets[0] if len(rets) == 1 else "struct { " + " ".join(
            f"{r} r{i};" for i, r in enumerate(rets)) + " }"
        params = ", ".join(f"{render(p)} a{i}" for i, p in t.params) or "void"
        return f"{ret} {name}({params});"
    return f"{render(t)} {name};"


def render_env(env: TypeEnvironment) -> str:
    return "\n\n".join(render_decl(n, d) for n, d in sorted(env.decls.items()))


def to_json(t: CType):
    if isinstance(t, Prim):
        return {"kind": "prim", "name": t.name, "width": t.width}
    if isinstance(t, Unknown):
        return {"kind": "unknown", "width": t.width}
    if isinstance(t, Named):
        return {"kind": "named", "name": t.name}
    if isinstance(t, CPtr):
        return {"kind": "ptr", "pointee": to_json(t.pointee)}
    if isinstance(t, Struct):
        return {"kind": "struct", "name": t.name,
                "fields": [{"offset": f.offset, "size": f.size, "type": to_json(f.type)} for f in t.fields]}
    if isinstance(t, Func):
        return {"kind": "func", "params": [to_json(p) for _, p in t.params],
                "returns": [to_json(r) for _, r in t.returns]}
    raise TypeError(t)


def env_to_json(env: TypeEnvironment) -> dict:
    return {n: to_json(d) for n, d in sorted(env.decls.items())}
