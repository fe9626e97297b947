"""Type automata: construction from polar types, subset determinization with
label merging, Hopcroft minimization, union, and decompilation.

A state label is a :class:`NodeLabel`.  Set components ``I``, ``O`` and ``R``
are ``None`` when the constructor kind is absent, which is the identity of
meet; ``atom`` is ``None`` when no atomic information is present.  Positive
states merge with join and negative states with meet.  ``bearing`` marks
labels that carry some head information (a constructor, an atom, or top at
positive polarity); labels that are not bearing act as the identity of the
merge at their polarity apart from their variables.
"""

from __future__ import annotations

import sys
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .lattice import AtomicLattice, default_lattice
from .types import (
    NEG,
    POS,
    AtomT,
    Bottom,
    FieldKey,
    Function,
    Inter,
    Mu,
    PolarityError,
    PolarType,
    Polarity,
    Ptr,
    Record,
    Top,
    Union,
    Var,
    check_polarity,
    join_all,
    meet_all,
)


class PolarityMergeError(ValueError):
    pass


# -------------------------------------------------------------------- labels

_KIND_ORDER = {"eps": 0, "in": 1, "out": 2, "rec": 3, "store": 4, "load": 5}


@dataclass(frozen=True)
class EdgeLabel:
    kind: str  # eps | in | out | rec | store | load
    a: int = 0
    b: int = 0

    @property
    def flips(self) -> bool:
        return self.kind in ("in", "store")

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.a, self.b)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        if self.kind == "eps":
            return "ε"
        if self.kind == "in":
            return f"FnIn({self.a})"
        if self.kind == "out":
            return f"FnOut({self.a})"
        if self.kind == "rec":
            return f"RecLabel({self.a},{self.b})"
        return "StoreLabel" if self.kind == "store" else "LoadLabel"


EPS = EdgeLabel("eps")
STORE = EdgeLabel("store")
LOAD = EdgeLabel("load")


def FnIn(n: int) -> EdgeLabel:
    return EdgeLabel("in", n)


def FnOut(n: int) -> EdgeLabel:
    return EdgeLabel("out", n)


def RecLabel(offset: int, size: int) -> EdgeLabel:
    return EdgeLabel("rec", offset, size)


def _opt_union(x, y):
    if x is None:
        return y
    if y is None:
        return x
    return x | y


@dataclass(frozen=True)
class NodeLabel:
    polarity: Polarity
    vars: FrozenSet[str] = frozenset()
    I: Optional[FrozenSet[int]] = None
    O: Optional[FrozenSet[int]] = None
    R: Optional[FrozenSet[FieldKey]] = None
    P: bool = False
    atom: Optional[str] = None
    bearing: bool = False

    @property
    def has_function(self) -> bool:
        return self.I is not None

    @property
    def has_record(self) -> bool:
        return self.R is not None

    def signature(self):
        """Coarse constructor-presence signature."""
        return (self.polarity, bool(self.I or self.O), bool(self.R), self.P, self.atom is not None)

    def merge(self, other: "NodeLabel", lattice: AtomicLattice) -> "NodeLabel":
        if self.polarity is not other.polarity:
            raise PolarityMergeError(f"cannot merge {self.polarity} and {other.polarity} labels")
        vs = self.vars | other.vars
        if self.polarity is NEG:
            if self.atom is None or other.atom is None:
                atom = self.atom if other.atom is None else other.atom
            else:
                atom = lattice.meet(self.atom, other.atom)
            return NodeLabel(NEG, vs, _opt_union(self.I, other.I), _opt_union(self.O, other.O),
                             _opt_union(self.R, other.R), self.P or other.P, atom,
                             self.bearing or other.bearing)
        if not other.bearing:
            return NodeLabel(POS, vs, self.I, self.O, self.R, self.P, self.atom, self.bearing)
        if not self.bearing:
            return NodeLabel(POS, vs, other.I, other.O, other.R, other.P, other.atom, True)

        def inter(x, y):
            return None if x is None or y is None else x & y

        atom = None
        if self.atom is not None and other.atom is not None:
            atom = lattice.join(self.atom, other.atom)
        return NodeLabel(POS, vs, inter(self.I, other.I), inter(self.O, other.O),
                         inter(self.R, other.R), self.P and other.P, atom, True)

    def signals(self, e: EdgeLabel) -> bool:
        """Whether the label has the constructor that edge ``e`` belongs to."""
        if e.kind in ("store", "load"):
            return self.P
        if e.kind == "in":
            return self.I is not None and e.a in self.I
        if e.kind == "out":
            return self.O is not None and e.a in self.O
        if e.kind == "rec":
            return self.R is not None and FieldKey(e.a, e.b) in self.R
        return True

    def render(self) -> str:
        caps = []
        if self.I:
            caps += [f"in{i}" for i in sorted(self.I)]
        if self.O:
            caps += [f"out{i}" for i in sorted(self.O)]
        if self.has_function and not self.I and not self.O:
            caps.append("fn")
        if self.R is not None:
            caps += [f"({k.offset},{k.size})" for k in sorted(self.R)] or ["{}"]
        if self.P:
            caps.append("p")
        atom = self.atom or "-"
        if self.polarity is POS and self.bearing and not caps and self.atom is None:
            atom = "top"
        return f"{self.polarity}; {{{', '.join(sorted(self.vars))}}}; {{{', '.join(caps)}}}; {atom}"


def identity_label(p: Polarity) -> NodeLabel:
    return NodeLabel(p)


def fold_labels(labels: Iterable[NodeLabel], p: Polarity, lattice: AtomicLattice) -> NodeLabel:
    return reduce(lambda x, y: x.merge(y, lattice), labels, identity_label(p))


# ----------------------------------------------------------------- automaton

@dataclass
class TypeAutomaton:
    labels: List[NodeLabel]
    start: int
    edges: Dict[int, List[Tuple[EdgeLabel, int]]] = field(default_factory=dict)
    # named placeholder state -> type name (set by loop breaking)
    named: Dict[int, str] = field(default_factory=dict)

    @property
    def states(self) -> range:
        return range(len(self.labels))

    @property
    def transitions(self) -> Set[Tuple[int, EdgeLabel, int]]:
        return {(s, e, t) for s, out in self.edges.items() for e, t in out}

    def out(self, s: int) -> List[Tuple[EdgeLabel, int]]:
        return self.edges.get(s, [])

    def succ(self, s: int, e: EdgeLabel) -> Optional[int]:
        for lab, t in self.out(s):
            if lab == e:
                return t
        return None

    @property
    def polarity(self) -> Polarity:
        return self.labels[self.start].polarity

    def is_deterministic(self) -> bool:
        for s in self.states:
            seen = set()
            for e, _ in self.out(s):
                if e.kind == "eps" or e in seen:
                    return False
                seen.add(e)
        return True

    def __len__(self):
        return len(self.labels)

    def key(self):
        """Structural identity, for equality tests."""
        return (self.start, tuple(self.labels),
                tuple(tuple(sorted(self.out(s), key=lambda x: (x[0].sort_key(), x[1]))) for s in self.states))


def _atom_label(name: str, p: Polarity) -> NodeLabel:
    return NodeLabel(p, atom=name, bearing=True)


def build_automaton(t: PolarType, p: Polarity, lattice: Optional[AtomicLattice] = None,
                    bounds: Optional[Callable[[str, Polarity], List[PolarType]]] = None) -> TypeAutomaton:
    """One state per syntax node; unions, intersections and ``mu`` binders
    are linked to their operands with epsilon edges, and bound variable
    occurrences point back to their binder with an epsilon edge.

    With ``bounds`` (variable name and polarity to lower or upper bounds),
    free variables are expanded in place: each (variable, polarity) gets one
    shared state with epsilon edges to its bounds.  The result is the graph
    form of the coalesced type, without the tree blow-up.
    """
    if not check_polarity(t, p):
        raise PolarityError(f"type is not well-polarized at {p}")
    lattice = lattice or default_lattice()
    labels: List[NodeLabel] = []
    edges: Dict[int, List[Tuple[EdgeLabel, int]]] = defaultdict(list)
    shared: Dict[Tuple[str, Polarity], int] = {}
    # (term, polarity, binder env, parent state, edge label)
    stack = [(t, p, {}, None, None)]
    while stack:
        term, pol, env, parent, elab = stack.pop()
        if bounds is not None and isinstance(term, Var) and term.name not in env:
            key = (term.name, pol)
            if key in shared:
                edges[parent].append((elab, shared[key]))
                continue
            shared[key] = len(labels)
        sid = len(labels)
        if parent is not None:
            edges[parent].append((elab, sid))
        kids: List[Tuple[PolarType, Polarity, EdgeLabel]] = []
        if isinstance(term, Var):
            if term.name in env:
                labels.append(identity_label(pol))
                edges[sid].append((EPS, env[term.name]))
            else:
                labels.append(NodeLabel(pol, frozenset([term.name])))
                if bounds is not None:
                    env = {}
                    kids = [(b, pol, EPS) for b in bounds(term.name, pol)]
        elif isinstance(term, AtomT):
            labels.append(_atom_label(term.name, pol))
        elif isinstance(term, Top):
            labels.append(NodeLabel(pol, bearing=True) if pol is POS else identity_label(pol))
        elif isinstance(term, Bottom):
            labels.append(identity_label(pol) if pol is POS else _atom_label(lattice.bottom, pol))
        elif isinstance(term, Ptr):
            labels.append(NodeLabel(pol, P=True, bearing=True))
            kids = [(term.store, -pol, STORE), (term.load, pol, LOAD)]
        elif isinstance(term, Record):
            labels.append(NodeLabel(pol, R=frozenset(k for k, _ in term.fields), bearing=True))
            kids = [(v, pol, RecLabel(*k)) for k, v in term.fields]
        elif isinstance(term, Function):
            labels.append(NodeLabel(pol, I=frozenset(i for i, _ in term.params),
                                    O=frozenset(j for j, _ in term.returns), bearing=True))
            kids = [(v, -pol, FnIn(i)) for i, v in term.params]
            kids += [(v, pol, FnOut(j)) for j, v in term.returns]
        elif isinstance(term, (Union, Inter)):
            labels.append(identity_label(pol))
            kids = [(term.left, pol, EPS), (term.right, pol, EPS)]
        elif isinstance(term, Mu):
            labels.append(identity_label(pol))
            env = {**env, term.binder: sid}
            kids = [(term.body, pol, EPS)]
        else:
            raise TypeError(f"not a polar type: {term!r}")
        # reversed so children are numbered left to right
        for child, cp, e in reversed(kids):
            stack.append((child, cp, env, sid, e))
    return TypeAutomaton(labels, 0, {s: out for s, out in edges.items() if out})


def _closure(a: TypeAutomaton, states: Iterable[int]) -> FrozenSet[int]:
    seen = set(states)
    work = list(seen)
    while work:
        s = work.pop()
        for e, t in a.out(s):
            if e.kind == "eps" and t not in seen:
                seen.add(t)
                work.append(t)
    return frozenset(seen)


def _fold_states(a: TypeAutomaton, group: Iterable[int], lattice) -> NodeLabel:
    group = sorted(group)
    pols = {a.labels[s].polarity for s in group}
    if len(pols) > 1:
        raise PolarityMergeError(f"states {group} mix polarities")
    return fold_labels((a.labels[s] for s in group), pols.pop(), lattice)


def determinize(a: TypeAutomaton, lattice: Optional[AtomicLattice] = None) -> TypeAutomaton:
    lattice = lattice or default_lattice()
    start = _closure(a, [a.start])
    index = {start: 0}
    order = [start]
    edges: Dict[int, List[Tuple[EdgeLabel, int]]] = {}
    queue = deque([start])
    while queue:
        subset = queue.popleft()
        moves: Dict[EdgeLabel, Set[int]] = defaultdict(set)
        for s in subset:
            for e, t in a.out(s):
                if e.kind != "eps":
                    moves[e].add(t)
        out = []
        for e in sorted(moves):
            target = _closure(a, moves[e])
            if target not in index:
                index[target] = len(order)
                order.append(target)
                queue.append(target)
            out.append((e, index[target]))
        if out:
            edges[index[subset]] = out
    labels = [_fold_states(a, sub, lattice) for sub in order]
    return canonical_numbering(TypeAutomaton(labels, 0, edges))


def canonical_numbering(a: TypeAutomaton) -> TypeAutomaton:
    """Renumber reachable states in DFS order, visiting edges in label order."""
    order: Dict[int, int] = {}
    stack = [a.start]
    while stack:
        s = stack.pop()
        if s in order:
            continue
        order[s] = len(order)
        for e, t in sorted(a.out(s), key=lambda x: (x[0].sort_key(), x[1]), reverse=True):
            if t not in order:
                stack.append(t)
    labels = [None] * len(order)
    edges = {}
    for old, new in order.items():
        labels[new] = a.labels[old]
        out = sorted(((e, order[t]) for e, t in a.out(old)), key=lambda x: (x[0].sort_key(), x[1]))
        if out:
            edges[new] = out
    return TypeAutomaton(labels, 0, edges)


def minimize(a: TypeAutomaton, lattice: Optional[AtomicLattice] = None,
             partition: str = "label") -> TypeAutomaton:
    """Hopcroft partition refinement on a deterministic automaton.

    ``partition="label"`` starts from classes of identical labels;
    ``partition="novars"`` ignores type variables; ``partition="signature"``
    starts from polarity and constructor-presence classes.  Labels of merged
    states are folded.
    """
    if not a.is_deterministic():
        raise ValueError("minimize needs a deterministic automaton")
    if partition not in ("label", "novars", "signature"):
        raise ValueError(f"unknown partition {partition!r}")
    lattice = lattice or default_lattice()
    a = canonical_numbering(a)
    n = len(a)
    sink = n  # absorbs missing transitions
    alphabet = sorted({e for s in a.states for e, _ in a.out(s)})
    delta = [dict(a.out(s)) for s in a.states] + [{}]
    inverse: Dict[EdgeLabel, Dict[int, Set[int]]] = {e: defaultdict(set) for e in alphabet}
    for s in range(n + 1):
        for e in alphabet:
            inverse[e][delta[s].get(e, sink)].add(s)

    keyfn = {
        "label": lambda l: l,
        "novars": lambda l: replace(l, vars=frozenset()),
        "signature": lambda l: l.signature(),
    }[partition]
    groups: Dict[object, Set[int]] = defaultdict(set)
    for s in a.states:
        groups[keyfn(a.labels[s])].add(s)
    blocks: List[Set[int]] = [groups[k] for k in sorted(groups, key=lambda k: min(groups[k]))]
    blocks.append({sink})
    where = {s: i for i, b in enumerate(blocks) for s in b}
    work = deque((i, e) for i in range(len(blocks)) for e in alphabet)
    queued = set(work)
    while work:
        bi, e = work.popleft()
        queued.discard((bi, e))
        pre = set()
        for s in blocks[bi]:
            pre |= inverse[e].get(s, set())
        touched = defaultdict(set)
        for s in pre:
            touched[where[s]].add(s)
        for ci, inside in touched.items():
            block = blocks[ci]
            if len(inside) == len(block):
                continue
            rest = block - inside
            blocks[ci] = inside
            blocks.append(rest)
            ni = len(blocks) - 1
            for s in rest:
                where[s] = ni
            for x in alphabet:
                if (ci, x) in queued:
                    work.append((ni, x))
                    queued.add((ni, x))
                else:
                    small = ci if len(inside) <= len(rest) else ni
                    work.append((small, x))
                    queued.add((small, x))
    # collapse
    rep: Dict[int, int] = {}
    new_labels: List[NodeLabel] = []
    for b in blocks:
        real = sorted(s for s in b if s != sink)
        if not real:
            continue
        for s in real:
            rep[s] = len(new_labels)
        new_labels.append(_fold_states(a, real, lattice))
    edges: Dict[int, List[Tuple[EdgeLabel, int]]] = {}
    for s in a.states:
        r = rep[s]
        if r in edges:
            continue
        out = [(e, rep[t]) for e, t in a.out(s)]
        if out:
            edges[r] = out
    return canonical_numbering(TypeAutomaton(new_labels, rep[a.start], edges))


def simplify(t: PolarType, p: Polarity, lattice: Optional[AtomicLattice] = None,
             bounds=None) -> TypeAutomaton:
    lattice = lattice or default_lattice()
    return minimize(determinize(build_automaton(t, p, lattice, bounds), lattice), lattice)


def join_automata(a: TypeAutomaton, b: TypeAutomaton, lattice: Optional[AtomicLattice] = None) -> TypeAutomaton:
    """Merge at the start states: a fresh start with epsilon edges to both."""
    if a.polarity is not b.polarity:
        raise PolarityMergeError("cannot join automata of different polarity")
    lattice = lattice or default_lattice()
    labels = [identity_label(a.polarity)]
    edges: Dict[int, List[Tuple[EdgeLabel, int]]] = {}
    offsets = []
    for x in (a, b):
        off = len(labels)
        offsets.append(off + x.start)
        labels.extend(x.labels)
        for s, out in x.edges.items():
            edges[s + off] = [(e, t + off) for e, t in out]
    edges[0] = [(EPS, offsets[0]), (EPS, offsets[1])]
    return minimize(determinize(TypeAutomaton(labels, 0, edges), lattice), lattice)


def prune(a: TypeAutomaton) -> TypeAutomaton:
    """Drop edges whose constructor the source label does not carry, then
    unreachable states."""
    edges = {}
    for s in a.states:
        out = [(e, t) for e, t in a.out(s) if a.labels[s].signals(e)]
        if out:
            edges[s] = out
    return canonical_numbering(TypeAutomaton(list(a.labels), a.start, edges))


# ---------------------------------------------------------------- decompile

def decompile_automaton(a: TypeAutomaton, fresh: Optional[Callable[[str], str]] = None,
                        binder_prefix: str = "r") -> PolarType:
    """Rebuild a polar type from a deterministic automaton.  ``fresh`` maps
    each type variable to its replacement name."""
    if not a.is_deterministic():
        raise ValueError("decompile needs a deterministic automaton")
    rename = fresh or (lambda v: v)
    taken = {rename(v) for l in a.labels for v in l.vars}
    binders: Dict[int, str] = {}
    counter = [0]

    def binder_for(s):
        if s not in binders:
            while True:
                counter[0] += 1
                name = f"{binder_prefix}{counter[0]}"
                if name not in taken:
                    taken.add(name)
                    break
            binders[s] = name
        return binders[s]

    on_stack: Set[int] = set()
    # closed results (no reference to a state still on the stack) are shared
    memo: Dict[int, PolarType] = {}

    def go(s: int, hits: Set[int]) -> PolarType:
        if s in on_stack:
            hits.add(s)
            return Var(binder_for(s))
        if s in memo:
            return memo[s]
        on_stack.add(s)
        mine: Set[int] = set()
        lab = a.labels[s]
        p = lab.polarity
        out = dict(a.out(s))

        def child(e: EdgeLabel, absent: PolarType) -> PolarType:
            t = out.get(e)
            return go(t, mine) if t is not None else absent

        parts: List[PolarType] = []
        if lab.R is not None:
            parts.append(Record.of({k: child(RecLabel(*k), Top() if p is NEG else Bottom())
                                    for k in sorted(lab.R)}))
        if lab.P:
            parts.append(Ptr(child(STORE, Bottom() if p is NEG else Top()),
                             child(LOAD, Top() if p is NEG else Bottom())))
        if lab.I is not None:
            params = {i: child(FnIn(i), Bottom() if p is NEG else Top()) for i in sorted(lab.I)}
            rets = {j: child(FnOut(j), Top() if p is NEG else Bottom()) for j in sorted(lab.O or ())}
            parts.append(Function.of(params, rets))
        for v in sorted(lab.vars):
            parts.append(Var(rename(v)))
        if lab.atom is not None:
            parts.append(AtomT(lab.atom))
        elif p is POS and lab.bearing and lab.R is None and not lab.P and lab.I is None:
            parts.append(Top())
        on_stack.discard(s)
        if not parts:
            body: PolarType = Top() if (p is NEG or lab.bearing) else Bottom()
        else:
            body = meet_all(parts) if p is NEG else join_all(parts)
        if s in mine:
            body = Mu(binders.pop(s), body)
            mine.discard(s)
        if not mine:
            memo[s] = body
        hits |= mine
        return body

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * len(a) + 1000))
    try:
        return go(a.start, set())
    finally:
        sys.setrecursionlimit(limit)


def fresh_renamer(suffix: str) -> Callable[[str], str]:
    return lambda v: f"{v}#{suffix}"


# ------------------------------------------------------------------- export

def to_dot(a: TypeAutomaton, name: str = "automaton") -> str:
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    for s in a.states:
        label = a.labels[s].render().replace('"', '\\"')
        shape = ", peripheries=2" if s == a.start else ""
        lines.append(f'  q{s} [label="{label}"{shape}];')
    for s in a.states:
        for e, t in a.out(s):
            lines.append(f'  q{s} -> q{t} [label="{e}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(a: TypeAutomaton) -> dict:
    def lab(l: NodeLabel):
        return {
            "polarity": str(l.polarity),
            "vars": sorted(l.vars),
            "fn_ins": None if l.I is None else sorted(l.I),
            "fn_outs": None if l.O is None else sorted(l.O),
            "rec_fields": None if l.R is None else [[k.offset, k.size] for k in sorted(l.R)],
            "ptr": l.P,
            "atom": l.atom,
        }

    return {
        "start": a.start,
        "states": [lab(l) for l in a.labels],
        "edges": [[s, str(e), t] for s in a.states for e, t in a.out(s)],
    }


# ------------------------------------------------------------------- oracles

def path_language(a: TypeAutomaton, depth: int = 6) -> Set[Tuple[EdgeLabel, ...]]:
    """Label sequences of length <= depth readable from the start, with
    epsilon edges transparent."""
    return set(path_folds(a, depth, None))


def path_folds(a: TypeAutomaton, depth: int = 6, lattice: Optional[AtomicLattice] = None
               ) -> Dict[Tuple[EdgeLabel, ...], Optional[NodeLabel]]:
    """For each readable path, the merge of the labels of every state the
    path can end in (by direct simulation, independent of determinize).
    With ``lattice=None`` only the paths are computed."""
    out: Dict[Tuple[EdgeLabel, ...], Optional[NodeLabel]] = {}
    frontier = [((), _closure(a, [a.start]))]
    for d in range(depth + 1):
        nxt = []
        for path, cur in frontier:
            if lattice is not None:
                labs = [a.labels[s] for s in sorted(cur)]
                out[path] = fold_labels(labs, labs[0].polarity, lattice)
            else:
                out[path] = None
            if d == depth:
                continue
            moves: Dict[EdgeLabel, Set[int]] = defaultdict(set)
            for s in cur:
                for e, t in a.out(s):
                    if e.kind != "eps":
                        moves[e].add(t)
            for e, ts in moves.items():
                nxt.append((path + (e,), _closure(a, ts)))
        frontier = nxt
    return out
