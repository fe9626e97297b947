"""Polar type terms: records, functions, split load/store pointers, variables,
atoms, unions, intersections and equi-recursive ``mu`` types."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Set, Tuple


class TypeError_(ValueError):
    """Base class for malformed type terms."""


class PolarityError(TypeError_):
    pass


class NotRecursive(TypeError_):
    pass


class IllFormedType(TypeError_):
    pass


class TypeSyntaxError(TypeError_):
    def __init__(self, msg: str, col: int):
        super().__init__(f"col {col}: {msg}")
        self.col = col


class Polarity(enum.Enum):
    POS = "+"
    NEG = "-"

    def __neg__(self) -> "Polarity":
        return Polarity.NEG if self is Polarity.POS else Polarity.POS

    def __str__(self):
        return self.value


POS = Polarity.POS
NEG = Polarity.NEG


class FieldKey(NamedTuple):
    """Byte offset and bit size of a record field."""

    offset: int
    size: int

    def __str__(self):
        return f"{self.offset}:{self.size}"


class PolarType:
    __slots__ = ()

    def __str__(self):
        return show(self)


@dataclass(frozen=True)
class Var(PolarType):
    name: str


@dataclass(frozen=True)
class AtomT(PolarType):
    name: str


@dataclass(frozen=True)
class Top(PolarType):
    pass


@dataclass(frozen=True)
class Bottom(PolarType):
    pass


@dataclass(frozen=True)
class Ptr(PolarType):
    store: PolarType
    load: PolarType


@dataclass(frozen=True)
class Record(PolarType):
    fields: Tuple[Tuple[FieldKey, PolarType], ...]

    def __post_init__(self):
        keys = [k for k, _ in self.fields]
        if keys != sorted(set(keys)):
            object.__setattr__(self, "fields", tuple(sorted(dict(self.fields).items())))
        for k, _ in self.fields:
            if k.offset < 0 or k.size <= 0:
                raise IllFormedType(f"bad field key {k}")

    @classmethod
    def of(cls, fields: Mapping) -> "Record":
        return cls(tuple(sorted((FieldKey(*k), v) for k, v in fields.items())))

    @property
    def field_map(self) -> Dict[FieldKey, PolarType]:
        return dict(self.fields)


@dataclass(frozen=True)
class Function(PolarType):
    params: Tuple[Tuple[int, PolarType], ...]
    returns: Tuple[Tuple[int, PolarType], ...]

    def __post_init__(self):
        for attr in ("params", "returns"):
            items = getattr(self, attr)
            if [i for i, _ in items] != sorted({i for i, _ in items}):
                object.__setattr__(self, attr, tuple(sorted(dict(items).items())))
            if any(i < 0 for i, _ in getattr(self, attr)):
                raise IllFormedType("negative parameter index")

    @classmethod
    def of(cls, params: Mapping[int, PolarType], returns: Mapping[int, PolarType]) -> "Function":
        return cls(tuple(sorted(params.items())), tuple(sorted(returns.items())))


@dataclass(frozen=True)
class Union(PolarType):
    left: PolarType
    right: PolarType


@dataclass(frozen=True)
class Inter(PolarType):
    left: PolarType
    right: PolarType


@dataclass(frozen=True)
class Mu(PolarType):
    binder: str
    body: PolarType


def join_all(types: Iterable[PolarType]) -> PolarType:
    """Right-nested union; the empty union is bottom."""
    items = list(types)
    if not items:
        return Bottom()
    out = items[-1]
    for t in reversed(items[:-1]):
        out = Union(t, out)
    return out


def meet_all(types: Iterable[PolarType]) -> PolarType:
    items = list(types)
    if not items:
        return Top()
    out = items[-1]
    for t in reversed(items[:-1]):
        out = Inter(t, out)
    return out


def children(t: PolarType) -> List[Tuple[PolarType, bool]]:
    """Immediate subterms paired with whether their polarity flips."""
    if isinstance(t, Ptr):
        return [(t.store, True), (t.load, False)]
    if isinstance(t, Record):
        return [(v, False) for _, v in t.fields]
    if isinstance(t, Function):
        return [(v, True) for _, v in t.params] + [(v, False) for _, v in t.returns]
    if isinstance(t, (Union, Inter)):
        return [(t.left, False), (t.right, False)]
    if isinstance(t, Mu):
        return [(t.body, False)]
    return []


def map_children(t: PolarType, f: Callable[[PolarType, bool], PolarType]) -> PolarType:
    if isinstance(t, Ptr):
        return Ptr(f(t.store, True), f(t.load, False))
    if isinstance(t, Record):
        return Record(tuple((k, f(v, False)) for k, v in t.fields))
    if isinstance(t, Function):
        return Function(tuple((i, f(v, True)) for i, v in t.params),
                        tuple((i, f(v, False)) for i, v in t.returns))
    if isinstance(t, Union):
        return Union(f(t.left, False), f(t.right, False))
    if isinstance(t, Inter):
        return Inter(f(t.left, False), f(t.right, False))
    if isinstance(t, Mu):
        return Mu(t.binder, f(t.body, False))
    return t


def check_polarity(t: PolarType, p: Polarity) -> bool:
    """Unions only at positive positions, intersections only at negative ones,
    and every ``mu`` binder used at the polarity it was introduced with."""

    def go(t, p, bound):
        if isinstance(t, Union) and p is NEG:
            return False
        if isinstance(t, Inter) and p is POS:
            return False
        if isinstance(t, Var) and t.name in bound:
            return bound[t.name] is p
        if isinstance(t, Mu):
            return go(t.body, p, {**bound, t.binder: p})
        return all(go(c, -p if flip else p, bound) for c, flip in children(t))

    return go(t, p, {})


def free_vars(t: PolarType) -> FrozenSet[str]:
    out: Set[str] = set()

    def go(t, bound):
        if isinstance(t, Var):
            if t.name not in bound:
                out.add(t.name)
        elif isinstance(t, Mu):
            go(t.body, bound | {t.binder})
        else:
            for c, _ in children(t):
                go(c, bound)

    go(t, frozenset())
    return frozenset(out)


def all_vars(t: PolarType) -> FrozenSet[str]:
    out = set()
    for s in subterms(t):
        if isinstance(s, Var):
            out.add(s.name)
        elif isinstance(s, Mu):
            out.add(s.binder)
    return frozenset(out)


def subterms(t: PolarType) -> Iterator[PolarType]:
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        stack.extend(c for c, _ in reversed(children(s)))


def size(t: PolarType) -> int:
    return sum(1 for _ in subterms(t))


def _fresh_binder(base: str, avoid: Set[str]) -> str:
    i = 1
    while f"{base}'{i}" in avoid:
        i += 1
    return f"{base}'{i}"


def substitute(t: PolarType, name: str, repl: PolarType) -> PolarType:
    """Capture-avoiding substitution of ``repl`` for free ``name`` in ``t``."""
    repl_free = free_vars(repl)

    def go(t):
        if isinstance(t, Var):
            return repl if t.name == name else t
        if isinstance(t, Mu):
            if t.binder == name:
                return t
            if t.binder in repl_free:
                avoid = set(all_vars(t)) | repl_free | {name}
                nb = _fresh_binder(t.binder, avoid)
                body = substitute(t.body, t.binder, Var(nb))
                return Mu(nb, go(body))
            return Mu(t.binder, go(t.body))
        return map_children(t, lambda c, _: go(c))

    return go(t)


def is_guarded(m: Mu) -> bool:
    """The binder must occur under a constructor somewhere in the body.  Bare
    occurrences are only tolerated as direct operands of the body's outermost
    union/intersection chain (the ``mu a. a & ...`` shape coalescing emits).
    A ``mu`` inside that chain denotes the enclosing type itself, so within
    its body its binder counts as the outer one."""
    found_guarded = False

    def go(t, guarded, names):
        nonlocal found_guarded
        if isinstance(t, Var):
            if t.name in names:
                if guarded:
                    found_guarded = True
                    return True
                return False
            return True
        if isinstance(t, Mu):
            return go(t.body, guarded, names - {t.binder})
        ctor = isinstance(t, (Ptr, Record, Function))
        return all(go(c, guarded or ctor, names) for c, _ in children(t))

    def top(t, names):
        if isinstance(t, (Union, Inter)):
            return top(t.left, names) & top(t.right, names)
        if isinstance(t, Mu):
            return top(t.body, names | {t.binder})
        if isinstance(t, Var) and t.name in names:
            return True
        return go(t, False, names)

    return top(m.body, frozenset([m.binder])) and found_guarded


def well_formed(t: PolarType, p: Polarity) -> bool:
    if not check_polarity(t, p):
        return False
    return all(is_guarded(s) for s in subterms(t) if isinstance(s, Mu))


def unroll(t: PolarType) -> PolarType:
    if not isinstance(t, Mu):
        raise NotRecursive(f"not a recursive type: {show(t)}")
    if not is_guarded(t):
        raise IllFormedType(f"unguarded recursive type: {show(t)}")
    return substitute(t.body, t.binder, t)


def rename_vars(t: PolarType, mapping: Callable[[str], str]) -> PolarType:
    """Rename free variables (binders are left alone)."""

    def go(t, bound):
        if isinstance(t, Var):
            return t if t.name in bound else Var(mapping(t.name))
        if isinstance(t, Mu):
            return Mu(t.binder, go(t.body, bound | {t.binder}))
        return map_children(t, lambda c, _: go(c, bound))

    return go(t, frozenset())


def canonical(t: PolarType):
    """A hashable normal form: unions/intersections flattened to frozensets,
    binders renamed by nesting depth.  Equal forms mean the terms agree up to
    reassociation, commutation and duplicate removal of ⊔/⊓ operands."""

    def go(t, env, depth):
        if isinstance(t, Var):
            return ("var", env.get(t.name, t.name))
        if isinstance(t, AtomT):
            return ("atom", t.name)
        if isinstance(t, Top):
            return ("top",)
        if isinstance(t, Bottom):
            return ("bot",)
        if isinstance(t, Ptr):
            return ("ptr", go(t.store, env, depth), go(t.load, env, depth))
        if isinstance(t, Record):
            return ("rec", tuple((k, go(v, env, depth)) for k, v in t.fields))
        if isinstance(t, Function):
            return ("fn", tuple((i, go(v, env, depth)) for i, v in t.params),
                    tuple((i, go(v, env, depth)) for i, v in t.returns))
        if isinstance(t, (Union, Inter)):
            tag = "join" if isinstance(t, Union) else "meet"
            ops = frozenset(go(o, env, depth) for o in _flatten(t, type(t)))
            return (tag, ops) if len(ops) > 1 else next(iter(ops))
        if isinstance(t, Mu):
            return ("mu", go(t.body, {**env, t.binder: f"#{depth}"}, depth + 1))
        raise TypeError(t)

    return go(t, {}, 0)


def _flatten(t, cls):
    if isinstance(t, cls):
        return _flatten(t.left, cls) + _flatten(t.right, cls)
    return [t]


# ---------------------------------------------------------------- printing

def show(t: PolarType) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, AtomT):
        return t.name
    if isinstance(t, Top):
        return "top"
    if isinstance(t, Bottom):
        return "bot"
    if isinstance(t, Ptr):
        return f"ptr({show(t.store)}, {show(t.load)})"
    if isinstance(t, Record):
        return "{" + ", ".join(f"{k}: {show(v)}" for k, v in t.fields) + "}"
    if isinstance(t, Function):
        ps = ", ".join(f"{i}: {show(v)}" for i, v in t.params)
        rs = ", ".join(f"{i}: {show(v)}" for i, v in t.returns)
        return f"({ps}) -> ({rs})"
    if isinstance(t, Union):
        return f"{_paren(t.left, False)} | {_paren(t.right, isinstance(t.right, Union))}"
    if isinstance(t, Inter):
        return f"{_paren(t.left, False)} & {_paren(t.right, isinstance(t.right, Inter))}"
    if isinstance(t, Mu):
        return f"mu {t.binder}. {show(t.body)}"
    raise TypeError(t)


def _paren(t, chain_ok):
    s = show(t)
    if chain_ok:
        return s
    if isinstance(t, (Union, Inter, Mu)):
        return f"({s})"
    return s


# ----------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_'#$@]*)|(?P<op>->|[(){}:,|&.]))")


def tokenize(text: str, base_col: int = 0) -> List[Tuple[str, str, int]]:
    toks = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1 + base_col
            raise TypeSyntaxError(f"unexpected character {text[col - 1 - base_col]!r}", col)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind) + 1 + base_col))
        pos = m.end()
    toks.append(("eof", "", len(text) + 1 + base_col))
    return toks


class _Parser:
    def __init__(self, toks, is_atom: Callable[[str], bool]):
        self.toks = toks
        self.i = 0
        self.is_atom = is_atom

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.next()
        if tok[1] != value:
            raise TypeSyntaxError(f"expected {value!r}, got {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def nat(self):
        tok = self.next()
        if tok[0] != "num":
            raise TypeSyntaxError(f"expected a number, got {tok[1]!r}", tok[2])
        return int(tok[1])

    def type(self):
        if self.peek()[1] == "mu" and self.peek(1)[0] == "ident":
            self.next()
            binder = self.next()[1]
            self.expect(".")
            return Mu(binder, self.type())
        left = self.meet()
        if self.peek()[1] == "|":
            self.next()
            return Union(left, self.type())
        return left

    def meet(self):
        left = self.primary()
        if self.peek()[1] == "&":
            self.next()
            if self.peek()[1] == "mu":
                return Inter(left, self.type())
            return Inter(left, self.meet())
        return left

    def primary(self):
        kind, val, col = self.peek()
        if val == "ptr" and self.peek(1)[1] == "(":
            self.next()
            self.next()
            store = self.type()
            self.expect(",")
            load = self.type()
            self.expect(")")
            return Ptr(store, load)
        if val == "{":
            self.next()
            fields = {}
            while self.peek()[1] != "}":
                off = self.nat()
                self.expect(":")
                sz = self.nat()
                self.expect(":")
                fields[(off, sz)] = self.type()
                if self.peek()[1] != ",":
                    break
                self.next()
            self.expect("}")
            return Record.of(fields)
        if val == "(":
            if self._looks_like_fn():
                params = self.slots()
                self.expect("->")
                returns = self.slots()
                return Function.of(params, returns)
            self.next()
            t = self.type()
            self.expect(")")
            return t
        if kind == "ident":
            self.next()
            if val == "top":
                return Top()
            if val == "bot":
                return Bottom()
            return AtomT(val) if self.is_atom(val) else Var(val)
        raise TypeSyntaxError(f"unexpected {val or 'end of input'!r}", col)

    def _looks_like_fn(self):
        a, b = self.peek(1), self.peek(2)
        if a[1] == ")":
            return self.peek(2)[1] == "->"
        return a[0] == "num" and b[1] == ":"

    def slots(self):
        self.expect("(")
        out = {}
        while self.peek()[1] != ")":
            idx = self.nat()
            self.expect(":")
            out[idx] = self.type()
            if self.peek()[1] != ",":
                break
            self.next()
        self.expect(")")
        return out


def parse_type(text: str, is_atom: Optional[Callable[[str], bool]] = None, base_col: int = 0) -> PolarType:
    """Parse the textual type syntax.  Identifiers for which ``is_atom`` holds
    become atoms; everything else is a type variable."""
    if is_atom is None:
        from .lattice import default_lattice

        lat = default_lattice()
        is_atom = lambda n: n in lat.atoms
    p = _Parser(tokenize(text, base_col), is_atom)
    t = p.type()
    tok = p.peek()
    if tok[0] != "eof":
        raise TypeSyntaxError(f"trailing input {tok[1]!r}", tok[2])
    return t
