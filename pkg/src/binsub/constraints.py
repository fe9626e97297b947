"""Subtyping constraints and their two textual front ends.

Native constraints are written ``TYPE <= TYPE`` in the polar type syntax.
Retypd-style constraints relate derived type variables (a base variable
followed by capabilities such as ``.load`` or ``.s4@0``) and are translated
into constructor constraints: ``p.load`` becomes the load slot of a pointer
``ptr(p_s, p_l)`` together with the side condition ``p_s <= p_l``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union as U

from .types import (
    NEG,
    POS,
    AtomT,
    Function,
    PolarType,
    Polarity,
    PolarityError,
    Ptr,
    Record,
    TypeSyntaxError,
    Var,
    check_polarity,
    free_vars,
    parse_type,
    show,
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class SubtypeConstraint:
    lhs: PolarType
    rhs: PolarType

    def __post_init__(self):
        if not check_polarity(self.lhs, POS):
            raise PolarityError(f"left side is not a positive type: {show(self.lhs)}")
        if not check_polarity(self.rhs, NEG):
            raise PolarityError(f"right side is not a negative type: {show(self.rhs)}")

    def __str__(self):
        return f"{show(self.lhs)} <= {show(self.rhs)}"


# ------------------------------------------------------------ capabilities

@dataclass(frozen=True)
class Load:
    def __str__(self):
        return "load"


@dataclass(frozen=True)
class Store:
    def __str__(self):
        return "store"


@dataclass(frozen=True)
class In:
    label: int

    def __str__(self):
        return f"in_{self.label}"


@dataclass(frozen=True)
class Out:
    label: int

    def __str__(self):
        return f"out_{self.label}"


@dataclass(frozen=True)
class Field:
    offset: int  # bytes
    size: int  # bits

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("field size must be positive")

    def __str__(self):
        return f"s{self.size // 8}@{self.offset}"


Capability = U[Load, Store, In, Out, Field]


@dataclass(frozen=True)
class DerivedTypeVariable:
    base: str
    path: Tuple[Capability, ...] = ()

    def __str__(self):
        return ".".join([self.base, *map(str, self.path)])


DTV = DerivedTypeVariable


def _kind(cap) -> str:
    if isinstance(cap, (Load, Store)):
        return "ptr"
    if isinstance(cap, Field):
        return "rec"
    return "fn"


def _suffix(cap) -> str:
    if isinstance(cap, Load):
        return "l"
    if isinstance(cap, Store):
        return "s"
    if isinstance(cap, In):
        return f"in{cap.label}"
    if isinstance(cap, Out):
        return f"out{cap.label}"
    return f"f{cap.offset}_{cap.size}"


class FreshNames:
    """Deterministic name source.  ``derived`` names are readable
    (``p_l`` for the load slot of ``p``); clashes get a ``#n`` suffix."""

    def __init__(self, taken: Iterable[str] = ()):
        self.taken: Set[str] = set(taken)
        self.counter = 0

    def reserve(self, names: Iterable[str]):
        self.taken.update(names)

    def derived(self, hint: str) -> str:
        name = hint
        while name in self.taken:
            self.counter += 1
            name = f"{hint}#{self.counter}"
        self.taken.add(name)
        return name

    def fresh(self, hint: str = "v") -> str:
        self.counter += 1
        name = f"{hint}#{self.counter}"
        while name in self.taken:
            self.counter += 1
            name = f"{hint}#{self.counter}"
        self.taken.add(name)
        return name


class _Node:
    __slots__ = ("name", "children", "type", "bare", "occ")

    def __init__(self, name):
        self.name = name
        self.children: Dict[Capability, "_Node"] = {}
        self.type: Optional[PolarType] = None
        self.bare = False
        self.occ: Set[Polarity] = set()


class _Expander:
    """Builds one constructor expansion per distinct base+path prefix."""

    def __init__(self, fresh: FreshNames, is_atom: Callable[[str], bool]):
        self.fresh = fresh
        self.is_atom = is_atom
        self.roots: Dict[str, _Node] = {}
        self.side: List[SubtypeConstraint] = []

    def add(self, d: DTV, p: Polarity) -> _Node:
        node = self.roots.get(d.base)
        if node is None:
            node = self.roots[d.base] = _Node(d.base)
        if not d.path:
            node.bare = True
        node.occ.add(p)
        for cap in d.path:
            child = node.children.get(cap)
            if child is None:
                child = node.children[cap] = _Node(None)
            node = child
        return node

    def finish(self):
        for base, root in self.roots.items():
            self._type_of(root, base)

    def _type_of(self, node: _Node, name: str) -> PolarType:
        if node.type is not None:
            return node.type
        if node.name is None:
            node.name = self.fresh.derived(name)
        if not node.children:
            if self.is_atom(node.name) and node.name in self.roots and node is self.roots[node.name]:
                node.type = AtomT(node.name)
            else:
                node.type = Var(node.name)
            return node.type
        kinds = {_kind(c) for c in node.children}
        ctors = {}
        for kind in sorted(kinds):
            caps = {c: ch for c, ch in node.children.items() if _kind(c) == kind}
            if kind == "ptr":
                s = self._child(node, caps, Store())
                l = self._child(node, caps, Load())
                self.side.append(SubtypeConstraint(s, l))
                ctors[kind] = Ptr(s, l)
            elif kind == "rec":
                ctors[kind] = Record.of({
                    (c.offset, c.size): self._type_of(ch, f"{node.name}_{_suffix(c)}")
                    for c, ch in sorted(caps.items(), key=lambda kv: (kv[0].offset, kv[0].size))
                })
            else:
                ins = {c.label: self._type_of(ch, f"{node.name}_{_suffix(c)}")
                       for c, ch in caps.items() if isinstance(c, In)}
                outs = {c.label: self._type_of(ch, f"{node.name}_{_suffix(c)}")
                        for c, ch in caps.items() if isinstance(c, Out)}
                ctors[kind] = Function.of(ins, outs)
        if len(ctors) == 1:
            node.type = next(iter(ctors.values()))
        else:
            # mixed capability kinds: keep the variable and bound it by each constructor
            node.type = Var(node.name)
            for t in ctors.values():
                self.side.append(SubtypeConstraint(node.type, t))
        return node.type

    def _child(self, node, caps, cap):
        ch = caps.get(cap)
        if ch is None:
            ch = node.children[cap] = _Node(None)
        return self._type_of(ch, f"{node.name}_{_suffix(cap)}")

    def base_bounds(self) -> List[SubtypeConstraint]:
        out = []
        for base, root in self.roots.items():
            if root.bare or not root.children or not isinstance(root.type, (Ptr, Record, Function)):
                continue
            if NEG in root.occ:
                out.append(SubtypeConstraint(Var(base), root.type))
            if POS in root.occ:
                out.append(SubtypeConstraint(root.type, Var(base)))
        return out


def _dedup(cs: Iterable[SubtypeConstraint]) -> List[SubtypeConstraint]:
    seen = set()
    out = []
    for c in cs:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def _no_atoms(_name: str) -> bool:
    return False


def translate_dtv(d: DTV, p: Polarity, fresh: Optional[FreshNames] = None,
                  is_atom: Callable[[str], bool] = _no_atoms) -> Tuple[PolarType, List[SubtypeConstraint]]:
    """Type of a single derived variable at polarity ``p`` plus the side
    constraints its capabilities introduce (including the bound on the base)."""
    fresh = fresh or FreshNames([d.base])
    fresh.reserve([d.base])
    ex = _Expander(fresh, is_atom)
    leaf = ex.add(d, p)
    ex.finish()
    return leaf.type, _dedup(ex.base_bounds() + ex.side)


def translate_retypd_set(cs: Sequence[Tuple[DTV, DTV]], fresh: Optional[FreshNames] = None,
                         is_atom: Callable[[str], bool] = _no_atoms) -> List[SubtypeConstraint]:
    """Translate ``lhs <= rhs`` pairs of derived variables.

    Each distinct base+path shares one expansion.  A base that also occurs
    bare is replaced by its constructor type at the bare occurrences; a base
    that only occurs with capabilities is bounded by its constructor type in
    the direction of its occurrences.
    """
    fresh = fresh or FreshNames()
    fresh.reserve(d.base for pair in cs for d in pair)
    ex = _Expander(fresh, is_atom)
    leaves = [(ex.add(a, POS), ex.add(b, NEG)) for a, b in cs]
    ex.finish()
    main = [SubtypeConstraint(l.type, r.type) for l, r in leaves]
    return _dedup(ex.side + main + ex.base_bounds())


# ------------------------------------------------------------------ parsing

_REL = re.compile(r"<=|>=|≤|≥")
_CAP = re.compile(r"^(?:(load)|(store)|in_(\d+)|out_(\d+)|[σs](\d+)@(\d+))$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_'#$@]*$")


def parse_dtv(text: str, line: int = 0, col: int = 1) -> DTV:
    parts = text.strip().split(".")
    if not _IDENT.match(parts[0]):
        raise ParseError(f"bad variable {parts[0]!r}", line, col)
    path = []
    offset = col + len(parts[0]) + 1
    for part in parts[1:]:
        m = _CAP.match(part)
        if not m:
            raise ParseError(f"unknown capability {part!r}", line, offset)
        load, store, i, o, n, k = m.groups()
        if load:
            path.append(Load())
        elif store:
            path.append(Store())
        elif i is not None:
            path.append(In(int(i)))
        elif o is not None:
            path.append(Out(int(o)))
        else:
            if int(n) <= 0:
                raise ParseError("field size must be positive", line, offset)
            path.append(Field(int(k), int(n) * 8))
        offset += len(part) + 1
    return DTV(parts[0], tuple(path))


def _split(raw: str, lineno: int):
    m = list(_REL.finditer(raw))
    if len(m) != 1:
        raise ParseError("expected exactly one '<=' or '>='", lineno, (m[1].start() + 1) if len(m) > 1 else 1)
    m = m[0]
    left, right = raw[:m.start()], raw[m.end():]
    if m.group() in (">=", "≥"):
        return right, left, m.end(), 0
    return left, right, 0, m.end()


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        # '#' is also a legal name character (fresh names); only treat it as
        # a comment when it starts the line or follows whitespace
        line = re.split(r"(?:^|\s)#", raw, maxsplit=1)[0]
        if line.strip():
            yield lineno, line


def parse_constraints(text: str, form: str = "binsub", lattice=None,
                      fresh: Optional[FreshNames] = None) -> List[SubtypeConstraint]:
    if lattice is None:
        from .lattice import default_lattice

        lattice = default_lattice()
    is_atom = lambda n: n in lattice.atoms
    if form == "binsub":
        out = []
        for lineno, line in _lines(text):
            left, right, lcol, rcol = _split(line, lineno)
            try:
                lhs = parse_type(left, is_atom, lcol)
                rhs = parse_type(right, is_atom, rcol)
            except TypeSyntaxError as exc:
                raise ParseError(str(exc).split(": ", 1)[1], lineno, exc.col) from exc
            try:
                out.append(SubtypeConstraint(lhs, rhs))
            except PolarityError as exc:
                raise PolarityError(f"line {lineno}: {exc}") from exc
        return out
    if form == "retypd":
        pairs = []
        for lineno, line in _lines(text):
            left, right, lcol, rcol = _split(line, lineno)
            pairs.append((parse_dtv(left, lineno, lcol + 1), parse_dtv(right, lineno, rcol + 1)))
        return translate_retypd_set(pairs, fresh, is_atom)
    raise ValueError(f"unknown constraint form {form!r}")


def constraint_vars(cs: Iterable[SubtypeConstraint]) -> Set[str]:
    out = set()
    for c in cs:
        out |= free_vars(c.lhs) | free_vars(c.rhs)
    return out
