"""Constraint decomposition into per-variable bounds and coalescing of the
resulting bounds into compact polar types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .constraints import SubtypeConstraint
from .lattice import AtomicLattice, LatticeError, default_lattice
from .types import (
    POS,
    AtomT,
    Bottom,
    Function,
    Inter,
    Mu,
    PolarType,
    Polarity,
    Ptr,
    Record,
    Top,
    Union,
    Var,
    free_vars,
    map_children,
    rename_vars,
    show,
    unroll,
)


class OracleTooLarge(RuntimeError):
    pass


@dataclass
class Bounds:
    lower: List[PolarType] = field(default_factory=list)
    upper: List[PolarType] = field(default_factory=list)
    _lset: Set[PolarType] = field(default_factory=set, repr=False)
    _uset: Set[PolarType] = field(default_factory=set, repr=False)

    def add_lower(self, t: PolarType) -> bool:
        if t in self._lset:
            return False
        self._lset.add(t)
        self.lower.append(t)
        return True

    def add_upper(self, t: PolarType) -> bool:
        if t in self._uset:
            return False
        self._uset.add(t)
        self.upper.append(t)
        return True


@dataclass
class Diagnostic:
    kind: str  # "atom-mismatch" | "constructor-mismatch" | "missing-field"
    lhs: PolarType
    rhs: PolarType

    def __str__(self):
        return f"{self.kind}: {show(self.lhs)} <= {show(self.rhs)}"


class ConstraintStore:
    """Lower and upper bounds per type variable, kept consistent by
    :func:`constrain`."""

    def __init__(self, lattice: Optional[AtomicLattice] = None, fresh_prefix: str = "_m"):
        self.lattice = lattice or default_lattice()
        self.bounds: Dict[str, Bounds] = {}
        self.cache: Set[Tuple[PolarType, PolarType]] = set()
        self.diagnostics: List[Diagnostic] = []
        self._fresh = 0
        self._fresh_prefix = fresh_prefix

    def __getitem__(self, name: str) -> Bounds:
        b = self.bounds.get(name)
        if b is None:
            b = self.bounds[name] = Bounds()
        return b

    def lower(self, name: str) -> List[PolarType]:
        b = self.bounds.get(name)
        return b.lower if b else []

    def upper(self, name: str) -> List[PolarType]:
        b = self.bounds.get(name)
        return b.upper if b else []

    def bounds_of(self, name: str, p: Polarity) -> List[PolarType]:
        """Lower bounds for positive occurrences, upper bounds for negative."""
        return self.lower(name) if p is POS else self.upper(name)

    def fresh_var(self) -> Var:
        self._fresh += 1
        return Var(f"{self._fresh_prefix}{self._fresh}")

    def add(self, c: SubtypeConstraint):
        constrain(self, c.lhs, c.rhs)

    def add_all(self, cs: Iterable[SubtypeConstraint]):
        for c in cs:
            constrain(self, c.lhs, c.rhs)

    @property
    def consistent(self) -> bool:
        return not any(d.kind != "missing-field" for d in self.diagnostics)


def constrain(store: ConstraintStore, lhs: PolarType, rhs: PolarType) -> None:
    """Record ``lhs <= rhs`` (``lhs`` positive, ``rhs`` negative).

    Uses an explicit stack rather than recursion; pairs already processed are
    skipped, which is what makes recursive constraint graphs terminate.
    """
    work = [(lhs, rhs)]
    cache = store.cache
    lat = store.lattice
    while work:
        l, r = work.pop()
        if (l, r) in cache:
            continue
        cache.add((l, r))
        if isinstance(r, Top) or isinstance(l, Bottom):
            continue
        if isinstance(l, Ptr) and isinstance(r, Ptr):
            # pushed in reverse so the store side is handled first
            work.append((l.load, r.load))
            work.append((r.store, l.store))
        elif isinstance(l, Var):
            b = store[l.name]
            if b.add_upper(r):
                work.extend((x, r) for x in reversed(b.lower))
        elif isinstance(r, Var):
            b = store[r.name]
            if b.add_lower(l):
                work.extend((l, x) for x in reversed(b.upper))
        elif isinstance(l, Union):
            work.append((l.right, r))
            work.append((l.left, r))
        elif isinstance(r, Inter):
            work.append((l, r.right))
            work.append((l, r.left))
        elif isinstance(l, Mu):
            work.append((unroll(l), r))
        elif isinstance(r, Mu):
            work.append((l, unroll(r)))
        elif isinstance(l, Record) and isinstance(r, Record):
            lf = l.field_map
            for k, rt in reversed(r.fields):
                lt = lf.get(k)
                if lt is None:
                    store.diagnostics.append(Diagnostic("missing-field", l, r))
                    lt = store.fresh_var()
                work.append((lt, rt))
        elif isinstance(l, Function) and isinstance(r, Function):
            lp, lr = dict(l.params), dict(l.returns)
            for i, rt in reversed(r.returns):
                if i in lr:
                    work.append((lr[i], rt))
            for i, rt in reversed(r.params):
                if i in lp:
                    work.append((rt, lp[i]))
        elif isinstance(l, AtomT) and isinstance(r, AtomT):
            try:
                ok = lat.leq(l.name, r.name)
            except LatticeError:
                ok = False
            if not ok:
                store.diagnostics.append(Diagnostic("atom-mismatch", l, r))
        else:
            store.diagnostics.append(Diagnostic("constructor-mismatch", l, r))


def solve(constraints: Iterable[SubtypeConstraint], lattice: Optional[AtomicLattice] = None) -> ConstraintStore:
    store = ConstraintStore(lattice)
    store.add_all(constraints)
    return store


# ------------------------------------------------------------------ coalesce

def coalesce(store: ConstraintStore, t: PolarType, p: Polarity,
             r: FrozenSet[Tuple[str, Polarity]] = frozenset()) -> PolarType:
    """Replace variables by the union of their lower bounds (positive
    occurrences) or the intersection of their upper bounds (negative ones),
    closing cycles with ``mu`` binders named after the recursive variable.
    Variables in ``r`` are treated as already in progress."""
    memo: Dict[Tuple[str, Polarity], PolarType] = {}
    return _Coalescer(store, memo).go(t, p, dict.fromkeys(r))[0]


class _Coalescer:
    def __init__(self, store, memo):
        self.store = store
        self.memo = memo

    def go(self, t, p, in_process) -> Tuple[PolarType, FrozenSet]:
        """Returns the coalesced type and the in-process variables it refers back to.

        Back references use a placeholder name until the binder is chosen."""
        if isinstance(t, Var):
            key = (t.name, p)
            if key in in_process:
                return Var(in_process[key] or t.name), frozenset([key])
            if key in self.memo:
                return self.memo[key], frozenset()
            bounds = self.store.lower(t.name) if p is POS else self.store.upper(t.name)
            if not bounds:
                return t, frozenset()
            ph = _placeholder(key)
            inner = {**in_process, key: ph}
            parts = [Var(t.name)]
            hits = set()
            for b in bounds:
                y, h = self.go(b, p, inner)
                parts.append(y)
                hits |= h
            s = parts[-1]
            for part in reversed(parts[:-1]):
                s = Union(part, s) if p is POS else Inter(part, s)
            out = _close(s, t.name, p, ph, in_process) if key in hits else s
            hits.discard(key)
            if not hits:
                self.memo[key] = out
            return out, frozenset(hits)
        if isinstance(t, Ptr):
            s, h1 = self.go(t.store, -p, in_process)
            l, h2 = self.go(t.load, p, in_process)
            return Ptr(s, l), h1 | h2
        if isinstance(t, Record):
            hits = frozenset()
            fields = []
            for k, v in t.fields:
                y, h = self.go(v, p, in_process)
                fields.append((k, y))
                hits |= h
            return Record(tuple(fields)), hits
        if isinstance(t, Function):
            hits = frozenset()
            params, rets = [], []
            for i, v in t.params:
                y, h = self.go(v, -p, in_process)
                params.append((i, y))
                hits |= h
            for i, v in t.returns:
                y, h = self.go(v, p, in_process)
                rets.append((i, y))
                hits |= h
            return Function(tuple(params), tuple(rets)), hits
        if isinstance(t, (Union, Inter)):
            a, h1 = self.go(t.left, p, in_process)
            b, h2 = self.go(t.right, p, in_process)
            return type(t)(a, b), h1 | h2
        if isinstance(t, Mu):
            body, h = self.go(t.body, p, in_process)
            return Mu(t.binder, body), h
        return t, frozenset()


def _placeholder(key) -> str:
    return f"\0{key[0]}\0{key[1].value}"


def _drop_unguarded(t: PolarType, ph: str, guarded: bool = False) -> Optional[PolarType]:
    """Remove back references that are direct operands of the chain; such an
    occurrence is the type itself, i.e. the identity of ⊔/⊓.  References
    inside a nested ``mu`` stay: that binder may recur under a constructor."""
    if isinstance(t, Var):
        return None if t.name == ph and not guarded else t
    if isinstance(t, (Union, Inter)):
        a = _drop_unguarded(t.left, ph, guarded)
        b = _drop_unguarded(t.right, ph, guarded)
        if a is None or b is None:
            return b if a is None else a
        return type(t)(a, b)
    if isinstance(t, (Ptr, Record, Function)):
        return map_children(t, lambda c, _: _drop_unguarded(c, ph, True))
    return t


def _close(s: PolarType, name: str, p: Polarity, ph: str, in_process) -> PolarType:
    """Bind the back references in ``s``.  The binder is named after the
    variable unless that would capture a free occurrence of it."""
    s = _drop_unguarded(s, ph)
    if ph not in free_vars(s):
        return s
    binder = name
    rest = s.right if isinstance(s, (Union, Inter)) and s.left == Var(name) else s
    if (name, -p) in in_process or name in free_vars(rest):
        binder = f"{name}'{'p' if p is POS else 'n'}"
        avoid = free_vars(s)
        while binder in avoid:
            binder += "'"
        s = _rebind_head(s, name, binder)
    return Mu(binder, rename_vars(s, lambda v: binder if v == ph else v))


def _rebind_head(s: PolarType, old: str, new: str) -> PolarType:
    # the leading operand is the variable itself; refer to the binder instead
    if isinstance(s, (Union, Inter)) and s.left == Var(old):
        return type(s)(Var(new), s.right)
    return s


def coalesce_var(store: ConstraintStore, name: str, p: Polarity) -> PolarType:
    return coalesce(store, Var(name), p)


# -------------------------------------------------------------------- oracle

def _decompose(l: PolarType, r: PolarType):
    """Facts implied by inverting the constructor rules on ``l <= r``."""
    if isinstance(l, Ptr) and isinstance(r, Ptr):
        yield (r.store, l.store)
        yield (l.load, r.load)
    elif isinstance(l, Function) and isinstance(r, Function):
        lp, lr = dict(l.params), dict(l.returns)
        for i, t in r.params:
            if i in lp:
                yield (t, lp[i])
        for i, t in r.returns:
            if i in lr:
                yield (lr[i], t)
    elif isinstance(l, Record) and isinstance(r, Record):
        lf = l.field_map
        for k, t in r.fields:
            if k in lf:
                yield (lf[k], t)
    elif isinstance(l, Union):
        yield (l.left, r)
        yield (l.right, r)
    elif isinstance(r, Inter):
        yield (l, r.left)
        yield (l, r.right)
    elif isinstance(l, Mu):
        yield (unroll(l), r)
    elif isinstance(r, Mu):
        yield (l, unroll(r))


def saturate(constraints: Iterable[SubtypeConstraint], limit: int = 20000) -> Set[Tuple[PolarType, PolarType]]:
    """Close a constraint set under transitivity and constructor inversion."""
    facts: Set[Tuple[PolarType, PolarType]] = set()
    by_lhs: Dict[PolarType, Set[PolarType]] = {}
    by_rhs: Dict[PolarType, Set[PolarType]] = {}
    work = [(c.lhs, c.rhs) for c in constraints]
    while work:
        f = work.pop()
        if f in facts:
            continue
        facts.add(f)
        if len(facts) > limit:
            raise OracleTooLarge(f"more than {limit} derived facts")
        a, b = f
        by_lhs.setdefault(a, set()).add(b)
        by_rhs.setdefault(b, set()).add(a)
        for c in list(by_lhs.get(b, ())):
            work.append((a, c))
        for z in list(by_rhs.get(a, ())):
            work.append((z, b))
        work.extend(_decompose(a, b))
    return facts


def entails(facts, lattice: AtomicLattice, a: PolarType, b: PolarType, _seen=None) -> bool:
    if a == b or (a, b) in facts or isinstance(b, Top) or isinstance(a, Bottom):
        return True
    seen = _seen if _seen is not None else set()
    if (a, b) in seen:
        return True
    seen.add((a, b))
    if isinstance(a, AtomT) and isinstance(b, AtomT):
        return a.name in lattice.atoms and b.name in lattice.atoms and lattice.leq(a.name, b.name)
    if isinstance(a, Union):
        return entails(facts, lattice, a.left, b, seen) and entails(facts, lattice, a.right, b, seen)
    if isinstance(b, Inter):
        return entails(facts, lattice, a, b.left, seen) and entails(facts, lattice, a, b.right, seen)
    if isinstance(a, Ptr) and isinstance(b, Ptr):
        return entails(facts, lattice, b.store, a.store, seen) and entails(facts, lattice, a.load, b.load, seen)
    if isinstance(a, Record) and isinstance(b, Record):
        af = a.field_map
        return all(k in af and entails(facts, lattice, af[k], t, seen) for k, t in b.fields)
    if isinstance(a, Function) and isinstance(b, Function):
        ap, ar = dict(a.params), dict(a.returns)
        return (all(i in ap and entails(facts, lattice, t, ap[i], seen) for i, t in b.params)
                and all(i in ar and entails(facts, lattice, ar[i], t, seen) for i, t in b.returns))
    # go through an intermediate fact on either side
    for mid in [r for (l, r) in facts if l == a]:
        if mid != b and not isinstance(mid, Var) and entails(facts, lattice, mid, b, seen):
            return True
    return False


def oracle_derivable(constraints: Iterable[SubtypeConstraint], goal: Tuple, limit: int = 20000,
                     lattice: Optional[AtomicLattice] = None) -> bool:
    """Brute-force check that ``goal[0] <= goal[1]`` follows from the
    constraints by transitivity and constructor inversion.  Goal sides may be
    variable names or types."""
    a, b = (Var(g) if isinstance(g, str) else g for g in goal)
    facts = saturate(constraints, limit)
    return entails(facts, lattice or default_lattice(), a, b)
