"""Finite lattices of atomic types.

The rest of the package is parameterized over an :class:`AtomicLattice`.
Lattices are described by a small line-oriented config::

    # comment
    atom int32 32
    leq bot_a int32
    top top_a
    bottom bot_a

``leq a b`` declares ``a <= b``; the order is the reflexive-transitive
closure of the declared pairs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Dict, FrozenSet, Iterable, Optional, Tuple


class LatticeError(ValueError):
    pass


class UnknownAtom(LatticeError):
    def __init__(self, name: str):
        super().__init__(f"unknown atom {name!r}")
        self.name = name


@dataclass(frozen=True)
class Atom:
    name: str
    width: Optional[int] = None


@dataclass
class AtomicLattice:
    atoms: Dict[str, Atom]
    pairs: FrozenSet[Tuple[str, str]]
    top: str
    bottom: str
    # derived at construction
    _up: Dict[str, FrozenSet[str]] = field(init=False, repr=False)
    _covers: Dict[str, FrozenSet[str]] = field(init=False, repr=False)
    _join: Dict[Tuple[str, str], str] = field(init=False, repr=False)
    _meet: Dict[Tuple[str, str], str] = field(init=False, repr=False)
    diameter: int = field(init=False)

    def __post_init__(self):
        for a, b in self.pairs:
            for n in (a, b):
                if n not in self.atoms:
                    raise UnknownAtom(n)
        for n in (self.top, self.bottom):
            if n not in self.atoms:
                raise UnknownAtom(n)
        self._close()
        self._check()
        self._build_tables()
        self.diameter = self._hasse_diameter()

    @property
    def elements(self) -> FrozenSet[str]:
        return frozenset(self.atoms)

    def _close(self):
        succ = {n: {n} for n in self.atoms}
        for a, b in self.pairs:
            succ[a].add(b)
        # transitive closure; lattices here are tiny
        changed = True
        while changed:
            changed = False
            for n, ups in succ.items():
                new = set(ups)
                for u in ups:
                    new |= succ[u]
                if new != ups:
                    succ[n] = new
                    changed = True
        self._up = {n: frozenset(s) for n, s in succ.items()}

    def _check(self):
        for a in self.atoms:
            for b in self.atoms:
                if a != b and b in self._up[a] and a in self._up[b]:
                    raise LatticeError(f"order is not antisymmetric: {a}, {b}")
            if self.top not in self._up[a]:
                raise LatticeError(f"{a} is not below top {self.top}")
            if a not in self._up[self.bottom]:
                raise LatticeError(f"{a} is not above bottom {self.bottom}")

    def _build_tables(self):
        names = sorted(self.atoms)
        down = {n: frozenset(m for m in names if n in self._up[m]) for n in names}
        self._join, self._meet = {}, {}
        for a in names:
            for b in names:
                ubs = self._up[a] & self._up[b]
                least = [u for u in ubs if ubs <= self._up[u]]
                if len(least) != 1:
                    raise LatticeError(f"{a} and {b} have no unique join")
                self._join[a, b] = least[0]
                lbs = down[a] & down[b]
                greatest = [l for l in lbs if lbs <= down[l]]
                if len(greatest) != 1:
                    raise LatticeError(f"{a} and {b} have no unique meet")
                self._meet[a, b] = greatest[0]
        covers = {}
        for a in names:
            strict = self._up[a] - {a}
            covers[a] = frozenset(
                b for b in strict if not any(b in self._up[c] for c in strict - {b})
            )
        self._covers = covers

    def _hasse_diameter(self) -> int:
        adj = {n: set(self._covers[n]) for n in self.atoms}
        for a, ups in self._covers.items():
            for b in ups:
                adj[b].add(a)
        best = 0
        for src in adj:
            dist = _bfs(src, adj)
            best = max(best, max(dist.values()))
        return best

    def _require(self, *names: str):
        for n in names:
            if n not in self.atoms:
                raise UnknownAtom(n)

    def leq(self, a: str, b: str) -> bool:
        self._require(a, b)
        return b in self._up[a]

    def join(self, a: str, b: str) -> str:
        self._require(a, b)
        return self._join[a, b]

    def meet(self, a: str, b: str) -> str:
        self._require(a, b)
        return self._meet[a, b]

    def covers(self, a: str) -> FrozenSet[str]:
        """Atoms immediately above ``a`` in the Hasse diagram."""
        self._require(a)
        return self._covers[a]

    def height_above(self, a: str, b: str) -> int:
        """Covering steps from ``a`` up to ``b`` (``a <= b`` required)."""
        dist = _bfs(a, self._covers)
        if b not in dist:
            raise LatticeError(f"{b} is not above {a}")
        return dist[b]

    def distance(self, a: str, b: str) -> Fraction:
        lca = self.join(a, b)
        return Fraction(self.height_above(a, lca) + self.height_above(b, lca), 2)

    def width(self, name: str) -> Optional[int]:
        self._require(name)
        return self.atoms[name].width

    @property
    def max_distance(self) -> int:
        return self.diameter


def _bfs(src, adj) -> Dict[str, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def join_atoms(lattice: AtomicLattice, a: str, b: str) -> str:
    return lattice.join(a, b)


def meet_atoms(lattice: AtomicLattice, a: str, b: str) -> str:
    return lattice.meet(a, b)


def atom_distance(lattice: AtomicLattice, a: str, b: str) -> Fraction:
    return lattice.distance(a, b)


def parse_lattice(text: str) -> AtomicLattice:
    atoms: Dict[str, Atom] = {}
    pairs = set()
    top = bottom = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        try:
            if word == "atom" and len(args) in (1, 2):
                width = int(args[1]) if len(args) == 2 else None
                atoms[args[0]] = Atom(args[0], width)
            elif word == "leq" and len(args) == 2:
                pairs.add((args[0], args[1]))
            elif word == "top" and len(args) == 1:
                top = args[0]
            elif word == "bottom" and len(args) == 1:
                bottom = args[0]
            else:
                raise LatticeError(f"line {lineno}: cannot parse {raw!r}")
        except ValueError as exc:
            if isinstance(exc, LatticeError):
                raise
            raise LatticeError(f"line {lineno}: bad width in {raw!r}") from exc
    if top is None or bottom is None:
        raise LatticeError("lattice config needs both 'top' and 'bottom'")
    for n in (top, bottom):
        atoms.setdefault(n, Atom(n))
    return AtomicLattice(atoms, frozenset(pairs), top, bottom)


def load_lattice(path) -> AtomicLattice:
    with open(path, encoding="utf-8") as fh:
        return parse_lattice(fh.read())


_DEFAULT: Optional[AtomicLattice] = None


def default_lattice() -> AtomicLattice:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("binsub.data").joinpath("flat.lattice").read_text()
        _DEFAULT = parse_lattice(text)
    return _DEFAULT


def flat_lattice(names: Iterable[Tuple[str, Optional[int]]],
                 top: str = "top_a", bottom: str = "bot_a") -> AtomicLattice:
    atoms = {top: Atom(top), bottom: Atom(bottom)}
    pairs = set()
    for name, width in names:
        atoms[name] = Atom(name, width)
        pairs.add((bottom, name))
        pairs.add((name, top))
    return AtomicLattice(atoms, frozenset(pairs), top, bottom)
