"""Distance between inferred and ground-truth C types.

Atoms are compared by their lattice distance through the least common
ancestor.  Missing labels and incomparable kinds count as the lattice's
maximum distance.  Inferred record fields that overlap no ground field are
dropped first, since they are usually padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Mapping, Optional

from .lattice import AtomicLattice, default_lattice
from .lowering import CPtr, CType, Func, Named, Prim, Struct, StructField, Unknown

POINTER_DEPTH = 8


@dataclass
class GroundSignature:
    params: Dict[int, CType] = field(default_factory=dict)
    returns: Dict[int, CType] = field(default_factory=dict)
    env: Dict[str, CType] = field(default_factory=dict)

    def __post_init__(self):
        if any(i < 0 for i in list(self.params) + list(self.returns)):
            raise ValueError("negative signature index")

    @classmethod
    def from_ctype(cls, t: CType, env: Optional[Mapping[str, CType]] = None) -> "GroundSignature":
        if not isinstance(t, Func):
            raise ValueError("signature must be a function type")
        return cls(dict(t.params), dict(t.returns), dict(env or {}))


def _resolve(t: CType, env: Mapping[str, CType]) -> CType:
    seen = set()
    while isinstance(t, Named) and t.name in env and t.name not in seen:
        seen.add(t.name)
        t = env[t.name]
    return t


def _overlaps(a: StructField, b: StructField) -> bool:
    a0, a1 = a.offset * 8, a.offset * 8 + a.size
    b0, b1 = b.offset * 8, b.offset * 8 + b.size
    return a0 < b1 and b0 < a1


def filter_padding(inferred: Struct, ground: Struct) -> Struct:
    kept = tuple(f for f in inferred.fields if any(_overlaps(f, g) for g in ground.fields))
    return Struct(inferred.name, kept)


def _mean(values) -> Fraction:
    values = list(values)
    if not values:
        return Fraction(0)
    return Fraction(sum(values)) / len(values)


def _map_distance(inf: Mapping, gr: Mapping, go, worst) -> Fraction:
    keys = set(inf) | set(gr)
    return _mean(go(inf[k], gr[k]) if k in inf and k in gr else worst for k in sorted(keys))


def type_distance(inferred: CType, ground: CType, lattice: Optional[AtomicLattice] = None,
                  inferred_env: Optional[Mapping[str, CType]] = None,
                  ground_env: Optional[Mapping[str, CType]] = None) -> Fraction:
    lattice = lattice or default_lattice()
    worst = Fraction(lattice.max_distance)
    ienv, genv = inferred_env or {}, ground_env or {}

    def atom(t: CType) -> Optional[str]:
        if isinstance(t, Prim) and t.name in lattice.atoms:
            return t.name
        if isinstance(t, Unknown):
            return lattice.top
        return None

    def go(a: CType, b: CType, depth: int) -> Fraction:
        a, b = _resolve(a, ienv), _resolve(b, genv)
        x, y = atom(a), atom(b)
        if x is not None and y is not None:
            return lattice.distance(x, y)
        if isinstance(a, CPtr) and isinstance(b, CPtr):
            if depth >= POINTER_DEPTH:
                return Fraction(0)
            return go(a.pointee, b.pointee, depth + 1)
        if isinstance(a, Struct) and isinstance(b, Struct):
            a = filter_padding(a, b)
            am = {f.offset: f.type for f in a.fields}
            bm = {f.offset: f.type for f in b.fields}
            return _map_distance(am, bm, lambda s, t: go(s, t, depth), worst)
        if isinstance(a, Func) and isinstance(b, Func):
            p = _map_distance(dict(a.params), dict(b.params), lambda s, t: go(s, t, depth), worst)
            r = _map_distance(dict(a.returns), dict(b.returns), lambda s, t: go(s, t, depth), worst)
            return (p + r) / 2
        if isinstance(a, Named) and isinstance(b, Named) and a.name == b.name:
            return Fraction(0)
        return worst

    return go(inferred, ground, 0)


def signature_distance(inferred: GroundSignature, ground: GroundSignature,
                       lattice: Optional[AtomicLattice] = None) -> Fraction:
    return type_distance(Func(tuple(sorted(inferred.params.items())), tuple(sorted(inferred.returns.items()))),
                         Func(tuple(sorted(ground.params.items())), tuple(sorted(ground.returns.items()))),
                         lattice, inferred.env, ground.env)


# -------------------------------------------------------------------- JSON

def ctype_from_json(d) -> CType:
    kind = d["kind"]
    if kind == "prim":
        return Prim(d["name"], d.get("width"))
    if kind == "unknown":
        return Unknown(d.get("width"))
    if kind == "named":
        return Named(d["name"])
    if kind == "ptr":
        return CPtr(ctype_from_json(d["pointee"]))
    if kind == "struct":
        return Struct(d.get("name"), tuple(StructField(f["offset"], f["size"], ctype_from_json(f["type"]))
                                           for f in sorted(d["fields"], key=lambda f: f["offset"])))
    if kind == "func":
        return Func(tuple(enumerate(ctype_from_json(p) for p in d.get("params", []))),
                    tuple(enumerate(ctype_from_json(r) for r in d.get("returns", []))))
    raise ValueError(f"unknown type kind {kind!r}")


def load_signatures(data) -> Dict[str, GroundSignature]:
    """Read ``{"functions": {name: {...}}, "types": {...}}``.  A function entry
    is either ``{"params": [...], "returns": [...]}`` or an inference result
    entry with a ``signature_ctype``."""
    if isinstance(data, str):
        data = json.loads(data)
    env = {n: ctype_from_json(t) for n, t in data.get("types", {}).items()}
    out = {}
    for name, entry in data.get("functions", {}).items():
        if "signature_ctype" in entry:
            sig = ctype_from_json(entry["signature_ctype"])
            out[name] = GroundSignature.from_ctype(sig, env)
        else:
            out[name] = GroundSignature(
                {i: ctype_from_json(p) for i, p in enumerate(entry.get("params", []))},
                {i: ctype_from_json(r) for i, r in enumerate(entry.get("returns", []))},
                env)
    return out


def compare(inferred: Mapping[str, GroundSignature], ground: Mapping[str, GroundSignature],
            lattice: Optional[AtomicLattice] = None):
    """Per-function distances plus warnings for functions missing on one side."""
    lattice = lattice or default_lattice()
    rows, warnings = {}, []
    for name in sorted(set(inferred) | set(ground)):
        if name not in inferred or name not in ground:
            side = "inferred" if name not in inferred else "ground"
            warnings.append(f"{name}: missing from {side} file")
            rows[name] = Fraction(lattice.max_distance)
        else:
            rows[name] = signature_distance(inferred[name], ground[name], lattice)
    mean = _mean(rows.values())
    return rows, mean, warnings
