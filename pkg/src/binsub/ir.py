"""A toy post-variable-recovery IR and constraint generation over it.

Grammar (statements end with ``;`` or a newline, ``#`` starts a comment)::

    extern NAME(p0, p1) -> (r0)
    func NAME(params) -> (rets) {
      block NAME:
        4: t1 = load [stack_slot_2 + 4], 4;
        d = s;
        store [p + k], w, s;
        d = a + b, w;
        (o0, o1) = call f(a0, a1);
    }

Widths are in bytes.  A leading ``N:`` statement label is ignored.  Omitted
offsets default to 0 and omitted widths to 4 bytes; integer literals are
accepted as operands of ``+`` and contribute no constraint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union as U

from .constraints import ParseError, SubtypeConstraint
from .types import AtomT, Function, PolarType, Ptr, Record, Var

DEFAULT_WIDTH = 4


class UnresolvedCall(ValueError):
    def __init__(self, target: str, line: int):
        super().__init__(f"line {line}: call to undeclared function {target!r}")
        self.target = target
        self.line = line


class MissingCalleeType(KeyError):
    pass


@dataclass(frozen=True)
class Assign:
    dst: str
    src: str
    line: int = 0


@dataclass(frozen=True)
class Load:
    dst: str
    addr: str
    offset: int
    width: int
    line: int = 0


@dataclass(frozen=True)
class Store:
    addr: str
    offset: int
    width: int
    src: str
    line: int = 0


@dataclass(frozen=True)
class BinOpInt:
    dst: str
    a: str
    b: str
    width: int
    line: int = 0


@dataclass(frozen=True)
class Call:
    target: str
    args: Tuple[str, ...]
    outs: Tuple[str, ...]
    line: int = 0


Statement = U[Assign, Load, Store, BinOpInt, Call]


@dataclass
class Block:
    name: str
    statements: List[Statement] = field(default_factory=list)


@dataclass
class IrFunction:
    name: str
    params: List[str]
    returns: List[str]
    blocks: List[Block] = field(default_factory=list)
    line: int = 0

    def statements(self) -> Iterator[Statement]:
        for b in self.blocks:
            yield from b.statements

    def calls(self) -> List[Call]:
        return [s for s in self.statements() if isinstance(s, Call)]

    def variables(self) -> List[str]:
        seen = dict.fromkeys(self.params + self.returns)
        for s in self.statements():
            for v in _operands(s):
                seen.setdefault(v)
        return list(seen)


@dataclass
class Extern:
    name: str
    nparams: int
    nreturns: int


@dataclass
class IrProgram:
    functions: Dict[str, IrFunction] = field(default_factory=dict)
    externs: Dict[str, Extern] = field(default_factory=dict)

    @property
    def call_graph(self) -> List[Tuple[str, str]]:
        edges = []
        for f in self.functions.values():
            for c in f.calls():
                if (f.name, c.target) not in edges:
                    edges.append((f.name, c.target))
        return edges


def _operands(s: Statement) -> List[str]:
    if isinstance(s, Assign):
        vals = [s.dst, s.src]
    elif isinstance(s, Load):
        vals = [s.dst, s.addr]
    elif isinstance(s, Store):
        vals = [s.addr, s.src]
    elif isinstance(s, BinOpInt):
        vals = [s.dst, s.a, s.b]
    else:
        vals = [*s.args, *s.outs]
    return [v for v in vals if not _is_const(v)]


def _is_const(v: str) -> bool:
    return bool(re.fullmatch(r"-?(?:0x[0-9a-fA-F]+|\d+)", v))


# ------------------------------------------------------------------ parsing

_ID = r"[A-Za-z_][A-Za-z0-9_]*"
_OPND = rf"(?:{_ID}|-?(?:0x[0-9a-fA-F]+|\d+))"
_ADDR = rf"\[\s*({_ID})\s*(?:\+\s*(\d+)\s*)?\]"
_PATTERNS = [
    ("load", re.compile(rf"^({_ID})\s*=\s*load\s*{_ADDR}\s*(?:,\s*(\d+))?$")),
    ("store", re.compile(rf"^store\s*{_ADDR}\s*,\s*(?:(\d+)\s*,\s*)?({_OPND})$")),
    ("call", re.compile(rf"^(?:(\(\s*(?:{_ID}(?:\s*,\s*{_ID})*)?\s*\)|{_ID})\s*=\s*)?call\s+({_ID})\s*\(([^)]*)\)$")),
    ("binop", re.compile(rf"^({_ID})\s*=\s*({_OPND})\s*\+\s*({_OPND})\s*(?:,\s*(\d+))?$")),
    ("assign", re.compile(rf"^({_ID})\s*=\s*({_ID})$")),
]
_FUNC = re.compile(rf"^func\s+({_ID})\s*\(([^)]*)\)\s*(?:->\s*\(([^)]*)\))?\s*\{{")
_EXTERN = re.compile(rf"^extern\s+({_ID})\s*\(([^)]*)\)\s*(?:->\s*\(([^)]*)\))?$")
_BLOCK = re.compile(rf"^(?:block\s+)?({_ID})\s*:$")


def _names(text: Optional[str], line: int, pattern: str = _ID) -> List[str]:
    if not text or not text.strip():
        return []
    out = [n.strip() for n in text.split(",")]
    for n in out:
        if not re.fullmatch(pattern, n):
            raise ParseError(f"bad name {n!r}", line)
    return out


def _chunks(text: str) -> Iterator[Tuple[int, int, str]]:
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        col = 1
        for part in re.split(r"(;)", line):
            if part != ";" and part.strip():
                lead = len(part) - len(part.lstrip())
                piece = part.strip()
                yield lineno, col + lead, piece
            col += len(part)


def _statement(text: str, line: int, col: int) -> Statement:
    text = re.sub(r"^\d+\s*:\s*", "", text)
    for kind, pat in _PATTERNS:
        m = pat.match(text)
        if not m:
            continue
        g = m.groups()
        if kind == "load":
            return Load(g[0], g[1], int(g[2] or 0), _width(g[3], line), line)
        if kind == "store":
            return Store(g[0], int(g[1] or 0), _width(g[2], line), g[3], line)
        if kind == "binop":
            return BinOpInt(g[0], g[1], g[2], _width(g[3], line), line)
        if kind == "assign":
            return Assign(g[0], g[1], line)
        outs = g[0] or ""
        outs = _names(outs.strip("()"), line)
        return Call(g[1], tuple(_names(g[2], line, _OPND)), tuple(outs), line)
    raise ParseError(f"cannot parse statement {text!r}", line, col)


def _width(w: Optional[str], line: int) -> int:
    if w is None:
        return DEFAULT_WIDTH
    n = int(w)
    if n <= 0:
        raise ParseError("width must be positive", line)
    return n


def parse_ir(text: str) -> IrProgram:
    prog = IrProgram()
    current: Optional[IrFunction] = None
    for line, col, piece in _chunks(text):
        while piece:
            if current is None:
                m = _FUNC.match(piece)
                if m:
                    name = m.group(1)
                    if name in prog.functions or name in prog.externs:
                        raise ParseError(f"duplicate function {name!r}", line, col)
                    current = IrFunction(name, _names(m.group(2), line), _names(m.group(3), line), line=line)
                    prog.functions[name] = current
                    col += m.end()
                    piece = piece[m.end():].strip()
                    continue
                m = _EXTERN.match(piece)
                if m:
                    name = m.group(1)
                    prog.externs[name] = Extern(name, len(_names(m.group(2), line)), len(_names(m.group(3), line)))
                    break
                raise ParseError(f"expected 'func' or 'extern', got {piece!r}", line, col)
            if piece == "}":
                current = None
                break
            m = re.match(rf"^(?:block\s+)?({_ID})\s*:\s*", piece)
            if m and not re.match(rf"^{_ID}\s*:\s*$", piece) and piece.startswith("block"):
                current.blocks.append(Block(m.group(1)))
                piece = piece[m.end():]
                continue
            m = _BLOCK.match(piece)
            if m:
                current.blocks.append(Block(m.group(1)))
                break
            if piece.endswith("}"):
                rest = piece[:-1].strip()
                if rest:
                    _append(current, _statement(rest, line, col), line)
                current = None
                break
            _append(current, _statement(piece, line, col), line)
            break
    if current is not None:
        raise ParseError(f"function {current.name!r} is not closed", current.line)
    for f in prog.functions.values():
        for c in f.calls():
            if c.target not in prog.functions and c.target not in prog.externs:
                raise UnresolvedCall(c.target, c.line)
    return prog


def _append(f: IrFunction, s: Statement, line: int):
    if not f.blocks:
        f.blocks.append(Block("entry"))
    f.blocks[-1].statements.append(s)


# ------------------------------------------------------- constraint generation

class LetterNames:
    """a, b, ..., z, a1, b1, ... skipping names already in use."""

    def __init__(self, taken=()):
        self.taken = set(taken)
        self.i = 0

    def __call__(self) -> str:
        while True:
            n, r = divmod(self.i, 26)
            self.i += 1
            name = chr(ord("a") + r) + (str(n) if n else "")
            if name not in self.taken:
                self.taken.add(name)
                return name


def _int_atom(width: int) -> AtomT:
    return AtomT(f"int{width * 8}")


def constraint_lines(f: IrFunction, callee_types: Mapping[str, PolarType] = None,
                     fresh=None, rename=None, instantiate=None) -> List[Tuple[int, List[SubtypeConstraint]]]:
    """Constraints per statement, in statement order.  ``rename`` maps IR
    variable names to type variable names (used to namespace functions).
    ``instantiate``, when given, supplies the callee type for each call
    statement instead of ``callee_types``."""
    callee_types = callee_types or {}
    rename = rename or (lambda v: v)
    fresh = fresh or LetterNames(f.variables())
    v = lambda name: Var(rename(name))
    out = []
    for s in f.statements():
        cs: List[SubtypeConstraint] = []
        if isinstance(s, Assign):
            cs.append(SubtypeConstraint(v(s.src), v(s.dst)))
        elif isinstance(s, Load):
            a, b = Var(rename(fresh())), Var(rename(fresh()))
            fld = Record.of({(s.offset, 8 * s.width): b})
            cs.append(SubtypeConstraint(v(s.addr), Ptr(a, fld)))
            cs.append(SubtypeConstraint(a, fld))
            cs.append(SubtypeConstraint(b, v(s.dst)))
        elif isinstance(s, Store):
            e, g = Var(rename(fresh())), Var(rename(fresh()))
            fld = Record.of({(s.offset, 8 * s.width): e})
            cs.append(SubtypeConstraint(v(s.addr), Ptr(fld, g)))
            cs.append(SubtypeConstraint(fld, g))
            if not _is_const(s.src):
                cs.append(SubtypeConstraint(v(s.src), e))
        elif isinstance(s, BinOpInt):
            atom = _int_atom(s.width)
            for opnd in (s.a, s.b):
                if not _is_const(opnd):
                    cs.append(SubtypeConstraint(v(opnd), atom))
            cs.append(SubtypeConstraint(atom, v(s.dst)))
        elif isinstance(s, Call):
            if instantiate is not None:
                callee = instantiate(s)
            elif s.target in callee_types:
                callee = callee_types[s.target]
            else:
                raise MissingCalleeType(s.target)
            use = Function.of({i: v(a) for i, a in enumerate(s.args) if not _is_const(a)},
                              {j: v(o) for j, o in enumerate(s.outs)})
            cs.append(SubtypeConstraint(callee, use))
        out.append((s.line, cs))
    return out


def gen_constraints(f: IrFunction, callee_types: Mapping[str, PolarType] = None,
                    fresh=None, rename=None, instantiate=None) -> List[SubtypeConstraint]:
    return [c for _, cs in constraint_lines(f, callee_types, fresh, rename, instantiate) for c in cs]
