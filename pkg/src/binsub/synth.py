"""Random IR functions of a requested constraint count, for benchmarks."""

from __future__ import annotations

import random

from .ir import Assign, BinOpInt, Block, IrFunction, Load, Store, gen_constraints

# constraints emitted per statement kind (non-constant operands)
_COST = {"assign": 1, "load": 3, "store": 3, "binop": 3}


def synthetic_function(n_constraints: int, seed: int = 0, n_vars: int = 0, name: str = "synth") -> IrFunction:
    """A single-block function whose constraint set has exactly
    ``n_constraints`` constraints.  Variables are drawn from a pool that grows
    with the size, so bounds stay shallow on average."""
    rng = random.Random(seed)
    n_vars = n_vars or max(4, n_constraints // 6)
    pool = [f"v{i}" for i in range(n_vars)]
    params = pool[:2]
    stmts = []
    left = n_constraints
    line = 0
    while left > 0:
        line += 1
        kinds = [k for k, c in _COST.items() if c <= left]
        kind = rng.choice(kinds)
        a, b, c = rng.sample(pool, 3)
        off = rng.choice((0, 4, 8, 16))
        width = rng.choice((1, 2, 4, 8))
        if kind == "assign":
            stmts.append(Assign(a, b, line))
        elif kind == "load":
            stmts.append(Load(a, b, off, width, line))
        elif kind == "store":
            stmts.append(Store(a, off, width, b, line))
        else:
            stmts.append(BinOpInt(a, b, c, width, line))
        left -= _COST[kind]
    f = IrFunction(name, params, [pool[2]], [Block("entry", stmts)])
    assert len(gen_constraints(f)) == n_constraints
    return f


def render_ir(f: IrFunction) -> str:
    """Text form accepted by the IR parser."""
    out = [f"func {f.name}({', '.join(f.params)}) -> ({', '.join(f.returns)}) {{"]
    for b in f.blocks:
        out.append(f"block {b.name}:")
        for s in b.statements:
            if isinstance(s, Assign):
                out.append(f"  {s.dst} = {s.src}")
            elif isinstance(s, Load):
                out.append(f"  {s.dst} = load [{s.addr} + {s.offset}], {s.width}")
            elif isinstance(s, Store):
                out.append(f"  store [{s.addr} + {s.offset}], {s.width}, {s.src}")
            elif isinstance(s, BinOpInt):
                out.append(f"  {s.dst} = {s.a} + {s.b}, {s.width}")
            else:
                outs = ", ".join(s.outs)
                out.append(f"  ({outs}) = call {s.target}({', '.join(s.args)})")
    out.append("}")
    return "\n".join(out) + "\n"
