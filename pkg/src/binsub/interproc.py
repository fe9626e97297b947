"""Whole-program inference over call-graph SCCs, callees first.

Functions in one SCC share monomorphic signature variables.  A callee from an
earlier SCC is instantiated at each callsite by decompiling its automaton
with fresh variable names.  Each callsite also gets a slot function type
whose variables are local to that callsite; the slot, coalesced in the
caller's store, is the callsite's view of the callee, and a callee's refined
signature is the join of these views.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import networkx as nx

from .automata import (
    TypeAutomaton,
    decompile_automaton,
    identity_label,
    join_automata,
    simplify,
    to_dot,
)
from .biunify import ConstraintStore
from .constraints import SubtypeConstraint
from .ir import Call, IrProgram, LetterNames, MissingCalleeType, constraint_lines
from .lattice import AtomicLattice, default_lattice
from .lowering import CType, TypeEnvironment, env_to_json, lower, to_json
from .types import NEG, POS, Function, PolarType, Var


@dataclass
class SccPlan:
    sccs: List[List[str]]
    callsites: Dict[str, List[Tuple[str, int, str]]]

    def levels(self) -> List[List[List[str]]]:
        """SCCs grouped so that every group only calls into earlier groups."""
        depth: Dict[str, int] = {}
        out: List[List[List[str]]] = []
        where = {f: i for i, scc in enumerate(self.sccs) for f in scc}
        callees: Dict[int, Set[int]] = {i: set() for i in range(len(self.sccs))}
        for callee, sites in self.callsites.items():
            for caller, _, _ in sites:
                if caller in where and callee in where and where[caller] != where[callee]:
                    callees[where[caller]].add(where[callee])
        for i, scc in enumerate(self.sccs):
            d = 1 + max((depth[j] for j in callees[i]), default=-1)
            depth[i] = d
            while len(out) <= d:
                out.append([])
            out[d].append(scc)
        return [sorted(level) for level in out]


def plan_sccs(program: IrProgram) -> SccPlan:
    g = nx.DiGraph()
    g.add_nodes_from(program.functions)
    callsites: Dict[str, List[Tuple[str, int, str]]] = {}
    for f in program.functions.values():
        for k, c in enumerate(f.calls()):
            callsites.setdefault(c.target, []).append((f.name, k, c.target))
            if c.target in program.functions:
                g.add_edge(f.name, c.target)
    cond = nx.condensation(g)
    members = {n: sorted(cond.nodes[n]["members"]) for n in cond.nodes}
    order = list(nx.lexicographical_topological_sort(cond, key=lambda n: members[n][0]))
    return SccPlan([members[n] for n in reversed(order)], callsites)


@dataclass
class CallsiteInfo:
    caller: str
    index: int
    callee: str
    view: PolarType
    automaton: TypeAutomaton


@dataclass
class InferenceResult:
    automata: Dict[str, TypeAutomaton] = field(default_factory=dict)
    refined: Dict[str, TypeAutomaton] = field(default_factory=dict)
    lowered: Dict[str, CType] = field(default_factory=dict)
    refined_lowered: Dict[str, CType] = field(default_factory=dict)
    signatures: Dict[str, PolarType] = field(default_factory=dict)
    callsites: List[CallsiteInfo] = field(default_factory=list)
    env: TypeEnvironment = field(default_factory=TypeEnvironment)
    timings_ns: Dict[str, int] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    def to_json(self, dot: bool = False, timing: bool = True) -> dict:
        out = {}
        for f in sorted(self.automata):
            entry = {
                "signature_ctype": to_json(self.lowered[f]),
                "refined_ctype": to_json(self.refined_lowered[f]) if f in self.refined_lowered else None,
                "callsites": [
                    {"caller": c.caller, "index": c.index, "ctype": to_json(lower(c.automaton, self.env))}
                    for c in self.callsites if c.callee == f
                ],
            }
            if dot:
                entry["automaton_dot"] = to_dot(self.automata[f], f)
            if timing:
                entry["time_ns"] = self.timings_ns.get(f)
            out[f] = entry
        return {"functions": out, "types": env_to_json(self.env), "diagnostics": self.diagnostics}


def _signature(program: IrProgram, name: str, rename) -> Function:
    f = program.functions[name]
    return Function.of({i: Var(rename(p)) for i, p in enumerate(f.params)},
                       {j: Var(rename(r)) for j, r in enumerate(f.returns)})


def infer_function_group(scc, a: Dict[str, TypeAutomaton], program: IrProgram,
                         lattice: Optional[AtomicLattice] = None, polymorphic: bool = True,
                         callsites: Optional[List[CallsiteInfo]] = None,
                         store_out: Optional[list] = None) -> Dict[str, TypeAutomaton]:
    """Infer one SCC.  Callees outside the SCC must already be in ``a``.

    With ``polymorphic=False`` every callsite of a callee shares the same
    instance variables, which is the monomorphic control.
    """
    lattice = lattice or default_lattice()
    members = sorted(scc)
    shared = len(members) > 1
    store = ConstraintStore(lattice)
    renames = {m: ((lambda v, m=m: f"{m}${v}") if shared else (lambda v: v)) for m in members}
    sigs = {m: _signature(program, m, renames[m]) for m in members}
    pending: List[Tuple[str, int, str, Function]] = []

    for m in members:
        f = program.functions[m]
        extra: List[SubtypeConstraint] = []
        counter = [0]

        def instantiate(call: Call, m=m, extra=extra, counter=counter) -> PolarType:
            k = counter[0]
            counter[0] += 1
            g = call.target
            if g in sigs:
                pending.append((m, k, g, sigs[g]))
                return sigs[g]
            tag = f"{g}@{m}{k}" if polymorphic else g
            nparams = len(call.args)
            nouts = len(call.outs)
            slot = Function.of({i: Var(f"{tag}$p{i}") for i in range(nparams)},
                               {j: Var(f"{tag}$r{j}") for j in range(nouts)})
            if g in program.functions:
                if g not in a:
                    raise MissingCalleeType(g)
                inst = decompile_automaton(a[g], fresh=lambda v, tag=tag: f"{v}#{tag}",
                                           binder_prefix=f"r{tag}#")
                extra.append(SubtypeConstraint(inst, slot))
            pending.append((m, k, g, slot))
            return slot

        lines = constraint_lines(f, fresh=LetterNames(f.variables()), rename=renames[m],
                                 instantiate=instantiate)
        for _, cs in lines:
            store.add_all(cs)
        store.add_all(extra)

    # automata are built from the store graph directly; the coalesced tree
    # can be exponentially larger
    out = {m: simplify(sigs[m], POS, lattice, store.bounds_of) for m in members}
    if callsites is not None:
        for caller, k, g, slot in pending:
            auto = simplify(slot, NEG, lattice, store.bounds_of)
            callsites.append(CallsiteInfo(caller, k, g, decompile_automaton(auto), auto))
    if store_out is not None:
        store_out.append(store)
    return out


def infer(program: IrProgram, lattice: Optional[AtomicLattice] = None, polymorphic: bool = True,
          jobs: int = 1) -> InferenceResult:
    """Infer every function.  With ``polymorphic=False`` the whole program is
    solved as one group so callees are shared by all their callers."""
    lattice = lattice or default_lattice()
    plan = plan_sccs(program)
    if not polymorphic and program.functions:
        plan = SccPlan([sorted(program.functions)], plan.callsites)
    res = InferenceResult()

    def run(scc):
        sites: List[CallsiteInfo] = []
        stores: list = []
        t0 = time.perf_counter_ns()
        autos = infer_function_group(scc, res.automata, program, lattice, polymorphic, sites, stores)
        return scc, autos, sites, stores[0], time.perf_counter_ns() - t0

    levels = plan.levels()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for level in levels:
            results = list(pool.map(run, level)) if jobs > 1 else [run(s) for s in level]
            for scc, autos, sites, store, ns in results:
                res.automata.update(autos)
                res.callsites.extend(sites)
                for d in store.diagnostics:
                    res.diagnostics.append(f"{','.join(scc)}: {d}")
                for m in scc:
                    res.timings_ns[m] = ns // len(scc)
    res.callsites.sort(key=lambda c: (c.callee, c.caller, c.index))

    for f in program.functions:
        res.signatures[f] = decompile_automaton(res.automata[f])
        res.lowered[f] = lower(res.automata[f], res.env, lattice)
    for c in res.callsites:
        if c.callee not in program.functions:
            continue
        base = res.refined.get(c.callee) or TypeAutomaton([identity_label(NEG)], 0, {})
        res.refined[c.callee] = join_automata(base, c.automaton, lattice)
    for f, auto in res.refined.items():
        res.refined_lowered[f] = lower(auto, res.env, lattice)
    return res
