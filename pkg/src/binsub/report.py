"""Scaling benchmark over synthetic functions, written as CSV plus a plot."""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .biunify import solve  # noqa: E402
from .interproc import infer  # noqa: E402
from .ir import IrProgram, gen_constraints  # noqa: E402
from .lattice import AtomicLattice, default_lattice  # noqa: E402
from .synth import synthetic_function  # noqa: E402

DEFAULT_SIZES = (16, 32, 64, 128, 256, 512, 704, 1024)


@dataclass
class BenchRow:
    constraints: int
    solve_ns: int
    infer_ns: int
    states: int


def run_bench(sizes: Sequence[int] = DEFAULT_SIZES, seed: int = 0, repeat: int = 3,
              lattice: AtomicLattice = None) -> List[BenchRow]:
    """Median wall time of constraint solving alone and of full inference."""
    lattice = lattice or default_lattice()
    rows = []
    for n in sizes:
        f = synthetic_function(n, seed=seed)
        cs = gen_constraints(f)
        prog = IrProgram({f.name: f})
        solve_t, infer_t = [], []
        states = 0
        for _ in range(max(1, repeat)):
            t0 = time.perf_counter_ns()
            solve(cs, lattice)
            t1 = time.perf_counter_ns()
            res = infer(prog, lattice)
            t2 = time.perf_counter_ns()
            solve_t.append(t1 - t0)
            infer_t.append(t2 - t1)
            states = len(res.automata[f.name])
        rows.append(BenchRow(n, int(statistics.median(solve_t)), int(statistics.median(infer_t)), states))
    return rows


def growth_exponent(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Slope of the least-squares line through (log x, log y)."""
    lx = [math.log(x) for x in xs]
    ly = [math.log(max(y, 1)) for y in ys]
    return statistics.linear_regression(lx, ly).slope


def write_csv(rows: List[BenchRow], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["constraints", "solve_ns", "infer_ns", "states"])
        for r in rows:
            w.writerow([r.constraints, r.solve_ns, r.infer_ns, r.states])


def plot(rows: List[BenchRow], path: Path):
    xs = [r.constraints for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for attr, label in (("solve_ns", "solve"), ("infer_ns", "infer")):
        ys = [getattr(r, attr) / 1e6 for r in rows]
        k = growth_exponent(xs, [getattr(r, attr) for r in rows]) if len(rows) > 1 else float("nan")
        ax.plot(xs, ys, marker="o", label=f"{label} (slope {k:.2f})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("constraints")
    ax.set_ylabel("time (ms)")
    ax.set_title("Inference time vs. constraint count")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_distances(rows, path: Path):
    names = list(rows)
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 4))
    ax.bar(range(len(names)), [float(rows[n]) for n in names])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("distance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
