"""Exact CLSP solvers: full enumeration and depth-first branch and bound."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .core import Instance, Provenance, Solution, Status
from .flow import Fix, relaxation_bound, solve_fixed_setup

BRUTE_FORCE_MAX_T = 24


class HorizonTooLong(ValueError):
    pass


@dataclass(frozen=True)
class BnBOptions:
    node_limit: int = 50_000_000
    time_limit: float = 3600.0
    # branch_order is always chronological and the 1-branch is explored first
    prune: bool = True

    def __post_init__(self):
        if self.node_limit <= 0 or not self.time_limit > 0:
            raise ValueError("node_limit and time_limit must be positive")


def _infeasible(provenance: Provenance, started: float, nodes: int = 0) -> Solution:
    return Solution(
        setup=None,
        plan=None,
        objective=None,
        status=Status.INFEASIBLE,
        provenance=provenance,
        solve_time=time.perf_counter() - started,
        nodes=nodes,
    )


def brute_force_solve(instance: Instance) -> Solution:
    """Solve every one of the 2**T setups and keep the cheapest.

    Setups are visited in the same order as the branch-and-bound leaves
    (1 before 0, first period most significant) and only strict improvements
    replace the incumbent, so both solvers agree on ties.
    """
    T = instance.T
    if T > BRUTE_FORCE_MAX_T:
        raise HorizonTooLong(f"brute force refuses T={T} > {BRUTE_FORCE_MAX_T}")
    started = time.perf_counter()
    best = None
    for bits in itertools.product((1, 0), repeat=T):
        y = np.array(bits, dtype=np.int8)
        res = solve_fixed_setup(instance, y)
        if res is not None and (best is None or res[1] < best[2]):
            best = (y, res[0], res[1])
    if best is None:
        return _infeasible(Provenance.BRUTE_FORCE, started, 2**T)
    return Solution(
        setup=best[0],
        plan=best[1],
        objective=best[2],
        status=Status.OPTIMAL,
        provenance=Provenance.BRUTE_FORCE,
        solve_time=time.perf_counter() - started,
        nodes=2**T,
    )


def bnb_solve(instance: Instance, options: BnBOptions = BnBOptions()) -> Solution:
    """Branch on ``y[t]`` in period order, pruning with the LP relaxation.

    Returns Optimal when the tree is exhausted, Feasible when a node or time
    limit stops the search with an incumbent in hand, Infeasible otherwise.
    """
    T = instance.T
    started = time.perf_counter()
    deadline = started + options.time_limit
    ones = np.ones(T, dtype=np.int8)
    first = solve_fixed_setup(instance, ones)
    if first is None:
        # opening everything is the loosest setup; nothing else can work
        return _infeasible(Provenance.BRANCH_AND_BOUND, started)
    best_y, best_plan, best_obj = ones, first[0], first[1]

    nodes = 0
    limit_hit = False
    stack = [([Fix.FREE] * T, 0)]
    while stack:
        if nodes >= options.node_limit or ((nodes & 255) == 0 and time.perf_counter() > deadline):
            limit_hit = True
            break
        fixing, depth = stack.pop()
        nodes += 1
        if options.prune:
            bound = relaxation_bound(instance, fixing)
            if bound is None or bound >= best_obj:
                continue
        if depth == T:
            y = np.array(fixing, dtype=np.int8)
            res = solve_fixed_setup(instance, y)
            if res is not None and res[1] < best_obj:
                best_y, best_plan, best_obj = y, res[0], res[1]
            continue
        zero = list(fixing)
        zero[depth] = Fix.ZERO
        one = fixing
        one[depth] = Fix.ONE
        stack.append((zero, depth + 1))
        stack.append((one, depth + 1))

    return Solution(
        setup=best_y,
        plan=best_plan,
        objective=best_obj,
        status=Status.FEASIBLE if limit_hit else Status.OPTIMAL,
        provenance=Provenance.BRANCH_AND_BOUND,
        solve_time=time.perf_counter() - started,
        nodes=nodes,
    )


def max_nodes(T: int) -> int:
    return 2 ** (T + 1) - 1


def _trailing_min(g: np.ndarray, width: int) -> np.ndarray:
    """``out[i] = min(g[max(0, i - width + 1) : i + 1])`` by window doubling."""
    out = g.copy()
    span = 1
    while span * 2 <= width:
        shifted = np.full_like(out, np.inf)
        shifted[span:] = out[:-span]
        out = np.minimum(out, shifted)
        span *= 2
    if span < width:
        rest = width - span
        shifted = np.full_like(out, np.inf)
        shifted[rest:] = out[:-rest]
        out = np.minimum(out, shifted)
    return out


def dp_solve(instance: Instance) -> Solution:
    """Pseudo-polynomial dynamic program over integer ending inventory.

    Integral data admits an integral optimum, so the state ``s`` ranges over
    ``0..sum(d)``.  Each period costs a windowed minimum over the previous
    cost-to-date, which keeps the run time at ``O(T * sum(d) * log(cap))``
    vector operations and makes ``T = 90`` labels cheap to produce.
    """
    started = time.perf_counter()
    T = instance.T
    d = instance.d.tolist()
    S = int(sum(d))
    idx = np.arange(S + 1, dtype=np.float64)
    cost = np.full(S + 1, np.inf)
    cost[0] = 0.0
    history = []
    for t in range(T):
        history.append(cost)
        p, f, h, cap = (float(v) for v in (instance.p[t], instance.f[t], instance.h[t], instance.cap[t]))
        dt = d[t]
        # after serving d[t]: state s' draws on pre-production level i = s' + d[t]
        padded = np.concatenate([cost, np.full(dt, np.inf)])
        idle = padded[dt : dt + S + 1]
        if cap > 0:
            best_src = _trailing_min(padded - p * np.arange(S + 1 + dt), int(cap))
            # x >= 1 means the source index is at most i - 1
            window = np.concatenate([[np.inf], best_src[:-1]])[dt : dt + S + 1]
            produce = f + p * (idx + dt) + window
            cost = np.minimum(idle, produce)
        else:
            cost = idle.copy()
        cost = cost + h * idx
    if not np.isfinite(cost[0]):
        return _infeasible(Provenance.DYNAMIC_PROGRAM, started)

    y = np.zeros(T, dtype=np.int8)
    level = 0
    for t in range(T - 1, -1, -1):
        prev = history[t]
        p, f, cap = float(instance.p[t]), float(instance.f[t]), int(instance.cap[t])
        i = level + d[t]
        idle = prev[i] if i <= S else np.inf
        lo = max(0, i - cap)
        produce = np.inf
        j_best = None
        if cap > 0 and i > lo:
            cand = prev[lo:i] - p * np.arange(lo, i)
            k = int(np.argmin(cand))
            produce = f + p * i + cand[k]
            j_best = lo + k
        if produce <= idle:
            y[t] = 1
            level = j_best
        else:
            level = i
    res = solve_fixed_setup(instance, y)
    return Solution(
        setup=y,
        plan=res[0],
        objective=res[1],
        status=Status.OPTIMAL,
        provenance=Provenance.DYNAMIC_PROGRAM,
        solve_time=time.perf_counter() - started,
        nodes=T,
    )


__all__ = [
    "BRUTE_FORCE_MAX_T",
    "BnBOptions",
    "HorizonTooLong",
    "bnb_solve",
    "brute_force_solve",
    "dp_solve",
    "max_nodes",
]
