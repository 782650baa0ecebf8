"""Exact solver for the lot sizing problem once setups are fixed.

With ``y`` fixed the problem is a transportation problem on a line: open
period ``u`` ships up to ``cap[u]`` units to any period ``t >= u`` at unit cost
``p[u] + h[u] + ... + h[t-1]``.  Writing ``H[t]`` for the cumulative holding
cost before ``t``, that cost splits into ``(p[u] - H[u]) + H[t]``; the first
term depends only on the source, so serving each period in turn from the
cheapest open source with spare capacity is optimal (exchange argument, the
``H[t]`` part is the same whichever source is used).
"""
from __future__ import annotations

import enum
import heapq
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, Instance, ProductionPlan, as_setup, evaluate_objective


class Fix(enum.IntEnum):
    ZERO = 0
    ONE = 1
    FREE = 2


def _prefix_holding(h: list) -> list:
    H = [0] * len(h)
    for t in range(1, len(h)):
        H[t] = H[t - 1] + h[t - 1]
    return H


def _greedy(d: list, unit: list, caps: list, H: list):
    """Serve demand left to right from the cheapest open source.

    ``unit[u]`` is None for closed periods.  Returns ``(shipped, variable_cost)``
    or None when some prefix of demand cannot be covered.
    """
    T = len(d)
    resid = list(caps)
    shipped = [0] * T
    heap: list = []
    cost = 0
    for t in range(T):
        if unit[t] is not None and caps[t] > 0:
            # ties on key resolve to the earliest period via the second tuple slot
            heapq.heappush(heap, (unit[t] - H[t], t))
        need = d[t]
        cost += H[t] * need
        while need > 0:
            if not heap:
                return None
            key, u = heap[0]
            take = resid[u] if resid[u] < need else need
            resid[u] -= take
            shipped[u] += take
            cost += key * take
            need -= take
            if resid[u] == 0:
                heapq.heappop(heap)
    return shipped, cost


def solve_fixed_setup(instance: Instance, setup) -> Optional[tuple[ProductionPlan, object]]:
    """Optimal production plan for a fixed setup vector.

    Returns ``(plan, objective)``, or None if the setup cannot cover demand.
    The objective includes the setup costs of every open period. With integer
    data the plan is integral and the objective exact.
    """
    y = as_setup(setup, instance.T)
    d = instance.d.tolist()
    p = instance.p.tolist()
    unit = [p[t] if y[t] else None for t in range(instance.T)]
    res = _greedy(d, unit, instance.cap.tolist(), _prefix_holding(instance.h.tolist()))
    if res is None:
        return None
    x = np.asarray(res[0], dtype=instance.cap.dtype)
    s = np.cumsum(x - instance.d)
    plan = ProductionPlan(x=x, s=s)
    return plan, evaluate_objective(instance, y, plan)


def relaxation_bound(instance: Instance, fixing: Sequence[int]) -> Optional[float]:
    """LP-relaxation lower bound for all completions of a partial fixing.

    Relaxing ``y`` to [0, 1] makes ``y[t] = x[t] / cap[t]`` optimal, so a free
    period behaves like an open source with unit cost ``p + f / cap`` and no
    fixed charge.  Returns None when even opening every free period leaves
    some demand prefix uncovered.
    """
    fixing = list(fixing)
    if len(fixing) != instance.T:
        raise ContractError(f"fixing has length {len(fixing)}, expected {instance.T}")
    p = instance.p.tolist()
    f = instance.f.tolist()
    caps = instance.cap.tolist()
    unit: list = [None] * instance.T
    constant = 0
    for t, state in enumerate(fixing):
        if state == Fix.ONE:
            unit[t] = p[t]
            constant += f[t]
        elif state == Fix.FREE:
            if caps[t] > 0:
                unit[t] = p[t] + f[t] / caps[t]
        elif state != Fix.ZERO:
            raise ContractError(f"unknown fixing state {state!r} at period {t + 1}")
    res = _greedy(instance.d.tolist(), unit, caps, _prefix_holding(instance.h.tolist()))
    if res is None:
        return None
    return constant + res[1]
