"""
Exact solvers on small lot sizing instances
===========================================

A two-period toy instance, then a look at how the three exact solvers
scale with the horizon.
"""
import time

import numpy as np

from clsp import GeneratorConfig, Instance, generate_instance
from clsp.exact import bnb_solve, brute_force_solve, dp_solve
from clsp.flow import Fix, relaxation_bound, solve_fixed_setup

# demand 4 in both periods, setup cost 10, capacity 8 per period
toy = Instance(d=[4, 4], p=[2, 2], f=[10, 10], h=[1, 1], cap=[8, 8])

# with the setups fixed the rest is a small transportation problem
for y in ([1, 0], [1, 1], [0, 1]):
    res = solve_fixed_setup(toy, y)
    print(y, "->", "infeasible" if res is None else (res[0].x.tolist(), res[1]))

# producing everything in period 1 and carrying 4 units wins: 16 + 10 + 4
print("brute force:", brute_force_solve(toy).objective)
print("relaxation bound:", relaxation_bound(toy, [Fix.FREE, Fix.FREE]))

# generated instances: demand in [1, 600], capacity about three times the mean demand
for T in (8, 12, 16, 20):
    inst = generate_instance(GeneratorConfig(T=T, c=3, f=10000, seed=T))
    row = [f"T={T:2d}"]
    for name, solver in (("bnb", bnb_solve), ("dp", dp_solve)):
        t0 = time.perf_counter()
        sol = solver(inst)
        row.append(f"{name} {sol.objective} in {1e3 * (time.perf_counter() - t0):7.1f} ms")
    if T <= 16:
        t0 = time.perf_counter()
        row.append(f"brute {brute_force_solve(inst).objective} in {1e3 * (time.perf_counter() - t0):7.1f} ms")
    print(" | ".join(row))

# the dynamic program stays fast at the full 90-period horizon
inst = generate_instance(GeneratorConfig(T=90, c=5, f=1000, seed=1))
t0 = time.perf_counter()
sol = dp_solve(inst)
print(f"T=90 optimum {sol.objective} with {int(np.sum(sol.setup))} setups, {time.perf_counter() - t0:.3f} s")
