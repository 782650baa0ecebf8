import numpy as np
import pytest

from clsp import GeneratorConfig, Instance, Provenance, Status, generate_instance, validate_plan
from clsp.exact import BnBOptions, HorizonTooLong, bnb_solve, brute_force_solve, dp_solve, max_nodes
from clsp.flow import Fix, relaxation_bound, solve_fixed_setup

from conftest import random_instance

CONFIGS = [(c, f) for c in (3, 5, 8) for f in (1000, 10000)]


def test_brute_force_i1(i1):
    sol = brute_force_solve(i1)
    assert sol.setup.tolist() == [1, 0] and sol.objective == 30
    assert sol.status is Status.OPTIMAL and sol.provenance is Provenance.BRUTE_FORCE
    assert sol.nodes == 4


def test_brute_force_i2(i2):
    sol = brute_force_solve(i2)
    assert sol.setup.tolist() == [1, 1] and sol.objective == 20
    assert sol.plan.x.tolist() == [5, 5]


def test_brute_force_infeasible():
    inst = Instance(d=[5, 5], p=[1, 1], f=[1, 1], h=[1, 1], cap=[4, 4])
    assert brute_force_solve(inst).status is Status.INFEASIBLE


def test_brute_force_refuses_long_horizon():
    inst = generate_instance(GeneratorConfig(T=25, seed=0))
    with pytest.raises(HorizonTooLong):
        brute_force_solve(inst)


@pytest.mark.parametrize("solver", [bnb_solve, dp_solve])
def test_examples(solver, i1, i2):
    a, b = solver(i1), solver(i2)
    assert (a.objective, a.status) == (30, Status.OPTIMAL)
    assert (b.objective, b.status) == (20, Status.OPTIMAL)
    assert a.setup.tolist() == [1, 0] and b.setup.tolist() == [1, 1]


@pytest.mark.parametrize("solver", [bnb_solve, dp_solve])
def test_infeasible(solver):
    inst = Instance(d=[5, 5], p=[1, 1], f=[1, 1], h=[1, 1], cap=[4, 4])
    sol = solver(inst)
    assert sol.status is Status.INFEASIBLE and sol.objective is None


def test_free_setups_make_all_ones_optimal():
    rng = np.random.default_rng(1)
    for _ in range(50):
        inst = random_instance(rng, int(rng.integers(1, 9)), fmax=0)
        sol = bnb_solve(inst)
        ref = solve_fixed_setup(inst, np.ones(inst.T, dtype=int))
        if ref is None:
            assert sol.status is Status.INFEASIBLE
        else:
            assert sol.objective == ref[1]


@pytest.mark.parametrize("c,f", CONFIGS)
def test_bnb_matches_brute_force_per_config(c, f):
    for seed in range(40):
        T = 1 + seed % 10
        inst = generate_instance(GeneratorConfig(T=T, c=c, f=f, seed=seed))
        bf, bb = brute_force_solve(inst), bnb_solve(inst)
        assert bb.status is Status.OPTIMAL
        assert bb.objective == bf.objective
        assert bb.setup.tolist() == bf.setup.tolist()
        assert bb.nodes <= max_nodes(T)
        assert bb.objective >= relaxation_bound(inst, [Fix.FREE] * T) - 1e-9


def test_bnb_matches_brute_force_small_integer_instances():
    rng = np.random.default_rng(99)
    for _ in range(300):
        inst = random_instance(rng, int(rng.integers(1, 9)), dmax=20, capmax=25, fmax=40)
        bf, bb = brute_force_solve(inst), bnb_solve(inst)
        assert bb.status is bf.status
        assert bb.objective == bf.objective


def test_no_pruning_same_objective():
    rng = np.random.default_rng(4)
    for _ in range(40):
        inst = random_instance(rng, int(rng.integers(1, 8)), dmax=20, capmax=25, fmax=40)
        a = bnb_solve(inst)
        b = bnb_solve(inst, BnBOptions(prune=False))
        assert a.objective == b.objective
        if b.status is Status.OPTIMAL:
            assert b.nodes <= max_nodes(inst.T)
            assert a.nodes <= b.nodes


def test_deterministic():
    inst = generate_instance(GeneratorConfig(T=12, c=5, f=10000, seed=3))
    a, b = bnb_solve(inst), bnb_solve(inst)
    assert a.objective == b.objective and a.nodes == b.nodes
    assert a.setup.tolist() == b.setup.tolist()


def test_node_limit_gives_feasible_status():
    inst = generate_instance(GeneratorConfig(T=20, c=3, f=10000, seed=0))
    sol = bnb_solve(inst, BnBOptions(node_limit=5))
    assert sol.status is Status.FEASIBLE
    assert sol.objective >= bnb_solve(inst).objective
    assert validate_plan(inst, sol.setup, sol.plan) == []


def test_invalid_options():
    with pytest.raises(ValueError):
        BnBOptions(node_limit=0)
    with pytest.raises(ValueError):
        BnBOptions(time_limit=0)


class TestDynamicProgram:
    def test_matches_bnb(self):
        for i, (c, f) in enumerate(CONFIGS * 10):
            inst = generate_instance(GeneratorConfig(T=4 + i % 14, c=c, f=f, seed=500 + i))
            a, b = dp_solve(inst), bnb_solve(inst)
            assert a.objective == b.objective
            assert a.provenance is Provenance.DYNAMIC_PROGRAM
            assert validate_plan(inst, a.setup, a.plan) == []

    def test_matches_brute_force_with_zero_capacity_periods(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            inst = random_instance(rng, int(rng.integers(1, 8)), dmax=10, capmax=12, fmax=30)
            assert dp_solve(inst).objective == brute_force_solve(inst).objective

    def test_long_horizon(self):
        inst = generate_instance(GeneratorConfig(T=90, c=3, f=1000, seed=7))
        sol = dp_solve(inst)
        assert sol.status is Status.OPTIMAL
        assert validate_plan(inst, sol.setup, sol.plan) == []
        assert solve_fixed_setup(inst, sol.setup)[1] == sol.objective
