"""Single-item capacitated lot sizing: instances, plans, objective and feasibility.

Periods are stored 0-based in arrays; anything reported to a user (violation
records, CSV rows) uses 1-based period numbers ``t = 1..T``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

CAPACITY_RATIOS = (3, 5, 8)
SETUP_RATIOS = (1000, 10000)
DEMAND_RANGE = (1, 600)
UNIT_COST_RANGE = (1, 5)
HOLDING_COST = 1
# mean of U{1..600}; turns the capacity-to-demand ratio into an absolute scale
CAPACITY_SCALE = 300


class ConfigurationError(ValueError):
    pass


class ContractError(ValueError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"


class Provenance(str, enum.Enum):
    BRUTE_FORCE = "BruteForce"
    BRANCH_AND_BOUND = "BranchAndBound"
    DYNAMIC_PROGRAM = "DynamicProgram"
    ML_DIRECT = "MLDirect"
    ML_FLIPPED = "MLFlipped"
    EXACT_FALLBACK = "ExactFallback"


@dataclass(frozen=True)
class GeneratorConfig:
    """Benchmark generator parameters.

    ``c`` is the capacity-to-demand ratio and ``f`` the setup-to-holding cost
    ratio; both select a benchmark family, they are not per-period values.
    """

    T: int
    c: int = 3
    f: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if int(self.T) != self.T or self.T < 1:
            raise ConfigurationError(f"T must be a positive integer, got {self.T!r}")
        if self.c not in CAPACITY_RATIOS:
            raise ConfigurationError(f"capacity ratio c must be one of {CAPACITY_RATIOS}, got {self.c!r}")
        if self.f not in SETUP_RATIOS:
            raise ConfigurationError(f"setup ratio f must be one of {SETUP_RATIOS}, got {self.f!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed!r}")

    @property
    def setup_bounds(self) -> tuple[int, int]:
        return round(0.9 * self.f), round(1.1 * self.f)

    @property
    def capacity_bounds(self) -> tuple[int, int]:
        kappa = self.c * CAPACITY_SCALE
        return round(0.7 * kappa), round(1.1 * kappa)

    def to_dict(self) -> dict:
        return {"c": int(self.c), "f": int(self.f), "seed": int(self.seed)}


def _as_int_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if arr.dtype.kind in "iub":
        return arr.astype(np.int64)
    if arr.dtype.kind == "f" and np.all(np.isfinite(arr)) and np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr.astype(np.float64)


@dataclass(eq=False)
class Instance:
    """One CLSP instance. Arrays are indexed by period, all of length ``T``."""

    d: np.ndarray
    p: np.ndarray
    f: np.ndarray
    h: np.ndarray
    cap: np.ndarray
    gen: Optional[GeneratorConfig] = None

    def __post_init__(self):
        for name in ("d", "p", "f", "h", "cap"):
            setattr(self, name, _as_int_array(getattr(self, name), name))
        T = len(self.d)
        if T < 1:
            raise ContractError("an instance needs at least one period")
        for name in ("p", "f", "h", "cap"):
            if len(getattr(self, name)) != T:
                raise ContractError(f"{name} has length {len(getattr(self, name))}, expected {T}")
        for name in ("d", "p", "f", "h", "cap"):
            if np.any(getattr(self, name) < 0):
                raise ContractError(f"{name} has negative entries")
        if self.d.sum() > 0 and not np.any(self.cap > 0):
            raise ContractError("positive demand but no period has capacity")

    @property
    def T(self) -> int:
        return len(self.d)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("d", "p", "f", "h", "cap")
        ) and self.gen == other.gen

    def to_dict(self) -> dict:
        out = {"T": self.T}
        for k in ("d", "p", "f", "h", "cap"):
            out[k] = getattr(self, k).tolist()
        if self.gen is not None:
            out["gen"] = self.gen.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Instance":
        gen = None
        if obj.get("gen") is not None:
            g = obj["gen"]
            gen = GeneratorConfig(T=obj["T"], c=g["c"], f=g["f"], seed=g["seed"])
        inst = cls(d=obj["d"], p=obj["p"], f=obj["f"], h=obj["h"], cap=obj["cap"], gen=gen)
        if inst.T != obj["T"]:
            raise ContractError(f"declared T={obj['T']} but arrays have length {inst.T}")
        return inst

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Instance":
        return cls.from_dict(json.loads(line))


@dataclass(eq=False)
class ProductionPlan:
    x: np.ndarray
    s: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProductionPlan):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.s, other.s)


@dataclass
class Solution:
    setup: Optional[np.ndarray]
    plan: Optional[ProductionPlan]
    objective: Optional[float]
    status: Status
    provenance: Provenance
    solve_time: float = 0.0
    nodes: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status is not Status.INFEASIBLE


@dataclass(frozen=True)
class Violation:
    constraint: str  # flow_balance | capacity | nonnegativity | binary
    period: int  # 1-based
    detail: str


def as_setup(y, T: Optional[int] = None) -> np.ndarray:
    """Validate and return ``y`` as an int8 0/1 vector."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ContractError("setup plan must be one-dimensional")
    if T is not None and len(arr) != T:
        raise ContractError(f"setup plan has length {len(arr)}, expected {T}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ContractError("setup plan entries must be 0 or 1")
    return arr.astype(np.int8)


def _check_lengths(instance: Instance, *arrays) -> None:
    for a in arrays:
        if len(a) != instance.T:
            raise ContractError(f"array of length {len(a)} does not match T={instance.T}")


def _scalar(v):
    return v.item() if hasattr(v, "item") else v


def evaluate_objective(instance: Instance, setup, plan: ProductionPlan):
    """Total production + setup + holding cost. Exact for integer inputs."""
    y = np.asarray(setup)
    _check_lengths(instance, y, plan.x, plan.s)
    total = (
        np.dot(instance.p, plan.x)
        + np.dot(instance.f, y.astype(instance.f.dtype))
        + np.dot(instance.h, plan.s)
    )
    return _scalar(total)


def validate_plan(instance: Instance, setup, plan: ProductionPlan, tol: float = 0.0) -> list[Violation]:
    """Every violated constraint with its 1-based period; empty list means ok."""
    y = np.asarray(setup)
    _check_lengths(instance, y, plan.x, plan.s)
    out: list[Violation] = []
    prev = 0
    for t in range(instance.T):
        x, s = _scalar(plan.x[t]), _scalar(plan.s[t])
        if y[t] not in (0, 1):
            out.append(Violation("binary", t + 1, f"y={y[t]!r}"))
        if x < -tol or s < -tol:
            out.append(Violation("nonnegativity", t + 1, f"x={x}, s={s}"))
        lhs = prev + x - _scalar(instance.d[t])
        if abs(lhs - s) > tol:
            out.append(Violation("flow_balance", t + 1, f"{prev}+{x}-{instance.d[t]} != {s}"))
        bound = _scalar(y[t]) * _scalar(instance.cap[t])
        if x > bound + tol:
            out.append(Violation("capacity", t + 1, f"{x} > {bound}"))
        prev = s
    return out


def setup_feasible(instance: Instance, setup) -> bool:
    """Prefix-capacity test: opened capacity through ``t`` covers demand through ``t``."""
    y = np.asarray(setup)
    _check_lengths(instance, y)
    opened = np.cumsum(instance.cap * y.astype(np.int64))
    needed = np.cumsum(instance.d)
    return bool(np.all(opened >= needed))


def make_rng(seed: int) -> np.random.Generator:
    """The library's only RNG: numpy's PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_instance(config: GeneratorConfig) -> Instance:
    config.validate()
    rng = make_rng(config.seed)
    T = config.T
    d = rng.integers(DEMAND_RANGE[0], DEMAND_RANGE[1], size=T, endpoint=True)
    p = rng.integers(UNIT_COST_RANGE[0], UNIT_COST_RANGE[1], size=T, endpoint=True)
    f = rng.integers(*config.setup_bounds, size=T, endpoint=True)
    cap = rng.integers(*config.capacity_bounds, size=T, endpoint=True)
    h = np.full(T, HOLDING_COST, dtype=np.int64)
    return Instance(d=d, p=p, f=f, h=h, cap=cap, gen=config)


def write_instances(path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")


def read_instances(path) -> Iterator[Instance]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield Instance.from_json(line)
