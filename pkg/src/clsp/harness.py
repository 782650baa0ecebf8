"""Labeled datasets, evaluation reports and attention export."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import (
    GeneratorConfig,
    Instance,
    ProductionPlan,
    Provenance,
    Solution,
    Status,
    evaluate_objective,
    generate_instance,
    setup_feasible,
    validate_plan,
)
from .encoding import BOS, ONE, ZERO, encode_source
from .exact import BnBOptions, bnb_solve, brute_force_solve, dp_solve
from .pipeline import Predictor, RepairOptions, predict_setup, solve_ml
from .transformer.checkpoint import ModelCheckpoint
from .transformer.model import forward

log = logging.getLogger(__name__)

SOLVERS = ("brute_force", "bnb", "dp")
SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    pass


@dataclass
class DatasetRecord:
    instance: Instance
    setup: np.ndarray
    x: np.ndarray
    objective: object
    solver: str
    status: str = Status.OPTIMAL.value
    split: str = "train"
    nodes: int = 0
    solve_time: Optional[float] = None  # kept in the timing sidecar, not the dataset file

    @property
    def plan(self) -> ProductionPlan:
        return ProductionPlan(x=self.x, s=np.cumsum(self.x - self.instance.d))

    @property
    def group(self) -> tuple:
        gen = self.instance.gen
        return (gen.c, gen.f) if gen is not None else (None, None)

    def to_json(self) -> str:
        obj = {
            "instance": self.instance.to_dict(),
            "y": self.setup.tolist(),
            "x": self.x.tolist(),
            "objective": self.objective,
            "solver": self.solver,
            "status": self.status,
            "split": self.split,
            "nodes": self.nodes,
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        obj = json.loads(line)
        inst = Instance.from_dict(obj["instance"])
        return cls(
            instance=inst,
            setup=np.asarray(obj["y"], dtype=np.int8),
            x=np.asarray(obj["x"], dtype=inst.cap.dtype),
            objective=obj["objective"],
            solver=obj["solver"],
            status=obj["status"],
            split=obj["split"],
            nodes=obj["nodes"],
        )

    def check(self) -> None:
        """Reject records whose stored objective or plan does not re-validate exactly."""
        problems = validate_plan(self.instance, self.setup, self.plan)
        if problems:
            raise DatasetError(f"stored plan violates {problems[0].constraint} at t={problems[0].period}")
        value = evaluate_objective(self.instance, self.setup, self.plan)
        if value != self.objective:
            raise DatasetError(f"stored objective {self.objective} != re-evaluated {value}")


def split_of(seed: int) -> str:
    """80/10/10 train/valid/test by a stable hash of the instance seed."""
    bucket = int.from_bytes(hashlib.sha256(str(int(seed)).encode()).digest()[:8], "little") % 10
    return "train" if bucket < 8 else ("valid" if bucket == 8 else "test")


def derive_seed(base: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(base), *map(int, path)]).generate_state(1, np.uint64)[0])


def exact_solve(instance: Instance, solver: str = "bnb", bnb_options: Optional[BnBOptions] = None) -> Solution:
    if solver == "brute_force":
        return brute_force_solve(instance)
    if solver == "bnb":
        return bnb_solve(instance, bnb_options or BnBOptions())
    if solver == "dp":
        return dp_solve(instance)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


def label_instance(instance: Instance, solver: str = "bnb", bnb_options: Optional[BnBOptions] = None):
    """Exact-solve one instance into a record; None when it is infeasible."""
    sol = exact_solve(instance, solver, bnb_options)
    if not sol.feasible:
        return None
    if sol.objective <= 0:
        raise DatasetError("optimal objective must be positive to define an optimality gap")
    seed = instance.gen.seed if instance.gen is not None else 0
    return DatasetRecord(
        instance=instance,
        setup=sol.setup,
        x=sol.plan.x,
        objective=sol.objective,
        solver=sol.provenance.value,
        status=sol.status.value,
        split=split_of(seed),
        nodes=sol.nodes,
        solve_time=sol.solve_time,
    )


def _labeled(job):
    config, solver, bnb_options, max_retries = job
    for attempt in range(max_retries + 1):
        seed = config.seed if attempt == 0 else derive_seed(config.seed, attempt)
        cfg = GeneratorConfig(T=config.T, c=config.c, f=config.f, seed=seed)
        inst = generate_instance(cfg)
        if not setup_feasible(inst, np.ones(inst.T, dtype=np.int8)):
            log.info("instance with seed %d is infeasible, regenerating", seed)
            continue
        rec = label_instance(inst, solver, bnb_options)
        if rec is not None:
            return rec
    raise DatasetError(f"no feasible instance after {max_retries} retries from seed {config.seed}")


def timing_path(path) -> str:
    return os.fspath(path) + ".timing.jsonl"


def write_dataset(records: Sequence[DatasetRecord], path) -> None:
    """Dataset lines are deterministic; wall-clock solve times go to a sidecar file."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    with open(timing_path(path), "w", encoding="utf-8") as fh:
        for i, rec in enumerate(records):
            fh.write(json.dumps({"index": i, "solve_time": rec.solve_time}) + "\n")


def load_dataset(path, split: Optional[str] = None) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = DatasetRecord.from_json(line)
            try:
                rec.check()
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            records.append(rec)
    tp = timing_path(path)
    if os.path.exists(tp):
        with open(tp, encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                if obj["index"] < len(records):
                    records[obj["index"]].solve_time = obj["solve_time"]
    if split is not None:
        records = [r for r in records if r.split == split]
    return records


def build_dataset(
    config: Union[GeneratorConfig, Sequence[GeneratorConfig]],
    count: int,
    solver: str = "bnb",
    path=None,
    bnb_options: Optional[BnBOptions] = None,
    workers: int = 1,
    max_retries: int = 100,
) -> list:
    """Generate and exactly solve ``count`` instances per generator config.

    Instance ``i`` of a config uses seed ``derive_seed(config.seed, c, f, i)``,
    so the records (and the written file) depend only on the arguments.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    configs = [config] if isinstance(config, GeneratorConfig) else list(config)
    jobs = []
    for cfg in configs:
        cfg.validate()
        if solver == "brute_force" and cfg.T > 24:
            raise ValueError("brute force labels need T <= 24")
        for i in range(count):
            seed = derive_seed(cfg.seed, cfg.c, cfg.f, i)
            jobs.append((GeneratorConfig(T=cfg.T, c=cfg.c, f=cfg.f, seed=seed), solver, bnb_options, max_retries))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_labeled, jobs, chunksize=16))
    else:
        records = [_labeled(job) for job in jobs]
    if path is not None:
        write_dataset(records, path)
    return records


# --------------------------------------------------------------------- metrics

ROW_FIELDS = (
    "index", "c", "f", "T", "split", "status", "provenance", "direct_feasible", "feasible",
    "obj_opt", "obj_ml", "optgap_pct", "matches_label",
)
TIMING_FIELDS = ("index", "time_ml", "time_exact")


@dataclass
class GroupMetrics:
    count: int = 0
    inf_pct: float = 0.0
    pre_repair_inf_pct: float = 0.0
    optgap_pct: Optional[float] = None
    time_ml: Optional[float] = None
    time_exact: Optional[float] = None
    timegain_pct: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "inf_pct": self.inf_pct,
            "pre_repair_inf_pct": self.pre_repair_inf_pct,
            "optgap_pct": self.optgap_pct,
            "time_ml": self.time_ml,
            "time_exact": self.time_exact,
            "timegain_pct": self.timegain_pct,
            "provenance": dict(self.provenance),
        }


def _mean(values: list) -> Optional[float]:
    return sum(values) / len(values) if values else None


def _group_metrics(rows: list, timings: dict) -> GroupMetrics:
    n = len(rows)
    feasible = [r for r in rows if r["feasible"]]
    provenance: dict = {}
    for r in rows:
        provenance[r["provenance"]] = provenance.get(r["provenance"], 0) + 1
    t_ml = [timings[r["index"]]["time_ml"] for r in rows if r["index"] in timings]
    t_ex = [timings[r["index"]]["time_exact"] for r in rows if r["index"] in timings]
    t_ex = [t for t in t_ex if t is not None]
    time_ml, time_exact = _mean(t_ml), _mean(t_ex)
    gain = None
    if time_ml is not None and time_exact:
        gain = 100.0 * (time_exact - time_ml) / time_exact
    return GroupMetrics(
        count=n,
        inf_pct=100.0 * (n - len(feasible)) / n if n else 0.0,
        pre_repair_inf_pct=100.0 * sum(1 for r in rows if not r["direct_feasible"]) / n if n else 0.0,
        optgap_pct=_mean([r["optgap_pct"] for r in feasible]),
        time_ml=time_ml,
        time_exact=time_exact,
        timegain_pct=gain,
        provenance=dict(sorted(provenance.items())),
    )


def aggregate(rows: list, timing_rows: Iterable[dict] = ()) -> "OrderedDict[str, GroupMetrics]":
    """Per-(c, f) group metrics plus ``overall``; order-independent sums and counts."""
    timings = {t["index"]: t for t in timing_rows}
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["c"], r["f"]), []).append(r)
    out: "OrderedDict[str, GroupMetrics]" = OrderedDict()
    for key in sorted(groups, key=lambda k: (k[0] is None, k[0] or 0, k[1] or 0)):
        out[f"c={key[0]},f={key[1]}"] = _group_metrics(groups[key], timings)
    out["overall"] = _group_metrics(list(rows), timings)
    return out


def _row(index: int, rec: DatasetRecord, sol: Solution) -> dict:
    c, f = rec.group
    gap = None
    if sol.feasible:
        gap = 100.0 * (sol.objective - rec.objective) / rec.objective
    predicted = sol.extra.get("predicted")
    return {
        "index": index,
        "c": c,
        "f": f,
        "T": rec.instance.T,
        "split": rec.split,
        "status": sol.status.value,
        "provenance": sol.provenance.value,
        "direct_feasible": bool(sol.extra.get("direct_feasible", False)),
        "feasible": sol.feasible,
        "obj_opt": rec.objective,
        "obj_ml": sol.objective,
        "optgap_pct": gap,
        "matches_label": bool(predicted is not None and np.array_equal(predicted, rec.setup)),
    }


def write_rows_csv(rows: list, path, fields=ROW_FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in fields})


def _parse(value: str):
    if value == "":
        return None
    if value in ("True", "False"):
        return value == "True"
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def read_rows_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for r in csv.DictReader(fh):
            row = {k: _parse(v) for k, v in r.items()}
            if "split" in row and row["split"] is not None:
                row["split"] = str(row["split"])
            for k in ("status", "provenance"):
                if k in row:
                    row[k] = str(row[k])
            rows.append(row)
        return rows


def evaluate_model(
    predictor: Predictor,
    records: Sequence[DatasetRecord],
    options: RepairOptions = RepairOptions(),
    csv_path=None,
    timing_csv_path=None,
    retime_exact: bool = False,
):
    """Run the ML pipeline on every record and aggregate Table-style metrics.

    Returns ``(metrics, rows, timing_rows)``.  ``rows`` holds only
    deterministic per-instance outcomes; wall-clock times are kept apart in
    ``timing_rows`` so the per-instance CSV is reproducible byte for byte.
    ``time_exact`` is the label's stored solve time, or a fresh solve with
    the label's solver when the time is missing or ``retime_exact`` is set.
    """
    rows, timing_rows = [], []
    for i, rec in enumerate(records):
        sol = solve_ml(rec.instance, predictor, options)
        rows.append(_row(i, rec, sol))
        t_exact = rec.solve_time
        if t_exact is None or retime_exact:
            solver = {
                Provenance.BRUTE_FORCE.value: "brute_force",
                Provenance.DYNAMIC_PROGRAM.value: "dp",
            }.get(rec.solver, "bnb")
            t_exact = exact_solve(rec.instance, solver).solve_time
        timing_rows.append({"index": i, "time_ml": sol.solve_time, "time_exact": t_exact})
    if csv_path is not None:
        write_rows_csv(rows, csv_path)
    if timing_csv_path is not None:
        write_rows_csv(timing_rows, timing_csv_path, TIMING_FIELDS)
    return aggregate(rows, timing_rows), rows, timing_rows


def oracle_predictor(records: Sequence[DatasetRecord], flip_last: bool = False):
    """Stub predictor returning each instance's stored label (optionally with y[T] flipped)."""
    table = {rec.instance.to_json(): rec.setup for rec in records}

    def predict(instance: Instance) -> np.ndarray:
        y = table[instance.to_json()].copy()
        if flip_last:
            y[-1] = 1 - y[-1]
        return y

    return predict


def format_report(metrics) -> str:
    """Plain-text table with the columns of the comparison table."""
    head = f"{'c':>3} {'f':>6} {'TimeExact':>10} {'TimeML':>10} {'Timegain(%)':>12} {'Inf(%)':>8} {'PreInf(%)':>10} {'Optgap(%)':>10} {'n':>6}"
    lines = [head, "-" * len(head)]

    def fmt(v, spec):
        return format(v, spec) if v is not None else "-"

    for name, m in metrics.items():
        if name == "overall":
            c, f = "all", ""
        else:
            c, f = (part.split("=")[1] for part in name.split(","))
        lines.append(
            f"{c:>3} {f:>6} {fmt(m.time_exact, '10.5f')} {fmt(m.time_ml, '10.5f')} {fmt(m.timegain_pct, '12.2f')} "
            f"{m.inf_pct:8.3f} {m.pre_repair_inf_pct:10.3f} {fmt(m.optgap_pct, '10.3f')} {m.count:6d}"
        )
    return "\n".join(lines)


def metrics_to_dict(metrics) -> dict:
    return {k: v.to_dict() for k, v in metrics.items()}


# ------------------------------------------------------------------- attention


def attention_matrices(checkpoint: ModelCheckpoint, instance: Instance, kind: str = "encoder") -> list:
    """One forward pass; returns ``[(layer, head, matrix)]`` for the chosen attention.

    ``kind`` is ``encoder`` (source self-attention), ``decoder`` (label
    self-attention) or ``cross``.  The decoder is fed the model's own greedy
    prediction.
    """
    if kind not in ("encoder", "decoder", "cross"):
        raise ValueError(f"unknown attention kind {kind!r}")
    src = encode_source(instance, checkpoint.tokenizer)
    y = predict_setup(instance, checkpoint)
    tgt_in = np.concatenate([[BOS], np.where(y[:-1] == 1, ONE, ZERO)]).astype(np.int64)
    _, attention, _ = forward(checkpoint.params, checkpoint.model_config, src, tgt_in)
    out = []
    for layer, maps in enumerate(attention[kind]):
        for head in range(maps.shape[1]):
            out.append((layer, head, maps[0, head]))
    return out


def export_attention(checkpoint: ModelCheckpoint, instance: Instance, path, kind: str = "encoder") -> int:
    """Write one CSV row per (layer, head, query position); returns the row count."""
    mats = attention_matrices(checkpoint, instance, kind)
    n_keys = mats[0][2].shape[1]
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "head", "query"] + [f"k{j}" for j in range(n_keys)])
        for layer, head, m in mats:
            for q in range(m.shape[0]):
                w.writerow([layer, head, q] + [repr(float(v)) for v in m[q]])
                rows += 1
    return rows


__all__ = [
    "DatasetError",
    "DatasetRecord",
    "GroupMetrics",
    "aggregate",
    "attention_matrices",
    "build_dataset",
    "derive_seed",
    "evaluate_model",
    "exact_solve",
    "export_attention",
    "format_report",
    "label_instance",
    "load_dataset",
    "metrics_to_dict",
    "oracle_predictor",
    "read_rows_csv",
    "split_of",
    "write_dataset",
    "write_rows_csv",
]
