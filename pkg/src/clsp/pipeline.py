"""Predict setups, fix them, solve the residual flow problem, repair the last period."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .core import ContractError, Instance, Provenance, Solution, Status, as_setup
from .encoding import encode_source
from .exact import BnBOptions, bnb_solve, dp_solve
from .flow import solve_fixed_setup
from .transformer.checkpoint import ModelCheckpoint
from .transformer.model import greedy_decode_batch

Predictor = Union[ModelCheckpoint, Callable[[Instance], np.ndarray]]


@dataclass(frozen=True)
class RepairOptions:
    flip_last: bool = True
    fallback_exact: bool = True
    evaluate_candidates_concurrently: bool = False
    # "bnb" (default) or "dp" for horizons where branch and bound is too slow
    fallback_solver: str = "bnb"
    fallback_bnb: BnBOptions = field(default_factory=lambda: BnBOptions(time_limit=60.0))


def predict_setups(instances: list, checkpoint: ModelCheckpoint, batch_size: int = 64) -> list:
    cfg = checkpoint.model_config
    for inst in instances:
        if inst.T > cfg.max_tgt_len or 5 * inst.T > cfg.max_src_len:
            raise ContractError(f"T={inst.T} exceeds the model's maximum horizon {cfg.max_tgt_len}")
    out = []
    for lo in range(0, len(instances), batch_size):
        chunk = instances[lo : lo + batch_size]
        seqs = [encode_source(inst, checkpoint.tokenizer) for inst in chunk]
        S = max(len(s) for s in seqs)
        src = np.zeros((len(seqs), S), dtype=np.int64)
        mask = np.zeros((len(seqs), S), dtype=bool)
        for i, s in enumerate(seqs):
            src[i, : len(s)] = s
            mask[i, : len(s)] = True
        out.extend(greedy_decode_batch(checkpoint.params, cfg, src, [inst.T for inst in chunk], mask))
    return out


def predict_setup(instance: Instance, checkpoint: ModelCheckpoint) -> np.ndarray:
    return predict_setups([instance], checkpoint)[0]


def _predict(instance: Instance, predictor: Predictor) -> np.ndarray:
    if isinstance(predictor, ModelCheckpoint):
        return predict_setup(instance, predictor)
    return as_setup(predictor(instance), instance.T)


def repair_and_solve(instance: Instance, predicted, options: RepairOptions = RepairOptions()) -> Solution:
    """Solve the predicted setup and its last-period flip; keep the cheaper feasible one.

    Ties go to the unflipped candidate.  When neither is feasible the result
    is an exact solve (``fallback_exact``) or an Infeasible solution.
    ``extra["direct_feasible"]`` records whether the prediction worked as is.
    """
    started = time.perf_counter()
    y = as_setup(predicted, instance.T)
    candidates = [(y, Provenance.ML_DIRECT)]
    if options.flip_last:
        flipped = y.copy()
        flipped[-1] = 1 - flipped[-1]
        candidates.append((flipped, Provenance.ML_FLIPPED))

    if options.evaluate_candidates_concurrently and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=len(candidates)) as pool:
            results = list(pool.map(lambda c: solve_fixed_setup(instance, c[0]), candidates))
    else:
        results = [solve_fixed_setup(instance, c[0]) for c in candidates]

    best = None
    for (setup, prov), res in zip(candidates, results):
        if res is not None and (best is None or res[1] < best[2]):
            best = (setup, res[0], res[1], prov)
    direct_feasible = results[0] is not None

    if best is not None:
        return Solution(
            setup=best[0],
            plan=best[1],
            objective=best[2],
            status=Status.FEASIBLE,
            provenance=best[3],
            solve_time=time.perf_counter() - started,
            extra={"direct_feasible": direct_feasible},
        )
    if options.fallback_exact:
        if options.fallback_solver == "dp":
            sol = dp_solve(instance)
        else:
            sol = bnb_solve(instance, options.fallback_bnb)
        sol.provenance = Provenance.EXACT_FALLBACK
        sol.solve_time = time.perf_counter() - started
        sol.extra["direct_feasible"] = False
        return sol
    return Solution(
        setup=None,
        plan=None,
        objective=None,
        status=Status.INFEASIBLE,
        provenance=Provenance.ML_DIRECT,
        solve_time=time.perf_counter() - started,
        extra={"direct_feasible": False},
    )


def solve_ml(instance: Instance, predictor: Predictor, options: RepairOptions = RepairOptions()) -> Solution:
    """Predict then repair; ``solve_time`` is the wall time of both steps.

    ``predictor`` is a trained checkpoint or any callable mapping an instance
    to a setup vector (used for oracle stubs in evaluation).
    """
    started = time.perf_counter()
    y = _predict(instance, predictor)
    sol = repair_and_solve(instance, y, options)
    sol.solve_time = time.perf_counter() - started
    sol.extra["predicted"] = y
    return sol
