"""Command line entry point: ``clsp {gen,solve,train,predict,eval,attn}``.

Every command prints one JSON object on success.  Exit codes: 0 success,
1 usage or input error, 2 infeasible instance or exhausted solver limit.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .core import GeneratorConfig, Instance, Status, generate_instance, write_instances
from .exact import BnBOptions
from .harness import (
    build_dataset,
    derive_seed,
    evaluate_model,
    exact_solve,
    export_attention,
    format_report,
    load_dataset,
    metrics_to_dict,
    oracle_predictor,
)
from .pipeline import RepairOptions, predict_setup
from .transformer.checkpoint import load_checkpoint, save_checkpoint
from .transformer.model import ModelConfig
from .transformer.optim import TrainConfig
from .transformer.train import train

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj) -> None:
    print(json.dumps(obj, separators=(",", ":")))


def _load_instance(path, index: int) -> Instance:
    """Read instance ``index`` from an instance file or a dataset file."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not 0 <= index < len(lines):
        raise UsageError(f"{path} has {len(lines)} lines; index {index} is out of range")
    obj = json.loads(lines[index])
    return Instance.from_dict(obj["instance"] if "instance" in obj else obj)


def cmd_gen(args) -> int:
    configs = [GeneratorConfig(T=args.T, c=c, f=f, seed=args.seed) for c in args.c for f in args.f]
    if args.label == "none":
        instances = [
            generate_instance(replace(cfg, seed=derive_seed(cfg.seed, cfg.c, cfg.f, i)))
            for cfg in configs
            for i in range(args.count)
        ]
        write_instances(args.out, instances)
        _emit({"path": args.out, "instances": len(instances)})
        return EXIT_OK
    bnb = BnBOptions(node_limit=args.node_limit, time_limit=args.time_limit)
    records = build_dataset(configs, args.count, args.label, args.out, bnb_options=bnb, workers=args.workers)
    splits = {s: sum(1 for r in records if r.split == s) for s in ("train", "valid", "test")}
    _emit({"path": args.out, "records": len(records), "splits": splits})
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance, args.index)
    solver = args.solver or "bnb"
    sol = exact_solve(inst, solver, BnBOptions(node_limit=args.node_limit, time_limit=args.time_limit))
    out = {"status": sol.status.value, "provenance": sol.provenance.value, "objective": sol.objective,
           "nodes": sol.nodes, "solve_time": sol.solve_time}
    if sol.feasible:
        out["y"] = sol.setup.tolist()
        out["x"] = sol.plan.x.tolist()
        out["s"] = sol.plan.s.tolist()
    _emit(out)
    return EXIT_OK if sol.status is Status.OPTIMAL else EXIT_INFEASIBLE


def cmd_train(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    model_cfg = ModelConfig(**cfg.get("model", {}))
    train_cfg = TrainConfig(**cfg.get("train", {}))
    if args.seed is not None:
        model_cfg = replace(model_cfg, seed=args.seed)
        train_cfg = replace(train_cfg, data_seed=args.seed)
    if args.steps is not None:
        train_cfg = replace(train_cfg, steps=args.steps)
    data = load_dataset(args.dataset, split=args.split)
    valid = load_dataset(args.dataset, split="valid") if args.validate else None
    ckpt, history = train(model_cfg, train_cfg, data, valid=valid)
    save_checkpoint(ckpt, args.out)
    last = history[-1] if history else {}
    _emit({"path": args.out, "steps": ckpt.step, "examples": len(data), "final_loss": last.get("loss")})
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    inst = _load_instance(args.instance, args.index)
    y = predict_setup(inst, ckpt)
    _emit({"T": inst.T, "y": y.tolist()})
    return EXIT_OK


def cmd_eval(args) -> int:
    records = load_dataset(args.dataset, split=args.split)
    if not records:
        raise UsageError("no records selected for evaluation")
    if args.oracle:
        predictor = oracle_predictor(records, flip_last=args.oracle == "flipped")
    elif args.checkpoint:
        predictor = load_checkpoint(args.checkpoint)
    else:
        raise UsageError("eval needs --checkpoint or --oracle")
    options = RepairOptions(
        flip_last=not args.no_flip,
        fallback_exact=not args.no_fallback,
        fallback_solver=args.fallback_solver,
    )
    metrics, _, _ = evaluate_model(predictor, records, options, args.csv, args.timing_csv, args.retime)
    report = metrics_to_dict(metrics)
    if args.metrics_out:
        with open(args.metrics_out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    if args.table:
        print(format_report(metrics), file=sys.stderr)
    _emit({"metrics": report, "csv": args.csv, "timing_csv": args.timing_csv})
    return EXIT_OK


def cmd_attn(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    inst = _load_instance(args.instance, args.index)
    rows = export_attention(ckpt, inst, args.out, kind=args.kind)
    _emit({"path": args.out, "rows": rows, "kind": args.kind})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clsp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        return p

    p = common(sub.add_parser("gen", help="generate instances or a labeled dataset"))
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--c", type=int, nargs="+", default=[3])
    p.add_argument("--f", type=int, nargs="+", default=[1000])
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--label", choices=("none", "brute_force", "bnb", "dp"), default="none")
    p.add_argument("--node-limit", type=int, default=50_000_000)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("solve", help="solve one instance exactly"))
    p.add_argument("instance")
    p.add_argument("--index", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--brute-force", dest="solver", action="store_const", const="brute_force")
    g.add_argument("--bnb", dest="solver", action="store_const", const="bnb")
    g.add_argument("--dp", dest="solver", action="store_const", const="dp")
    p.add_argument("--node-limit", type=int, default=50_000_000)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("train", help="train a model on a labeled dataset"))
    p.add_argument("dataset")
    p.add_argument("--config", help='JSON file {"model": {...}, "train": {...}}')
    p.add_argument("--split", default="train")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--validate", action="store_true", help="log token accuracy on the valid split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("predict", help="predict a setup plan"))
    p.add_argument("checkpoint")
    p.add_argument("instance")
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = common(sub.add_parser("eval", help="evaluate a model (or oracle stub) on a dataset"))
    p.add_argument("dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", choices=("exact", "flipped"), help="use stored labels instead of a model")
    p.add_argument("--split", default=None)
    p.add_argument("--no-flip", action="store_true")
    p.add_argument("--no-fallback", action="store_true")
    p.add_argument("--fallback-solver", choices=("bnb", "dp"), default="bnb")
    p.add_argument("--retime", action="store_true", help="re-measure the exact solve instead of stored times")
    p.add_argument("--csv", default=None)
    p.add_argument("--timing-csv", default=None)
    p.add_argument("--metrics-out", default=None)
    p.add_argument("--table", action="store_true", help="also print a text table to stderr")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("attn", help="export attention weights as CSV"))
    p.add_argument("checkpoint")
    p.add_argument("instance")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--kind", choices=("encoder", "decoder", "cross"), default="encoder")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "seed", None) is None and args.command == "gen":
        args.seed = 0
    try:
        return args.func(args)
    except (UsageError, OSError, ValueError, KeyError) as exc:
        print(f"clsp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
