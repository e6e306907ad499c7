"""
Command-line entry point: gen, solve, train, eval, infer, bench, inspect.

Every run writes run-meta.json (resolved flags, seed, tool version) into
its output directory. Exit codes: 0 success, 1 user error, 2 internal error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from src.core.errors import AllocationError
from src.core.schema import instance_json_schema, load_instance
from src.core.settings import SETTINGS, TrainConfig
from src.domain._1fire_mission import FireOracle
from src.domain._2exact_solver import solve_iterative_exact, solve_one_step
from src.domain._6gnn_policy import PolicyNet
from src.domain._7policy_training import evaluate, multi_seed_robustness, train
from src.domain._8gnn_inference import NetPolicy, compare_with_exact, run_episode
from src.domain._9runtime_bench import run_bench
from src.ingestion._3instance_sampler import sample_instance
from src.ingestion._4feature_encoding import NormalizationStats
from src.ingestion._5dataset_builder import DatasetConfig, generate_dataset, load_manifest, load_split, slot_seed
from src.reporting.checkpoint_io import load_checkpoint, read_checkpoint_header, save_checkpoint
from src.reporting.csv_export import allocation_table, write_episode, write_json, write_table
from src.reporting.excel_export import export_run_report_to_excel

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "policy.ckpt.json"


# -----------------------------------------------------------------------------
# 1. FLAG PARSING
# -----------------------------------------------------------------------------
def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from exc


def _ms(value: Optional[int]) -> Optional[float]:
    return None if value is None or value <= 0 else value / 1000.0


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="single source of all randomness")
    common.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1, help="worker processes for datagen and bench"
    )
    common.add_argument(
        "--out-dir", type=Path, default=None, help=f"output directory (default: ${SETTINGS.OUT_DIR_ENV} or ./runs)"
    )
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def _objective_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, default=SETTINGS.ALLOCATION.LAMBDA)
    parser.add_argument("--alpha", type=float, default=SETTINGS.ALLOCATION.ALPHA)


def _train_flags(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--lr", type=float, default=defaults.lr)
    parser.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    parser.add_argument("--dropout", type=float, default=defaults.dropout)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--aux-weight", type=float, default=defaults.aux_weight)
    parser.add_argument("--move-emphasis", type=float, default=defaults.move_emphasis)
    parser.add_argument("--hidden", type=int, default=defaults.hidden)


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="altruist",
        description="Altruistic multi-team robot allocation: labels, policy training, simulation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {SETTINGS.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a labeled dataset")
    gen.add_argument("--n", type=int, required=True, help="number of samples")
    gen.add_argument("--teams-min", type=int, default=SETTINGS.GENERATION.TEAM_RANGE[0])
    gen.add_argument("--teams-max", type=int, default=SETTINGS.GENERATION.TEAM_RANGE[1])
    gen.add_argument("--robots-min", type=int, default=SETTINGS.GENERATION.ROBOTS_PER_TEAM[0])
    gen.add_argument("--robots-max", type=int, default=SETTINGS.GENERATION.ROBOTS_PER_TEAM[1])
    gen.add_argument(
        "--timeout-ms", type=int, default=int(SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S * 1000), help="0 disables"
    )
    gen.add_argument("--max-evals", type=int, default=None, help="deterministic per-solve candidate budget")
    _objective_flags(gen)

    solve = sub.add_parser("solve", parents=[common], help="exact one-step solve of an instance")
    solve.add_argument("--instance", type=Path, required=True)
    solve.add_argument(
        "--timeout-ms", type=int, default=int(SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S * 1000), help="0 disables"
    )
    solve.add_argument("--max-evals", type=int, default=None)
    solve.add_argument("--iterate", action="store_true", help="run the multi-step exact episode instead")
    solve.add_argument("--max-steps", type=int, default=SETTINGS.SIMULATION.MAX_STEPS)
    _objective_flags(solve)

    tr = sub.add_parser("train", parents=[common], help="train the graph policy on a dataset")
    tr.add_argument("--data", type=Path, required=True, help="directory written by gen")
    tr.add_argument("--seeds", type=_int_list, default=None, help="comma list; adds the multi-seed table")
    _train_flags(tr)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--split", choices=["train", "val", "test"], default="test")
    ev.add_argument("--batch-size", type=int, default=TrainConfig().batch_size)
    ev.add_argument("--gap-instances", type=int, default=0, help="fresh instances for the one-step gap")
    ev.add_argument("--teams-min", type=int, default=3)
    ev.add_argument("--teams-max", type=int, default=5)
    ev.add_argument(
        "--timeout-ms", type=int, default=int(SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S * 1000), help="0 disables"
    )
    _objective_flags(ev)

    inf = sub.add_parser("infer", parents=[common], help="run a decentralized policy episode")
    inf.add_argument("--instance", type=Path, required=True)
    inf.add_argument("--checkpoint", type=Path, required=True)
    inf.add_argument("--max-steps", type=int, default=SETTINGS.SIMULATION.MAX_STEPS)
    inf.add_argument("--fire-eps", type=float, default=SETTINGS.SIMULATION.FIRE_EPS)
    inf.add_argument("--with-exact", action="store_true", help="also run the exact episode on the instance")
    inf.add_argument(
        "--exact-timeout-ms", type=int, default=int(SETTINGS.ALLOCATION.SOLVER_TIMEOUT_S * 1000), help="0 disables"
    )

    bench = sub.add_parser("bench", parents=[common], help="runtime scaling, exact vs policy")
    bench.add_argument("--sizes", type=_int_list, required=True, help="team counts, e.g. 3,4,5")
    bench.add_argument("--robots-per-team", type=int, default=3)
    bench.add_argument("--exact-timeout-ms", type=int, default=60000, help="0 disables")
    bench.add_argument("--exact-max-teams", type=int, default=None)
    bench.add_argument("--checkpoint", type=Path, default=None, help="policy; omitted runs exact only")
    bench.add_argument("--max-steps", type=int, default=SETTINGS.SIMULATION.MAX_STEPS)
    bench.add_argument("--excel", action="store_true", help="also write run-report.xlsx")
    bench.add_argument("--history", type=Path, default=None, help="history.csv for the Excel report")

    ins = sub.add_parser("inspect", parents=[common], help="print a manifest, checkpoint header or schema")
    target = ins.add_mutually_exclusive_group(required=True)
    target.add_argument("--data", type=Path)
    target.add_argument("--checkpoint", type=Path)
    target.add_argument("--instance", type=Path)
    target.add_argument("--schema", action="store_true", help="instance JSON schema")

    return parser


# -----------------------------------------------------------------------------
# 2. RUN PLUMBING
# -----------------------------------------------------------------------------
def resolve_out_dir(flag: Optional[Path]) -> Path:
    if flag is not None:
        return flag
    env = os.environ.get(SETTINGS.OUT_DIR_ENV)
    return Path(env) if env else Path("runs")


def write_run_meta(out_dir: Path, args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None) -> Path:
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}
    return write_json(
        out_dir / "run-meta.json",
        {
            "command": args.command,
            "flags": flags,
            "seed": args.seed,
            "version": SETTINGS.VERSION,
            "feature_schema": SETTINGS.FEATURE_SCHEMA,
            **(extra or {}),
        },
    )


def _emit(document: Dict[str, Any]) -> None:
    print(json.dumps(document, indent=2, sort_keys=True, default=str))


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        batch_size=args.batch_size,
        aux_weight=args.aux_weight,
        move_emphasis=args.move_emphasis,
        hidden=args.hidden,
        seed=args.seed,
    )


# -----------------------------------------------------------------------------
# 3. SUBCOMMANDS
# -----------------------------------------------------------------------------
def cmd_gen(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    config = DatasetConfig(
        n_samples=args.n,
        team_range=(args.teams_min, args.teams_max),
        robots_per_team=(args.robots_min, args.robots_max),
        seed=args.seed,
        timeout=_ms(args.timeout_ms),
        max_evals=args.max_evals,
        lam=args.lam,
        alpha=args.alpha,
        threads=max(1, args.threads),
    )
    manifest = generate_dataset(config, out_dir)
    _emit({"out_dir": str(out_dir), "split_sizes": manifest["split_sizes"], "labels": manifest["labels"]})
    return {"dataset_config": asdict(config)}


def cmd_solve(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    instance = load_instance(args.instance)
    if args.iterate:
        log = solve_iterative_exact(
            instance, args.lam, args.alpha, _ms(args.timeout_ms), max_steps=args.max_steps
        )
        paths = write_episode(out_dir, log, stem="exact-episode")
        _emit({"terminal_reason": log.terminal_reason, "steps": len(log.steps), "final_fire": log.final_fire})
        return {"outputs": {k: str(v) for k, v in paths.items()}}

    oracle = FireOracle(instance.mission, instance.robots)
    result = solve_one_step(instance, oracle, args.lam, args.alpha, _ms(args.timeout_ms), max_evals=args.max_evals)
    document = result.to_dict()
    write_json(out_dir / "solve.json", document)
    _emit(document)
    return {}


def _load_dataset(data_dir: Path):
    manifest = load_manifest(data_dir)
    stats = NormalizationStats.from_dict(manifest["normalization"])
    splits = {name: load_split(data_dir / f"{name}.jsonl") for name in ("train", "val", "test")}
    return manifest, stats, splits


def cmd_train(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    config = _train_config(args)
    _, stats, splits = _load_dataset(args.data)

    result = train(PolicyNet.from_config(config), splits["train"], splits["val"], config, stats)
    test_n = [stats.normalize(s) for s in splits["test"]]
    test = evaluate(result.net, test_n, config, stats.stay_edge())

    write_table(out_dir / "history.csv", result.history)
    save_checkpoint(
        out_dir / CHECKPOINT_NAME,
        result.net,
        stats,
        extra={"best_epoch": result.best_epoch, "train_config": asdict(config), "data": str(args.data)},
    )
    metrics = {
        "best_epoch": result.best_epoch,
        "val": result.best_val.to_dict() if result.best_val else None,
        "test": test.to_dict(),
        "all_stay_baseline": _all_stay_accuracy(splits["test"]),
    }
    write_json(out_dir / "train-metrics.json", metrics)

    if args.seeds:
        table = multi_seed_robustness(splits["train"], splits["val"], splits["test"], args.seeds, config, stats)
        write_table(out_dir / "robustness.csv", table)
        metrics["robustness"] = table.to_dict(orient="records")

    _emit(metrics)
    return {"train_config": asdict(config)}


def _all_stay_accuracy(samples) -> float:
    robots = sum(s.num_robots for s in samples)
    moves = sum(int(s.moves().sum()) for s in samples)
    return 1.0 - moves / robots if robots else 0.0


def cmd_eval(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    net, stats, _ = load_checkpoint(args.checkpoint)
    samples = load_split(args.data / f"{args.split}.jsonl")
    config = replace(TrainConfig(), batch_size=args.batch_size, seed=args.seed)
    metrics = evaluate(net, [stats.normalize(s) for s in samples], config, stats.stay_edge())
    document: Dict[str, Any] = {"split": args.split, "metrics": metrics.to_dict()}

    if args.gap_instances > 0:
        instances = [
            sample_instance(slot_seed(args.seed, k, 0), team_range=(args.teams_min, args.teams_max))
            for k in range(args.gap_instances)
        ]
        report = compare_with_exact(instances, NetPolicy(net, stats), args.lam, args.alpha, _ms(args.timeout_ms))
        write_table(out_dir / "gap.csv", report.rows)
        document["gap"] = report.summary()

    write_json(out_dir / "eval.json", document)
    _emit(document)
    return {}


def cmd_infer(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    instance = load_instance(args.instance)
    net, stats, _ = load_checkpoint(args.checkpoint)
    log = run_episode(instance, NetPolicy(net, stats), max_steps=args.max_steps, fire_eps=args.fire_eps)
    outputs = write_episode(out_dir, log)
    outputs["allocation"] = write_table(out_dir / "episode-allocation.csv", allocation_table(log))
    summary = {
        "gnn": {"terminal_reason": log.terminal_reason, "steps": len(log.steps), "final_fire": log.final_fire}
    }

    if args.with_exact:
        exact = solve_iterative_exact(
            instance, timeout=_ms(args.exact_timeout_ms), max_steps=args.max_steps, fire_eps=args.fire_eps
        )
        outputs.update({f"exact_{k}": v for k, v in write_episode(out_dir, exact, stem="exact-episode").items()})
        summary["exact"] = {
            "terminal_reason": exact.terminal_reason,
            "steps": len(exact.steps),
            "final_fire": exact.final_fire,
        }

    _emit(summary)
    return {"outputs": {k: str(v) for k, v in outputs.items()}}


def cmd_bench(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    policy = None
    if args.checkpoint is not None:
        net, stats, _ = load_checkpoint(args.checkpoint)
        policy = NetPolicy(net, stats)

    table = run_bench(
        args.sizes,
        robots_per_team=args.robots_per_team,
        exact_timeout=_ms(args.exact_timeout_ms),
        policy=policy,
        seed=args.seed,
        max_steps=args.max_steps,
        threads=max(1, args.threads),
        exact_max_teams=args.exact_max_teams,
    )
    write_table(out_dir / "bench.csv", table)

    if args.excel:
        if args.history is not None and not args.history.exists():
            raise FileNotFoundError(f"history not found: {args.history}")
        history = pd.read_csv(args.history) if args.history is not None else None
        (out_dir / "run-report.xlsx").write_bytes(export_run_report_to_excel(table, history).getvalue())

    _emit({"rows": table.to_dict(orient="records")})
    return {}


def cmd_inspect(args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
    if args.schema:
        print(instance_json_schema())
    elif args.data is not None:
        _emit(load_manifest(args.data))
    elif args.checkpoint is not None:
        _emit(read_checkpoint_header(args.checkpoint))
    else:
        instance = load_instance(args.instance)
        _emit(
            {
                "teams": instance.num_teams,
                "robots": instance.num_robots,
                "edges": [list(e) for e in sorted(instance.graph.edges)],
                "team_sizes": instance.assignment.team_sizes().tolist(),
                "total_fire": instance.mission.total_fire() if instance.mission is not None else None,
            }
        )
    return {}


COMMANDS: Dict[str, Callable[[argparse.Namespace, Path], Dict[str, Any]]] = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


# -----------------------------------------------------------------------------
# 4. DISPATCH
# -----------------------------------------------------------------------------
def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return 0 if not exc.code else 1

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        force=True,
    )
    out_dir = resolve_out_dir(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, out_dir)
        write_run_meta(out_dir, args, extra)
    except (AllocationError, ValueError, FileNotFoundError) as exc:
        logger.error("[CLI] %s: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("[CLI] %s failed with an internal error", args.command)
        return 2
    return 0
