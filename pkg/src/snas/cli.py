"""Command-line entry point: train-supernet, search, retrain, report-trends.

Exit codes: 0 success, 2 config validation, 3 infeasibility, 4 numeric or
training failure.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from snas import config as runconfig
from snas.archspace import ArchConfig, decode
from snas.costmodel import evaluate_cost, satisfies
from snas.datasets import generate
from snas.errors import ConfigurationError, InfeasibleError, SNASError
from snas.evaluator import CachedEvaluator, SupernetEvaluator, SurrogateEvaluator
from snas.evolution import RunLog, run_search
from snas.supernet import SupernetWeights, accuracy, init_weights, train_standalone, train_supernet
from snas.trends import trend_report

logger = logging.getLogger("snas")

WEIGHTS_FILE = "supernet.snas"
TRAIN_LOG = "train_history.jsonl"
SEARCH_LOG = "search_log.jsonl"


@contextlib.contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".snas.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def _write_table(path: Path, header, rows) -> None:
    """Aligned plain-text table plus a JSON sidecar with the same rows."""
    cols = [header] + [[str(x) for x in row] for row in rows]
    widths = [max(len(r[i]) for r in cols) for i in range(len(header))]
    text = "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cols) + "\n"
    path.write_text(text, encoding="utf-8")
    sidecar = [dict(zip(header, row)) for row in rows]
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def cmd_train_supernet(cfg, out: Path) -> Path:
    train, _ = generate(**vars(cfg.dataset))
    weights = init_weights(cfg.skeleton, cfg.train.seed)
    weights, history = train_supernet(weights, cfg.skeleton, train, cfg.train)
    path = out / WEIGHTS_FILE
    weights.save(path)
    _write_jsonl(out / TRAIN_LOG, history.to_records())
    (out / "effective_config.json").write_text(cfg.dumps(), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def build_evaluator(cfg, weights_path):
    if cfg.evaluator.kind == "surrogate":
        return CachedEvaluator(SurrogateEvaluator(cfg.skeleton.searchable_count,
                                                  cfg.evaluator.surrogate_seed))
    if weights_path is None:
        raise ConfigurationError("supernet evaluator needs --weights")
    weights = SupernetWeights.load(weights_path, cfg.skeleton)
    _, val = generate(**vars(cfg.dataset))
    return CachedEvaluator(SupernetEvaluator(weights, cfg.skeleton, val))


def cmd_search(cfg, out: Path, weights_path=None):
    evaluator = build_evaluator(cfg, weights_path)
    baseline = decode(cfg.baseline, cfg.skeleton) if cfg.baseline else None
    embedded = cfg.to_dict()
    del embedded["evaluator"]["workers"]  # execution detail; logs must not depend on it
    result = run_search(cfg.skeleton, cfg.constraints, cfg.evolution, evaluator, baseline,
                        workers=cfg.evaluator.workers, run_id=f"search-{cfg.evolution.seed}",
                        extra_header={"config": embedded})
    result.log.write(out / SEARCH_LOG)
    rows = []
    for rank, c in enumerate(result.top, 1):
        cost = evaluate_cost(cfg.skeleton, c.config)
        if not satisfies(cost, cfg.constraints):  # re-costed feasibility check
            raise InfeasibleError(f"top candidate {c.key} violates the constraints")
        rows.append([rank, c.key, cost.params, cost.flops, f"{c.fitness:.6f}"])
    _write_table(out / "search_summary.txt", ["rank", "arch", "params", "flops", "fitness"], rows)
    return result


def cmd_retrain(cfg, out: Path, arch_strings):
    unique = []
    for s in arch_strings:
        if s in unique:
            logger.warning("duplicate architecture %s ignored", s)
        else:
            unique.append(s)
    configs = [decode(s, cfg.skeleton) for s in unique]
    train, val = generate(**vars(cfg.dataset))
    results = []
    for s, c in zip(unique, configs):
        standalone = cfg.skeleton.materialize(c)
        weights, _ = train_standalone(standalone, train, cfg.train)
        acc = accuracy(weights, standalone, ArchConfig(()), val)
        cost = evaluate_cost(cfg.skeleton, c)
        results.append((acc, s, cost, weights))
        logger.info("retrained %s: val accuracy %.4f", s, acc)
    results.sort(key=lambda r: (-r[0], r[2].flops, r[2].params, r[1]))
    rows = [[i, s, cost.params, cost.flops, f"{acc:.6f}"]
            for i, (acc, s, cost, _) in enumerate(results, 1)]
    _write_table(out / "retrain_ranking.txt", ["rank", "arch", "params", "flops", "val_acc"], rows)
    if results:
        results[0][3].save(out / "best_model.snas")
    return rows


def cmd_report_trends(log_path, out: Path, cfg=None):
    log = RunLog.read(log_path)
    try:
        top = log.final_top()
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{log_path}: malformed result record ({exc})") from None
    skeleton = cfg.skeleton if cfg is not None else None
    if skeleton is None:
        embedded = next((r.get("config") for r in log.records if r.get("type") == "header"), None)
        if embedded:
            skeleton = runconfig.from_dict(embedded).skeleton
    report = trend_report([r["config"] for r in top], skeleton)
    (out / "trends.txt").write_text(report.render(), encoding="utf-8")
    (out / "trends.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snas", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("train-supernet", help="sandwich-rule supernet training")
    s = sub.add_parser("search", help="constrained evolutionary search")
    r = sub.add_parser("retrain", help="train chosen architectures from scratch")
    rep = sub.add_parser("report-trends", help="channel-allocation trends of a search log")
    for q in (t, s, r):
        q.add_argument("--config", required=True)
        q.add_argument("--out")
    s.add_argument("--weights")
    r.add_argument("--archs", required=True, help="comma-separated architecture strings")
    rep.add_argument("--log", required=True)
    rep.add_argument("--config")
    rep.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = runconfig.load(args.config) if args.config else None
        if args.out:
            out = Path(args.out)
        elif cfg is not None:
            out = Path(cfg.output_dir)
        else:
            out = Path(args.log).parent
        with output_lock(out):
            if args.command == "train-supernet":
                print(cmd_train_supernet(cfg, out))
            elif args.command == "search":
                cmd_search(cfg, out, args.weights)
                print((out / "search_summary.txt").read_text(), end="")
            elif args.command == "retrain":
                cmd_retrain(cfg, out, [a.strip() for a in args.archs.split(",") if a.strip()])
                print((out / "retrain_ranking.txt").read_text(), end="")
            else:
                print(cmd_report_trends(args.log, out, cfg).render(), end="")
    except SNASError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
