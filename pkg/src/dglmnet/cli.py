"""Command-line surface: convert, train, path, eval, and worker subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure,
4 communication failure. Every run echoes its fully resolved configuration to
stderr, and failures emit one machine-parsable `error: <type>: <message>`
line there as well.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .data import nnz, recompute_margins
from .driver import SolverConfig, fit, fit_rank
from .errors import (
    DataError,
    InvalidInputError,
    NumericalError,
    ReductionError,
)
from .glm import class_probability, negated_log_likelihood, objective
from .ingest import (
    convert_to_by_feature,
    feature_nnz,
    load_dataset,
    load_labels,
    load_manifest,
    load_shard,
    parse_by_example_file,
    partition_features,
    record_labels,
    record_margins,
    reshard,
    write_by_example,
)
from .metrics import auprc, log_loss
from .modelfile import load_model, save_model
from .regpath import (
    PATH_CSV_HEADER,
    PathConfig,
    iter_regularization_path,
    path_point_row,
)
from .synth import sparse_logistic_records, split_records
from .tcp import TcpReductionGroup

logger = logging.getLogger("dglmnet")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_COMM = 4

REPORT_CSV_HEADER = "iter,f,alpha,nnz,seconds"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _echo_config(command: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    resolved["command"] = command
    logger.info("config %s", json.dumps(resolved, sort_keys=True, default=str))


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        lam=args.lam,
        max_iter=args.max_iter,
        rel_tol=args.tol,
        full_step_tol=args.full_step_tol,
    )


def _add_solver_flags(parser, with_lambda=True):
    if with_lambda:
        parser.add_argument("--lambda", dest="lam", type=float, required=True,
                            help="L1 penalty strength")
    parser.add_argument("--max-iter", type=int, default=100,
                        help="outer iteration cap (default 100)")
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="relative objective decrease tolerance (default 1e-6)")
    parser.add_argument("--full-step-tol", type=float, default=1e-6,
                        help="relative increase tolerated when restoring the "
                             "full step at termination (default 1e-6)")
    parser.add_argument("--timeout", type=float, default=60.0,
                        help="collective timeout in seconds (default 60)")


def _write_report_csv(path, report):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(REPORT_CSV_HEADER + "\n")
        for rec in report.iterations:
            handle.write(
                f"{rec.iteration},{float(rec.objective)!r},{float(rec.alpha)!r},"
                f"{rec.nnz},{float(rec.seconds)!r}\n"
            )


def _parse_synth(spec: str):
    parts = spec.split(",")
    if len(parts) != 4:
        raise UsageError("--synth expects n,p,informative,seed")
    try:
        return tuple(int(part) for part in parts)
    except ValueError:
        raise UsageError("--synth expects four integers n,p,informative,seed") from None


def cmd_convert(args) -> int:
    if (args.input is None) == (args.synth is None):
        raise UsageError("convert needs exactly one of --input or --synth")
    os.makedirs(args.out, exist_ok=True)
    if args.synth is not None:
        n, p, informative, seed = _parse_synth(args.synth)
        records, truth = sparse_logistic_records(n, p, informative, seed)
        with open(os.path.join(args.out, "truth.json"), "w", encoding="utf-8") as handle:
            json.dump(
                {
                    "informative": [int(j) for j in truth.informative],
                    "weights": {int(j): float(truth.weights[j]) for j in truth.informative},
                },
                handle, indent=2, sort_keys=True,
            )
        if args.split is not None:
            records, held_out = split_records(records, args.split, seed + 1)
            test_path = os.path.join(args.out, "test.txt")
            write_by_example(held_out, test_path)
            logger.info("wrote %d held-out examples to %s", len(held_out), test_path)
        total_p = p
    else:
        records, _, total_p, _ = parse_by_example_file(args.input)
    partition = partition_features(feature_nnz(records, total_p), args.shards)
    manifest = convert_to_by_feature(records, partition, args.out)
    logger.info(
        "converted n=%d p=%d nnz=%d into %d shard(s) under %s",
        manifest["n"], manifest["p"], manifest["nnz"], manifest["shards"], args.out,
    )
    print(f"n={manifest['n']} p={manifest['p']} nnz={manifest['nnz']} shards={manifest['shards']}")
    return EXIT_OK


def cmd_train(args) -> int:
    shards, labels = load_dataset(args.data)
    if args.workers is not None and args.workers != len(shards):
        shards = reshard(shards, args.workers)
    config = _solver_config(args)
    beta, report = fit(shards, labels, config, timeout=args.timeout)
    save_model(args.out, beta, config.lam)
    if args.report:
        _write_report_csv(args.report, report)
    logger.info("termination=%s restored_full_step=%s",
                report.termination, report.full_step_restored)
    print(
        f"objective={report.final_objective!r} nnz={nnz(beta)} "
        f"iterations={len(report.iterations)}"
    )
    return EXIT_OK


def cmd_worker(args) -> int:
    manifest = load_manifest(args.data)
    world = args.world
    if world != manifest["shards"]:
        raise DataError(
            f"dataset was converted into {manifest['shards']} shards; "
            f"--world {world} does not match"
        )
    if not 0 <= args.rank < world:
        raise UsageError(f"--rank must lie in [0, {world})")
    labels = load_labels(os.path.join(args.data, manifest["labels_file"]))
    shard = load_shard(os.path.join(args.data, manifest["shard_files"][args.rank]))
    config = _solver_config(args)
    group = TcpReductionGroup(
        args.coordinator, args.rank, world,
        payload_len=shard.n + shard.p,
        timeout=args.timeout, listen_host=args.listen_host,
    )
    try:
        beta, report = fit_rank(shard, labels, config, group)
    finally:
        group.close()
    if args.out:
        save_model(args.out, beta, config.lam)
    if args.report:
        _write_report_csv(args.report, report)
    print(
        f"rank={args.rank} objective={report.final_objective!r} nnz={nnz(beta)} "
        f"iterations={len(report.iterations)}"
    )
    return EXIT_OK


def cmd_path(args) -> int:
    shards, labels = load_dataset(args.data)
    if args.workers is not None and args.workers != len(shards):
        shards = reshard(shards, args.workers)
    eval_records = None
    if args.eval:
        eval_records, _, _, _ = parse_by_example_file(args.eval)
    lambdas = None
    if args.lambdas:
        try:
            lambdas = [float(part) for part in args.lambdas.split(",")]
        except ValueError:
            raise UsageError("--lambdas expects a comma-separated list of numbers") from None
    config = SolverConfig(
        lam=1.0, max_iter=args.max_iter, rel_tol=args.tol,
        full_step_tol=args.full_step_tol,
    )
    path_config = PathConfig(steps=args.steps, lambdas=lambdas)
    if args.models_dir:
        os.makedirs(args.models_dir, exist_ok=True)
    count = 0
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(PATH_CSV_HEADER + "\n")
        handle.flush()
        for index, point in enumerate(iter_regularization_path(
            shards, labels, config, path_config,
            eval_records=eval_records, timeout=args.timeout,
        )):
            handle.write(path_point_row(point) + "\n")
            handle.flush()
            if args.models_dir:
                save_model(
                    os.path.join(args.models_dir, f"model_{index:03d}.tsv"),
                    point.beta, point.lam,
                )
            logger.info("path point %d: lambda=%.6g nnz=%d objective=%.6g",
                        index, point.lam, point.nnz, point.train_objective)
            count += 1
    print(f"points={count} out={args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    beta, lam = load_model(args.model)
    if os.path.isdir(args.data):
        shards, labels = load_dataset(args.data)
        if shards[0].p != beta.shape[0]:
            raise DataError(
                f"model has p={beta.shape[0]} but dataset has p={shards[0].p}"
            )
        margins = recompute_margins(shards, beta)
    else:
        records, _, _, _ = parse_by_example_file(args.data)
        labels = record_labels(records)
        margins = record_margins(records, beta)
    loss = negated_log_likelihood(labels, margins)
    f_value = objective(loss, beta, lam)
    scores = class_probability(margins)
    result = {
        "objective": f_value,
        "log_likelihood_loss": loss,
        "auprc": auprc(scores, labels),
        "log_loss": log_loss(scores, labels),
        "nnz": nnz(beta),
        "lambda": lam,
        "examples": int(labels.shape[0]),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(result, handle, indent=2, sort_keys=True)
            handle.write("\n")
    print(
        f"objective={f_value!r} auprc={result['auprc']!r} "
        f"log_loss={result['log_loss']!r} nnz={result['nnz']}"
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dglmnet", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    convert = commands.add_parser("convert", help="transpose a dataset into by-feature shards")
    convert.add_argument("--input", help="by-example text file")
    convert.add_argument("--synth", help="generate a synthetic dataset: n,p,informative,seed")
    convert.add_argument("--split", type=float, default=None,
                         help="with --synth, keep this fraction for training and "
                              "write the rest to test.txt")
    convert.add_argument("--out", required=True, help="output directory")
    convert.add_argument("--shards", type=int, default=1, help="number of shards (default 1)")
    convert.set_defaults(func=cmd_convert)

    train = commands.add_parser("train", help="fit one model with in-process workers")
    train.add_argument("--data", required=True, help="converted dataset directory")
    train.add_argument("--workers", type=int, default=None,
                       help="worker count (default: the dataset's shard count)")
    train.add_argument("--out", required=True, help="model TSV output path")
    train.add_argument("--report", help="fit-report CSV output path")
    _add_solver_flags(train)
    train.set_defaults(func=cmd_train)

    worker = commands.add_parser("worker", help="run one rank of a TCP training group")
    worker.add_argument("--data", required=True, help="converted dataset directory")
    worker.add_argument("--coordinator", required=True, help="host:port of rank 0's coordinator")
    worker.add_argument("--rank", type=int, required=True)
    worker.add_argument("--world", type=int, required=True)
    worker.add_argument("--listen-host", default="127.0.0.1",
                        help="address this rank advertises to its tree children")
    worker.add_argument("--out", help="model TSV output path")
    worker.add_argument("--report", help="fit-report CSV output path")
    _add_solver_flags(worker)
    worker.set_defaults(func=cmd_worker)

    path = commands.add_parser("path", help="compute a warmstarted regularization path")
    path.add_argument("--data", required=True, help="converted dataset directory")
    path.add_argument("--out", required=True, help="path CSV output")
    path.add_argument("--steps", type=int, default=20, help="schedule length (default 20)")
    path.add_argument("--lambdas", help="comma-separated penalties overriding the schedule")
    path.add_argument("--workers", type=int, default=None)
    path.add_argument("--eval", help="by-example test file scored at every point")
    path.add_argument("--models-dir", help="directory receiving one model TSV per point")
    _add_solver_flags(path, with_lambda=False)
    path.set_defaults(func=cmd_path)

    evaluate = commands.add_parser("eval", help="score a model file on a dataset")
    evaluate.add_argument("--model", required=True, help="model TSV path")
    evaluate.add_argument("--data", required=True,
                          help="by-example text file or converted directory")
    evaluate.add_argument("--out", help="optional JSON output path")
    evaluate.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _echo_config(args.command, args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidInputError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ReductionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMM


if __name__ == "__main__":
    sys.exit(main())
