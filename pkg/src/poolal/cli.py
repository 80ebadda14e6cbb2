"""Command-line entry point.

Subcommands mirror the service endpoints (`run`, `propagate`, `acquire`,
`agree`, `gen-data`) plus `serve`. Flags are generated from the typed job
models, so `--help` shows every tunable with its default; values merge as
flags > config file > defaults. All outputs are written atomically
(temp file + rename). Exit codes: 0 success, 1 configuration error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import types
import typing

import numpy as np
from pydantic import BaseModel

from .analysis import AGREEMENT_HEADER, SCATTER_HEADER
from .client import ClientError, EngineClient
from .config import (AcquireJob, AgreeJob, GenDataJob, PropagateJob, RunJob,
                     build_job, parse_config_file)
from .dataset import Dataset, save_dataset
from .errors import ConfigError, DataFormatError, EngineError

FIELD_HELP = {
    "dataset": "input dataset file",
    "test_dataset": "held-out dataset file; omit to split the pool",
    "holdout_frac": "test fraction when no test dataset is given",
    "format": "dataset file format: auto, csv, or raw-f32",
    "strategy": "acquisition strategy: random, uncertainty, coreset, ceal, or jlp",
    "strategy_a": "first strategy to compare",
    "strategy_b": "second strategy to compare",
    "budget": "labels acquired per cycle",
    "cycles": "acquisition cycles per repeat",
    "repeats": "independent repeats with different initial label sets",
    "seed": "master seed for every stochastic element",
    "pre": "unsupervised pre-training of the initial parameters",
    "semi": "per-epoch propagation and weighted pseudo-label batches",
    "per_class": "initial labels drawn per class",
    "unbalanced": "draw the initial labels without class balancing",
    "model": "classifier: linear or linear-embedding",
    "embed_dim": "embedding width for linear-embedding (default: input dim)",
    "k_graph": "neighbors per node in the reciprocal-kNN graph",
    "alpha": "propagation diffusion strength in [0, 1)",
    "k_pretrain": "clusters for pre-training (default: 10x classes)",
    "pretrain_rounds": "cluster/train alternations during pre-training",
    "ceal_epsilon": "entropy threshold for confident pseudo-labels",
    "coreset_metric": "farthest-first metric: euclidean or cosine",
    "tol": "relative residual tolerance of the propagation solver",
    "max_iter": "solver iteration cap (default: 10*sqrt(n)+100)",
    "force_rebuild": "rebuild the graph every epoch even for static embeddings",
    "epochs": "training epochs",
    "lr0": "initial learning rate",
    "anneal_horizon": "epoch at which the cosine schedule reaches zero",
    "batch_supervised": "mini-batch size for supervised training",
    "batch_labeled": "labeled examples per semi-supervised mini-batch",
    "batch_total": "total examples per semi-supervised mini-batch",
    "momentum": "SGD momentum",
    "warmup_epochs": "supervised epochs before the semi loop",
    "loss_weighting": "also scale pseudo-label losses by certainty weight",
    "fast": "cap epochs at 20 for quick smoke runs (not the tuned profile)",
    "labeled": "comma-separated labeled indices (default: draw per class)",
    "checkpoint": "model checkpoint to score with instead of training",
    "sample_frac": "fraction of the pool sampled into the rank scatter",
    "shape": "dataset shape: two-moons, blobs, or chain",
    "n": "number of examples",
    "noise": "noise level (shape-specific default)",
    "c": "number of classes (blobs)",
    "feature_dim": "two-moons feature-map width; 0 keeps raw planar coordinates",
    "bandwidth": "two-moons feature-map bandwidth",
    "dim": "blobs ambient dimension",
}


def _comma_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _base_type(annotation):
    """Unwrap Optional[...] to the concrete scalar/list type."""
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return _base_type(args[0])
    return annotation


def _add_job_flags(parser: argparse.ArgumentParser, model_cls: type[BaseModel]) -> None:
    for name, field in model_cls.model_fields.items():
        flag = "--" + name.replace("_", "-")
        default = field.get_default()
        helptext = FIELD_HELP.get(name, name)
        if field.is_required():
            helptext += " (required)"
        elif default is not None:
            helptext += f" (default: {default})"
        base = _base_type(field.annotation)
        if base is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction,
                                default=None, help=helptext)
        elif base is int:
            parser.add_argument(flag, type=int, default=None, help=helptext)
        elif base is float:
            parser.add_argument(flag, type=float, default=None, help=helptext)
        elif typing.get_origin(base) is list:
            parser.add_argument(flag, type=_comma_ints, default=None, help=helptext)
        else:
            parser.add_argument(flag, type=str, default=None, help=helptext)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key = value config file")
    parser.add_argument("--out-dir", default=".", help="output directory (default: .)")
    parser.add_argument("--server", default=None,
                        help="base URL of a running server (default: in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolal",
                                     description="pool-based active-learning simulation engine")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_run = sub.add_parser("run", help="full acquisition simulation",
                           description="Writes records.jsonl (one cycle record per "
                                       "line) and curves.csv (per-cycle mean/std).")
    _add_job_flags(p_run, RunJob)
    _add_common(p_run)

    p_prop = sub.add_parser("propagate", help="label propagation over one dataset",
                            description="Writes propagation.csv (index, pseudo_label, weight).")
    _add_job_flags(p_prop, PropagateJob)
    p_prop.add_argument("--dump-graph", default=None, metavar="PATH",
                        help="also write the affinity graph as 'i j weight' lines")
    _add_common(p_prop)

    p_acq = sub.add_parser("acquire", help="select one acquisition batch",
                           description="Writes acquired.csv (order, index, score).")
    _add_job_flags(p_acq, AcquireJob)
    _add_common(p_acq)

    p_agree = sub.add_parser("agree", help="agreement study between two strategies",
                             description="Writes agreement.csv and scatter.csv.")
    _add_job_flags(p_agree, AgreeJob)
    _add_common(p_agree)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset",
                           description="Writes a deterministic dataset file.")
    _add_job_flags(p_gen, GenDataJob)
    p_gen.add_argument("--out", default=None, help="output path (default: <shape>.csv)")
    p_gen.add_argument("--file-format", default="csv", choices=["csv", "raw-f32"],
                       help="output file format (default: csv)")
    _add_common(p_gen)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1", help="bind address (default: 127.0.0.1)")
    p_serve.add_argument("--port", type=int, default=8000, help="port (default: 8000)")

    return parser


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _gather(args: argparse.Namespace, model_cls: type[BaseModel]) -> BaseModel:
    file_values = parse_config_file(args.config) if args.config else {}
    flag_values = {name: getattr(args, name) for name in model_cls.model_fields
                   if hasattr(args, name)}
    return build_job(model_cls, file_values, flag_values)


def _require_input(path: str) -> None:
    if not os.path.exists(path):
        raise ConfigError(f"dataset file not found: {path}")


def _cmd_run(args) -> int:
    job = _gather(args, RunJob)
    _require_input(job.dataset)
    if job.test_dataset is not None:
        _require_input(job.test_dataset)
    out = EngineClient(args.server).run(job.model_dump())
    lines = [json.dumps(rec, sort_keys=True) for rec in out["records"]]
    _atomic_write(os.path.join(args.out_dir, "records.jsonl"), "".join(l + "\n" for l in lines))
    header = list(out["curves"][0].keys()) if out["curves"] else []
    rows = [[row[k] for k in header] for row in out["curves"]]
    _atomic_write(os.path.join(args.out_dir, "curves.csv"), _csv_text(header, rows))
    final = [r for r in out["records"] if r["cycle"] == max(r2["cycle"] for r2 in out["records"])]
    mean_final = sum(r["accuracy"] for r in final) / len(final)
    print(f"run complete: {len(out['records'])} records, "
          f"final-cycle mean accuracy {mean_final:.4f}")
    print(f"wrote {os.path.join(args.out_dir, 'records.jsonl')} and curves.csv")
    return 0


def _cmd_propagate(args) -> int:
    job = _gather(args, PropagateJob)
    _require_input(job.dataset)
    out = EngineClient(args.server).propagate(job.model_dump())
    rows = [[r["index"], r["pseudo_label"], repr(r["weight"])] for r in out["rows"]]
    _atomic_write(os.path.join(args.out_dir, "propagation.csv"),
                  _csv_text(["index", "pseudo_label", "weight"], rows))
    if args.dump_graph:
        text = "".join(f"{i} {j} {w!r}\n" for i, j, w in out["edges"])
        _atomic_write(args.dump_graph, text)
    print(f"propagated {len(rows)} unlabeled examples; wrote "
          f"{os.path.join(args.out_dir, 'propagation.csv')}")
    return 0


def _cmd_acquire(args) -> int:
    job = _gather(args, AcquireJob)
    _require_input(job.dataset)
    out = EngineClient(args.server).acquire(job.model_dump())
    rows = [[r["order"], r["index"], None if r["score"] is None else repr(r["score"])]
            for r in out["rows"]]
    _atomic_write(os.path.join(args.out_dir, "acquired.csv"),
                  _csv_text(["order", "index", "score"], rows))
    print(f"selected {len(rows)} examples; wrote {os.path.join(args.out_dir, 'acquired.csv')}")
    return 0


def _cmd_agree(args) -> int:
    job = _gather(args, AgreeJob)
    _require_input(job.dataset)
    out = EngineClient(args.server).agree(job.model_dump())
    report = out["report"]
    row = [report[k] if not isinstance(report[k], float) else repr(report[k])
           for k in AGREEMENT_HEADER]
    _atomic_write(os.path.join(args.out_dir, "agreement.csv"),
                  _csv_text(AGREEMENT_HEADER, [row]))
    _atomic_write(os.path.join(args.out_dir, "scatter.csv"),
                  _csv_text(SCATTER_HEADER, [list(r) for r in out["scatter"]]))
    print(f"{report['strategy_a']} vs {report['strategy_b']}: "
          f"{report['pct_agree']:.2f}% agree on {report['pool_size']} examples; "
          f"wrote agreement.csv and scatter.csv")
    return 0


def _cmd_gen_data(args) -> int:
    job = _gather(args, GenDataJob)
    out = EngineClient(args.server).gen_data(job.model_dump())
    ds = Dataset(np.asarray(out["features"], dtype=np.float64), out["num_classes"],
                 np.asarray(out["labels"], dtype=np.int64))
    ext = "csv" if args.file_format == "csv" else "bin"
    path = args.out or os.path.join(args.out_dir, f"{job.shape}.{ext}")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        save_dataset(ds, tmp, args.file_format)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    print(f"wrote {path}: n={ds.n} d={ds.dim} c={ds.num_classes}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "propagate": _cmd_propagate,
    "acquire": _cmd_acquire,
    "agree": _cmd_agree,
    "gen-data": _cmd_gen_data,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; fold errors into 1
        return 0 if (exc.code or 0) == 0 else 1
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if exc.status_code < 500 else 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
