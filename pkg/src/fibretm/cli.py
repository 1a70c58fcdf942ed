"""Command-line front end: gen, train, eval, transform, inspect, report.

Exit codes: 0 success, 1 usage, 2 data or format problem, 3 numerical
failure.  Failures print one line to stderr of the form

    fibretm: error code=<n> kind=<ExceptionName> msg="<detail>"
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .checkpoint import ArchitectureMismatchError, CheckpointFormatError, checkpoint_load
from .datagen import TMDataset, build_dataset
from .dataio import DatasetFormatError, read_dataset, write_dataset
from .evaluation import DegenerateTransformError, MonotonicityError, evaluate
from .matrix import Family, SingularMatrixError
from .models import MODEL_NAMES
from .report import read_records_csv, records_to_csv, render_heatmaps, write_report
from .training import NonFiniteLossError, TrainingDivergedError, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code, exc) -> int:
    msg = str(exc).replace("\n", " ").replace('"', "'")
    print(f'fibretm: error code={code} kind={type(exc).__name__} msg="{msg}"', file=sys.stderr)
    return code


def _threads(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _resolved(path, dataset_overrides=None) -> dict:
    cfg = cfgmod.load(path) if path is not None else cfgmod.resolve({})
    for k, v in (dataset_overrides or {}).items():
        if v is not None:
            cfg["dataset"][k] = v
    return cfgmod.resolve(cfg)


def _stamp(cfg_hash):
    return f"# fibretm {__version__} config_hash={cfg_hash}"


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = _resolved(args.config, {"family": args.family, "n": args.n, "count": args.count, "seed": args.seed})
    h = cfgmod.config_hash(cfg)
    ds = cfg["dataset"]
    dataset = build_dataset(ds["family"], params=cfgmod.dataset_params(cfg), count=ds["count"],
                            master_seed=ds["seed"], n=ds["n"], threads=args.threads or 1)
    dataset.manifest["config"] = cfg
    write_dataset(dataset, args.out, config_hash=h)
    sizes = dataset.manifest["split_sizes"]
    print(f"wrote {args.out} family={ds['family']} n={ds['n']} count={ds['count']} "
          f"split={sizes['train']}/{sizes['val']}/{sizes['test']} config_hash={h}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolved(args.config)
    dataset = read_dataset(args.data)
    if dataset.split is None:
        raise DatasetFormatError(f"{args.data} has no stored train/val/test split")
    cfg["dataset"].update(family=dataset.family.value, n=dataset.n, count=dataset.count,
                          seed=dataset.master_seed if dataset.master_seed is not None else cfg["dataset"]["seed"])
    cfg = cfgmod.resolve(cfg)
    h = cfgmod.config_hash(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(_stamp(h) + "\n" + cfgmod.dumps_toml(cfg), encoding="utf-8")
    tcfg = cfgmod.train_config(cfg, args.data)
    log = (lambda line: print(line, flush=True)) if args.verbose else None
    record, _ = train(tcfg, dataset, out_dir=out, config_hash=h, log=log, extra={"config": cfg})
    _restamp_run_files(out, h)
    print(f"trained {cfg['model']['name']} epochs={len(record.epochs)} best_epoch={record.best_epoch} "
          f"best_val_total={record.best_val_total:.6g} checkpoint={record.checkpoint} config_hash={h}")
    return EXIT_OK


def _restamp_run_files(out: Path, h: str):
    log = out / "run.log"
    if log.exists():
        log.write_text(_stamp(h) + "\n" + log.read_text(encoding="utf-8"), encoding="utf-8")
    summary = out / "run.json"
    if summary.exists():
        d = json.loads(summary.read_text(encoding="utf-8"))
        d["tool_version"] = __version__
        summary.write_text(json.dumps(d, indent=1), encoding="utf-8")


def _checkpoint_config(ck) -> dict:
    cfg = ck.meta.get("extra", {}).get("config")
    return cfgmod.resolve(cfg) if cfg else cfgmod.resolve({})


def cmd_eval(args) -> int:
    ck = checkpoint_load(args.checkpoint)
    cfg = _checkpoint_config(ck) if args.config is None else cfgmod.load(args.config)
    h = ck.meta.get("config_hash") or cfgmod.config_hash(cfg)
    dataset = read_dataset(args.data)
    if dataset.n != ck.pipeline.n:
        raise DatasetFormatError(f"dataset n={dataset.n} does not match model n={ck.pipeline.n}")
    if dataset.split is None:
        raise DatasetFormatError(f"{args.data} has no stored split")
    e = cfg["eval"]
    ls_train = dataset.subset("train") if e["ls_ratio"] and not args.no_ls else None
    rec = evaluate(ck.pipeline, dataset.subset("test"), dataset=args.name or Path(args.data).stem,
                   family=dataset.family.value, model=ck.meta["build"]["name"], tau=e["tau"], config_hash=h,
                   ls_train=ls_train, ls_options=cfgmod.ls_options(cfg))
    Path(args.out).write_text(records_to_csv([rec]), encoding="utf-8")
    ls = "NA" if rec.ls_ratio_pct is None else ((">" if rec.ls_overflow else "") + f"{rec.ls_ratio_pct:.2f}%")
    print(f"p={rec.p_mean:.4f}±{rec.p_std:.4f} ls_ratio={ls} err={rec.err_mean:.4g}±{rec.err_std:.2g} "
          f"config_hash={h}")
    return EXIT_OK


def cmd_transform(args) -> int:
    ck = checkpoint_load(args.checkpoint)
    h = ck.meta.get("config_hash") or ""
    src = read_dataset(getattr(args, "in"))
    if src.n != ck.pipeline.n:
        raise DatasetFormatError(f"input n={src.n} does not match model n={ck.pipeline.n}")
    out = np.concatenate([ck.pipeline.transform_complex(src.data[i:i + 256]) for i in range(0, src.count, 256)])
    manifest = {k: v for k, v in src.manifest.items() if k not in ("split", "config_hash")}
    manifest.update(transformed_by=ck.meta["build"]["name"], source=str(getattr(args, "in")), source_manifest_hash=
                    src.manifest.get("config_hash"))
    write_dataset(TMDataset(src.family, out, split=src.split, manifest=manifest), args.out, config_hash=h)
    print(f"wrote {args.out} count={src.count} model={ck.meta['build']['name']} config_hash={h}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    src = read_dataset(getattr(args, "in"))
    if not 0 <= args.index < src.count:
        raise IndexError(f"index {args.index} out of range for {src.count} matrices")
    t = src.data[args.index]
    mats, titles = [t], [f"{src.family.value} TM #{args.index}"]
    h = src.manifest.get("config_hash", "")
    if args.checkpoint:
        ck = checkpoint_load(args.checkpoint)
        mats.append(ck.pipeline.transform_complex(t[None])[0])
        titles = ["original", f"transformed ({ck.meta['build']['name']})"]
        h = ck.meta.get("config_hash") or h
    path = render_heatmaps(mats, args.svg, titles=titles, stamp=f"fibretm {__version__} config_hash={h}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    for p in args.records:
        records.extend(read_records_csv(Path(p)))
    paths = write_report(records, args.out)
    print(" ".join(f"{k}={v}" for k, v in paths.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fibretm", description="Sparsifying basis transformations for fibre transmission matrices.")
    p.add_argument("--version", action="version", version=f"fibretm {__version__}")
    p.add_argument("--threads", type=int, default=0, help="cap BLAS and generator worker threads")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate a TM dataset")
    g.add_argument("--family", choices=[f.value for f in Family])
    g.add_argument("--n", type=int)
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="TOML config; flags override its [dataset] section")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--verbose", action="store_true", help="print one line per epoch")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="CSV path")
    e.add_argument("--config", help="override the [eval] settings stored in the checkpoint")
    e.add_argument("--name", help="dataset label in the record (default: file stem)")
    e.add_argument("--no-ls", action="store_true", help="skip the latent-space ratio search")
    e.set_defaults(func=cmd_eval)

    tr = sub.add_parser("transform", help="apply a trained model to a TM file")
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--in", required=True)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_transform)

    i = sub.add_parser("inspect", help="render a stored TM as a complex heatmap")
    i.add_argument("--in", required=True)
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--svg", required=True)
    i.add_argument("--checkpoint")
    i.set_defaults(func=cmd_inspect)

    r = sub.add_parser("report", help="merge metric CSVs into a table and figure")
    r.add_argument("--records", nargs="+", required=True)
    r.add_argument("--out", required=True, help="output prefix for .csv, .txt and .svg")
    r.set_defaults(func=cmd_report)
    return p


DATA_ERRORS = (DatasetFormatError, CheckpointFormatError, ArchitectureMismatchError, cfgmod.ConfigError,
               FileNotFoundError, IsADirectoryError, IndexError, json.JSONDecodeError, KeyError, ValueError)
NUMERIC_ERRORS = (SingularMatrixError, TrainingDivergedError, NonFiniteLossError, FloatingPointError,
                  DegenerateTransformError, MonotonicityError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 0:
            raise UsageError("--threads must be >= 0")
        if getattr(args, "family", None) is None and args.command == "gen" and args.config is None:
            raise UsageError("gen needs --family or --config")
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    try:
        with _threads(args.threads):
            return args.func(args)
    except NUMERIC_ERRORS as exc:
        return _fail(EXIT_NUMERIC, exc)
    except DATA_ERRORS as exc:
        return _fail(EXIT_DATA, exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
