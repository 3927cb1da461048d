"""Command-line entry point: ``hazfractal {synth,analyze,train,eval,pipeline}``.

Every file written embeds the effective configuration: JSONL datasets in a
leading ``{"_meta": ...}`` line, JSON files under a ``"config"`` key, CSV
files in leading ``# config: {...}`` comment lines.  Thread count and output
paths are execution details and are not echoed, so outputs are byte-identical
across ``--threads`` values.

Exit codes: 0 success, 1 invalid data or all records failed, 2 usage error,
3 configuration mismatch, 4 I/O error, 5 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HazFractalError, InvalidInput, IoError, TrainingDiverged
from .hgnn import HgnnConfig, TrainSchedule, predict_batch, train
from .hgnn import checkpoint
from .ingest import ASPECTS, Axis, HaERecord, parse_records, split_dataset, write_records
from .metrics import EvalReport, average_reports, confusion, macro_report, table_csv
from .mfdfa import DfaConfig, Variant, compute_hfs, fmt_float
from .synth import (
    ASPECT_LEVELS,
    POSSIBILITY_COUNTS,
    RISK_COUNTS,
    SEVERITY_COUNTS,
    GeneratorSpec,
    gen_labeled_dataset,
    gen_records,
    scale_counts,
)

THREADS_ENV = "HAZFRACTAL_THREADS"
TABLE_COUNTS = {"severity": SEVERITY_COUNTS, "possibility": POSSIBILITY_COUNTS, "risk": RISK_COUNTS}
EXIT_DATA, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 1, 2, 3, 4, 5


# ------------------------------------------------------------------ helpers


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _q_grid(q_min: float, q_max: float, step: float) -> tuple[float, ...]:
    if step <= 0 or q_max < q_min:
        raise InvalidInput("q grid needs q_min <= q_max and a positive step")
    n = int(round((q_max - q_min) / step))
    return tuple(round(q_min + k * step, 12) for k in range(n + 1))


def _dfa_config(args) -> DfaConfig:
    scales = None
    if args.scales:
        scales = tuple(int(s) for s in args.scales.split(","))
    return DfaConfig(q_grid=_q_grid(args.q_min, args.q_max, args.q_step), s_grid=scales,
                     m=args.order, alpha=args.alpha, variant=Variant(args.variant))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_records(path: str) -> tuple[list[HaERecord], str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_records(text.splitlines()), hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def _config_comment(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True) + "\n"


def _hfs_one(record: HaERecord, dfa: DfaConfig, axis: str):
    try:
        return compute_hfs(record.series(axis), dfa), None
    except HazFractalError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _analyze_records(records, dfa: DfaConfig, axis: str, threads: int):
    """HFS for every record in input order; failures carry an error string."""
    if threads <= 1:
        return [_hfs_one(r, dfa, axis) for r in records]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: _hfs_one(r, dfa, axis), records))


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# ------------------------------------------------------------------ synth


def _parse_class(text: str, default_n: int) -> tuple[GeneratorSpec, int]:
    """``KIND[:key=value,...]@LABEL``, e.g. ``fgn:hurst=0.3,n=1024@1``."""
    try:
        body, label = text.rsplit("@", 1)
        kind, _, opts = body.partition(":")
        kwargs = {"n": default_n}
        for item in filter(None, opts.split(",")):
            key, value = item.split("=")
            kwargs[key] = int(value) if key in ("n", "levels") else float(value)
        return GeneratorSpec(kind=kind, **kwargs), int(label)
    except (ValueError, TypeError) as exc:
        raise InvalidInput(f"bad class spec {text!r}: {exc}") from None


def cmd_synth(args) -> int:
    aspect = args.aspect
    if args.preset == "table3":
        levels = ASPECT_LEVELS[aspect]
        hursts = np.linspace(0.2, 0.8, levels)
        classes = [(GeneratorSpec("fgn", n=args.n, hurst=round(float(h), 6)), k + 1)
                   for k, h in enumerate(hursts)]
        counts = scale_counts(TABLE_COUNTS[aspect], args.total or 500)
    elif args.cls:
        classes = [_parse_class(c, args.n) for c in args.cls]
        counts = [int(c) for c in args.counts.split(",")] if args.counts else args.count
        if args.total and not isinstance(counts, int):
            counts = scale_counts(counts, args.total)
    else:
        spec = GeneratorSpec(args.kind, n=args.n, hurst=args.hurst, p=args.p, levels=args.levels)
        classes, counts = [(spec, args.label)], args.count

    if len(classes) == 1:
        records = gen_records(*classes[0], counts, args.seed, aspect)
    else:
        records = gen_labeled_dataset(classes, counts, args.seed, aspect)

    meta = {
        "command": "synth",
        "version": __version__,
        "seed": args.seed,
        "aspect": aspect,
        "classes": [{"generator": s.to_dict(), "label": lab} for s, lab in classes],
        "counts": counts if isinstance(counts, list) else [counts] * len(classes),
    }
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            write_records(records, fh, meta)
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc.strerror or exc}") from None
    print(f"wrote {len(records)} records to {out} (seed {args.seed})")
    return 0


# ------------------------------------------------------------------ analyze


def _hfs_csv(records, results, config: dict) -> str:
    out = io.StringIO()
    out.write(_config_comment(config))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "q", "h", "r2", "error"])
    for rec, (hfs, err) in zip(records, results):
        if hfs is None:
            writer.writerow([rec.id, "", "", "", err])
            continue
        for q, h, r2 in zip(hfs.q_grid, hfs.h, hfs.fit_r2):
            writer.writerow([rec.id, fmt_float(q), fmt_float(h), fmt_float(r2), ""])
    return out.getvalue()


def _summary(results, q_grid) -> str:
    ok = [h for h, _ in results if h is not None]
    line = f"records={len(results)} ok={len(ok)} failed={len(results) - len(ok)}"
    if ok and 2.0 in q_grid:
        line += f" mean_H(2)={np.mean([h.value_at(2.0) for h in ok]):.6f}"
    return line


def cmd_analyze(args) -> int:
    records, digest = _read_records(args.input)
    if not records:
        _note("error: no records in input")
        return EXIT_DATA
    dfa = _dfa_config(args)
    results = _analyze_records(records, dfa, args.axis, args.threads)
    config = {"command": "analyze", "version": __version__, "input_sha256": digest,
              "axis": args.axis, "dfa": dfa.to_dict()}
    _write_text(Path(args.out), _hfs_csv(records, results, config))
    failed = [r.id for r, (h, _) in zip(records, results) if h is None]
    if failed:
        _note("failed records: " + ", ".join(failed))
    print(_summary(results, dfa.q_grid))
    return EXIT_DATA if len(failed) == len(records) else 0


# ------------------------------------------------------------------ train / eval


@dataclass
class _Prepared:
    ids: list[str]
    x: np.ndarray
    y: np.ndarray


def _prepare(records, dfa, axis, aspect, threads):
    """H(q) matrix and labels of the analysable records.

    Returns ``(prepared, failed_ids, raw_results)``.
    """
    results = _analyze_records(records, dfa, axis, threads)
    good = [(r, h) for r, (h, _) in zip(records, results) if h is not None]
    failed = [r.id for r, (h, _) in zip(records, results) if h is None]
    if not good:
        raise InvalidInput("no record produced a fractal series")
    prepared = _Prepared([r.id for r, _ in good], np.array([h.h for _, h in good]),
                         np.array([r.label(aspect) for r, _ in good]))
    return prepared, failed, results


def _subset(prep: _Prepared, ids) -> _Prepared:
    pos = {i: k for k, i in enumerate(prep.ids)}
    keep = [pos[i] for i in ids if i in pos]
    return _Prepared([prep.ids[k] for k in keep], prep.x[keep], prep.y[keep])


def _evaluate(params, config: HgnnConfig, data: _Prepared) -> EvalReport:
    pred = predict_batch(data.x, params, config)
    return macro_report(confusion(pred, data.y, config.num_classes))


def _model_name(dfa: DfaConfig) -> str:
    return f"HGNN[{'HmF-DFA' if dfa.variant is Variant.HMF else 'mF-DFA'}]"


def _train_run(args, write_hfs: bool) -> int:
    records, digest = _read_records(args.input)
    if not records:
        _note("error: no records in input")
        return EXIT_DATA
    aspect = args.aspect
    dfa = _dfa_config(args)
    num_classes = args.num_classes or ASPECT_LEVELS[aspect]
    base = HgnnConfig(fusion_dim=args.fusion_dim, kernel_size=args.kernel_size,
                      num_classes=num_classes, seed=args.seed)
    schedule = TrainSchedule(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size)
    split = split_dataset(records, args.seed)
    out_dir = Path(args.out_dir)

    data, failed, results = _prepare(records, dfa, args.axis, aspect, args.threads)
    if failed:
        _note("skipped records: " + ", ".join(failed))
    parts = {name: _subset(data, getattr(split, name)) for name in ("train", "validation", "test")}
    if len(parts["train"].ids) == 0:
        raise InvalidInput("training split is empty")

    config = {
        "command": "pipeline" if write_hfs else "train",
        "version": __version__,
        "input_sha256": digest,
        "aspect": aspect,
        "axis": args.axis,
        "seed": args.seed,
        "repeat": args.repeat,
        "dfa": dfa.to_dict(),
        "hgnn": base.to_dict(),
        "schedule": schedule.to_dict(),
        "split": {k: len(getattr(split, k)) for k in ("train", "validation", "test")},
        "skipped_records": failed,
    }
    if write_hfs:
        _write_text(out_dir / "hfs.csv", _hfs_csv(records, results, config))

    test_reports, val_reports = [], []
    for rep in range(args.repeat):
        cfg = HgnnConfig(**{**base.to_dict(), "seed": args.seed + rep})
        val = parts["validation"]
        try:
            params, history = train(parts["train"].x, parts["train"].y, cfg, schedule,
                                    val.x if val.ids else None, val.y if val.ids else None)
        except TrainingDiverged as exc:
            _note(f"error: training diverged at epoch {exc.epoch} (repetition {rep})")
            return EXIT_DIVERGED
        suffix = "" if rep == 0 else f"_r{rep}"
        meta = {**config, "model_seed": cfg.seed, "best_epoch": history.best_epoch}
        _write_text(out_dir / f"checkpoint{suffix}.json",
                    json.dumps(checkpoint.to_dict(params, cfg, meta)) + "\n")
        _write_text(out_dir / f"history{suffix}.csv", _config_comment(meta) + history.to_csv())
        test_reports.append(_evaluate(params, cfg, parts["test"]))
        val_reports.append(_evaluate(params, cfg, val) if val.ids else test_reports[-1])
        print(f"repetition {rep}: best epoch {history.best_epoch}, "
              f"test macro F1 {test_reports[-1].macro_f1:.4f}")

    reports = {"test": average_reports(test_reports), "val": average_reports(val_reports)}
    report_doc = {"config": config, "model": _model_name(dfa),
                  **{k: v.to_dict() for k, v in reports.items()}}
    _write_text(out_dir / "report.json", json.dumps(report_doc, indent=2) + "\n")
    _write_text(out_dir / "results.csv",
                _config_comment(config) + table_csv(_model_name(dfa), aspect, reports))
    print("test macro P/R/F1: " + " ".join(f"{v:.4f}" for v in reports["test"].macro))
    return 0


def cmd_train(args) -> int:
    return _train_run(args, write_hfs=False)


def cmd_pipeline(args) -> int:
    return _train_run(args, write_hfs=True)


def cmd_eval(args) -> int:
    try:
        params, cfg, meta = checkpoint.load(args.checkpoint)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {args.checkpoint}: {exc.strerror or exc}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unreadable checkpoint {args.checkpoint}: {exc}") from None
    aspect = meta.get("aspect", args.aspect or "severity")
    if args.aspect and args.aspect != aspect:
        raise ConfigError(f"checkpoint was trained for aspect {aspect!r}, not {args.aspect!r}")
    records, digest = _read_records(args.input)
    if not records:
        _note("error: no records in input")
        return EXIT_DATA
    labels = [r.label(aspect) for r in records]
    if max(labels) > cfg.num_classes:
        raise ConfigError(f"dataset has {aspect} level {max(labels)} but the checkpoint "
                          f"only knows {cfg.num_classes} classes")
    dfa = DfaConfig.from_dict(meta.get("dfa", {}))
    axis = meta.get("axis", Axis.OVER_TOKENS.value)
    data, failed, _ = _prepare(records, dfa, axis, aspect, args.threads)
    if failed:
        _note("skipped records: " + ", ".join(failed))
    report = _evaluate(params, cfg, data)
    config = {"command": "eval", "version": __version__, "input_sha256": digest,
              "checkpoint_sha256": _sha256(Path(args.checkpoint)), "aspect": aspect,
              "axis": axis, "dfa": dfa.to_dict(), "hgnn": cfg.to_dict(), "skipped_records": failed}
    out_dir = Path(args.out_dir)
    _write_text(out_dir / "eval_report.json",
                json.dumps({"config": config, "model": _model_name(dfa), "eval": report.to_dict()},
                           indent=2) + "\n")
    _write_text(out_dir / "eval_results.csv",
                _config_comment(config) + table_csv(_model_name(dfa), aspect, {"eval": report}))
    for c, (p, r, f) in enumerate(report.per_class, start=1):
        print(f"class {c}: P={p:.4f} R={r:.4f} F1={f:.4f}")
    print("macro: P={:.4f} R={:.4f} F1={:.4f}".format(*report.macro))
    return 0


# ------------------------------------------------------------------ parser


def _dfa_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("fractal analysis")
    g.add_argument("--variant", choices=[v.value for v in Variant], default="standard")
    g.add_argument("--alpha", type=float, default=0.4, help="sigmoid scaling index (hmf only)")
    g.add_argument("--order", "-m", type=int, default=2, help="detrending polynomial order")
    g.add_argument("--q-min", type=float, default=-5.0)
    g.add_argument("--q-max", type=float, default=5.0)
    g.add_argument("--q-step", type=float, default=0.25)
    g.add_argument("--scales", help="comma-separated window lengths (default: 16 geometric "
                                     "scales from 16 to length/4)")
    g.add_argument("--axis", choices=[a.value for a in Axis], default=Axis.OVER_TOKENS.value,
                   help="embedding reduction axis")
    g.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads for per-record analysis (env {THREADS_ENV})")
    return p


def _model_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model and training")
    g.add_argument("--aspect", choices=ASPECTS, default="severity")
    g.add_argument("--num-classes", type=int, help="default: number of levels of the aspect")
    g.add_argument("--fusion-dim", type=int, default=64)
    g.add_argument("--kernel-size", type=int, default=3)
    g.add_argument("--lr", type=float, default=1e-5)
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--batch-size", type=int, default=128)
    g.add_argument("--repeat", type=int, default=1, help="independent repetitions to average")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--input", required=True, help="JSONL dataset")
    g.add_argument("--out-dir", required=True)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazfractal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic labelled dataset")
    s.add_argument("--kind", choices=["white", "fgn", "cascade"], default="fgn")
    s.add_argument("--hurst", type=float, default=0.5)
    s.add_argument("--n", type=int, default=4096, help="series length")
    s.add_argument("--levels", type=int, default=12, help="cascade levels")
    s.add_argument("--p", type=float, default=0.3, help="cascade weight")
    s.add_argument("--count", type=int, default=10, help="records per class")
    s.add_argument("--counts", help="comma-separated records per class (with --class)")
    s.add_argument("--total", type=int,
                   help="rescale class counts to this dataset size (--preset default 500)")
    s.add_argument("--label", type=int, default=1)
    s.add_argument("--class", dest="cls", action="append",
                   help="class generator KIND[:key=value,...]@LABEL; repeatable")
    s.add_argument("--preset", choices=["table3"],
                   help="imbalanced fGn classes with the reference level counts of --aspect")
    s.add_argument("--aspect", choices=ASPECTS, default="severity")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", parents=[_dfa_flags()], help="compute H(q) per record")
    a.add_argument("--input", required=True)
    a.add_argument("--out", required=True, help="CSV output")
    a.set_defaults(func=cmd_analyze)

    for name, func, text in (("train", cmd_train, "split, analyse and train a classifier"),
                             ("pipeline", cmd_pipeline, "train plus the per-record H(q) table")):
        t = sub.add_parser(name, parents=[_dfa_flags(), _model_flags()], help=text)
        t.set_defaults(func=func)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--aspect", choices=ASPECTS)
    e.add_argument("--threads", type=int, default=_default_threads())
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    except IoError as exc:
        _note(f"i/o error: {exc}")
        return EXIT_IO
    except HazFractalError as exc:
        _note(f"error: {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
