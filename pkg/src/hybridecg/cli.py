"""Command-line pipeline: ingest, train, evaluate, noise-sweep, gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 divergence or failed gradient check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .beatfile import BeatFileError, read_beats, write_beats
from .beats import CLASS_NAMES, BeatSet, extract_beats, split_dataset
from .config import ConfigError, ExperimentConfig, load_config
from .metrics import TABLE_COLUMNS, MetricsReport, evaluate
from .nn import gradcheck
from .nn.model import VARIANTS, build_model
from .nn.serialize import ModelFileError, load_model, save_model
from .nn.training import DivergenceError, predict, train, write_training_log
from .noise import noise_sweep, write_sweep_csv, write_sweep_long_csv
from .smote import balance_training_set
from .wfdb_io import LeadNotFoundError, WfdbFormatError, find_records, load_any

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("hybridecg")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _header_lines(cfg: ExperimentConfig, kind: str, extra: dict | None = None) -> list[str]:
    lines = [f"artifact: hybridecg {kind}", f"version: {__version__}", f"config_hash: {cfg.hash()}",
             "seeds: " + " ".join(f"{k}={v}" for k, v in cfg.seeds().items())]
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    return lines


def _header_dict(lines: list[str]) -> dict:
    return dict(line.split(": ", 1) for line in lines)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "variant", None):
        if args.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {args.variant!r}")
        cfg = replace(cfg, variant=args.variant)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    if getattr(args, "beats", None):
        cfg = replace(cfg, beat_file=args.beats)
    return cfg


def _load_beats(path) -> tuple[BeatSet, dict]:
    try:
        return read_beats(path)
    except FileNotFoundError:
        raise DataError(f"beat file {path} not found; run `hybridecg ingest` first") from None
    except BeatFileError as exc:
        raise DataError(str(exc)) from None


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise DataError(f"model file {path} not found") from None
    except ModelFileError as exc:
        raise DataError(str(exc)) from None


# ingest

def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    data_dir = Path(args.data_dir or cfg.data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} does not exist")
    kind, names = find_records(data_dir)
    if cfg.records is not None:
        wanted = set(cfg.records)
        missing = sorted(wanted - set(names))
        if missing:
            raise DataError(f"records not found in {data_dir}: {missing}")
        names = [n for n in names if n in wanted]
    names = [n for n in names if n not in set(cfg.exclude)]
    if not names:
        raise DataError(f"no records found in {data_dir}")

    parts, used, skipped = [], [], []
    for name in names:
        try:
            record = load_any(data_dir, name, kind)
            beats = extract_beats(record, cfg.lead)
        except LeadNotFoundError as exc:
            print(f"warning: skipping {name}: {exc}", file=sys.stderr)
            skipped.append(name)
            continue
        except (OSError, WfdbFormatError) as exc:
            raise DataError(f"record {name}: {exc}") from None
        counts = beats.class_counts()
        print(f"{name}: {len(beats)} beats  " + " ".join(f"{c}={n}" for c, n in zip(CLASS_NAMES, counts)))
        parts.append(beats)
        used.append(name)
    print(f"{len(used)} records used, {len(skipped)} skipped" + (f" ({', '.join(skipped)})" if skipped else ""))
    if not used:
        raise DataError(f"no record in {data_dir} has a {cfg.lead} lead")
    beats = BeatSet.concat(parts)
    print(f"total: {len(beats)} beats  "
          + " ".join(f"{c}={n}" for c, n in zip(CLASS_NAMES, beats.class_counts())))

    out = Path(args.output) if args.output else Path(cfg.beat_file)
    if args.format:
        out = out.with_suffix(".csv" if args.format == "csv" else ".ecgb")
    out.parent.mkdir(parents=True, exist_ok=True)
    header = _header_dict(_header_lines(cfg, "beats", {"source": kind, "lead": cfg.lead,
                                                       "records": ",".join(used),
                                                       "skipped": ",".join(skipped)}))
    write_beats(beats, out, header)
    print(f"wrote {out}")
    return EXIT_OK


# train

def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    beats, _ = _load_beats(cfg.beat_file)
    config = build_model(cfg.variant)
    if config.uses_rr and beats.rr is None:
        raise ConfigError(f"variant {cfg.variant} needs RR features but {cfg.beat_file} has none")
    present = np.flatnonzero(beats.class_counts())
    if len(present) < 2:
        raise DataError(f"beat file holds {len(present)} class(es); training needs at least two")

    split = split_dataset(beats, seed=cfg.split_seed)
    if split.train.rr is not None:
        split, _ = balance_training_set(split, rng_seed=cfg.smote_seed)
    else:
        raise ConfigError("SMOTE balancing needs RR features in the beat file")
    print(f"{cfg.variant}: train {len(split.train)} (balanced), validation {len(split.validation)}, "
          f"test {len(split.test)}")

    try:
        result = train(config, split, cfg.train, progress=not args.quiet)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_CHECK

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = _header_lines(cfg, "model", {"variant": cfg.variant, "beat_file_sha256": _sha256(cfg.beat_file)})
    metadata = {
        **_header_dict(lines),
        "seeds": cfg.seeds(),
        "train_config": cfg.train.to_dict(),
        "split_ratios": [0.70, 0.15, 0.15],
        "best_epoch": result.best_epoch,
        "stopped_early": result.stopped_early,
        "train_class_counts": split.train.class_counts().tolist(),
    }
    model_path = out / f"{cfg.variant}.ecgm"
    save_model(result.network, model_path, metadata)
    log_path = out / f"{cfg.variant}_train_log.csv"
    write_training_log(result.log, log_path, lines)
    print(f"best epoch {result.best_epoch}; wrote {model_path} and {log_path}")
    return EXIT_OK


# evaluate

def _partition(beats: BeatSet, metadata: dict, which: str) -> BeatSet:
    if which == "all":
        return beats
    split = split_dataset(beats, tuple(metadata.get("split_ratios", (0.70, 0.15, 0.15))),
                          seed=int(metadata["seeds"]["split"]))
    return {"train": split.train, "validation": split.validation, "test": split.test}[which]


def _check_compatible(net, beats: BeatSet, model_path):
    if net.config.uses_rr and beats.rr is None:
        raise ConfigError(f"{model_path} is a {net.variant} model and needs RR features; the beat file has none")


def _warn_if_other_beats(metadata: dict, beat_path):
    expected = metadata.get("beat_file_sha256")
    if expected and expected != _sha256(beat_path):
        print(f"warning: {beat_path} differs from the beat file the model was trained on; "
              "the re-derived split will not match", file=sys.stderr)


def _report_lines(variant: str, report: MetricsReport) -> list[str]:
    row = report.literal.table_row()
    lines = [f"{variant}: " + "  ".join(f"{k} {100 * v:.2f}%" for k, v in row.items())]
    conv = report.conventional.table_row()
    lines.append("  conventional: " + "  ".join(f"{k} {100 * v:.2f}%" for k, v in conv.items()))
    lines.append(f"  multiclass accuracy {100 * report.multiclass_accuracy:.2f}%  "
                 f"macro F1 {100 * report.macro_f1:.2f}%")
    for c in report.per_class:
        lines.append(f"  {c.name}: support {c.support:6d}  sens {c.sensitivity:.4f}  "
                     f"prec {c.precision:.4f}  f1 {c.f1:.4f}")
    return lines


def write_report_csv(report: MetricsReport, path, header_lines=()):
    """Headline rows for both conventions, then the per-class table."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", *TABLE_COLUMNS])
        for scope, m in (("literal", report.literal), ("conventional", report.conventional)):
            w.writerow([scope, *(repr(v) for v in m.table_row().values())])
        for c in report.per_class:
            w.writerow([f"class {c.name}", "", repr(c.f1), repr(c.sensitivity), repr(c.specificity),
                        repr(c.precision)])


def cmd_evaluate(args) -> int:
    net, metadata = _load_model(args.model)
    cfg = _resolve_config(args)
    beat_path = args.beats or cfg.beat_file
    beats, _ = _load_beats(beat_path)
    _check_compatible(net, beats, args.model)
    _warn_if_other_beats(metadata, beat_path)
    part = _partition(beats, metadata, args.partition)
    report = evaluate(predict(net, part), part.labels)
    for line in _report_lines(net.variant, report):
        print(line)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = {k: metadata[k] for k in ("artifact", "version", "config_hash") if k in metadata}
    header.update(artifact="hybridecg evaluation", version=__version__, variant=net.variant,
                  partition=args.partition, seeds=metadata.get("seeds"), n_beats=len(part))
    doc = {"header": header, **report.to_dict()}
    stem = out / f"{net.variant}_{args.partition}_eval"
    Path(f"{stem}.json").write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    lines = [f"{k}: {v}" for k, v in header.items()]
    write_report_csv(report, f"{stem}.csv", lines)
    print(f"wrote {stem}.json and {stem}.csv")
    return EXIT_OK


# noise-sweep

def cmd_noise_sweep(args) -> int:
    cfg = _resolve_config(args)
    etas = cfg.noise_etas if args.etas is None else args.etas
    beat_path = args.beats or cfg.beat_file
    beats, _ = _load_beats(beat_path)
    rows, variants, seeds = [], [], []
    for model_path in args.models:
        net, metadata = _load_model(model_path)
        _check_compatible(net, beats, model_path)
        _warn_if_other_beats(metadata, beat_path)
        part = _partition(beats, metadata, args.partition)
        sweep = noise_sweep(net, part, etas, seed=cfg.noise_seed)
        for row in sweep:
            print(f"{row.variant} eta {row.eta:.2f} sigma {row.sigma_mv:.4f} mV  "
                  f"acc {row.report.accuracy:.4f}  f1 {row.report.f1:.4f}  "
                  f"sens {row.report.sensitivity:.4f}")
        rows += sweep
        variants.append(net.variant)
        seeds.append(f"{net.variant}:{metadata.get('seeds')}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"artifact: hybridecg noise-sweep", f"version: {__version__}",
             f"noise_seed: {cfg.noise_seed}", f"partition: {args.partition}",
             "models: " + "; ".join(seeds)]
    wide, long = out / "noise_sweep.csv", out / "noise_sweep_long.csv"
    write_sweep_csv(rows, wide, lines)
    write_sweep_long_csv(rows, long, lines)
    print(f"wrote {wide} and {long}")
    return EXIT_OK


# gradcheck

def cmd_gradcheck(args) -> int:
    results = gradcheck.full_suite(seed=args.seed or 0)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    worst = max(results, key=lambda r: r.max_rel_error)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; worst {worst.name} "
          f"{worst.max_rel_error:.3e} (tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_CHECK if failed else EXIT_OK


def _etas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("etas must be non-negative")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridecg", description="ECG beat classification pipeline.")
    p.add_argument("--version", action="version", version=f"hybridecg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, variant=True):
        sp.add_argument("--config", help="experiment JSON file")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="set every seed to this value")
        if variant:
            sp.add_argument("--variant", choices=VARIANTS, help="model variant override")

    sp = sub.add_parser("ingest", help="extract beats from WFDB or CSV records into a beat file")
    sp.add_argument("data_dir", nargs="?", help="record directory (overrides data_dir)")
    sp.add_argument("-o", "--output", help="beat file path (overrides beat_file)")
    sp.add_argument("--format", choices=["binary", "csv"], help="force the beat file format")
    common(sp, variant=False)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("train", help="split, balance and train one variant")
    sp.add_argument("--beats", help="beat file (overrides beat_file)")
    sp.add_argument("-q", "--quiet", action="store_true", help="no per-epoch lines")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="metrics of a trained model on one partition")
    sp.add_argument("model", help="model file")
    sp.add_argument("--beats", help="beat file (overrides beat_file)")
    sp.add_argument("--partition", choices=["test", "validation", "train", "all"], default="test")
    common(sp, variant=False)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("noise-sweep", help="metrics under Gaussian white noise at several levels")
    sp.add_argument("models", nargs="+", help="one or more model files")
    sp.add_argument("--beats", help="beat file (overrides beat_file)")
    sp.add_argument("--etas", type=_etas, help="comma-separated noise levels, e.g. 0.01,0.05,0.1")
    sp.add_argument("--partition", choices=["test", "validation", "train", "all"], default="test")
    common(sp, variant=False)
    sp.set_defaults(func=cmd_noise_sweep)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every layer and variant")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
