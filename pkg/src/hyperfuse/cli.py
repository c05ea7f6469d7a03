"""Command-line entry point: synthesize, train, evaluate, report.

Configuration is a flat key=value text file; `--set key=value` flags
override file values, and `HYPERFUSE_SEED` supplies a seed when neither the
file nor the flags do. Every command writes the fully resolved
configuration next to its outputs so any run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import MISSING, fields
from pathlib import Path
from typing import Dict, Optional

from .datamodel import DataError, ModelConfig, load_cohort
from .evalharness import METRIC_NAMES, run_cv
from .synthdata import SynthSpec, generate_cohort, write_cohort
from .trainer import (TrainingDivergedError, save_checkpoint, train,
                      write_loss_log)

_MODEL_FIELDS = {f.name: f for f in fields(ModelConfig)}
_SYNTH_FIELDS = {f.name: f for f in fields(SynthSpec)}
_TUPLE_KEYS = {"roi_whitelist", "disease_rois"}


def _coerce(key: str, raw: str, target) -> object:
    raw = raw.strip()
    if key in _TUPLE_KEYS:
        if raw.lower() in ("", "none"):
            return None if key == "roi_whitelist" else ()
        return tuple(int(tok) for tok in raw.split(",") if tok != "")
    if key == "bandwidth":
        try:
            return float(raw)
        except ValueError:
            return raw
    if target is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise DataError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return target(raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"config key {key}: cannot parse {raw!r}") from exc


def _field_type(field) -> type:
    default = field.default if field.default is not MISSING else None
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _serialize(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path) -> Dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments are ignored."""
    raw = {}
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing config file: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def _gather_raw(args, known: Dict[str, object]) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    env_seed = os.environ.get("HYPERFUSE_SEED")
    if env_seed is not None:
        raw["seed"] = env_seed
    if getattr(args, "config", None):
        raw.update(read_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise DataError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        raw["seed"] = str(args.seed)
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def build_model_config(args) -> ModelConfig:
    raw = _gather_raw(args, _MODEL_FIELDS)
    values = {k: _coerce(k, v, _field_type(_MODEL_FIELDS[k]))
              for k, v in raw.items()}
    return ModelConfig(**values)


def build_synth_spec(args) -> SynthSpec:
    raw = _gather_raw(args, _SYNTH_FIELDS)
    values = {k: _coerce(k, v, _field_type(_SYNTH_FIELDS[k]))
              for k, v in raw.items()}
    return SynthSpec(**values)


def write_resolved_config(obj, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.txt"
    lines = [f"{f.name}={_serialize(getattr(obj, f.name))}"
             for f in sorted(fields(obj), key=lambda f: f.name)]
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_synth(args) -> int:
    spec = build_synth_spec(args)
    out_dir = Path(args.out)
    cohort = generate_cohort(spec)
    manifest = write_cohort(cohort, out_dir)
    write_resolved_config(spec, out_dir)
    print(manifest)
    return 0


def cmd_train(args) -> int:
    config = build_model_config(args)
    cohort = load_cohort(args.manifest)
    if cohort.dims != config.dims:
        raise DataError(f"cohort dims {cohort.dims} != config dims {config.dims}")
    out_dir = Path(args.out)
    state = train(cohort, config)
    checkpoint = save_checkpoint(state, out_dir / "checkpoint")
    write_loss_log(state, out_dir / "loss_log.csv")
    write_resolved_config(config, out_dir)
    print(checkpoint)
    return 0


def cmd_eval(args) -> int:
    config = build_model_config(args)
    cohort = load_cohort(args.manifest)
    if cohort.dims != config.dims:
        raise DataError(f"cohort dims {cohort.dims} != config dims {config.dims}")
    out_dir = Path(args.out)
    report = run_cv(cohort, config, out_dir=out_dir, n_folds=args.folds,
                    jobs=args.jobs)
    write_resolved_config(config, out_dir)
    mean = report["mean"]
    print(f"{out_dir / 'metrics.json'} "
          f"acc={_fmt_metric(mean['acc'])} auc={_fmt_metric(mean['auc'])}")
    return 0


def _fmt_metric(v: Optional[float]) -> str:
    return "n/a" if v is None else "%.9g" % v


def render_report(report: dict) -> str:
    header = ["split"] + [m.capitalize() if m != "auc" else "Auc"
                          for m in METRIC_NAMES]
    rows = [header]
    for f in report["folds"]:
        rows.append([f"fold{f['fold']}"] + [_fmt_metric(f[m]) for m in METRIC_NAMES])
    rows.append(["mean"] + [_fmt_metric(report["mean"][m]) for m in METRIC_NAMES])
    rows.append(["std"] + [_fmt_metric(report["std"][m]) for m in METRIC_NAMES])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    metrics_path = run_dir / "metrics.json"
    if not metrics_path.exists():
        raise DataError(f"no metrics.json under {run_dir}")
    with open(metrics_path) as fh:
        report = json.load(fh)
    table = render_report(report)
    print(table)
    (run_dir / "report.txt").write_text(table + "\n")
    with open(run_dir / "report.csv", "w") as fh:
        fh.write("split," + ",".join(METRIC_NAMES) + "\n")
        for f in report["folds"]:
            fh.write(",".join([f"fold{f['fold']}"]
                              + [_fmt_metric(f[m]) for m in METRIC_NAMES]) + "\n")
        fh.write(",".join(["mean"] + [_fmt_metric(report["mean"][m])
                                      for m in METRIC_NAMES]) + "\n")
        fh.write(",".join(["std"] + [_fmt_metric(report["std"][m])
                                     for m in METRIC_NAMES]) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperfuse",
        description="Multimodal brain-network cohort synthesis, training, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--seed", type=int, help="override the run seed")

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    p_synth.add_argument("--config", help="key=value spec file")
    p_synth.add_argument("--out", required=True, help="output cohort directory")
    add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train both stages on a full cohort")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--config", help="key=value model config file")
    p_train.add_argument("--out", required=True)
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="run stratified cross-validation")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--config", help="key=value model config file")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--folds", type=int, default=10)
    p_eval.add_argument("--jobs", type=int, default=1,
                        help="parallel fold workers (aggregation stays deterministic)")
    add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="summarize a finished eval run")
    p_report.add_argument("--run", required=True, help="directory with metrics.json")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, TrainingDivergedError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
