"""Command-line front end.

Verbs:
    run                one experiment; writes metrics.csv, summary.json and a
                       final checkpoint under <out>/<run-id>/
    ablation           variants {full, v1, v2, v3} x seeds -> ablation.csv
    sweep              one hyper-parameter (beta|gamma|nu) over a value list
    class-sensitivity  final accuracy per target-class count

Shared flags: --config PATH, --set KEY=VALUE (repeatable), --out DIR,
--seeds "s1,s2,...". The PDA_KIT_OUT environment variable overrides the
default output directory. Exit codes: 0 success, 1 runtime failure, 2 usage
error.

Config files are flat ``key = value`` lines (# comments allowed); keys are
TrainConfig field names. Tuple fields take comma lists, e.g.
``feature_widths = 64,32``.

metrics.csv columns (per config: one accuracy column per head, one weight
and one histogram column per source class):
    epoch, phase, acc_c1..acc_cN, l_wce_s, l_ce_t, l_con, l_swd, total,
    n_tl, degenerate_batches, w_0..w_{C-1}, pseudo_0..pseudo_{C-1},
    wall_time_s
All values except wall_time_s are deterministic given the config.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import typing
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .nets import save_checkpoint
from .trainer import ExperimentResult, MetricsRecord, TrainConfig, run_experiment

DEFAULT_OUT = "runs"
SWEEPABLE = ("beta", "gamma", "nu")


class UsageError(Exception):
    """Bad invocation or config; maps to exit code 2."""


# ----------------------------------------------------------------------
# config handling


def _field_types() -> dict[str, type]:
    hints = typing.get_type_hints(TrainConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if typing.get_origin(typ) is tuple:
            return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as err:
        raise UsageError(f"bad value for {name}: {raw!r}") from err
    raise UsageError(f"unsupported config field type for {name}")


def parse_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    entries: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def build_config(config_path: str | None, sets: list[str]) -> TrainConfig:
    entries: dict[str, str] = {}
    if config_path:
        entries.update(parse_config_file(config_path))
    for item in sets:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        entries[key.strip()] = value.strip()
    types = _field_types()
    kwargs = {}
    for key, raw in entries.items():
        if key not in types:
            raise UsageError(f"unknown config key: {key}")
        kwargs[key] = _coerce(key, raw, types[key])
    return TrainConfig(**kwargs)


def run_id_for(config: TrainConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True, default=list)
    return hashlib.sha1(blob.encode()).hexdigest()[:12]


def _config_echo(config: TrainConfig) -> dict:
    echo = dataclasses.asdict(config)
    for key, value in echo.items():
        if isinstance(value, tuple):
            echo[key] = list(value)
    return echo


def config_from_echo(echo: dict) -> TrainConfig:
    types = _field_types()
    kwargs = {}
    for key, value in echo.items():
        if key not in types:
            raise UsageError(f"unknown config key in echo: {key}")
        if typing.get_origin(types[key]) is tuple:
            value = tuple(value)
        kwargs[key] = value
    return TrainConfig(**kwargs)


# ----------------------------------------------------------------------
# output writers


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_header(num_heads: int, num_classes: int) -> list[str]:
    return (
        ["epoch", "phase"]
        + [f"acc_c{i + 1}" for i in range(num_heads)]
        + ["l_wce_s", "l_ce_t", "l_con", "l_swd", "total", "n_tl", "degenerate_batches"]
        + [f"w_{c}" for c in range(num_classes)]
        + [f"pseudo_{c}" for c in range(num_classes)]
        + ["wall_time_s"]
    )


def write_metrics_csv(path: Path, records: list[MetricsRecord]):
    if not records:
        raise UsageError("no records to write")
    num_heads = len(records[0].accuracies)
    num_classes = len(records[0].w)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_header(num_heads, num_classes))
        for r in records:
            row = (
                [r.epoch, r.phase]
                + [_fmt(a) for a in r.accuracies]
                + [_fmt(r.l_wce_s), _fmt(r.l_ce_t), _fmt(r.l_con), _fmt(r.l_swd)]
                + [_fmt(r.total), r.n_tl, r.degenerate_batches]
                + [_fmt(x) for x in r.w]
                + [int(x) for x in r.pseudo_histogram]
                + [_fmt(r.wall_time_s)]
            )
            writer.writerow(row)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _execute_run(config: TrainConfig, out_dir: Path) -> tuple[ExperimentResult, Path]:
    rid = run_id_for(config)
    run_dir = out_dir / rid
    run_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    result = run_experiment(config)
    finished = _now()
    write_metrics_csv(run_dir / "metrics.csv", result.records)
    save_checkpoint(result.bank, run_dir / "checkpoint.npz")
    summary = {
        "run_id": rid,
        "started": started,
        "finished": finished,
        "output_directory": str(run_dir),
        "config": _config_echo(config),
        "results": result.summary,
    }
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return result, run_dir


# ----------------------------------------------------------------------
# commands


def cmd_run(config: TrainConfig, out_dir: Path) -> int:
    result, run_dir = _execute_run(config, out_dir)
    accs = ", ".join(
        f"C{i + 1}={a:.4f}" for i, a in enumerate(result.summary["final_accuracies"])
    )
    print(f"run {run_id_for(config)} finished: {accs}")
    print(f"artifacts in {run_dir}")
    return 0


def _final_record(result: ExperimentResult) -> MetricsRecord:
    return result.records[-1]


def cmd_ablation(config: TrainConfig, out_dir: Path, seeds: list[int]) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    means = []
    for variant in ("full", "v1", "v2", "v3"):
        accs = []
        for seed in seeds:
            cfg = dataclasses.replace(config, variant=variant, seed=seed)
            result, _ = _execute_run(cfg, out_dir)
            rec = _final_record(result)
            acc_c2 = result.summary["final_accuracies"][1]
            accs.append(acc_c2)
            rows.append(
                [variant, seed, _fmt(acc_c2), _fmt(rec.l_wce_s), _fmt(rec.l_ce_t),
                 _fmt(rec.l_con), _fmt(rec.l_swd)]
            )
        means.append([variant, "mean", _fmt(float(np.mean(accs))), "", "", "", ""])
    path = out_dir / "ablation.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "acc_c2", "l_wce_s", "l_ce_t", "l_con", "l_swd"])
        writer.writerows(rows)
        writer.writerows(means)
    print(f"wrote {path}")
    return 0


def cmd_sweep(
    config: TrainConfig, out_dir: Path, param: str, values: list[float], seeds: list[int]
) -> int:
    if param not in SWEEPABLE:
        raise UsageError(f"sweep parameter must be one of {SWEEPABLE}: {param}")
    if not values:
        raise UsageError("sweep needs a non-empty value list")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        accs = []
        for seed in seeds:
            cfg = dataclasses.replace(config, seed=seed, **{param: value})
            result, _ = _execute_run(cfg, out_dir)
            acc_c2 = result.summary["final_accuracies"][1]
            accs.append(acc_c2)
            rows.append([param, _fmt(float(value)), seed, _fmt(acc_c2)])
        rows.append([param, _fmt(float(value)), "mean", _fmt(float(np.mean(accs)))])
    path = out_dir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "seed", "acc_c2"])
        writer.writerows(rows)
    print(f"wrote {path}")
    return 0


def cmd_class_sensitivity(
    config: TrainConfig, out_dir: Path, counts: list[int], seeds: list[int]
) -> int:
    if not counts:
        raise UsageError("class-sensitivity needs a non-empty count list")
    if config.uses_idx_task:
        raise UsageError("class-sensitivity runs on the synthetic task only")
    valid = [c for c in counts if 1 <= c < config.num_source_classes]
    if not valid:
        raise UsageError(
            f"no valid counts: all violate 1 <= count < {config.num_source_classes}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for count in sorted(counts):
        if count not in valid:
            rows.append([count, "rejected", "", ""])
            continue
        for seed in seeds:
            cfg = dataclasses.replace(config, num_target_classes=count, seed=seed)
            result, _ = _execute_run(cfg, out_dir)
            acc_c2 = result.summary["final_accuracies"][1]
            rows.append([count, "valid", seed, _fmt(acc_c2)])
    path = out_dir / "class_sensitivity.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_classes", "status", "seed", "acc_c2"])
        writer.writerows(rows)
    print(f"wrote {path}")
    return 0


# ----------------------------------------------------------------------
# argument parsing


def _parse_seeds(text: str | None, fallback: int) -> list[int]:
    if not text:
        return [fallback]
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise UsageError(f"bad --seeds list: {text!r}") from err


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise UsageError(f"bad --values list: {text!r}") from err


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise UsageError(f"bad --counts list: {text!r}") from err


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--out", help="output directory (default: $PDA_KIT_OUT or ./runs)")
    parser.add_argument("--seeds", help='comma list of seeds, e.g. "0,1,2"')


def _resolve_out(flag_value: str | None) -> Path:
    return Path(flag_value or os.environ.get("PDA_KIT_OUT") or DEFAULT_OUT)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pda-kit", description="Partial domain adaptation experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "ablation", "sweep", "class-sensitivity"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--param", required=True, help="one of beta|gamma|nu")
            p.add_argument("--values", required=True, help="comma list of values")
        if name == "class-sensitivity":
            p.add_argument("--counts", required=True, help="comma list of target class counts")

    try:
        args = parser.parse_args(argv)
        config = build_config(args.config, args.set)
        out_dir = _resolve_out(args.out)
        seeds = _parse_seeds(args.seeds, config.seed)
        if args.command == "run":
            return cmd_run(config, out_dir)
        if args.command == "ablation":
            return cmd_ablation(config, out_dir, seeds)
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, args.param, _parse_floats(args.values), seeds)
        return cmd_class_sensitivity(config, out_dir, _parse_ints(args.counts), seeds)
    except (UsageError, ContractViolation) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
