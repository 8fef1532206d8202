"""``ecoplatoon`` command line: run scenarios, compare fuel with ACC, sweep the soft planner, validate configs."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .sim import (
    ConfigError,
    Mode,
    fuel_curves,
    load_config,
    randomized_light_trial,
    run_scenario,
    table_to_csv,
)

log = logging.getLogger("ecoplatoon")


def _ratios(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("ratios must be positive numbers")
    return values


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecoplatoon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("config", help="JSON config path or preset name (paper-sec5)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--duration", type=int, default=None, help="steps to simulate")
        if out:
            p.add_argument("--out", type=Path, default=Path("out"))

    run = sub.add_parser("run", help="simulate one scenario and write trace files")
    common(run)
    run.add_argument("--mode", choices=[m.value for m in Mode], default=None)

    fuel = sub.add_parser("compare-fuel", help="proposed vs ACC fuel on the road without lights")
    common(fuel)
    fuel.add_argument("--trials", type=_positive_int, default=1, help="number of consecutive seeds")

    sweep = sub.add_parser("sweep-soft", help="red-light avoidance rate, strict vs soft, per speed/fuel weight ratio")
    common(sweep)
    sweep.add_argument("--ratios", type=_ratios, default=[0.25, 0.5, 1.0, 2.0])
    sweep.add_argument("--trials", type=_positive_int, default=50)

    val = sub.add_parser("validate", help="check a config and exit")
    val.add_argument("config")
    return parser


def _load(args) -> "ScenarioConfig":  # noqa: F821
    cfg = load_config(args.config)
    if getattr(args, "duration", None) is not None:
        if args.duration < 0:
            raise ConfigError("--duration", "must be nonnegative")
        cfg = replace(cfg, duration=args.duration)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "mode", None) is not None:
        cfg = replace(cfg, mode=Mode(args.mode))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    trace = run_scenario(cfg)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(trace.to_csv())
    (out / "events.json").write_text(trace.events_json())
    for i, plan in enumerate(trace.plans):
        (out / f"plan_{i:03d}_k{plan.start}.csv").write_text(plan.to_csv())
    print(json.dumps(trace.summary(), sort_keys=True))
    return 0


def cmd_compare_fuel(args) -> int:
    cfg = _load(args).without_lights()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    totals = []
    for offset in range(args.trials):
        seed = cfg.seed + offset
        row = {"seed": seed}
        for mode in (Mode.PROPOSED, Mode.ACC):
            trace = run_scenario(cfg, seed=seed, mode=mode)
            curve = fuel_curves(trace)
            lines = ["time,platoon_fuel"] + [f"{t!r},{f!r}" for t, f in curve]
            (out / f"fuel_{mode.value}_seed{seed}.csv").write_text("\n".join(lines) + "\n")
            row[mode.value] = curve[-1][1] if curve else 0.0
        totals.append(row)
    print(json.dumps(totals))
    return 0


def cmd_sweep_soft(args) -> int:
    cfg = _load(args)
    table = randomized_light_trial(cfg, args.trials, args.ratios, master_seed=cfg.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    text = table_to_csv(table)
    (args.out / "success_table.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {len(cfg.vehicles)} vehicles, {len(cfg.lights)} lights, {cfg.duration} steps of {cfg.dt} s")
    return 0


COMMANDS = {"run": cmd_run, "compare-fuel": cmd_compare_fuel, "sweep-soft": cmd_sweep_soft, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ECOPLATOON_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
