"""Command-line interface.

Subcommands: simulate (PUPE/MSE sweep), required-ebn0 (bisection search),
mse-experiment (estimation-only pilot-power sweep), single-trial (one traced
run), export-codebooks, polar-golden.  Every SystemConfig field can be set
by a flag of the same name, overriding values from --config (flat JSON).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys

from . import polar
from .channel import draw_schedule, dump_schedule_csv
from .codebooks import save_codebooks
from .config import SystemConfig, derive_stream, fullscale_config, load_config, validate
from .harness import (
    HarnessConfig,
    get_shared_codebooks,
    mse_experiment,
    required_ebn0,
    run_sweep,
    run_trial,
    DEFAULT_SYNC_BP,
)
from .txchain import get_codec

_BOOL_FIELDS = {"sync_mode", "fixed_arrivals"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON file with SystemConfig fields")
    for f in dataclasses.fields(SystemConfig):
        flag = "np" if f.name == "np_" else f.name
        if f.name in _BOOL_FIELDS:
            parser.add_argument(f"--{flag}", dest=f.name, type=_parse_bool, default=None)
        elif f.name in ("Pp", "Pd", "sigma2", "Ka"):
            parser.add_argument(f"--{flag}", dest=f.name, type=float, default=None)
        else:
            parser.add_argument(f"--{flag}", dest=f.name, type=int, default=None)


def _build_config(args: argparse.Namespace) -> SystemConfig:
    overrides = {}
    for f in dataclasses.fields(SystemConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            overrides[f.name] = val
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = fullscale_config(**overrides)
    report = validate(cfg)
    if not report.ok:
        for v in report.violations:
            print(f"config error: {v}", file=sys.stderr)
        raise SystemExit(2)
    return cfg


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="urasim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="Monte Carlo PUPE/MSE sweep to CSV")
    _add_config_flags(p_sim)
    p_sim.add_argument("--trials", type=int, default=100)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--ka-list", type=_csv_floats, default=None)
    p_sim.add_argument("--ebn0-grid", type=_csv_floats, default=None,
                       help="comma-separated Eb/N0 grid in dB")
    p_sim.add_argument("--pp-grid", type=_csv_floats, default=None,
                       help="comma-separated pilot powers (linear)")
    p_sim.add_argument("--modes", default="async",
                       help="comma list of async,sync")
    p_sim.add_argument("--sync-bp", type=int, default=DEFAULT_SYNC_BP)
    p_sim.add_argument("--output", default="sweep.csv")
    p_sim.add_argument("--no-mse", action="store_true")
    p_sim.add_argument("--no-timing", action="store_true",
                       help="write zero wall time for reproducible files")

    p_req = sub.add_parser("required-ebn0", help="bisect the energy per bit for a target PUPE")
    _add_config_flags(p_req)
    p_req.add_argument("--ka-list", type=_csv_floats, required=True)
    p_req.add_argument("--epsilon", type=float, default=0.1)
    p_req.add_argument("--grid-min", type=float, default=0.0)
    p_req.add_argument("--grid-max", type=float, default=24.0)
    p_req.add_argument("--step", type=float, default=0.25)
    p_req.add_argument("--trials", type=int, default=50)
    p_req.add_argument("--workers", type=int, default=1)
    p_req.add_argument("--modes", default="async")
    p_req.add_argument("--sync-bp", type=int, default=DEFAULT_SYNC_BP)
    p_req.add_argument("--ratio-grid", type=_csv_floats, default=None,
                       help="optional Pp/Pd ratios to try; the best is kept")
    p_req.add_argument("--output", default="required_ebn0.csv")

    p_mse = sub.add_parser("mse-experiment", help="channel-estimation MSE vs pilot power")
    _add_config_flags(p_mse)
    p_mse.add_argument("--ka-list", type=_csv_floats, default=(50.0, 150.0))
    p_mse.add_argument("--pp-grid-db", type=_csv_floats, default=(-4.0, 0.0, 4.0, 8.0),
                       help="pilot power grid relative to sigma2, dB")
    p_mse.add_argument("--pd-over-sigma-db", type=float, default=10.0)
    p_mse.add_argument("--trials", type=int, default=100)
    p_mse.add_argument("--workers", type=int, default=1)
    p_mse.add_argument("--modes", default="async,sync")
    p_mse.add_argument("--sync-bp", type=int, default=DEFAULT_SYNC_BP)
    p_mse.add_argument("--output", default="mse.csv")
    p_mse.add_argument("--no-timing", action="store_true")

    p_one = sub.add_parser("single-trial", help="run one trial, optionally traced")
    _add_config_flags(p_one)
    p_one.add_argument("--trial", type=int, default=0)
    p_one.add_argument("--trace", action="store_true",
                       help="log per-window receiver activity")
    p_one.add_argument("--dump-schedule", default=None,
                       help="write ground-truth arrivals to this CSV")

    p_exp = sub.add_parser("export-codebooks", help="write the binary codebook sidecar")
    _add_config_flags(p_exp)
    p_exp.add_argument("--output", default="codebooks.bin")

    p_gold = sub.add_parser("polar-golden", help="write polar encoder golden vectors")
    _add_config_flags(p_gold)
    p_gold.add_argument("--count", type=int, default=100)
    p_gold.add_argument("--output", default="polar_golden.txt")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(name)s %(levelname)s %(message)s",
    )

    if args.command == "simulate":
        cfg = _build_config(args)
        hcfg = HarnessConfig(
            base=cfg, trials=args.trials, workers=args.workers,
            ka_list=args.ka_list, ebn0_grid_db=args.ebn0_grid, pp_grid=args.pp_grid,
            modes=tuple(args.modes.split(",")), sync_bp=args.sync_bp,
            output=args.output, measure_mse=not args.no_mse,
            timing=not args.no_timing,
        )
        run_sweep(hcfg)
        print(f"wrote {args.output}")
        return 0

    if args.command == "required-ebn0":
        cfg = _build_config(args)
        rows = []
        for mode in args.modes.split(","):
            base = cfg if mode == "async" else cfg.replace(sync_mode=True, Bp=args.sync_bp)
            for ka in args.ka_list:
                best = None
                best_ratio = base.Pp / base.Pd
                for ratio in (args.ratio_grid or (base.Pp / base.Pd,)):
                    probe_cfg = base.replace(Pp=ratio * base.Pd)
                    res = required_ebn0(
                        probe_cfg, ka, args.epsilon,
                        grid_db=(args.grid_min, args.grid_max), step_db=args.step,
                        trials=args.trials, workers=args.workers,
                    )
                    if args.ratio_grid:
                        print(f"  {mode} Ka={ka:g} Pp/Pd={ratio:g}: "
                              f"required {res.required_db:g} dB")
                    if best is None or res.required_db < best.required_db:
                        best, best_ratio = res, ratio
                res = best
                print(
                    f"{mode} Ka={ka:g}: required Eb/N0 = {res.required_db:g} dB "
                    f"(Pp/Pd = {best_ratio:g}), bracket {res.bracket}, "
                    f"pupe {res.pupe_at_required:.4f} +/- {res.halfwidth:.4f}"
                )
                rows.append([
                    mode, repr(float(ka)), repr(float(res.required_db)),
                    repr(float(res.bracket[0])), repr(float(res.bracket[1])),
                    repr(float(res.pupe_at_required)), repr(float(res.halfwidth)),
                    repr(float(best_ratio)),
                ])
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "Ka", "required_ebn0_db", "bracket_lo_db",
                        "bracket_hi_db", "pupe", "halfwidth", "pp_over_pd"])
            w.writerows(rows)
        print(f"wrote {args.output}")
        return 0

    if args.command == "mse-experiment":
        cfg = _build_config(args)
        mse_experiment(
            cfg, ka_list=args.ka_list, pp_grid_db=args.pp_grid_db,
            pd_over_sigma_db=args.pd_over_sigma_db,
            modes=tuple(args.modes.split(",")), trials=args.trials,
            workers=args.workers, output=args.output, sync_bp=args.sync_bp,
            timing=not args.no_timing,
        )
        print(f"wrote {args.output}")
        return 0

    if args.command == "single-trial":
        cfg = _build_config(args)
        if args.trace:
            logging.getLogger("urasim.receiver").setLevel(logging.DEBUG)
        if args.dump_schedule:
            sched = draw_schedule(cfg, derive_stream(cfg.seed, "schedule", args.trial))
            dump_schedule_csv(sched, args.dump_schedule)
        result = run_trial(cfg, args.trial)
        print(f"Eb/N0 {result.ebn0_db:.3f} dB, arrivals {result.K_aT}, "
              f"decoded {result.decoded_correct}, missed {result.missed}, "
              f"false alarms {result.false_alarms}, pupe {result.pupe:.4f}, "
              f"mse {result.mse:.6g}, {result.wall_time:.2f} s")
        return 0

    if args.command == "export-codebooks":
        cfg = _build_config(args)
        pilots, patterns = get_shared_codebooks(cfg)
        save_codebooks(args.output, pilots, patterns)
        print(f"wrote {args.output}")
        return 0

    if args.command == "polar-golden":
        cfg = _build_config(args)
        profile, _ = get_codec(cfg)
        polar.write_golden_vectors(
            args.output, profile, args.count, derive_stream(cfg.seed, "golden", 0)
        )
        print(f"wrote {args.output}")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
