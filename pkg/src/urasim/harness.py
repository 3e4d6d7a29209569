"""Monte Carlo harness: trials, sweeps, required-energy search, CSV output.

Trials are independent units keyed by (master seed, trial index), so any
worker count produces identical results.  CSV rows follow the fixed schema
documented in README.md; one aggregate row (trial column "agg") follows the
per-trial rows of each sweep point.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import draw_schedule, encode_all, synthesize
from .codebooks import PatternMatrix, PilotCodebook, generate_patterns, generate_pilots
from .config import SystemConfig, derive_stream, validate
from .metrics import compute_ebn0, compute_mse_components, compute_pupe, match_decoded
from .receiver import ResidualBuffer, first_pass_estimates, run_outer

__all__ = [
    "HarnessConfig",
    "TrialResult",
    "SweepPoint",
    "RequiredEbn0Result",
    "CSV_COLUMNS",
    "run_trial",
    "run_point",
    "run_sweep",
    "required_ebn0",
    "mse_experiment",
    "with_ebn0",
    "sync_counterpart",
]

logger = logging.getLogger("urasim.harness")

CSV_COLUMNS = [
    "sweep_id", "mode", "Ka", "Pp", "Pd", "sigma2", "ebn0_db", "trial",
    "K_aT", "decoded", "missed", "false_alarms", "pupe", "mse_db", "seconds",
]

DEFAULT_SYNC_BP = 13  # larger pilot space for the frame-aligned benchmark


@dataclass(frozen=True)
class TrialResult:
    K_aT: int
    decoded_correct: int
    missed: int
    false_alarms: int
    pupe: float
    mse: float        # linear; nan when not measured
    ebn0_db: float
    wall_time: float


@dataclass(frozen=True)
class SweepPoint:
    sweep_id: str
    cfg: SystemConfig


@dataclass
class HarnessConfig:
    base: SystemConfig
    trials: int = 100
    workers: int = 1
    ka_list: tuple[float, ...] | None = None
    ebn0_grid_db: tuple[float, ...] | None = None
    pp_grid: tuple[float, ...] | None = None
    modes: tuple[str, ...] = ("async",)
    target_pupe: float = 0.1
    output: str = "sweep.csv"
    sync_bp: int = DEFAULT_SYNC_BP
    decode: bool = True
    measure_mse: bool = True
    timing: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.target_pupe <= 1.0:
            raise ValueError("target_pupe must be in (0, 1]")
        axes = [a for a in (self.ka_list, self.ebn0_grid_db, self.pp_grid) if a]
        if len(axes) > 1:
            raise ValueError("choose at most one sweep axis")


@lru_cache(maxsize=4)
def _codebooks_for(seed: int, n: int, np_: int, N: int, nd: int, Pp: float,
                   ) -> tuple[PilotCodebook, PatternMatrix]:
    # only the geometry fields matter for codebook generation
    cfg = SystemConfig(n=n, B=2, Bp=1, np_=np_, nc=nd, r=0, Pp=Pp, N=N, seed=seed)
    pilots = generate_pilots(cfg, derive_stream(seed, "pilots", 0))
    patterns = generate_patterns(cfg, derive_stream(seed, "patterns", 0))
    return pilots, patterns


def get_shared_codebooks(cfg: SystemConfig) -> tuple[PilotCodebook, PatternMatrix]:
    return _codebooks_for(cfg.seed, cfg.n, cfg.np_, cfg.N, cfg.nd, cfg.Pp)


def with_ebn0(cfg: SystemConfig, target_db: float) -> SystemConfig:
    """Scale Pp and Pd jointly (ratio preserved) to hit a target Eb/N0."""
    current = compute_ebn0(cfg)
    if not np.isfinite(current):
        raise ValueError("cannot scale a zero-power configuration")
    scale = 10.0 ** ((target_db - current) / 10.0)
    return cfg.replace(Pp=cfg.Pp * scale, Pd=cfg.Pd * scale)


def sync_counterpart(cfg: SystemConfig, sync_bp: int = DEFAULT_SYNC_BP) -> SystemConfig:
    """Frame-aligned benchmark: same energy budget, larger pilot space."""
    return cfg.replace(sync_mode=True, Bp=sync_bp)


def run_trial(
    cfg: SystemConfig,
    trial_idx: int,
    decode: bool = True,
    measure_mse: bool = True,
) -> TrialResult:
    t0 = time.perf_counter()
    pilots, patterns = get_shared_codebooks(cfg)
    schedule = draw_schedule(cfg, derive_stream(cfg.seed, "schedule", trial_idx))
    packets = encode_all(schedule, pilots, patterns, cfg)
    rx = synthesize(schedule, packets, cfg, derive_stream(cfg.seed, "noise", trial_idx))

    mse = float("nan")
    if measure_mse:
        estimates = first_pass_estimates(rx.samples, pilots, cfg)
        mse, matched_part, missed_part, n_missed = \
            compute_mse_components(schedule, estimates)
        logger.debug(
            "trial %d mse %.6g (matched %.6g, undetected %.6g over %d users)",
            trial_idx, mse, matched_part, missed_part, n_missed,
        )

    if decode:
        decoded = run_outer(ResidualBuffer(rx.samples.copy()), pilots, patterns, cfg)
        pupe = compute_pupe(schedule, decoded)
        correct, missed, false_alarms = match_decoded(schedule, decoded)
    else:
        pupe, correct, missed, false_alarms = float("nan"), 0, 0, 0

    return TrialResult(
        K_aT=len(schedule),
        decoded_correct=correct,
        missed=missed,
        false_alarms=false_alarms,
        pupe=pupe,
        mse=mse,
        ebn0_db=compute_ebn0(cfg),
        wall_time=time.perf_counter() - t0,
    )


def _trial_task(args) -> TrialResult:
    cfg, trial_idx, decode, measure_mse = args
    return run_trial(cfg, trial_idx, decode=decode, measure_mse=measure_mse)


def run_point(
    cfg: SystemConfig,
    trials: int,
    workers: int = 1,
    decode: bool = True,
    measure_mse: bool = True,
) -> list[TrialResult]:
    """All trials of one sweep point, in trial order regardless of workers."""
    report = validate(cfg)
    if not report.ok:
        raise ValueError(f"invalid configuration: {report.violations}")
    tasks = [(cfg, i, decode, measure_mse) for i in range(trials)]
    if workers <= 1:
        return [_trial_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_task, tasks, chunksize=1))


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _mse_db(mse_linear: float) -> float:
    if np.isnan(mse_linear):
        return float("nan")
    if mse_linear <= 0.0:
        return float("-inf")
    return float(10.0 * np.log10(mse_linear))


def pooled_pupe(results: list[TrialResult]) -> float:
    """Per-user estimate over all trials: total missed / total arrivals."""
    total_users = sum(r.K_aT for r in results)
    if total_users == 0:
        return 0.0
    return sum(r.missed for r in results) / total_users


def mean_trial_pupe(results: list[TrialResult]) -> float:
    vals = np.array([r.pupe for r in results], dtype=float)
    return float(np.mean(vals))


def _point_rows(point: SweepPoint, results: list[TrialResult], timing: bool) -> list[list[str]]:
    cfg = point.cfg
    mode = "sync" if cfg.sync_mode else "async"
    rows = []
    for i, r in enumerate(results):
        rows.append([
            point.sweep_id, mode, _fmt(float(cfg.Ka)), _fmt(float(cfg.Pp)),
            _fmt(float(cfg.Pd)), _fmt(float(cfg.sigma2)), _fmt(r.ebn0_db),
            str(i), str(r.K_aT), str(r.decoded_correct), str(r.missed),
            str(r.false_alarms), _fmt(r.pupe), _fmt(_mse_db(r.mse)),
            _fmt(r.wall_time if timing else 0.0),
        ])
    mses = np.array([r.mse for r in results], dtype=float)
    agg_mse = float(np.mean(mses))  # nan propagates when not measured
    agg_pupe = float("nan") if all(np.isnan(r.pupe) for r in results) \
        else pooled_pupe(results)
    rows.append([
        point.sweep_id, mode, _fmt(float(cfg.Ka)), _fmt(float(cfg.Pp)),
        _fmt(float(cfg.Pd)), _fmt(float(cfg.sigma2)), _fmt(compute_ebn0(cfg)),
        "agg", str(sum(r.K_aT for r in results)),
        str(sum(r.decoded_correct for r in results)),
        str(sum(r.missed for r in results)),
        str(sum(r.false_alarms for r in results)),
        _fmt(agg_pupe), _fmt(_mse_db(agg_mse)),
        _fmt(sum(r.wall_time for r in results) if timing else 0.0),
    ])
    return rows


def build_sweep_points(hcfg: HarnessConfig) -> list[SweepPoint]:
    points: list[SweepPoint] = []
    for mode in hcfg.modes:
        if mode not in ("async", "sync"):
            raise ValueError(f"unknown mode {mode!r}")
        base = hcfg.base if mode == "async" else sync_counterpart(hcfg.base, hcfg.sync_bp)
        if hcfg.ka_list:
            for ka in hcfg.ka_list:
                points.append(SweepPoint(f"{mode}-Ka{ka:g}", base.replace(Ka=float(ka))))
        elif hcfg.ebn0_grid_db:
            for db in hcfg.ebn0_grid_db:
                points.append(SweepPoint(f"{mode}-EbN0_{db:g}dB", with_ebn0(base, db)))
        elif hcfg.pp_grid:
            for pp in hcfg.pp_grid:
                points.append(SweepPoint(f"{mode}-Pp{pp:g}", base.replace(Pp=float(pp))))
        else:
            points.append(SweepPoint(f"{mode}-base", base))
    return points


def run_sweep(hcfg: HarnessConfig) -> list[list[str]]:
    """Run every sweep point and write the CSV; returns the written rows."""
    points = build_sweep_points(hcfg)
    all_rows: list[list[str]] = []
    for point in points:
        logger.info("sweep point %s: %d trials", point.sweep_id, hcfg.trials)
        try:
            results = run_point(
                point.cfg, hcfg.trials, workers=hcfg.workers,
                decode=hcfg.decode, measure_mse=hcfg.measure_mse,
            )
        except Exception as exc:
            raise RuntimeError(f"sweep point {point.sweep_id} failed: {exc}") from exc
        all_rows.extend(_point_rows(point, results, hcfg.timing))
    with open(hcfg.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(all_rows)
    return all_rows


# ---------------------------------------------------------------------------
# Required energy per bit
# ---------------------------------------------------------------------------

@dataclass
class RequiredEbn0Result:
    ka: float
    mode: str
    required_db: float                 # inf when no grid point reaches epsilon
    bracket: tuple[float, float]       # (largest failing, smallest passing)
    pupe_at_required: float
    halfwidth: float                   # 1.96 * stderr of per-trial PUPE
    probes: list[tuple[float, float, float, float]] = field(default_factory=list)
    # (ebn0_db, pooled_pupe, mean_pupe, stderr) per probed grid point


def required_ebn0(
    cfg: SystemConfig,
    ka: float,
    eps: float,
    grid_db: tuple[float, float] = (0.0, 24.0),
    step_db: float = 0.25,
    trials: int = 50,
    workers: int = 1,
) -> RequiredEbn0Result:
    """Smallest grid Eb/N0 with mean PUPE <= eps, found by bisection.

    The Pp/Pd ratio of `cfg` is held fixed; trials are seed-paired across
    probes so PUPE is monotone in transmit power with high probability.
    """
    base = cfg.replace(Ka=float(ka))
    mode = "sync" if base.sync_mode else "async"
    lo_db, hi_db = grid_db
    n_steps = int(np.floor((hi_db - lo_db) / step_db + 1e-9))
    points = [round(lo_db + i * step_db, 10) for i in range(n_steps + 1)]
    probes: dict[int, tuple[float, float, float]] = {}

    def eval_idx(idx: int) -> float:
        if idx not in probes:
            probe_cfg = with_ebn0(base, points[idx])
            results = run_point(probe_cfg, trials, workers=workers, measure_mse=False)
            pooled = pooled_pupe(results)
            per_trial = np.array([r.pupe for r in results], dtype=float)
            stderr = float(np.std(per_trial, ddof=1) / np.sqrt(len(per_trial))) \
                if len(per_trial) > 1 else 0.0
            probes[idx] = (pooled, float(np.mean(per_trial)), stderr)
            logger.info("probe %s Ka=%g %.2f dB: pupe=%.4f", mode, ka, points[idx], pooled)
        return probes[idx][0]

    def finish(required_idx: int | None, fail_idx: int | None) -> RequiredEbn0Result:
        probe_rows = [
            (points[i], *probes[i]) for i in sorted(probes.keys())
        ]
        if required_idx is None:
            return RequiredEbn0Result(
                ka=ka, mode=mode, required_db=float("inf"),
                bracket=(points[-1], float("inf")),
                pupe_at_required=float("nan"), halfwidth=float("nan"),
                probes=probe_rows,
            )
        pooled, _mean, stderr = probes[required_idx]
        lo_val = points[fail_idx] if fail_idx is not None else float("-inf")
        return RequiredEbn0Result(
            ka=ka, mode=mode, required_db=points[required_idx],
            bracket=(lo_val, points[required_idx]),
            pupe_at_required=pooled, halfwidth=1.96 * stderr,
            probes=probe_rows,
        )

    hi = len(points) - 1
    if eval_idx(hi) > eps:
        return finish(None, hi)
    lo = 0
    if eval_idx(lo) <= eps:
        return finish(lo, None)
    # invariant: pupe(points[lo]) > eps, pupe(points[hi]) <= eps
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if eval_idx(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return finish(hi, lo)


# ---------------------------------------------------------------------------
# Channel-estimation MSE experiment
# ---------------------------------------------------------------------------

def mse_experiment(
    base: SystemConfig,
    ka_list: tuple[float, ...],
    pp_grid_db: tuple[float, ...],
    pd_over_sigma_db: float = 10.0,
    modes: tuple[str, ...] = ("async", "sync"),
    trials: int = 100,
    workers: int = 1,
    output: str = "mse.csv",
    sync_bp: int = DEFAULT_SYNC_BP,
    timing: bool = True,
) -> list[list[str]]:
    """Estimation-only sweep over pilot power at fixed Pd/sigma2, both modes.

    Rows carry pupe = nan (no decoding is performed).
    """
    pd = base.sigma2 * 10.0 ** (pd_over_sigma_db / 10.0)
    all_rows: list[list[str]] = []
    for mode in modes:
        mode_base = base if mode == "async" else sync_counterpart(base, sync_bp)
        for ka in ka_list:
            for pp_db in pp_grid_db:
                pp = base.sigma2 * 10.0 ** (pp_db / 10.0)
                cfg = mode_base.replace(Ka=float(ka), Pp=pp, Pd=pd)
                point = SweepPoint(f"{mode}-Ka{ka:g}-Pp{pp_db:g}dB", cfg)
                results = run_point(
                    cfg, trials, workers=workers, decode=False, measure_mse=True,
                )
                all_rows.extend(_point_rows(point, results, timing))
                logger.info("mse point %s done", point.sweep_id)
    with open(output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(all_rows)
    return all_rows
