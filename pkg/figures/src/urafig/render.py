"""Render result figures from simulator CSV output.

Two figure kinds:

* ``mse-vs-pp``   -- channel-estimation MSE (dB) against pilot power (dB over
  the noise floor), one series per (mode, Ka), from a sweep/mse-experiment
  CSV with per-trial rows and one ``agg`` row per sweep point.
* ``ebn0-vs-ka``  -- required energy per bit (dB) against the per-packet load,
  one series per mode, from a required-ebn0 summary CSV.

Point values are taken verbatim from the aggregate/summary rows; error bars
come from the per-trial spread (mse) or the reported half-width (ebn0).
Every render also writes a plain-text sidecar table of the plotted values so
runs can be diffed without image tooling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["FigureSpec", "RenderError", "render"]

KINDS = ("mse-vs-pp", "ebn0-vs-ka")

_MSE_COLUMNS = ("mode", "Ka", "Pp", "sigma2", "trial", "mse_db")
_EBN0_COLUMNS = ("mode", "Ka", "required_ebn0_db", "halfwidth")


class RenderError(ValueError):
    pass


@dataclass
class FigureSpec:
    csv_path: str
    kind: str
    output: str
    sidecar: str | None = None         # default: output path + ".table.txt"
    modes: tuple[str, ...] | None = None   # series filters; None = all
    ka_values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if self.sidecar is None:
            self.sidecar = self.output + ".table.txt"


@dataclass
class _Series:
    label: str
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    yerr: list[float] = field(default_factory=list)


def _read_rows(path: str, required: tuple[str, ...]) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise RenderError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise RenderError(f"{path}: no data rows")
    return rows


def _keep(spec: FigureSpec, mode: str, ka: float) -> bool:
    if spec.modes is not None and mode not in spec.modes:
        return False
    if spec.ka_values is not None and not any(
        math.isclose(ka, v, rel_tol=0, abs_tol=1e-12) for v in spec.ka_values
    ):
        return False
    return True


def _stderr(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    if len(finite) < 2:
        return 0.0
    mean = sum(finite) / len(finite)
    var = sum((v - mean) ** 2 for v in finite) / (len(finite) - 1)
    return math.sqrt(var / len(finite))


def _mse_series(spec: FigureSpec) -> list[_Series]:
    rows = _read_rows(spec.csv_path, _MSE_COLUMNS)
    by_series: dict[tuple[str, float], _Series] = {}
    # aggregate rows carry the point value; trial rows feed the error bar
    trial_dbs: dict[tuple[str, float, float], list[float]] = {}
    agg: dict[tuple[str, float, float], float] = {}
    for row in rows:
        mode, ka = row["mode"], float(row["Ka"])
        if not _keep(spec, mode, ka):
            continue
        pp_db = 10.0 * math.log10(float(row["Pp"]) / float(row["sigma2"]))
        key = (mode, ka, pp_db)
        if row["trial"] == "agg":
            agg[key] = float(row["mse_db"])
        else:
            trial_dbs.setdefault(key, []).append(float(row["mse_db"]))
    for (mode, ka, pp_db), value in sorted(agg.items()):
        skey = (mode, ka)
        series = by_series.setdefault(skey, _Series(label=f"{mode} Ka={ka:g}"))
        series.x.append(pp_db)
        series.y.append(value)
        series.yerr.append(_stderr(trial_dbs.get((mode, ka, pp_db), [])))
    return list(by_series.values())


def _ebn0_series(spec: FigureSpec) -> list[_Series]:
    rows = _read_rows(spec.csv_path, _EBN0_COLUMNS)
    by_mode: dict[str, _Series] = {}
    for row in rows:
        mode, ka = row["mode"], float(row["Ka"])
        if not _keep(spec, mode, ka):
            continue
        series = by_mode.setdefault(mode, _Series(label=mode))
        series.x.append(ka)
        series.y.append(float(row["required_ebn0_db"]))
        series.yerr.append(float(row["halfwidth"]))
    for series in by_mode.values():
        order = sorted(range(len(series.x)), key=lambda i: series.x[i])
        series.x = [series.x[i] for i in order]
        series.y = [series.y[i] for i in order]
        series.yerr = [series.yerr[i] for i in order]
    return list(by_mode.values())


def _write_sidecar(path: str, kind: str, series: list[_Series]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind: {kind}\n")
        fh.write("series\tx\ty\tyerr\n")
        for s in series:
            for x, y, e in zip(s.x, s.y, s.yerr):
                fh.write(f"{s.label}\t{x!r}\t{y!r}\t{e!r}\n")


def render(spec: FigureSpec) -> tuple[str, str]:
    """Render `spec`; returns (image path, sidecar path)."""
    series = _mse_series(spec) if spec.kind == "mse-vs-pp" else _ebn0_series(spec)
    series = [s for s in series if s.x]
    if not series:
        raise RenderError(
            f"no series after filtering (modes={spec.modes}, ka={spec.ka_values})"
        )

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for s in sorted(series, key=lambda s: s.label):
        ax.errorbar(s.x, s.y, yerr=s.yerr, marker="o", capsize=3, label=s.label)
    if spec.kind == "mse-vs-pp":
        ax.set_xlabel("pilot power over noise floor (dB)")
        ax.set_ylabel("channel estimation MSE (dB)")
    else:
        ax.set_xlabel("packet arrivals per packet duration")
        ax.set_ylabel("required Eb/N0 (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)

    _write_sidecar(spec.sidecar, spec.kind, series)
    return spec.output, spec.sidecar
