"""System configuration, validation, and the deterministic RNG contract.

Every scalar parameter of the transmission scheme and the receiver lives in
:class:`SystemConfig`.  All randomness anywhere in the simulator is drawn from
substreams produced by :func:`derive_stream`, so two runs with the same master
seed are bit-identical regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemConfig",
    "ValidationReport",
    "validate",
    "derive_stream",
    "desk_config",
    "fullscale_config",
    "load_config",
    "config_to_dict",
]


@dataclass(frozen=True)
class SystemConfig:
    """All scheme parameters.  Immutable; share freely across workers.

    Powers are per complex symbol, sigma2 is the complex AWGN variance.
    Ka is the average number of packet arrivals per packet duration n.
    """

    n: int = 10000          # packet length in channel symbols
    B: int = 100            # message length in bits
    Bp: int = 4             # pilot-selection bits, N = 2**Bp sequences
    np_: int = 3000         # pilot length in symbols ("np" collides with numpy)
    nc: int = 512           # polar code length (power of two); nd = nc for BPSK
    r: int = 16             # CRC length in bits
    list_size: int = 32     # SCL decoder list size
    Pp: float = 0.1         # average pilot symbol power
    Pd: float = 10.0        # average data symbol power
    sigma2: float = 1.0     # complex AWGN variance
    Ka: float = 50.0        # average packet arrivals per packet duration
    u: int = 10             # detection margin on Ka
    Ns: int = 5             # outer window length in packets
    Delta: int = 1          # outer window shift in packets
    n_max: int = 50         # max inner iterations
    n_out: int = 10         # max outer iterations
    T: int = 200000         # arrival horizon in symbols (multiple of n)
    sync_mode: bool = False  # frame-aligned arrivals (benchmark mode)
    fixed_arrivals: bool = False  # exactly round(Ka*T/n) arrivals instead of Poisson
    seed: int = 0           # master RNG seed
    N: int | None = None    # pilot codebook size; auto-set to 2**Bp

    def __post_init__(self):
        if self.N is None:
            object.__setattr__(self, "N", 2 ** self.Bp)

    @property
    def nd(self) -> int:
        return self.nc

    @property
    def Ks(self) -> int:
        """Number of detections kept per inner window: round(Ka) + u."""
        return int(np.floor(self.Ka + 0.5)) + self.u

    @property
    def k_info(self) -> int:
        """Polar information length B - Bp + r (payload plus CRC)."""
        return self.B - self.Bp + self.r

    @property
    def num_frames(self) -> int:
        return self.T // self.n

    def replace(self, **kwargs) -> "SystemConfig":
        if "Bp" in kwargs and "N" not in kwargs:
            kwargs["N"] = 2 ** kwargs["Bp"]
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def validate(cfg: SystemConfig) -> ValidationReport:
    """Check mutual consistency of all config fields.  Pure, report-style."""
    v: list[str] = []
    if cfg.n <= 0:
        v.append(f"n must be positive, got {cfg.n}")
    if cfg.B <= 0:
        v.append(f"B must be positive, got {cfg.B}")
    if cfg.Bp <= 0 or cfg.Bp >= cfg.B:
        v.append(f"Bp must be in (0, B), got {cfg.Bp}")
    if cfg.np_ <= 0:
        v.append(f"np must be positive, got {cfg.np_}")
    if not _is_pow2(cfg.nc) or cfg.nc > 1024:
        v.append(f"nc must be a power of two <= 1024, got {cfg.nc}")
    if cfg.r < 0:
        v.append(f"r must be nonnegative, got {cfg.r}")
    if cfg.list_size < 1:
        v.append(f"list_size must be >= 1, got {cfg.list_size}")
    if cfg.Pp < 0 or cfg.Pd < 0:
        v.append(f"powers must be nonnegative, got Pp={cfg.Pp}, Pd={cfg.Pd}")
    if cfg.sigma2 <= 0:
        v.append(f"sigma2 must be positive, got {cfg.sigma2}")
    if cfg.Ka <= 0:
        v.append(f"Ka must be positive, got {cfg.Ka}")
    if cfg.u < 0:
        v.append(f"u must be nonnegative, got {cfg.u}")
    if cfg.Ns < 2:
        v.append(f"Ns must be >= 2, got {cfg.Ns}")
    if cfg.Delta < 1:
        v.append(f"Delta must be positive, got {cfg.Delta}")
    if cfg.n_max < 1 or cfg.n_out < 1:
        v.append(f"iteration caps must be positive, got n_max={cfg.n_max}, n_out={cfg.n_out}")
    if cfg.T <= 0:
        v.append(f"T must be positive, got {cfg.T}")
    elif cfg.n > 0 and cfg.T % cfg.n != 0:
        v.append(f"T must be a multiple of n, got T={cfg.T}, n={cfg.n}")
    if cfg.np_ + cfg.nd > cfg.n:
        v.append(f"np + nd must not exceed n, got {cfg.np_} + {cfg.nd} > {cfg.n}")
    if cfg.B - cfg.Bp + cfg.r > cfg.nc:
        v.append(
            f"polar code too short: B - Bp + r = {cfg.B - cfg.Bp + cfg.r} > nc = {cfg.nc}"
        )
    if cfg.N != 2 ** cfg.Bp:
        v.append(f"N must equal 2**Bp, got N={cfg.N}, Bp={cfg.Bp}")
    return ValidationReport(ok=not v, violations=tuple(v))


def derive_stream(seed: int, label: str, index: int) -> np.random.Generator:
    """Deterministic, independent-by-construction RNG substream.

    Same (seed, label, index) always yields the identical stream; distinct
    labels or indices yield unrelated streams.
    """
    label_key = int.from_bytes(label.encode("utf-8"), "little") if label else 0
    ss = np.random.SeedSequence(entropy=[int(seed) & (2**64 - 1), label_key, int(index)])
    return np.random.Generator(np.random.PCG64(ss))


def desk_config(**overrides) -> SystemConfig:
    """Small configuration used by the end-to-end test suites."""
    base = dict(
        n=1000, B=60, Bp=4, np_=300, nc=128, r=16, list_size=16,
        Pp=0.5, Pd=6.0, sigma2=1.0, Ka=2.0, u=10,
        Ns=5, Delta=1, n_max=50, n_out=10, T=10000, seed=0,
    )
    base.update(overrides)
    return SystemConfig(**base)


def fullscale_config(**overrides) -> SystemConfig:
    """Default full-scale configuration (packet length 10000)."""
    base = dict(
        n=10000, B=100, Bp=4, np_=3000, nc=512, r=16, list_size=32,
        Pp=0.1, Pd=10.0, sigma2=1.0, Ka=50.0, u=10,
        Ns=5, Delta=1, n_max=50, n_out=10, T=200000, seed=0,
    )
    base.update(overrides)
    return SystemConfig(**base)


_FIELD_ALIASES = {"np": "np_"}  # config files may use the plain name


def config_to_dict(cfg: SystemConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["np"] = d.pop("np_")
    return d


def load_config(path: str, **overrides) -> SystemConfig:
    """Load a flat JSON key-value config file; kwargs override file values."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a flat JSON object")
    merged: dict = {}
    for key, val in raw.items():
        merged[_FIELD_ALIASES.get(key, key)] = val
    merged.update(overrides)
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return SystemConfig(**merged)
