"""Message-to-packet mapping: pilot part plus ODMA-spread BPSK data part.

The first Bp bits pick the pilot and pattern column; the remaining bits are
CRC-extended, polar encoded, BPSK mapped (0 -> +sqrt(Pd), 1 -> -sqrt(Pd)) and
scattered over the pattern's active rows in increasing row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import polar
from .codebooks import PatternMatrix, PilotCodebook
from .config import SystemConfig

__all__ = ["Message", "TxPacket", "get_codec", "encode_packet", "bits_to_index", "index_to_bits"]


def bits_to_index(bits: np.ndarray) -> int:
    """MSB-first integer value of a bit vector."""
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def index_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


@dataclass(frozen=True)
class Message:
    bits: np.ndarray  # (B,) uint8
    Bp: int

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8))

    @property
    def pilot_index(self) -> int:
        return bits_to_index(self.bits[: self.Bp])


@dataclass
class TxPacket:
    samples: np.ndarray          # (n,) complex
    pilot_index: int
    active_indices: np.ndarray   # (nd,) offsets within the data part, ascending


_CODEC_CACHE: dict[tuple[int, int, int], tuple[polar.RateProfile, polar.CrcSpec]] = {}


def get_codec(cfg: SystemConfig) -> tuple[polar.RateProfile, polar.CrcSpec]:
    key = (cfg.nc, cfg.k_info, cfg.r)
    got = _CODEC_CACHE.get(key)
    if got is None:
        got = (polar.build_profile(cfg.nc, cfg.k_info), polar.CrcSpec(width=cfg.r))
        _CODEC_CACHE[key] = got
    return got


def encode_packet(
    msg: Message,
    pilots: PilotCodebook,
    patterns: PatternMatrix,
    cfg: SystemConfig,
) -> TxPacket:
    bits = msg.bits
    if bits.size != cfg.B:
        raise ValueError(f"message must have {cfg.B} bits, got {bits.size}")
    j = msg.pilot_index
    profile, crc = get_codec(cfg)
    frame = polar.crc_append(bits[cfg.Bp:], crc)
    cw = polar.encode(frame, profile)
    symbols = np.sqrt(cfg.Pd) * (1.0 - 2.0 * cw.astype(np.float64))
    samples = np.zeros(cfg.n, dtype=np.complex128)
    samples[: cfg.np_] = pilots.entries[:, j]
    rows = patterns.active_rows[:, j]
    samples[cfg.np_ + rows] = symbols
    return TxPacket(samples=samples, pilot_index=j, active_indices=rows.copy())
