"""Common pilot codebook and transmission-pattern matrix.

Both are shared by every transmitter and the receiver and are regenerated
deterministically from the master seed (labels "pilots" / "patterns").
Column j of each is selected by the integer value of a message's first Bp
bits, so pilot and pattern always travel together.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, derive_stream

__all__ = [
    "PilotCodebook",
    "PatternMatrix",
    "generate_pilots",
    "generate_patterns",
    "build_codebooks",
    "save_codebooks",
    "load_codebooks",
]

_SIDECAR_MAGIC = b"URACB01\x00"


@dataclass
class PilotCodebook:
    """Complex pilot matrix, np rows by N columns, column norm sqrt(np*Pp)."""

    entries: np.ndarray
    pilot_norm: float

    def __post_init__(self):
        self._fft_cache: dict[int, np.ndarray] = {}

    @property
    def np_(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    def conj_ffts(self, size: int) -> np.ndarray:
        """Conjugated column FFTs used by sliding correlation, cached by size."""
        cached = self._fft_cache.get(size)
        if cached is None:
            cached = np.conj(np.fft.fft(self.entries.T, n=size, axis=1))
            self._fft_cache[size] = cached
        return cached


@dataclass
class PatternMatrix:
    """ODMA placement patterns: nd active rows out of n - np, per column.

    Stored as sorted row indices (nd, N); `dense()` expands to the full
    binary matrix.
    """

    active_rows: np.ndarray  # (nd, N) int32, ascending per column
    n_rows: int              # n - np

    @property
    def weight(self) -> int:
        return self.active_rows.shape[0]

    @property
    def N(self) -> int:
        return self.active_rows.shape[1]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.N), dtype=np.uint8)
        out[self.active_rows, np.arange(self.N)[None, :]] = 1
        return out


def generate_pilots(cfg: SystemConfig, rng: np.random.Generator) -> PilotCodebook:
    """I.i.d. complex Gaussian entries, each column rescaled to norm sqrt(np*Pp)."""
    raw = rng.standard_normal((cfg.np_, cfg.N)) + 1j * rng.standard_normal((cfg.np_, cfg.N))
    norms = np.linalg.norm(raw, axis=0)
    norms[norms == 0.0] = 1.0  # cannot happen in practice; avoids 0/0
    target = float(np.sqrt(cfg.np_ * cfg.Pp))
    entries = raw * (target / norms)[None, :]
    return PilotCodebook(entries=entries, pilot_norm=target)


def generate_patterns(cfg: SystemConfig, rng: np.random.Generator) -> PatternMatrix:
    """Uniform nd-subset of the n - np data rows, independent per column."""
    n_rows = cfg.n - cfg.np_
    if cfg.nd > n_rows:
        raise ValueError(f"nd = {cfg.nd} exceeds data rows n - np = {n_rows}")
    cols = np.empty((cfg.nd, cfg.N), dtype=np.int32)
    for j in range(cfg.N):
        cols[:, j] = np.sort(rng.choice(n_rows, size=cfg.nd, replace=False))
    return PatternMatrix(active_rows=cols, n_rows=n_rows)


def build_codebooks(cfg: SystemConfig) -> tuple[PilotCodebook, PatternMatrix]:
    pilots = generate_pilots(cfg, derive_stream(cfg.seed, "pilots", 0))
    patterns = generate_patterns(cfg, derive_stream(cfg.seed, "patterns", 0))
    return pilots, patterns


def save_codebooks(path, pilots: PilotCodebook, patterns: PatternMatrix) -> None:
    """Binary sidecar: little-endian float64 pilots (row-major, re/im
    interleaved), then the pattern matrix as packed bits (row-major)."""
    dense = patterns.dense()
    packed = np.packbits(dense, axis=None)
    with open(path, "wb") as fh:
        fh.write(_SIDECAR_MAGIC)
        fh.write(struct.pack("<4I", pilots.np_, pilots.N, patterns.n_rows, patterns.N))
        fh.write(struct.pack("<I", patterns.weight))
        fh.write(struct.pack("<d", pilots.pilot_norm))
        inter = np.empty((pilots.np_, pilots.N, 2))
        inter[:, :, 0] = pilots.entries.real
        inter[:, :, 1] = pilots.entries.imag
        fh.write(inter.astype("<f8").tobytes())
        fh.write(packed.tobytes())


def load_codebooks(path) -> tuple[PilotCodebook, PatternMatrix]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _SIDECAR_MAGIC:
            raise ValueError(f"not a codebook sidecar file: {path}")
        np_, n_pil, n_rows, n_pat = struct.unpack("<4I", fh.read(16))
        weight, = struct.unpack("<I", fh.read(4))
        norm, = struct.unpack("<d", fh.read(8))
        inter = np.frombuffer(fh.read(np_ * n_pil * 2 * 8), dtype="<f8")
        inter = inter.reshape(np_, n_pil, 2)
        entries = inter[:, :, 0] + 1j * inter[:, :, 1]
        nbits = n_rows * n_pat
        packed = np.frombuffer(fh.read((nbits + 7) // 8), dtype=np.uint8)
        dense = np.unpackbits(packed, count=nbits).reshape(n_rows, n_pat)
        cols_idx, rows_idx = np.nonzero(dense.T)
        active = rows_idx.reshape(n_pat, weight).T
    pilots = PilotCodebook(entries=entries, pilot_norm=norm)
    patterns = PatternMatrix(active_rows=active.astype(np.int32), n_rows=n_rows)
    return pilots, patterns
