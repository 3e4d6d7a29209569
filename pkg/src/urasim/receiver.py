"""Double sliding-window receiver.

Each inner window (two packet lengths) iterates joint start-time/pilot
detection, regularized LS channel estimation, single-user TIN decoding, and
SIC with joint re-estimation of the decoded users' gains.  The outer window
(Ns packets) re-runs the inner pass up to n_out times so users masked by
interference get further chances, then slides by Delta packets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import polar
from .codebooks import PatternMatrix, PilotCodebook
from .config import SystemConfig
from .txchain import Message, encode_packet, get_codec, index_to_bits

__all__ = [
    "Detection",
    "DecodedEntry",
    "DecodedList",
    "ResidualBuffer",
    "detect",
    "estimate_channels",
    "extract_llrs",
    "run_inner",
    "run_outer",
    "subtract_packets",
    "first_pass_estimates",
]

logger = logging.getLogger("urasim.receiver")

_SIGMA_EFF_FLOOR = 1e-12


@dataclass
class Detection:
    start: int          # absolute symbol index
    pilot_index: int
    score: float        # |correlation|
    h_hat: complex | None = None


@dataclass(frozen=True)
class DecodedEntry:
    bits: tuple[int, ...]   # full B-bit message (pilot bits ++ payload)
    start: int              # absolute symbol index
    window_id: int          # inner window offset in packets
    h_sic: complex


@dataclass
class DecodedList:
    """Unordered output list, deduplicated by exact message content."""

    _by_bits: dict[tuple[int, ...], DecodedEntry] = field(default_factory=dict)

    def add(self, entry: DecodedEntry) -> bool:
        if entry.bits in self._by_bits:
            return False
        self._by_bits[entry.bits] = entry
        return True

    @property
    def entries(self) -> list[DecodedEntry]:
        return list(self._by_bits.values())

    @property
    def messages(self) -> set[tuple[int, ...]]:
        return set(self._by_bits.keys())

    def __len__(self) -> int:
        return len(self._by_bits)


@dataclass
class ResidualBuffer:
    """Mutable copy of the received signal that SIC subtracts from."""

    samples: np.ndarray

    def window(self, offset: int, length: int) -> np.ndarray:
        return self.samples[offset: offset + length]


def _fft_size(m: int) -> int:
    return 1 << (m - 1).bit_length()


def detect(
    buffer: ResidualBuffer,
    offset: int,
    pilots: PilotCodebook,
    cfg: SystemConfig,
    exclude: set[tuple[int, int]] | None = None,
) -> list[Detection]:
    """Joint start-time and pilot detection over one inner window.

    Async mode: correlate every pilot against every start position in the
    first half of the window, keep the per-position best pilot, then the Ks
    highest-scoring positions overall.  Sync mode: starts are known to be
    frame aligned, so only the window's leading frame boundary is tested and
    the Ks best pilots there are returned.
    """
    n, np_ = cfg.n, cfg.np_
    ks = min(cfg.Ks, n if not cfg.sync_mode else cfg.N)
    if ks <= 0:
        return []
    if cfg.sync_mode:
        seg = buffer.samples[offset: offset + np_]
        corr = pilots.entries.conj().T @ seg        # (N,)
        scores = np.abs(corr)
        if exclude:
            for (s, p) in exclude:
                if s == offset:
                    scores[p] = -1.0
        order = np.lexsort((np.arange(cfg.N), -scores))[:ks]
        return [
            Detection(start=offset, pilot_index=int(j), score=float(scores[j]))
            for j in order
        ]

    m = n + np_ - 1
    seg = buffer.samples[offset: offset + m]
    size = _fft_size(m)
    yf = np.fft.fft(seg, n=size)
    corr = np.fft.ifft(yf[None, :] * pilots.conj_ffts(size), axis=1)[:, :n]
    scores = np.abs(corr)                           # (N, n)
    if exclude:
        for (s, p) in exclude:
            b = s - offset
            if 0 <= b < n:
                scores[p, b] = -1.0
    best_pilot = np.argmax(scores, axis=0)          # per-position survivor
    best_score = scores[best_pilot, np.arange(n)]
    order = np.lexsort((np.arange(n), -best_score))[:ks]
    return [
        Detection(
            start=offset + int(b),
            pilot_index=int(best_pilot[b]),
            score=float(best_score[b]),
        )
        for b in order
    ]


def _regularized_solve(A: np.ndarray, y: np.ndarray, reg: float) -> np.ndarray:
    """Solve (A^H A + reg I) h = A^H y; least-squares limit when reg = 0."""
    if reg > 0:
        gram = A.conj().T @ A
        gram[np.diag_indices_from(gram)] += reg
        rhs = A.conj().T @ y
        h = np.linalg.solve(gram, rhs)
        denom = np.linalg.norm(rhs)
        if denom > 0:
            resid = np.linalg.norm(gram @ h - rhs) / denom
            if resid > 1e-6:
                raise RuntimeError(f"channel estimation solve residual {resid:.3e} > 1e-6")
        return h
    return np.linalg.lstsq(A, y, rcond=None)[0]


def estimate_channels(
    buffer: ResidualBuffer,
    offset: int,
    detections: list[Detection],
    pilots: PilotCodebook,
    cfg: SystemConfig,
) -> list[Detection]:
    """Joint regularized LS gains for all detections of one window (fills h_hat)."""
    if not detections:
        return detections
    win = buffer.window(offset, 2 * cfg.n)
    A = np.zeros((2 * cfg.n, len(detections)), dtype=np.complex128)
    for i, det in enumerate(detections):
        b = det.start - offset
        A[b: b + cfg.np_, i] = pilots.entries[:, det.pilot_index]
    h = _regularized_solve(A, win, cfg.sigma2)
    for i, det in enumerate(detections):
        det.h_hat = complex(h[i])
    return detections


def extract_llrs(
    buffer: ResidualBuffer,
    det: Detection,
    patterns: PatternMatrix,
    cfg: SystemConfig,
) -> np.ndarray:
    """Per-symbol BPSK LLRs at the detection's active indices, interference
    treated as noise.  Symbols falling outside the buffer are erased."""
    if det.h_hat is None:
        raise ValueError("detection has no channel estimate")
    h = det.h_hat
    pos = det.start + cfg.np_ + patterns.active_rows[:, det.pilot_index].astype(np.int64)
    valid = (pos >= 0) & (pos < buffer.samples.size)
    y = buffer.samples[pos[valid]]
    # interference-plus-noise power seen at this user's symbols
    mean_pow = float(np.mean(np.abs(y) ** 2)) if y.size else cfg.sigma2
    sigma_eff = max(cfg.sigma2, mean_pow - (abs(h) ** 2) * cfg.Pd, _SIGMA_EFF_FLOOR)
    llr = np.zeros(cfg.nd)
    llr[valid] = 4.0 * np.sqrt(cfg.Pd) * (np.conj(h) * y).real / sigma_eff
    return np.clip(llr, -polar.LLR_CLAMP, polar.LLR_CLAMP)


def subtract_packets(
    buffer: ResidualBuffer,
    starts: list[int],
    packet_samples: list[np.ndarray],
    gains: list[complex],
) -> None:
    """SIC: subtract gain-scaled reconstructed packets at their start times."""
    for s, pkt, g in zip(starts, packet_samples, gains):
        buffer.samples[s: s + pkt.size] -= g * pkt


def run_inner(
    buffer: ResidualBuffer,
    offset: int,
    pilots: PilotCodebook,
    patterns: PatternMatrix,
    cfg: SystemConfig,
) -> list[DecodedEntry]:
    """Iterative decoding of one inner window (two packet lengths at `offset`).

    Detection excludes (start, pilot) pairs already decoded and subtracted in
    this window; repeats of an already-subtracted message are dropped without
    re-subtraction.
    """
    profile, crc = get_codec(cfg)
    win_id = offset // cfg.n
    out: list[DecodedEntry] = []
    seen_bits: set[tuple[int, ...]] = set()
    excluded: set[tuple[int, int]] = set()
    trace = logger.isEnabledFor(logging.DEBUG)

    for iteration in range(cfg.n_max):
        detections = detect(buffer, offset, pilots, cfg, exclude=excluded)
        if not detections:
            break
        estimate_channels(buffer, offset, detections, pilots, cfg)
        llrs = np.stack([extract_llrs(buffer, d, patterns, cfg) for d in detections])
        outcomes = polar.decode_scl_batch(llrs, profile, crc, cfg.list_size)

        # keep the best-scoring candidate per distinct message; repeats of
        # already-subtracted messages are ghosts and only extend the exclusion
        new: dict[tuple[int, ...], Detection] = {}
        for det, res in zip(detections, outcomes):
            if not res.ok:
                continue
            bits = tuple(
                int(b)
                for b in np.concatenate(
                    [index_to_bits(det.pilot_index, cfg.Bp), res.payload]
                )
            )
            if bits in seen_bits:
                excluded.add((det.start, det.pilot_index))
                continue
            prev = new.get(bits)
            if (
                prev is None
                or det.score > prev.score
                or (det.score == prev.score
                    and (det.start, det.pilot_index) < (prev.start, prev.pilot_index))
            ):
                new[bits] = det
        if trace:
            logger.debug(
                "window %d iter %d: detections %s -> %d decoded, residual energy %.6g",
                win_id, iteration,
                [(d.start, d.pilot_index, round(d.score, 3)) for d in detections],
                len(new),
                float(np.sum(np.abs(buffer.window(offset, 2 * cfg.n)) ** 2)),
            )
        if not new:
            break

        # joint re-estimation over the newly decoded packets, then SIC
        items = sorted(new.items(), key=lambda kv: (kv[1].start, kv[1].pilot_index))
        win = buffer.window(offset, 2 * cfg.n)
        X = np.zeros((2 * cfg.n, len(items)), dtype=np.complex128)
        recon: list[np.ndarray] = []
        for i, (bits, det) in enumerate(items):
            pkt = encode_packet(
                Message(bits=np.array(bits, dtype=np.uint8), Bp=cfg.Bp),
                pilots, patterns, cfg,
            )
            X[det.start - offset: det.start - offset + cfg.n, i] = pkt.samples
            recon.append(pkt.samples)
        h_sic = _regularized_solve(X, win, cfg.sigma2)
        subtract_packets(
            buffer,
            [det.start for _, det in items],
            recon,
            [complex(g) for g in h_sic],
        )
        for i, (bits, det) in enumerate(items):
            seen_bits.add(bits)
            excluded.add((det.start, det.pilot_index))
            out.append(
                DecodedEntry(
                    bits=bits, start=det.start, window_id=win_id,
                    h_sic=complex(h_sic[i]),
                )
            )
    return out


def run_outer(
    buffer: ResidualBuffer,
    pilots: PilotCodebook,
    patterns: PatternMatrix,
    cfg: SystemConfig,
) -> DecodedList:
    """Slide the outer window across the horizon and collect decoded messages."""
    result = DecodedList()
    frames = cfg.num_frames
    last = max(0, frames - (cfg.Ns - 2))
    positions = list(range(0, last + 1, cfg.Delta))
    if positions[-1] != last:
        positions.append(last)
    for p in positions:
        for outer_it in range(cfg.n_out):
            decoded_this_round = 0
            for w in range(cfg.Ns - 1):
                off_packets = p + w
                if off_packets > frames:
                    break
                entries = run_inner(buffer, off_packets * cfg.n, pilots, patterns, cfg)
                decoded_this_round += len(entries)
                for e in entries:
                    result.add(e)
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug(
                    "outer position %d iteration %d: %d decoded (total %d)",
                    p, outer_it, decoded_this_round, len(result),
                )
            if decoded_this_round == 0:
                break
    return result


def first_pass_estimates(
    samples: np.ndarray,
    pilots: PilotCodebook,
    cfg: SystemConfig,
) -> list[Detection]:
    """Detection plus channel estimation on the pristine signal, every inner
    window position, no SIC.  Feeds the channel-estimation MSE metric."""
    buffer = ResidualBuffer(samples=np.asarray(samples))
    ests: list[Detection] = []
    for w in range(cfg.num_frames + 1):
        dets = detect(buffer, w * cfg.n, pilots, cfg)
        estimate_channels(buffer, w * cfg.n, dets, pilots, cfg)
        ests.extend(dets)
    return ests
