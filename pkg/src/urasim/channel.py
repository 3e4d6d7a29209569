"""Asynchronous arrival generation and received-signal synthesis.

Arrivals over [0, T) follow a Poisson process with mean Ka per packet
duration (or exactly round(Ka*T/n) arrivals in fixed-count mode); each
carries an i.i.d. CN(0,1) quasi-static fading coefficient and a uniform
random message.  The observation buffer spans [0, T + 2n) so packets
starting near T are fully contained.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .codebooks import PatternMatrix, PilotCodebook
from .config import SystemConfig
from .txchain import Message, TxPacket, encode_packet

__all__ = ["ArrivalEvent", "ArrivalSchedule", "ReceivedSignal", "draw_schedule",
           "synthesize", "encode_all", "dump_schedule_csv"]


@dataclass(frozen=True)
class ArrivalEvent:
    user_id: int
    delta: int          # start time, symbol index in [0, T)
    h: complex          # quasi-static fading coefficient
    message: Message


@dataclass(frozen=True)
class ArrivalSchedule:
    arrivals: tuple[ArrivalEvent, ...]
    horizon_T: int

    def __len__(self) -> int:
        return len(self.arrivals)


@dataclass
class ReceivedSignal:
    samples: np.ndarray  # (T + 2n,) complex
    sigma2: float


def draw_schedule(cfg: SystemConfig, rng: np.random.Generator) -> ArrivalSchedule:
    """Draw arrival count, start times, fading, and messages for one trial."""
    mean_count = cfg.Ka * cfg.T / cfg.n
    if cfg.fixed_arrivals:
        count = int(np.floor(mean_count + 0.5))
    else:
        count = int(rng.poisson(mean_count))
    if cfg.sync_mode:
        deltas = rng.integers(0, cfg.num_frames, size=count) * cfg.n
    else:
        deltas = rng.integers(0, cfg.T, size=count)
    h = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2.0)
    bits = rng.integers(0, 2, size=(count, cfg.B), dtype=np.uint8)
    order = np.argsort(deltas, kind="stable")
    arrivals = tuple(
        ArrivalEvent(
            user_id=uid,
            delta=int(deltas[i]),
            h=complex(h[i]),
            message=Message(bits=bits[i], Bp=cfg.Bp),
        )
        for uid, i in enumerate(order)
    )
    return ArrivalSchedule(arrivals=arrivals, horizon_T=cfg.T)


def encode_all(
    schedule: ArrivalSchedule,
    pilots: PilotCodebook,
    patterns: PatternMatrix,
    cfg: SystemConfig,
) -> list[TxPacket]:
    return [encode_packet(ev.message, pilots, patterns, cfg) for ev in schedule.arrivals]


def synthesize(
    schedule: ArrivalSchedule,
    packets: list[TxPacket],
    cfg: SystemConfig,
    rng: np.random.Generator,
) -> ReceivedSignal:
    """Superimpose faded, shifted packets and add complex AWGN."""
    if len(packets) != len(schedule.arrivals):
        raise ValueError("one packet per arrival required")
    total = cfg.T + 2 * cfg.n
    samples = np.zeros(total, dtype=np.complex128)
    for ev, pkt in zip(schedule.arrivals, packets):
        samples[ev.delta: ev.delta + cfg.n] += ev.h * pkt.samples
    if cfg.sigma2 > 0:
        noise = (rng.standard_normal(total) + 1j * rng.standard_normal(total))
        samples += np.sqrt(cfg.sigma2 / 2.0) * noise
    return ReceivedSignal(samples=samples, sigma2=cfg.sigma2)


def dump_schedule_csv(schedule: ArrivalSchedule, path) -> None:
    """Ground-truth trace: user_id, delta, Re h, Im h, pilot_index, message hex."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "delta", "re_h", "im_h", "pilot_index", "message_hex"])
        for ev in schedule.arrivals:
            bits = ev.message.bits
            pad = (-bits.size) % 4
            padded = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
            hexstr = "%x" % int("".join(map(str, padded)), 2) if bits.size else ""
            hexstr = hexstr.zfill((bits.size + pad) // 4)
            w.writerow([ev.user_id, ev.delta, repr(ev.h.real), repr(ev.h.imag),
                        ev.message.pilot_index, hexstr])
