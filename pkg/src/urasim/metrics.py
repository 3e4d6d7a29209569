"""Per-user error rate, channel-estimation MSE, and energy accounting."""

from __future__ import annotations

import logging

import numpy as np

from .channel import ArrivalSchedule
from .config import SystemConfig
from .receiver import DecodedList, Detection

__all__ = ["compute_pupe", "match_decoded", "compute_mse", "compute_ebn0"]

logger = logging.getLogger("urasim.metrics")


def compute_pupe(schedule: ArrivalSchedule, decoded: DecodedList) -> float:
    """Fraction of arrivals whose exact message is absent from the output list.

    Arrivals sharing one message (vanishingly rare) are all satisfied by a
    single list entry.  An empty schedule returns 0 by convention.
    """
    if len(schedule) == 0:
        logger.warning("compute_pupe on an empty schedule; returning 0 by convention")
        return 0.0
    msgs = decoded.messages
    missed = sum(
        1 for ev in schedule.arrivals
        if tuple(int(b) for b in ev.message.bits) not in msgs
    )
    return missed / len(schedule)


def match_decoded(schedule: ArrivalSchedule, decoded: DecodedList) -> tuple[int, int, int]:
    """(decoded_correct, missed, false_alarms) by exact message content."""
    truth = [tuple(int(b) for b in ev.message.bits) for ev in schedule.arrivals]
    truth_set = set(truth)
    msgs = decoded.messages
    correct = sum(1 for t in truth if t in msgs)
    missed = len(truth) - correct
    false_alarms = sum(1 for m in msgs if m not in truth_set)
    return correct, missed, false_alarms


def compute_mse_components(
    schedule: ArrivalSchedule, estimates: list[Detection]
) -> tuple[float, float, float, int]:
    """(total mse, matched contribution, missed contribution, missed count).

    An estimate is matched to an arrival only on exact (start, pilot)
    agreement; a missed arrival contributes its full |h|^2 (estimate 0).
    """
    if len(schedule) == 0:
        return 0.0, 0.0, 0.0, 0
    table: dict[tuple[int, int], complex] = {}
    for det in estimates:
        key = (det.start, det.pilot_index)
        if det.h_hat is not None and key not in table:
            table[key] = det.h_hat
    matched_sum = 0.0
    missed_sum = 0.0
    n_missed = 0
    for ev in schedule.arrivals:
        h_hat = table.get((ev.delta, ev.message.pilot_index))
        if h_hat is None:
            missed_sum += abs(ev.h) ** 2
            n_missed += 1
        else:
            matched_sum += abs(h_hat - ev.h) ** 2
    count = len(schedule)
    return ((matched_sum + missed_sum) / count, matched_sum / count,
            missed_sum / count, n_missed)


def compute_mse(schedule: ArrivalSchedule, estimates: list[Detection]) -> float:
    """Mean squared channel-estimation error over all arrivals (missed folded in)."""
    return compute_mse_components(schedule, estimates)[0]


def compute_ebn0(cfg: SystemConfig) -> float:
    """Energy per bit over noise density, (nd*Pd + np*Pp) / (B*sigma2), in dB."""
    energy = cfg.nd * cfg.Pd + cfg.np_ * cfg.Pp
    if energy <= 0.0:
        return float("-inf")
    return 10.0 * np.log10(energy / (cfg.B * cfg.sigma2))
