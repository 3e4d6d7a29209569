import numpy as np
import pytest

from urasim.channel import ArrivalEvent, ArrivalSchedule
from urasim.config import desk_config
from urasim.metrics import compute_ebn0, compute_mse, compute_pupe, match_decoded
from urasim.receiver import DecodedEntry, DecodedList, Detection
from urasim.txchain import Message


def _schedule(messages, deltas=None, hs=None):
    events = []
    for i, bits in enumerate(messages):
        events.append(ArrivalEvent(
            user_id=i,
            delta=0 if deltas is None else deltas[i],
            h=1.0 + 0j if hs is None else hs[i],
            message=Message(bits=np.array(bits, dtype=np.uint8), Bp=2),
        ))
    return ArrivalSchedule(arrivals=tuple(events), horizon_T=1000)


def _decoded(messages):
    lst = DecodedList()
    for i, bits in enumerate(messages):
        lst.add(DecodedEntry(bits=tuple(bits), start=i, window_id=0, h_sic=1.0 + 0j))
    return lst


M1, M2, M3 = (0, 0, 1, 0), (1, 0, 1, 1), (0, 1, 1, 1)


def test_pupe_partial():
    sched = _schedule([M1, M2, M3])
    assert compute_pupe(sched, _decoded([M1, M2])) == pytest.approx(1 / 3)


def test_pupe_perfect():
    sched = _schedule([M1, M2, M3])
    assert compute_pupe(sched, _decoded([M3, M1, M2])) == 0.0


def test_pupe_total_failure():
    sched = _schedule([M1] * 7)
    assert compute_pupe(sched, _decoded([])) == 1.0


def test_pupe_duplicate_messages_satisfied_once():
    sched = _schedule([M1, M1, M2])
    assert compute_pupe(sched, _decoded([M1])) == pytest.approx(1 / 3)


def test_pupe_empty_schedule_convention():
    sched = _schedule([])
    assert compute_pupe(sched, _decoded([M1])) == 0.0


def test_match_decoded_counts():
    sched = _schedule([M1, M2, M3])
    correct, missed, false_alarms = match_decoded(sched, _decoded([M1, (1, 1, 1, 1)]))
    assert (correct, missed, false_alarms) == (1, 2, 1)


def test_mse_perfect():
    hs = [0.3 + 0.4j, -1.0 + 0j]
    sched = _schedule([M1, M2], deltas=[10, 400], hs=hs)
    ests = [
        Detection(start=10, pilot_index=0, score=1.0, h_hat=hs[0]),
        Detection(start=400, pilot_index=2, score=1.0, h_hat=hs[1]),
    ]
    assert compute_mse(sched, ests) == 0.0


def test_mse_single_user_lmmse_value():
    # estimate h * 30/31 of a unit gain: squared error (1/31)^2
    sched = _schedule([M1], deltas=[5], hs=[1.0 + 0j])
    ests = [Detection(start=5, pilot_index=0, score=1.0, h_hat=30.0 / 31.0 + 0j)]
    assert compute_mse(sched, ests) == pytest.approx((1.0 / 31.0) ** 2, rel=1e-12)


def test_mse_all_missed_is_mean_square_gain():
    rng = np.random.default_rng(0)
    hs = (rng.standard_normal(4000) + 1j * rng.standard_normal(4000)) / np.sqrt(2)
    sched = _schedule([M1] * hs.size, deltas=list(range(hs.size)), hs=list(hs))
    mse = compute_mse(sched, [])
    se = 1.0 / np.sqrt(hs.size)  # var(|h|^2) = 1 for CN(0,1)
    assert abs(mse - 1.0) < 3 * se


def test_mse_components_split():
    from urasim.metrics import compute_mse_components
    hs = [1.0 + 0j, 0.5 + 0.5j]
    sched = _schedule([M1, M2], deltas=[5, 300], hs=hs)
    ests = [Detection(start=5, pilot_index=0, score=1.0, h_hat=0.9 + 0j)]
    total, matched, missed, n_missed = compute_mse_components(sched, ests)
    assert matched == pytest.approx(0.01 / 2)
    assert missed == pytest.approx(0.5 / 2)
    assert total == pytest.approx(matched + missed)
    assert n_missed == 1


def test_mse_requires_exact_start_match():
    sched = _schedule([M1], deltas=[5], hs=[1.0 + 0j])
    ests = [Detection(start=6, pilot_index=0, score=1.0, h_hat=1.0 + 0j)]
    assert compute_mse(sched, ests) == pytest.approx(1.0)


def test_ebn0_unity_ratio():
    # nd Pd + np Pp == B sigma2  ->  0 dB
    cfg = desk_config(Pd=0.3, Pp=0.072, sigma2=1.0)  # 38.4 + 21.6 = 60 = B
    assert compute_ebn0(cfg) == pytest.approx(0.0, abs=1e-12)


def test_ebn0_reference_point():
    cfg = desk_config().replace(n=10000, np_=3000, nc=512, B=100,
                                Pd=0.1, Pp=0.01, sigma2=1.0)
    assert compute_ebn0(cfg) == pytest.approx(10 * np.log10(0.812), abs=1e-12)


def test_ebn0_zero_power_sentinel():
    cfg = desk_config(Pd=0.0, Pp=0.0)
    assert compute_ebn0(cfg) == float("-inf")
