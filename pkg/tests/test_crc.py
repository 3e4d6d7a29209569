"""CRC tests against an independent table-driven oracle."""

import numpy as np

from urasim.polar import CrcSpec, ccitt16, crc_append, crc_check, crc_compute


def _xmodem_table():
    table = []
    for byte in range(256):
        reg = byte << 8
        for _ in range(8):
            reg = ((reg << 1) ^ 0x1021) & 0xFFFF if reg & 0x8000 else (reg << 1) & 0xFFFF
        table.append(reg)
    return table


_TABLE = _xmodem_table()


def _oracle_crc16(data: bytes) -> int:
    """Independent byte-wise CRC-16 (poly 0x1021, zero init, unreflected)."""
    reg = 0
    for byte in data:
        reg = ((reg << 8) & 0xFFFF) ^ _TABLE[((reg >> 8) ^ byte) & 0xFF]
    return reg


def _bits_of(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def test_check_string_matches_reference_value():
    bits = _bits_of(b"123456789")
    got = crc_compute(bits, ccitt16())
    value = int("".join(map(str, got)), 2)
    assert value == 0x31C3
    assert value == _oracle_crc16(b"123456789")


def test_matches_oracle_on_random_byte_strings():
    rng = np.random.default_rng(0)
    for _ in range(50):
        data = rng.integers(0, 256, size=int(rng.integers(1, 40))).astype(np.uint8).tobytes()
        got = crc_compute(_bits_of(data), ccitt16())
        assert int("".join(map(str, got)), 2) == _oracle_crc16(data)


def test_all_zero_fixed_point():
    frame = crc_append(np.zeros(84, dtype=np.uint8), ccitt16())
    assert frame.sum() == 0
    assert crc_check(frame, ccitt16())


def test_single_bit_flips_all_detected():
    rng = np.random.default_rng(2)
    payload = rng.integers(0, 2, 112 - 16, dtype=np.uint8)
    frame = crc_append(payload, ccitt16())
    assert crc_check(frame, ccitt16())
    for i in range(frame.size):
        bad = frame.copy()
        bad[i] ^= 1
        assert not crc_check(bad, ccitt16())


def test_false_accept_rate_near_two_to_minus_16():
    rng = np.random.default_rng(3)
    trials = 2_000_000
    frames = rng.integers(0, 2, size=(trials, 72), dtype=np.uint8)
    from urasim.polar import _crc_check_batch
    hits = int(_crc_check_batch(frames, ccitt16()).sum())
    expect = trials / 65536.0
    # Poisson-like count: three standard errors around the expectation
    assert abs(hits - expect) < 3 * np.sqrt(expect) + 1


def test_nonstandard_spec_roundtrip():
    spec = CrcSpec(width=8, polynomial="100000111", init=0xFF, reflect_in=True,
                   reflect_out=True, xor_out=0x55)
    rng = np.random.default_rng(4)
    for _ in range(20):
        payload = rng.integers(0, 2, 31, dtype=np.uint8)
        assert crc_check(crc_append(payload, spec), spec)


def test_too_short_frame_fails():
    assert not crc_check(np.zeros(8, dtype=np.uint8), ccitt16())
