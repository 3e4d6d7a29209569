"""CRC-aided polar codec: rate profiling, encoding, SCL decoding.

The code is the (nc, B - Bp + r) inner code of the transmit chain.  Rate
profiles come from the embedded universal reliability ordering (no rate
matching; nc is a native power of two).  The list decoder uses exact
log-domain LLR updates and exact path-metric increments, with the CRC
selecting the output path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._reliability import RELIABILITY_1024

__all__ = [
    "RateProfile",
    "CrcSpec",
    "DecodeOutcome",
    "ccitt16",
    "build_profile",
    "crc_compute",
    "crc_append",
    "crc_check",
    "encode",
    "decode_scl",
    "write_golden_vectors",
    "check_golden_vectors",
    "LLR_CLAMP",
]

LLR_CLAMP = 40.0


@dataclass(frozen=True)
class RateProfile:
    code_len: int
    info_len: int
    info_set: tuple[int, ...]  # sorted bit-channel indices carrying information


@dataclass(frozen=True)
class CrcSpec:
    """Generic CRC definition over raw bit vectors (MSB-first)."""

    width: int = 16
    polynomial: str = "10001000000100001"  # x^16 + x^12 + x^5 + 1
    init: int = 0
    reflect_in: bool = False
    reflect_out: bool = False
    xor_out: int = 0

    def __post_init__(self):
        if len(self.polynomial) != self.width + 1 or self.polynomial[0] != "1":
            raise ValueError(
                f"polynomial must be {self.width + 1} bits with a leading 1, "
                f"got {self.polynomial!r}"
            )


def ccitt16() -> CrcSpec:
    return CrcSpec()


@dataclass
class DecodeOutcome:
    ok: bool
    payload: np.ndarray | None = None   # info bits with the CRC stripped
    info: np.ndarray | None = None      # full info vector including CRC bits
    path_metric: float = float("inf")


def build_profile(nc: int, k: int) -> RateProfile:
    """Info set = the k most reliable bit channels of a length-nc polar code."""
    if nc <= 0 or (nc & (nc - 1)) != 0 or nc > 1024:
        raise ValueError(f"nc must be a power of two <= 1024, got {nc}")
    if not 0 < k <= nc:
        raise ValueError(f"k must be in (0, nc], got k={k}, nc={nc}")
    sub = RELIABILITY_1024[RELIABILITY_1024 < nc]
    info = np.sort(sub[-k:])
    return RateProfile(code_len=nc, info_len=k, info_set=tuple(int(i) for i in info))


# ---------------------------------------------------------------------------
# CRC
# ---------------------------------------------------------------------------

def _crc_bitwise(bits: np.ndarray, spec: CrcSpec) -> int:
    """Reference bit-serial CRC register; returns the register as an int."""
    poly = int(spec.polynomial[1:], 2)  # low terms, degree bit implicit
    mask = (1 << spec.width) - 1
    top = 1 << (spec.width - 1)
    seq = bits[::-1] if spec.reflect_in else bits
    reg = spec.init & mask
    for b in seq:
        fb = ((reg & top) != 0) ^ (int(b) & 1)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly
    if spec.reflect_out:
        reg = int(f"{reg:0{spec.width}b}"[::-1], 2)
    return reg ^ spec.xor_out


_CRC_MATRIX_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _crc_matrix(length: int, spec: CrcSpec) -> tuple[np.ndarray, np.ndarray]:
    """Affine form crc(x) = M @ x xor c0 for fixed input length (GF(2))."""
    key = (length, spec)
    cached = _CRC_MATRIX_CACHE.get(key)
    if cached is not None:
        return cached
    zero = np.zeros(length, dtype=np.uint8)
    c0 = _crc_bitwise(zero, spec)
    cols = np.empty((spec.width, length), dtype=np.uint8)
    for i in range(length):
        e = zero.copy()
        e[i] = 1
        val = _crc_bitwise(e, spec) ^ c0
        cols[:, i] = _int_to_bits(val, spec.width)
    c0_bits = _int_to_bits(c0, spec.width)
    _CRC_MATRIX_CACHE[key] = (cols, c0_bits)
    return cols, c0_bits


def _int_to_bits(val: int, width: int) -> np.ndarray:
    return np.array([(val >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def crc_compute(bits: np.ndarray, spec: CrcSpec) -> np.ndarray:
    """CRC of a bit vector, returned MSB-first as a bit vector of length width."""
    bits = np.asarray(bits, dtype=np.uint8)
    mat, c0 = _crc_matrix(bits.size, spec)
    return ((mat @ bits) & 1) ^ c0


def crc_append(bits: np.ndarray, spec: CrcSpec) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.concatenate([bits, crc_compute(bits, spec)])


def crc_check(frame: np.ndarray, spec: CrcSpec) -> bool:
    """True when the last `width` bits are the CRC of the preceding bits."""
    frame = np.asarray(frame, dtype=np.uint8)
    if frame.size < spec.width:
        return False
    expect = crc_compute(frame[: frame.size - spec.width], spec)
    return bool(np.array_equal(expect, frame[frame.size - spec.width:]))


def _crc_check_batch(frames: np.ndarray, spec: CrcSpec) -> np.ndarray:
    """Row-wise crc_check for a (batch, length) bit matrix."""
    batch, length = frames.shape
    payload_len = length - spec.width
    mat, c0 = _crc_matrix(payload_len, spec)
    expect = ((frames[:, :payload_len] @ mat.T) & 1) ^ c0
    return np.all(expect == frames[:, payload_len:], axis=1)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u * F^{kron m} over GF(2), natural bit order; u is (..., nc)."""
    x = np.ascontiguousarray(u, dtype=np.uint8).copy()
    nc = x.shape[-1]
    lead = x.reshape(-1, nc)
    s = 1
    while s < nc:
        v = lead.reshape(-1, nc // (2 * s), 2, s)
        v[:, :, 0, :] ^= v[:, :, 1, :]
        s *= 2
    return x


def encode(info_with_crc: np.ndarray, profile: RateProfile) -> np.ndarray:
    """Place info bits on the profile's info set, zeros elsewhere, transform."""
    info = np.asarray(info_with_crc, dtype=np.uint8)
    if info.shape[-1] != profile.info_len:
        raise ValueError(
            f"expected {profile.info_len} info bits, got {info.shape[-1]}"
        )
    u = np.zeros(info.shape[:-1] + (profile.code_len,), dtype=np.uint8)
    u[..., list(profile.info_set)] = info
    return _polar_transform(u)


# ---------------------------------------------------------------------------
# SCL decoding
# ---------------------------------------------------------------------------

def _f_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # log((1 + e^{a+b}) / (e^a + e^b)), the exact boxplus
    return np.logaddexp(0.0, a + b) - np.logaddexp(a, b)


_FROZEN_MASK_CACHE: dict[tuple, np.ndarray] = {}


def _frozen_mask(profile: RateProfile) -> np.ndarray:
    key = (profile.code_len, profile.info_set)
    mask = _FROZEN_MASK_CACHE.get(key)
    if mask is None:
        mask = np.ones(profile.code_len, dtype=bool)
        mask[list(profile.info_set)] = False
        _FROZEN_MASK_CACHE[key] = mask
    return mask


def decode_scl_batch(
    llrs: np.ndarray,
    profile: RateProfile,
    spec: CrcSpec,
    list_size: int,
) -> list[DecodeOutcome]:
    """SCL-decode a batch of independent LLR vectors in lockstep.

    The decoding schedule is data independent, so a whole batch shares a
    single pass over the code tree; this amortizes the per-leaf overhead and
    is how the receiver decodes all detections of an iteration at once.
    """
    nc = profile.code_len
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    nb = llrs.shape[0]
    if llrs.shape != (nb, nc):
        raise ValueError(f"llrs must have shape (batch, {nc}), got {llrs.shape}")
    llrs = np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)
    L = int(list_size)
    m = nc.bit_length() - 1
    frozen = _frozen_mask(profile)
    rows = np.arange(nb)[:, None]

    # alpha[d]: LLRs of the node being processed at depth d, per path.
    # C[d][..., s, :]: partial sums of the left (s=0) / right (s=1) child.
    alpha = [np.empty((nb, L, nc >> d)) for d in range(m + 1)]
    C = [np.empty((nb, L, 2, nc >> d), dtype=np.uint8) for d in range(m + 1)]
    alpha[0][:] = llrs[:, None, :]
    U = np.zeros((nb, L, nc), dtype=np.uint8)
    pm = np.full((nb, L), np.inf)
    pm[:, 0] = 0.0

    for phi in range(nc):
        # recompute LLRs down to the leaf: one g step where the path turns
        # right, f steps the rest of the way down
        if phi == 0:
            f_from = 1
        else:
            z = (phi & -phi).bit_length() - 1  # trailing zeros
            start = m - z
            half = nc >> start
            a = alpha[start - 1]
            beta_left = C[start][..., 0, :]
            alpha[start][:] = a[..., half:] + (1.0 - 2.0 * beta_left) * a[..., :half]
            f_from = start + 1
        for d in range(f_from, m + 1):
            a = alpha[d - 1]
            half = nc >> d
            alpha[d][:] = _f_exact(a[..., :half], a[..., half:])

        lam = alpha[m][..., 0]
        if frozen[phi]:
            pm = pm + np.logaddexp(0.0, -lam)
            C[m][..., phi & 1, 0] = 0
        else:
            cand = np.concatenate(
                [pm + np.logaddexp(0.0, -lam), pm + np.logaddexp(0.0, lam)], axis=1
            )
            sel = np.argsort(cand, axis=1, kind="stable")[:, :L]
            parent = sel % L
            bits_new = (sel // L).astype(np.uint8)
            pm = np.take_along_axis(cand, sel, axis=1)
            for d in range(1, m + 1):
                alpha[d] = alpha[d][rows, parent]
                C[d] = C[d][rows, parent]
            U = U[rows, parent]
            U[..., phi] = bits_new
            C[m][..., phi & 1, 0] = bits_new

        # propagate partial sums while the finished node is a right child
        p, d = phi, m
        while (p & 1) and d > 1:
            combined = np.concatenate(
                [C[d][..., 0, :] ^ C[d][..., 1, :], C[d][..., 1, :]], axis=-1
            )
            C[d - 1][..., (p >> 1) & 1, :] = combined
            p >>= 1
            d -= 1

    info_idx = np.fromiter(profile.info_set, dtype=np.int64)
    order = np.argsort(pm, axis=1, kind="stable")
    infos = U[rows, order][:, :, info_idx]
    ok_flat = _crc_check_batch(infos.reshape(nb * L, -1), spec).reshape(nb, L)
    pm_sorted = np.take_along_axis(pm, order, axis=1)
    payload_len = profile.info_len - spec.width
    outcomes: list[DecodeOutcome] = []
    for i in range(nb):
        hit = np.flatnonzero(ok_flat[i] & np.isfinite(pm_sorted[i]))
        if hit.size:
            info = infos[i, hit[0]]
            outcomes.append(
                DecodeOutcome(
                    ok=True,
                    payload=info[:payload_len].copy(),
                    info=info.copy(),
                    path_metric=float(pm_sorted[i, hit[0]]),
                )
            )
        else:
            outcomes.append(DecodeOutcome(ok=False))
    return outcomes


def decode_scl(
    llr: np.ndarray,
    profile: RateProfile,
    spec: CrcSpec,
    list_size: int,
) -> DecodeOutcome:
    """CRC-aided successive cancellation list decoding of one LLR vector.

    `llr` follows the positive-favors-bit-0 convention.  Returns the most
    likely final path that satisfies the CRC; fails when none does.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim != 1:
        raise ValueError(f"llr must be one-dimensional, got shape {llr.shape}")
    return decode_scl_batch(llr[None, :], profile, spec, list_size)[0]


# ---------------------------------------------------------------------------
# Golden vectors
# ---------------------------------------------------------------------------

def write_golden_vectors(path, profile: RateProfile, count: int, rng: np.random.Generator):
    """Text file for cross-implementation checks: 'info codeword' per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for _ in range(count):
            info = rng.integers(0, 2, size=profile.info_len, dtype=np.uint8)
            cw = encode(info, profile)
            fh.write("".join(map(str, info)) + " " + "".join(map(str, cw)) + "\n")


def check_golden_vectors(path, profile: RateProfile) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            info_s, cw_s = line.split()
            info = np.frombuffer(info_s.encode(), dtype=np.uint8) - ord("0")
            cw = np.frombuffer(cw_s.encode(), dtype=np.uint8) - ord("0")
            if not np.array_equal(encode(info, profile), cw):
                return False
    return True
