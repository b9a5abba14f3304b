"""Reference receivers: matched filter, hard decision, per-block soft ML,
and LMS/RLS/DFE adaptive equalizers.

All receivers assume genie symbol timing (the frame carries its timing
offset) and no carrier recovery; that is the baseline behaviour the BER
experiments compare against.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lcm

import numpy as np

from .phy_tx import (
    BitStream,
    CodeSpec,
    IqFrame,
    McsSpec,
    codebook,
    modulate,
    prefix_bits,
    shaping_spectrum,
)

__all__ = [
    "EqualizerSpec",
    "SoftSymbols",
    "EQUALIZER_PRESETS",
    "matched_filter_symbols",
    "hard_demap",
    "hard_decode",
    "soft_ml_decode",
    "equalize",
    "classical_receive",
    "RECEIVER_CHAINS",
]

_ML_CANDIDATE_CAP = 1 << 16


@dataclass(frozen=True)
class EqualizerSpec:
    """Adaptive equalizer configuration (symbol-spaced)."""

    kind: str  # lms_linear | rls_linear | rls_dfe
    taps: int = 1
    ref_tap: int = 1  # 1-indexed position of the reference tap
    step: float = 0.01
    forgetting: float = 0.99
    feedback_taps: int = 0

    def __post_init__(self):
        if self.kind not in ("lms_linear", "rls_linear", "rls_dfe"):
            raise ValueError(f"unknown equalizer kind: {self.kind!r}")
        if self.taps < 1:
            raise ValueError("taps must be >= 1")
        if not 0.0 < self.forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if self.step <= 0:
            raise ValueError("step must be positive")


EQUALIZER_PRESETS = {
    "eqA": EqualizerSpec("lms_linear", taps=1, ref_tap=1, step=0.01),
    "eqB": EqualizerSpec("rls_linear", taps=8, ref_tap=3, forgetting=0.99),
    "eqC": EqualizerSpec("rls_dfe", taps=6, ref_tap=3, forgetting=0.99, feedback_taps=2),
}


@dataclass
class SoftSymbols:
    """Symbol-rate matched-filter output tied to its MCS."""

    values: np.ndarray
    mcs: McsSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.size != self.mcs.frame_symbols:
            raise ValueError("symbol count does not match the MCS frame layout")

    @property
    def prefix(self) -> np.ndarray:
        return self.values[: self.mcs.prefix_symbols]

    @property
    def payload(self) -> np.ndarray:
        return self.values[self.mcs.prefix_symbols :]


def _matched_symbols_batch(
    samples: np.ndarray, osf: int, rolloff: float, timing_offset: np.ndarray
) -> np.ndarray:
    """Matched filtering + symbol-instant decimation for (B, N) sample rows."""

    samples = np.atleast_2d(samples)
    n = samples.shape[1]
    amp = shaping_spectrum(n, osf, rolloff)
    # conjugate of the delayed shaping spectrum: advance by the timing offset
    phase = np.exp(
        2j * np.pi * np.fft.fftfreq(n)[None, :] * np.asarray(timing_offset)[:, None]
    )
    y = np.fft.ifft(np.fft.fft(samples, axis=1) * amp[None, :] * phase, axis=1)
    return y[:, ::osf]


def matched_filter_symbols(frame: IqFrame, mcs: McsSpec) -> SoftSymbols:
    """Matched filter against the shaping pulse, decimated at symbol instants."""

    if len(frame) != mcs.frame_length:
        raise ValueError("frame length inconsistent with the MCS")
    vals = _matched_symbols_batch(
        frame.samples[None, :], mcs.oversampling, mcs.rolloff, np.array([frame.timing_offset])
    )[0]
    return SoftSymbols(vals, mcs)


_DEMAP_CACHE: dict = {}


def _bit_patterns(bps: int) -> np.ndarray:
    return ((np.arange(1 << bps)[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)


def _nearest_point_idx(values: np.ndarray, constellation: np.ndarray) -> np.ndarray:
    d = np.abs(values[..., None] - constellation) ** 2
    return d.argmin(axis=-1)


def hard_demap(symbols: SoftSymbols | np.ndarray, modulation=None) -> BitStream:
    """Nearest-constellation-point decision, demapped to bits."""

    if isinstance(symbols, SoftSymbols):
        values = symbols.values
        modulation = symbols.mcs.modulation
    else:
        values = np.asarray(symbols, dtype=np.complex128)
        if modulation is None:
            raise ValueError("modulation required for raw symbol arrays")
    idx = _nearest_point_idx(values, modulation.constellation)
    bits = _bit_patterns(modulation.bits_per_symbol)[idx]
    return BitStream(bits.reshape(-1), role="coded")


_DECODE_TABLES: dict = {}


def _decode_table(code: CodeSpec) -> np.ndarray:
    """Map every length-n word (msb-first integer) to the min-distance info index."""

    if code.kind not in _DECODE_TABLES:
        cb = codebook(code)
        weights = 1 << np.arange(code.n - 1, -1, -1)
        cw_ints = cb @ weights
        words = np.arange(1 << code.n, dtype=np.int64)
        dists = np.empty((words.size, cw_ints.size), dtype=np.int16)
        for j, ci in enumerate(cw_ints):
            x = words ^ int(ci)
            dists[:, j] = np.unpackbits(
                x.astype(np.uint16).view(np.uint8).reshape(-1, 2), axis=1
            ).sum(axis=1)
        _DECODE_TABLES[code.kind] = dists.argmin(axis=1).astype(np.int32)
    return _DECODE_TABLES[code.kind]


def hard_decode(code: CodeSpec, coded: BitStream | np.ndarray) -> BitStream:
    """Per-block minimum-Hamming-distance decoding to info bits."""

    bits = coded.bits if isinstance(coded, BitStream) else np.asarray(coded, dtype=np.uint8)
    if bits.size % code.n:
        raise ValueError("coded length must be divisible by n")
    blocks = bits.reshape(-1, code.n)
    words = blocks @ (1 << np.arange(code.n - 1, -1, -1))
    info_idx = _decode_table(code)[words]
    info = ((info_idx[:, None] >> np.arange(code.k - 1, -1, -1)) & 1).astype(np.uint8)
    return BitStream(info.reshape(-1), role="info")


def _ml_groups(mcs: McsSpec) -> list[tuple[int, int]]:
    """Partition coded blocks into groups whose bits align to symbol
    boundaries; returns (blocks_in_group, pad_bits_in_group) pairs."""

    code = mcs.code
    bps = mcs.modulation.bits_per_symbol
    per_group = lcm(code.n, bps) // code.n
    n_blocks = mcs.info_bits // code.k
    groups = []
    remaining = n_blocks
    while remaining > 0:
        g = min(per_group, remaining)
        pad = 0
        if g < per_group:  # final partial group absorbs the zero pad
            pad = mcs.pad_zero_bits
            if (g * code.n + pad) % bps:
                raise ValueError("frame layout is not symbol-aligned for ML decoding")
        groups.append((g, pad))
        remaining -= g
    return groups


_ML_CAND_CACHE: dict = {}


def _ml_candidates(mcs: McsSpec, g: int, pad: int):
    """Candidate symbol matrix for a group of g blocks (+ trailing pad)."""

    key = (mcs.modulation.kind, mcs.code.kind, g, pad)
    if key not in _ML_CAND_CACHE:
        code = mcs.code
        n_cand = 1 << (code.k * g)
        if n_cand > _ML_CANDIDATE_CAP:
            raise ValueError("candidate set too large for exact ML decoding")
        cb = codebook(code)
        info_idx = np.arange(n_cand)
        parts = []
        for b in range(g):
            shift = code.k * (g - 1 - b)
            parts.append(cb[(info_idx >> shift) & ((1 << code.k) - 1)])
        bits = np.concatenate(parts, axis=1)
        if pad:
            bits = np.concatenate([bits, np.zeros((n_cand, pad), dtype=np.uint8)], axis=1)
        syms = modulate(mcs.modulation, bits.reshape(-1)).reshape(n_cand, -1)
        _ML_CAND_CACHE[key] = syms
    return _ML_CAND_CACHE[key]


def _soft_ml_batch(payload: np.ndarray, mcs: McsSpec) -> np.ndarray:
    """Exact per-group ML decisions for (B, S_payload) symbol rows."""

    payload = np.atleast_2d(payload)
    code = mcs.code
    bps = mcs.modulation.bits_per_symbol
    out = np.empty((payload.shape[0], mcs.info_bits), dtype=np.uint8)
    sym_pos = 0
    bit_pos = 0
    for g, pad in _ml_groups(mcs):
        cands = _ml_candidates(mcs, g, pad)
        n_syms = cands.shape[1]
        y = payload[:, sym_pos : sym_pos + n_syms]
        # ||y - c||^2 minimised <=> |c|^2 - 2 Re<y, c> minimised
        score = np.abs(cands**2).sum(axis=1).real - 2.0 * np.real(y @ cands.conj().T)
        best = score.argmin(axis=1)
        k_bits = code.k * g
        bits = ((best[:, None] >> np.arange(k_bits - 1, -1, -1)) & 1).astype(np.uint8)
        out[:, bit_pos : bit_pos + k_bits] = bits
        sym_pos += n_syms
        bit_pos += k_bits
    return out


def soft_ml_decode(symbols: SoftSymbols, mcs: McsSpec) -> BitStream:
    """Minimum-Euclidean-distance codeword decisions on matched-filter output.

    Valid when coded blocks are independent and equiprobable; blocks are
    grouped to symbol boundaries so the per-group search is exact.
    """

    if mcs.code is None:
        raise ValueError("ML decoding requires a block code")
    payload = symbols.values[mcs.prefix_symbols :]
    bits = _soft_ml_batch(payload[None, :], mcs)[0]
    return BitStream(bits, role="info")


def _slicer(value: complex, constellation: np.ndarray) -> complex:
    return constellation[np.argmin(np.abs(constellation - value))]


def _regression(x_pad: np.ndarray, k: int, taps: int, ref: int) -> np.ndarray:
    # taps window [x_{k+ref-1}, ..., x_{k+ref-taps}] on the zero-padded stream
    top = k + (ref - 1) + taps  # exclusive, in padded coordinates
    return x_pad[top - taps : top][::-1]


def equalize(
    symbols: SoftSymbols, spec: EqualizerSpec, training_prefix: np.ndarray
) -> SoftSymbols:
    """Adapt on the known prefix, then run decision-directed on the payload."""

    training_prefix = np.asarray(training_prefix, dtype=np.complex128)
    if training_prefix.size == 0:
        raise ValueError("adaptive equalization requires a nonempty training prefix")
    x = symbols.values
    constellation = symbols.mcs.modulation.constellation
    n = x.size
    taps = spec.taps
    pad = taps
    x_pad = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    out = np.empty(n, dtype=np.complex128)

    if spec.kind == "lms_linear":
        w = np.zeros(taps, dtype=np.complex128)
        w[spec.ref_tap - 1] = 1.0
        for k in range(n):
            u = _regression(x_pad, k + pad - (spec.ref_tap - 1), taps, spec.ref_tap)
            y = w @ u
            d = training_prefix[k] if k < training_prefix.size else _slicer(y, constellation)
            e = d - y
            w = w + spec.step * e * np.conj(u)
            out[k] = y
        return SoftSymbols(out, symbols.mcs)

    n_fb = spec.feedback_taps if spec.kind == "rls_dfe" else 0
    total = taps + n_fb
    w = np.zeros(total, dtype=np.complex128)
    w[spec.ref_tap - 1] = 1.0
    p_mat = np.eye(total, dtype=np.complex128) / 0.01
    lam = spec.forgetting
    decisions = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        u_ff = _regression(x_pad, k + pad - (spec.ref_tap - 1), taps, spec.ref_tap)
        if n_fb:
            past = np.zeros(n_fb, dtype=np.complex128)
            for j in range(n_fb):
                idx = k - 1 - j
                if idx >= 0:
                    past[j] = (
                        training_prefix[idx] if idx < training_prefix.size else decisions[idx]
                    )
            u = np.concatenate([u_ff, past])
        else:
            u = u_ff
        y = w @ u
        d = training_prefix[k] if k < training_prefix.size else _slicer(y, constellation)
        decisions[k] = d
        # complex RLS update
        pu = p_mat @ np.conj(u)
        g = pu / (lam + u @ pu)
        e = d - y
        w = w + e * g
        p_mat = (p_mat - np.outer(g, u @ p_mat)) / lam
        out[k] = y
    return SoftSymbols(out, symbols.mcs)


RECEIVER_CHAINS = ("hard", "ml", "eqA_hard", "eqB_hard", "eqC_hard")


def _known_prefix_symbols(mcs: McsSpec) -> np.ndarray:
    if mcs.prefix_bits == 0:
        return np.zeros(0, dtype=np.complex128)
    return modulate(mcs.modulation, prefix_bits(mcs.prefix_bits))


def classical_receive(frame: IqFrame, mcs: McsSpec, chain: str = "hard") -> BitStream:
    """Run one reference chain end to end and return recovered info bits."""

    if chain not in RECEIVER_CHAINS:
        raise ValueError(f"unknown chain: {chain!r}")
    soft = matched_filter_symbols(frame, mcs)
    if chain.startswith("eq"):
        spec = EQUALIZER_PRESETS[chain.split("_")[0]]
        soft = equalize(soft, spec, _known_prefix_symbols(mcs))
    if chain == "ml":
        return soft_ml_decode(soft, mcs)
    payload = soft.payload
    coded = hard_demap(payload, mcs.modulation)
    coded_bits = coded.bits[: mcs.coded_bits]  # strip trailing zero pad
    if mcs.code is None:
        return BitStream(coded_bits, role="info")
    return hard_decode(mcs.code, coded_bits)
