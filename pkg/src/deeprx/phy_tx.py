"""Transmit chain: bit generation, block coding, modulation, pulse shaping.

Frames are complex baseband bursts of exactly ``oversampling * n_symbols``
samples. Pulse shaping uses a root-raised-cosine filter realised exactly on
the frame's DFT grid (circular convolution), so the cascade of the shaping
filter and its matched receive filter is the raised-cosine Nyquist response:
symbol-instant samples carry no ISI, and frame energy equals the number of
symbols for any unit-energy constellation. Timing offsets are applied as
exact fractional delays in the frequency domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BitStream",
    "CodeSpec",
    "ModulationSpec",
    "McsSpec",
    "IqFrame",
    "code_spec",
    "modulation_spec",
    "mcs_spec",
    "MCS_TABLE",
    "generate_info_bits",
    "channel_encode",
    "modulate",
    "shaping_pulse",
    "pulse_shape",
    "prefix_bits",
    "build_frame",
]

DEFAULT_SYMBOL_RATE = 1.0e6


@dataclass
class BitStream:
    """Ordered bit sequence with its role in the chain."""

    bits: np.ndarray
    role: str = "info"  # "info" or "coded"

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1 or self.bits.size == 0:
            raise ValueError("bit stream must be a nonempty 1-D sequence")
        if np.any(self.bits > 1):
            raise ValueError("bit stream elements must be 0 or 1")

    def __len__(self):
        return int(self.bits.size)


@dataclass(frozen=True)
class CodeSpec:
    """Systematic block code defined by a generator polynomial over GF(2)."""

    kind: str
    k: int
    n: int
    generator: tuple  # polynomial coefficients, msb first, degree n-k

    def __post_init__(self):
        if not self.k < self.n:
            raise ValueError("require k < n")
        if len(self.generator) != self.n - self.k + 1:
            raise ValueError("generator degree must equal n - k")


@dataclass(frozen=True)
class ModulationSpec:
    """Memoryless mapping of bit groups to unit-average-energy symbols.

    ``points[i]`` is the symbol for the bit pattern whose msb-first integer
    value is ``i``.
    """

    kind: str
    bits_per_symbol: int
    points: tuple

    @property
    def constellation(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.complex128)


# Generator polynomials (msb first).  hamming74: x^3+x+1; cyclic(7,3):
# x^4+x^3+x^2+1; cyclic(15,5): x^10+x^8+x^5+x^4+x^2+x+1 (triple-error BCH).
_CODES = {
    "hamming74": (4, 7, (1, 0, 1, 1)),
    "cyclic_7_3": (3, 7, (1, 1, 1, 0, 1)),
    "cyclic_15_5": (5, 15, (1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1)),
}


def code_spec(kind: str) -> CodeSpec:
    try:
        k, n, g = _CODES[kind]
    except KeyError:
        raise ValueError(f"unknown code kind: {kind!r}") from None
    return CodeSpec(kind=kind, k=k, n=n, generator=g)


def _gray2(bits: tuple) -> float:
    # 2-bit Gray map to PAM4 levels -3,-1,+1,+3
    return {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}[bits]


def modulation_spec(kind: str) -> ModulationSpec:
    if kind == "bpsk":
        points = (1.0 + 0.0j, -1.0 + 0.0j)  # 0 -> +1, 1 -> -1
        return ModulationSpec("bpsk", 1, points)
    if kind == "qpsk":
        pts = []
        for idx in range(4):
            b0, b1 = (idx >> 1) & 1, idx & 1
            pts.append(((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0))
        return ModulationSpec("qpsk", 2, tuple(pts))
    if kind == "qam16":
        pts = []
        for idx in range(16):
            b = [(idx >> s) & 1 for s in (3, 2, 1, 0)]
            i_lvl = _gray2((b[0], b[1]))
            q_lvl = _gray2((b[2], b[3]))
            pts.append((i_lvl + 1j * q_lvl) / np.sqrt(10.0))
        return ModulationSpec("qam16", 4, tuple(pts))
    raise ValueError(f"unknown modulation kind: {kind!r}")


@dataclass(frozen=True)
class McsSpec:
    """Modulation + coding + framing parameters for one burst layout."""

    name: str
    modulation: ModulationSpec
    code: CodeSpec | None
    info_bits: int
    pad_zero_bits: int = 0
    prefix_bits: int = 0
    oversampling: int = 8
    rolloff: float = 0.5
    filter_span_symbols: int = 8  # informational; shaping is exact on the frame grid

    def __post_init__(self):
        if self.code is not None and self.info_bits % self.code.k:
            raise ValueError("info_bits must be divisible by code.k")
        if self.frame_bits % self.modulation.bits_per_symbol:
            raise ValueError("frame bits not divisible by bits_per_symbol")
        if self.oversampling < 2:
            raise ValueError("oversampling must be at least 2")

    @property
    def coded_bits(self) -> int:
        if self.code is None:
            return self.info_bits
        return self.info_bits // self.code.k * self.code.n

    @property
    def frame_bits(self) -> int:
        return self.prefix_bits + self.coded_bits + self.pad_zero_bits

    @property
    def frame_symbols(self) -> int:
        return self.frame_bits // self.modulation.bits_per_symbol

    @property
    def prefix_symbols(self) -> int:
        if self.prefix_bits % self.modulation.bits_per_symbol:
            raise ValueError("prefix bits not aligned to symbol boundary")
        return self.prefix_bits // self.modulation.bits_per_symbol

    @property
    def frame_length(self) -> int:
        return self.frame_symbols * self.oversampling


def mcs_spec(name: str, info_bits: int | None = None, prefix_bits: int = 0) -> McsSpec:
    """Build a named MCS. ``info_bits`` defaults to the standard value."""

    named = {
        "bpsk-uncoded": ("bpsk", None, 0),
        "bpsk-hamming": ("bpsk", "hamming74", 0),
        "qpsk-hamming": ("qpsk", "hamming74", 0),
        "mcs1": ("bpsk", "cyclic_7_3", 0),
        "mcs2": ("bpsk", "cyclic_15_5", 0),
        "mcs3": ("qpsk", "cyclic_7_3", 0),
        "mcs4": ("qpsk", "cyclic_15_5", 0),
        "mcs5": ("qam16", "cyclic_7_3", 2),
        "mcs6": ("qam16", "cyclic_15_5", 2),
    }
    try:
        mod_kind, code_kind, pad = named[name]
    except KeyError:
        raise ValueError(f"unknown MCS name: {name!r}") from None
    if info_bits is None:
        info_bits = 30 if name.startswith("mcs") else 32
    return McsSpec(
        name=name,
        modulation=modulation_spec(mod_kind),
        code=None if code_kind is None else code_spec(code_kind),
        info_bits=info_bits,
        pad_zero_bits=pad,
        prefix_bits=prefix_bits,
    )


MCS_TABLE = ("mcs1", "mcs2", "mcs3", "mcs4", "mcs5", "mcs6")


@dataclass
class IqFrame:
    """Complex baseband burst with sampling metadata."""

    samples: np.ndarray
    oversampling: int
    symbol_rate: float = DEFAULT_SYMBOL_RATE
    timing_offset: float = 0.0  # fraction of one sample period, [0, 1)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("frame must be a nonempty 1-D sample sequence")
        if not np.all(np.isfinite(self.samples.view(np.float64))):
            raise ValueError("frame samples must be finite")

    def __len__(self):
        return int(self.samples.size)

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.oversampling

    def copy_with(self, samples: np.ndarray) -> "IqFrame":
        return IqFrame(samples, self.oversampling, self.symbol_rate, self.timing_offset)


def generate_info_bits(count: int, seed: int) -> BitStream:
    """Draw ``count`` uniform information bits, deterministic in ``seed``."""

    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    return BitStream(rng.integers(0, 2, size=count, dtype=np.uint8), role="info")


def _poly_remainder_matrix(code: CodeSpec) -> np.ndarray:
    """Parity rows of the systematic generator matrix, via GF(2) division."""

    g = np.asarray(code.generator, dtype=np.uint8)
    r = code.n - code.k
    rows = np.zeros((code.k, r), dtype=np.uint8)
    for i in range(code.k):
        # message x^(k-1-i), shifted by x^r, reduced mod g(x)
        work = np.zeros(code.n, dtype=np.uint8)
        work[i] = 1
        for j in range(code.k):
            if work[j]:
                work[j : j + r + 1] ^= g
        rows[i] = work[code.k :]
    return rows


_GEN_CACHE: dict = {}


def generator_matrix(code: CodeSpec) -> np.ndarray:
    """Systematic generator matrix [I | P] for the code."""

    if code.kind not in _GEN_CACHE:
        parity = _poly_remainder_matrix(code)
        _GEN_CACHE[code.kind] = np.hstack([np.eye(code.k, dtype=np.uint8), parity])
    return _GEN_CACHE[code.kind]


def codebook(code: CodeSpec) -> np.ndarray:
    """All 2^k codewords, row ``i`` for the info block with msb-first value ``i``."""

    g = generator_matrix(code)
    msgs = ((np.arange(2**code.k)[:, None] >> np.arange(code.k - 1, -1, -1)) & 1).astype(np.uint8)
    return (msgs @ g) % 2


def channel_encode(code: CodeSpec, info: BitStream) -> BitStream:
    """Systematic block encoding: info bits verbatim, parity appended."""

    bits = info.bits
    if bits.size % code.k:
        raise ValueError("info length must be divisible by code.k")
    blocks = bits.reshape(-1, code.k)
    coded = (blocks @ generator_matrix(code)) % 2
    return BitStream(coded.reshape(-1).astype(np.uint8), role="coded")


def modulate(mod: ModulationSpec, coded: BitStream | np.ndarray) -> np.ndarray:
    """Map the bit stream to complex symbols, msb-first per symbol."""

    bits = coded.bits if isinstance(coded, BitStream) else np.asarray(coded, dtype=np.uint8)
    bps = mod.bits_per_symbol
    if bits.size % bps:
        raise ValueError("bit count not divisible by bits_per_symbol")
    groups = bits.reshape(-1, bps)
    idx = groups @ (1 << np.arange(bps - 1, -1, -1))
    return mod.constellation[idx]


def shaping_spectrum(n_samples: int, oversampling: int, rolloff: float) -> np.ndarray:
    """Root-raised-cosine amplitude spectrum on the frame's DFT grid.

    The squared spectrum is the raised-cosine Nyquist response, so a
    shaping/matched filter pair built from it is exactly ISI-free at
    symbol instants on the circular frame.
    """

    nu = np.abs(np.fft.fftfreq(n_samples)) * oversampling  # cycles per symbol
    lo = (1.0 - rolloff) / 2.0
    hi = (1.0 + rolloff) / 2.0
    rc = np.zeros(n_samples)
    rc[nu <= lo] = 1.0
    if rolloff > 0:
        sel = (nu > lo) & (nu < hi)
        rc[sel] = 0.5 * (1.0 + np.cos(np.pi * (nu[sel] - lo) / rolloff))
    amp = np.sqrt(rc)
    # unit pulse energy: sum q^2 = mean |Q|^2
    amp /= np.sqrt(np.mean(amp**2))
    return amp


def shaping_pulse(
    n_samples: int, oversampling: int, rolloff: float, timing_offset: float = 0.0
) -> np.ndarray:
    """Shaping-filter impulse response (peak at index 0, circular support)."""

    amp = shaping_spectrum(n_samples, oversampling, rolloff)
    phase = np.exp(-2j * np.pi * np.fft.fftfreq(n_samples) * timing_offset)
    return np.fft.ifft(amp * phase).real


def pulse_shape(
    symbols: np.ndarray,
    mcs: McsSpec,
    timing_offset: float = 0.0,
    symbol_rate: float = DEFAULT_SYMBOL_RATE,
) -> IqFrame:
    """Oversample and shape symbols into a frame of exact length.

    The sampling instants are shifted by ``timing_offset * T/oversampling``
    via an exact fractional delay of the shaping pulse.
    """

    if not 0.0 <= timing_offset < 1.0:
        raise ValueError("timing_offset must lie in [0, 1)")
    symbols = np.asarray(symbols, dtype=np.complex128)
    n = symbols.size * mcs.oversampling
    up = np.zeros(n, dtype=np.complex128)
    up[:: mcs.oversampling] = symbols
    amp = shaping_spectrum(n, mcs.oversampling, mcs.rolloff)
    phase = np.exp(-2j * np.pi * np.fft.fftfreq(n) * timing_offset)
    x = np.fft.ifft(np.fft.fft(up) * amp * phase)
    return IqFrame(x, mcs.oversampling, symbol_rate, timing_offset)


# Fixed prefix source: maximal-length sequence from x^7 + x^6 + 1, all-ones
# seed. The same bits front every frame so equalizers can train on them.
def _msequence(length: int) -> np.ndarray:
    state = [1] * 7
    out = np.empty(length, dtype=np.uint8)
    for i in range(length):
        out[i] = state[-1]
        fb = state[6] ^ state[5]
        state = [fb] + state[:-1]
    return out


_PREFIX_POOL = _msequence(256)


def prefix_bits(length: int) -> np.ndarray:
    """First ``length`` bits of the fixed training prefix."""

    if length > _PREFIX_POOL.size:
        raise ValueError("prefix longer than the fixed pool")
    return _PREFIX_POOL[:length].copy()


def build_frame(
    mcs: McsSpec, info: BitStream, seed: int, symbol_rate: float = DEFAULT_SYMBOL_RATE
) -> tuple[IqFrame, BitStream]:
    """Encode, frame, modulate and shape; returns (frame, label bits).

    Pipeline: channel encode -> prepend the fixed prefix -> append zero pad
    -> modulate -> pulse shape with a seeded random timing offset.
    """

    if len(info) != mcs.info_bits:
        raise ValueError(f"expected {mcs.info_bits} info bits, got {len(info)}")
    coded = channel_encode(mcs.code, info) if mcs.code is not None else info
    parts = [prefix_bits(mcs.prefix_bits), coded.bits, np.zeros(mcs.pad_zero_bits, dtype=np.uint8)]
    frame_bits = np.concatenate(parts)
    symbols = modulate(mcs.modulation, frame_bits)
    rng = np.random.default_rng(seed)
    timing = float(rng.random())
    frame = pulse_shape(symbols, mcs, timing, symbol_rate)
    if len(frame) != mcs.frame_length:
        raise ValueError("frame length does not match MCS expectation")
    return frame, BitStream(info.bits.copy(), role="info")
