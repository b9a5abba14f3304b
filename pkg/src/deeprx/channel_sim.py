"""Channel impairments: RF offsets, IQ imbalance, fading, noise, interference.

All operations are pure functions of (input frame, spec, seed). ``propagate``
composes them in the fixed order fading -> CFO/phase -> IQ imbalance ->
interference -> noise, with per-stage independent random substreams, and
calibrates noise against the pre-interference signal energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .phy_tx import IqFrame, shaping_spectrum

__all__ = [
    "SPEED_OF_LIGHT",
    "NoiseSpec",
    "RfImpairmentSpec",
    "FadingSpec",
    "InterferenceSpec",
    "ChannelScenario",
    "doppler_shift",
    "apply_cfo_phase",
    "apply_iq_imbalance",
    "apply_fading",
    "apply_noise",
    "add_interference",
    "propagate",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise family: 'awgn', or 'aggn' with tail-shape rho."""

    kind: str = "awgn"
    rho: float = 2.0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("awgn", "aggn"):
            raise ValueError(f"unknown noise kind: {self.kind!r}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class RfImpairmentSpec:
    """Front-end distortions: CFO (fraction of symbol rate), carrier phase,
    and amplitude/phase imbalance between I and Q paths."""

    delta_f: float = 0.0
    theta0: float = 0.0
    alpha_db: float = 0.0
    beta_deg: float = 0.0


@dataclass(frozen=True)
class FadingSpec:
    kind: str = "none"  # none | flat_rayleigh | selective_rayleigh
    max_doppler_hz: float = 0.0
    path_delays_s: tuple = ()
    path_gains_db: tuple = ()

    def __post_init__(self):
        if self.kind not in ("none", "flat_rayleigh", "selective_rayleigh"):
            raise ValueError(f"unknown fading kind: {self.kind!r}")
        if self.max_doppler_hz < 0:
            raise ValueError("max_doppler_hz must be nonnegative")
        if self.kind == "selective_rayleigh":
            if len(self.path_delays_s) != len(self.path_gains_db):
                raise ValueError("path delay/gain lists must have equal length")
            if not self.path_delays_s or self.path_delays_s[0] != 0.0:
                raise ValueError("first path delay must be 0")


@dataclass(frozen=True)
class InterferenceSpec:
    kind: str = "none"  # none | single_tone | msk | bpsk
    isr_db: float = 0.0
    symbol_rate_ratio: float = 1.0
    rolloff: float = 0.3  # shaping of the bpsk interferer
    signal_rolloff: float = 0.5  # sets the band the center frequency is drawn from

    def __post_init__(self):
        if self.kind not in ("none", "single_tone", "msk", "bpsk"):
            raise ValueError(f"unknown interference kind: {self.kind!r}")
        if self.symbol_rate_ratio <= 0:
            raise ValueError("symbol_rate_ratio must be positive")


@dataclass(frozen=True)
class ChannelScenario:
    """One concrete draw of every impairment plus the operating Eb/N0."""

    noise: NoiseSpec = field(default_factory=NoiseSpec)
    rf: RfImpairmentSpec = field(default_factory=RfImpairmentSpec)
    fading: FadingSpec = field(default_factory=FadingSpec)
    interference: InterferenceSpec = field(default_factory=InterferenceSpec)
    ebn0_db: float = math.inf


def doppler_shift(f_hz: float, v_mps: float, theta_rad: float) -> float:
    """Doppler shift of a carrier at ``f_hz`` for relative speed ``v_mps``."""

    return f_hz * v_mps * math.cos(theta_rad) / SPEED_OF_LIGHT


def apply_cfo_phase(frame: IqFrame, delta_f: float, theta0: float) -> IqFrame:
    """Rotate sample n by exp(j(2*pi*delta_f*n/oversampling + theta0)).

    ``delta_f`` is normalized to the symbol rate.
    """

    if delta_f == 0.0 and theta0 == 0.0:
        return frame.copy_with(frame.samples.copy())
    n = np.arange(len(frame))
    rot = np.exp(1j * (2.0 * np.pi * delta_f * n / frame.oversampling + theta0))
    return frame.copy_with(frame.samples * rot)


def apply_iq_imbalance(frame: IqFrame, alpha_db: float, beta_deg: float) -> IqFrame:
    """Amplitude/phase imbalance: I and Q scaled by 10^(alpha/40) with
    phases -beta*pi/360 and +beta*pi/360 respectively."""

    g = 10.0 ** (alpha_db / 40.0)
    phi = beta_deg * np.pi / 360.0
    i_part = frame.samples.real * g * np.exp(-1j * phi)
    q_part = frame.samples.imag * g * np.exp(1j * phi)
    return frame.copy_with(i_part + 1j * q_part)


def _rayleigh_process(t: np.ndarray, max_doppler_hz: float, rng, n_osc: int = 64) -> np.ndarray:
    """Unit-mean-power complex Rayleigh process, Jakes-type sum of sinusoids."""

    arrival = rng.uniform(0.0, 2.0 * np.pi, n_osc)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_osc)
    omega = 2.0 * np.pi * max_doppler_hz * np.cos(arrival)
    return np.exp(1j * (np.outer(t, omega) + phases)).sum(axis=1) / np.sqrt(n_osc)


def _cyclic_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Exact (fractional) delay on the circular frame grid."""

    phase = np.exp(-2j * np.pi * np.fft.fftfreq(x.size) * delay_samples)
    return np.fft.ifft(np.fft.fft(x) * phase)


def apply_fading(frame: IqFrame, spec: FadingSpec, seed) -> IqFrame:
    """Multiply by a Rayleigh process (flat) or sum delayed faded paths
    (selective). Path delays are converted to samples at the frame's rate."""

    if spec.kind == "none":
        return frame.copy_with(frame.samples.copy())
    rng = np.random.default_rng(seed)
    t = np.arange(len(frame)) / frame.sample_rate
    if spec.kind == "flat_rayleigh":
        h = _rayleigh_process(t, spec.max_doppler_hz, rng)
        return frame.copy_with(frame.samples * h)
    out = np.zeros(len(frame), dtype=np.complex128)
    duration = len(frame) / frame.sample_rate
    for delay_s, gain_db in zip(spec.path_delays_s, spec.path_gains_db):
        if delay_s >= duration:
            raise ValueError(f"path delay {delay_s} s exceeds frame duration {duration} s")
        amp = 10.0 ** (gain_db / 20.0)
        h = _rayleigh_process(t, spec.max_doppler_hz, rng)
        out += amp * h * _cyclic_delay(frame.samples, delay_s * frame.sample_rate)
    return frame.copy_with(out)


def _gg_scale(rho: float, component_var: float) -> float:
    # var = gamma^2 * G(3/rho) / G(1/rho)
    return math.sqrt(component_var * gamma_fn(1.0 / rho) / gamma_fn(3.0 / rho))


def _gg_samples(rng, rho: float, scale: float, size: int) -> np.ndarray:
    mag = rng.gamma(1.0 / rho, 1.0, size) ** (1.0 / rho)
    sign = rng.integers(0, 2, size) * 2.0 - 1.0
    return scale * mag * sign


def apply_noise(
    frame: IqFrame,
    noise: NoiseSpec,
    ebn0_db: float,
    info_bits: int,
    seed,
    signal_energy: float | None = None,
) -> IqFrame:
    """Add calibrated noise: (signal energy / info bits) / N0 hits the target,
    with N0 the noise power per complex sample (split evenly over I and Q).

    ``signal_energy`` defaults to the energy of the frame passed in; pass an
    explicit value when the frame already contains additive interference.
    """

    if info_bits <= 0:
        raise ValueError("info_bits must be positive")
    if not (math.isfinite(ebn0_db) or ebn0_db == math.inf):
        raise ValueError("ebn0_db must be finite (or +inf for noiseless)")
    if ebn0_db == math.inf:
        return frame.copy_with(frame.samples.copy())
    rng = np.random.default_rng(seed)
    if signal_energy is None:
        signal_energy = float(np.sum(np.abs(frame.samples) ** 2))
    eb = signal_energy / info_bits
    n0 = eb / 10.0 ** (ebn0_db / 10.0)
    comp_var = n0 / 2.0
    n = len(frame)
    if noise.kind == "awgn":
        w = rng.normal(0.0, math.sqrt(comp_var), 2 * n)
    else:
        scale = _gg_scale(noise.rho, comp_var)
        w = _gg_samples(rng, noise.rho, scale, 2 * n)
    return frame.copy_with(frame.samples + (noise.mu + w[:n]) + 1j * (noise.mu + w[n:]))


def _interference_band(frame: IqFrame, spec: InterferenceSpec) -> float:
    # one-sided extent of the occupied signal band
    return (1.0 + spec.signal_rolloff) / 2.0 * frame.symbol_rate


def _msk_waveform(n: int, sps: int, rng) -> np.ndarray:
    n_sym = -(-n // sps)
    data = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    dphi = np.repeat(data, sps) * (np.pi / (2.0 * sps))
    phase = np.concatenate([[rng.uniform(0.0, 2.0 * np.pi)], dphi]).cumsum()[:n]
    return np.exp(1j * phase)


def _bpsk_waveform(n: int, sps: int, rolloff: float, rng) -> np.ndarray:
    n_sym = -(-n // sps)
    data = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    up = np.zeros(n_sym * sps, dtype=np.complex128)
    up[::sps] = data
    amp = shaping_spectrum(up.size, sps, rolloff)
    x = np.fft.ifft(np.fft.fft(up) * amp)
    return x[:n]


def add_interference(frame: IqFrame, spec: InterferenceSpec, seed) -> IqFrame:
    """Add a cochannel interferer at the exact measured ISR.

    The interferer center frequency is drawn uniformly within the occupied
    signal bandwidth; its waveform depends on ``spec.kind``.
    """

    if spec.kind == "none":
        raise ValueError("interference kind is 'none'")
    if spec.isr_db == -math.inf:
        return frame.copy_with(frame.samples.copy())
    rng = np.random.default_rng(seed)
    n = len(frame)
    ts = 1.0 / frame.sample_rate
    f_c = rng.uniform(-1.0, 1.0) * _interference_band(frame, spec)
    if spec.kind == "single_tone":
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = np.exp(1j * (2.0 * np.pi * f_c * np.arange(n) * ts + phase))
    elif spec.kind == "msk":
        sps = int(round(frame.oversampling / spec.symbol_rate_ratio))
        wave = _msk_waveform(n, sps, rng)
        wave = wave * np.exp(2j * np.pi * f_c * np.arange(n) * ts)
    else:  # bpsk
        sps = int(round(frame.oversampling / spec.symbol_rate_ratio))
        wave = _bpsk_waveform(n, sps, spec.rolloff, rng)
        wave = wave * np.exp(2j * np.pi * f_c * np.arange(n) * ts)
    p_sig = float(np.mean(np.abs(frame.samples) ** 2))
    p_wave = float(np.mean(np.abs(wave) ** 2))
    target = p_sig * 10.0 ** (spec.isr_db / 10.0)
    wave = wave * math.sqrt(target / p_wave)
    return frame.copy_with(frame.samples + wave)


def propagate(frame: IqFrame, scenario: ChannelScenario, seed, info_bits: int | None = None) -> IqFrame:
    """Apply the full impairment composition with independent substreams.

    ``info_bits`` is required whenever noise is active (finite Eb/N0); it is
    the number of information bits carried by the frame.
    """

    ss = np.random.SeedSequence(seed)
    fading_seed, interf_seed, noise_seed = ss.spawn(3)
    out = apply_fading(frame, scenario.fading, fading_seed)
    out = apply_cfo_phase(out, scenario.rf.delta_f, scenario.rf.theta0)
    out = apply_iq_imbalance(out, scenario.rf.alpha_db, scenario.rf.beta_deg)
    signal_energy = float(np.sum(np.abs(out.samples) ** 2))
    if scenario.interference.kind != "none":
        out = add_interference(out, scenario.interference, interf_seed)
    if scenario.ebn0_db != math.inf:
        if info_bits is None:
            raise ValueError("info_bits required for noise calibration")
        out = apply_noise(
            out, scenario.noise, scenario.ebn0_db, info_bits, noise_seed, signal_energy
        )
    return out
