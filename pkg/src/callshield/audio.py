"""8 kHz PCM handling and the simulated telephony channel.

Distortions hit one contiguous segment whose length is a configurable
fraction of the signal ("coverage"), with a uniformly random start; samples
outside the segment are untouched.  All outputs are clamped to [-1, 1]
(hard clipping) and fully determined by the spec's seed.

Parameter ranges (implementation choices, recorded in every results file):
  white noise   segment SNR ~ U[10, 30] dB
  pink noise    -3 dB/octave shaping, segment SNR ~ U[10, 30] dB
  echo          delay ~ U[100, 500] ms, attenuation ~ U[0.2, 0.5]
  lowpass       cutoff ~ U[2000, 3500] Hz (order-2 Butterworth biquad)
  highpass      cutoff ~ U[300, 800] Hz
  bandpass      highpass(U[300, 800]) then lowpass(U[2000, 3000])
  duck          gain ~ U[0.1, 0.4]
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

__all__ = [
    "SAMPLE_RATE",
    "FRAME_SAMPLES",
    "PcmSignal",
    "DistortionSpec",
    "DelaySpec",
    "WavFormatError",
    "load_wav",
    "save_wav",
    "apply_distortion",
    "apply_delay",
    "synthetic_speech",
    "DISTORTION_KINDS",
]

SAMPLE_RATE = 8000
FRAME_SAMPLES = 320  # 40 ms at 8 kHz

DISTORTION_KINDS = (
    "clean",
    "white_noise",
    "pink_noise",
    "echo",
    "lowpass",
    "highpass",
    "bandpass",
    "duck",
)

DEFAULT_PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "white_noise": {"snr_db": (10.0, 30.0)},
    "pink_noise": {"snr_db": (10.0, 30.0)},
    "echo": {"delay_ms": (100.0, 500.0), "attenuation": (0.2, 0.5)},
    "lowpass": {"cutoff_hz": (2000.0, 3500.0)},
    "highpass": {"cutoff_hz": (300.0, 800.0)},
    "bandpass": {"low_hz": (300.0, 800.0), "high_hz": (2000.0, 3000.0)},
    "duck": {"gain": (0.1, 0.4)},
}


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PcmSignal:
    """Mono 8 kHz audio with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional (mono)")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def clipped(self) -> "PcmSignal":
        return PcmSignal(np.clip(self.samples, -1.0, 1.0))


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    coverage: float = 0.0
    params: dict = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        if self.kind == "clean" and self.coverage != 0.0:
            raise ValueError("clean distortion must have coverage 0")


@dataclass(frozen=True)
class DelaySpec:
    max_delay_ms: float = 120.0

    def __post_init__(self):
        if self.max_delay_ms < 0:
            raise ValueError("max_delay_ms must be >= 0")


# -- WAV I/O ------------------------------------------------------------------

def load_wav(path) -> PcmSignal:
    """Read a mono, 8 kHz, 16-bit PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            rate = wf.getframerate()
            width = wf.getsampwidth()
            nframes = wf.getnframes()
            raw = wf.readframes(nframes)
    except wave.Error as exc:
        raise WavFormatError(f"not a readable WAV file: {exc}") from exc
    except EOFError as exc:
        raise WavFormatError("empty or truncated WAV file") from exc
    if channels != 1:
        raise WavFormatError(f"channel count {channels} != 1 (mono required)")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"sample rate {rate} != {SAMPLE_RATE}")
    if width != 2:
        raise WavFormatError(f"sample width {8 * width} bits != 16")
    if nframes == 0:
        raise WavFormatError("file contains no samples")
    ints = np.frombuffer(raw, dtype="<i2")
    return PcmSignal(ints.astype(np.float64) / 32768.0)


def save_wav(signal: PcmSignal, path) -> None:
    clipped = np.clip(signal.samples, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(ints.tobytes())


# -- distortion ----------------------------------------------------------------

def _draw(rng: np.random.Generator, spec: DistortionSpec, name: str) -> float:
    lo, hi = spec.params.get(name, DEFAULT_PARAM_RANGES[spec.kind][name])
    return float(rng.uniform(lo, hi))


def _scaled_noise(noise: np.ndarray, segment: np.ndarray, snr_db: float) -> np.ndarray:
    noise = noise / max(np.sqrt(np.mean(noise**2)), 1e-12)
    seg_rms = np.sqrt(np.mean(segment**2))
    # silent segments get noise relative to a -26 dBFS reference level
    ref = max(seg_rms, 0.05)
    return noise * ref * 10.0 ** (-snr_db / 20.0)


def _pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    shaping = np.ones_like(freqs)
    nz = freqs > 0
    shaping[nz] = 1.0 / np.sqrt(freqs[nz])  # power ~ 1/f, i.e. -3 dB per octave
    shaping[0] = 0.0
    return np.fft.irfft(spectrum * shaping, n)


def _butter_sos(kind: str, cutoff_hz, order: int = 2) -> np.ndarray:
    return sp_signal.butter(order, cutoff_hz, btype=kind, fs=SAMPLE_RATE, output="sos")


def _distort_segment(seg: np.ndarray, spec: DistortionSpec, rng: np.random.Generator) -> np.ndarray:
    kind = spec.kind
    if kind == "white_noise":
        noise = rng.standard_normal(seg.size)
        return seg + _scaled_noise(noise, seg, _draw(rng, spec, "snr_db"))
    if kind == "pink_noise":
        noise = _pink_noise(seg.size, rng)
        return seg + _scaled_noise(noise, seg, _draw(rng, spec, "snr_db"))
    if kind == "echo":
        delay = int(round(_draw(rng, spec, "delay_ms") * SAMPLE_RATE / 1000.0))
        atten = _draw(rng, spec, "attenuation")
        out = seg.copy()
        if delay < seg.size:
            out[delay:] += atten * seg[: seg.size - delay]
        return out
    if kind == "lowpass":
        return sp_signal.sosfilt(_butter_sos("lowpass", _draw(rng, spec, "cutoff_hz")), seg)
    if kind == "highpass":
        return sp_signal.sosfilt(_butter_sos("highpass", _draw(rng, spec, "cutoff_hz")), seg)
    if kind == "bandpass":
        hp = sp_signal.sosfilt(_butter_sos("highpass", _draw(rng, spec, "low_hz")), seg)
        return sp_signal.sosfilt(_butter_sos("lowpass", _draw(rng, spec, "high_hz")), hp)
    if kind == "duck":
        return seg * _draw(rng, spec, "gain")
    raise ValueError(f"unhandled distortion kind {kind!r}")


def apply_distortion(signal: PcmSignal, spec: DistortionSpec) -> PcmSignal:
    """Distort one contiguous random segment covering `spec.coverage` of the signal."""
    if signal.samples.size == 0:
        raise ValueError("cannot distort an empty signal")
    if spec.kind == "clean" or spec.coverage == 0.0:
        return signal
    rng = np.random.default_rng(spec.rng_seed)
    n = signal.samples.size
    seg_len = int(round(spec.coverage * n))
    if seg_len == 0:
        return signal
    start = int(rng.integers(0, n - seg_len + 1))
    out = signal.samples.copy()
    out[start : start + seg_len] = _distort_segment(
        signal.samples[start : start + seg_len], spec, rng
    )
    return PcmSignal(np.clip(out, -1.0, 1.0))


def synthetic_speech(n_samples: int, rng: np.random.Generator, rms: float = 0.15) -> PcmSignal:
    """Speech-like carrier: formant-band noise under a syllabic envelope.

    Stands in for recorded telephone speech so the repo runs without any
    licensed corpus; real 8 kHz WAV files can be used instead wherever a
    carrier is accepted.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    pad = max(n_samples, 4 * SAMPLE_RATE // 100)
    excitation = rng.standard_normal(pad)
    voiced = np.zeros(pad)
    for low, high, weight in ((250.0, 800.0, 1.0), (800.0, 1800.0, 0.6), (1800.0, 3000.0, 0.3)):
        sos = sp_signal.butter(2, (low, high), btype="bandpass", fs=SAMPLE_RATE, output="sos")
        voiced += weight * sp_signal.sosfilt(sos, excitation)
    # ~4 Hz syllabic amplitude modulation with pauses
    t = np.arange(pad) / SAMPLE_RATE
    envelope = 0.55 + 0.45 * np.sin(2 * np.pi * (4.0 * t + rng.uniform(0, 1)))
    envelope *= 0.5 + 0.5 * np.clip(np.sin(2 * np.pi * (0.7 * t + rng.uniform(0, 1))) + 0.7, 0, 1)
    samples = (voiced * envelope)[:n_samples]
    scale = rms / max(np.sqrt(np.mean(samples**2)), 1e-9)
    return PcmSignal(np.clip(samples * scale, -1.0, 1.0))


def apply_delay(
    signal: PcmSignal, spec: DelaySpec, rng_seed: int
) -> tuple[PcmSignal, int]:
    """Prepend uniformly random network delay as silence.

    Returns the delayed signal and the ground-truth delay in samples; the
    truth is harness diagnostics only and never reaches receiver logic.
    """
    rng = np.random.default_rng(rng_seed)
    delay_ms = float(rng.uniform(0.0, spec.max_delay_ms)) if spec.max_delay_ms > 0 else 0.0
    delay_samples = int(round(delay_ms * SAMPLE_RATE / 1000.0))
    if delay_samples == 0:
        return signal, 0
    out = np.concatenate([np.zeros(delay_samples), signal.samples])
    return PcmSignal(out), delay_samples
