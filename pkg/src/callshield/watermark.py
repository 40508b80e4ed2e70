"""The per-frame bit channel: one bit per 320-sample (40 ms) frame.

Two interchangeable backends expose the same contract:

- ``statistical``: bit flips drawn from a calibration table of measured
  per-frame accuracies, i.e. a binary symmetric channel with crossover
  p = 1 - accuracy(kind, coverage, alpha).  An optional Gilbert-Elliott
  two-state mode produces bursty flips instead of independent ones.
- ``spread_spectrum``: an actual signal-level codec that adds a signed
  pseudonoise chip sequence to each frame and decodes by correlation.
  It is a deliberately non-neural stand-in with the same per-frame
  interface; security never rests on it (the PN sequence is public,
  authenticity comes from the MAC layer).

All operations are pure given explicit seeds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .audio import FRAME_SAMPLES, PcmSignal
from .bits import as_bits

__all__ = [
    "ALPHA_MIN",
    "ALPHA_MAX",
    "FrameChannelConfig",
    "DecodedBit",
    "ChannelCalibration",
    "CalibrationMissError",
    "GilbertElliott",
    "bsc_transmit",
    "AmbientBitModel",
    "SpreadSpectrumCodec",
    "DEFAULT_PN_SEED",
    "load_default_calibration",
]

ALPHA_MIN = 0.6
ALPHA_MAX = 1.0

# The chip sequence is a shared public constant, like a modem preamble.
DEFAULT_PN_SEED = 0x5EED


class CalibrationMissError(KeyError):
    pass


@dataclass(frozen=True)
class FrameChannelConfig:
    frame_samples: int = FRAME_SAMPLES
    alpha: float = ALPHA_MIN
    backend: str = "statistical"

    def __post_init__(self):
        if self.frame_samples != FRAME_SAMPLES:
            raise ValueError(f"frame_samples must be {FRAME_SAMPLES}")
        if not ALPHA_MIN <= self.alpha <= ALPHA_MAX:
            raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}]")
        if self.backend not in ("statistical", "spread_spectrum"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class DecodedBit:
    bit: int
    confidence: float

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class GilbertElliott:
    """Two-state burst-error channel.

    `p_good`/`p_bad` are per-bit flip probabilities in each state; the
    stationary occupancy of the bad state is chosen so the long-run mean
    flip rate equals the calibrated p.  Mean bad-state sojourn defaults to
    8 frames.
    """

    p_good: float
    p_bad: float
    good_to_bad: float
    bad_to_good: float

    @classmethod
    def from_mean(cls, p: float, mean_bad_len: float = 8.0) -> "GilbertElliott":
        p_good = p / 4.0
        p_bad = min(0.4, 4.0 * p)
        if p_bad <= p_good:
            raise ValueError(f"degenerate burst model for p={p}")
        occupancy_bad = (p - p_good) / (p_bad - p_good)
        bad_to_good = 1.0 / mean_bad_len
        good_to_bad = occupancy_bad / (1.0 - occupancy_bad) * bad_to_good
        return cls(p_good=p_good, p_bad=p_bad, good_to_bad=good_to_bad, bad_to_good=bad_to_good)

    def flip_mask(self, n: int, rng: np.random.Generator) -> np.ndarray:
        occupancy_bad = self.good_to_bad / (self.good_to_bad + self.bad_to_good)
        state_bad = rng.random() < occupancy_bad
        mask = np.zeros(n, dtype=bool)
        u_state = rng.random(n)
        u_flip = rng.random(n)
        for i in range(n):
            p = self.p_bad if state_bad else self.p_good
            mask[i] = u_flip[i] < p
            if state_bad:
                state_bad = not (u_state[i] < self.bad_to_good)
            else:
                state_bad = u_state[i] < self.good_to_bad
        return mask


class ChannelCalibration:
    """Measured bit accuracies indexed by (kind, coverage, alpha).

    Alpha is interpolated linearly between the calibrated strengths and
    coverage linearly between calibrated coverages (and down to the clean
    accuracy at coverage 0).  Burst parameters, when attached, replace the
    independent-flip model in `bsc_transmit`.
    """

    def __init__(self, cells: list[dict], burst_model: GilbertElliott | None = None):
        self._by_kind: dict[str, dict[float, dict[float, float]]] = {}
        for cell in cells:
            kind = cell["kind"]
            cov = float(cell["coverage"])
            alpha = float(cell["alpha"])
            acc = float(cell["bit_accuracy"])
            if not 0.5 <= acc <= 1.0:
                raise ValueError(f"bit accuracy {acc} outside [0.5, 1]")
            self._by_kind.setdefault(kind, {}).setdefault(cov, {})[alpha] = acc
        if "clean" not in self._by_kind:
            raise ValueError("calibration must include the clean condition")
        self.burst_model = burst_model

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_kind))

    def _interp_alpha(self, by_alpha: dict[float, float], alpha: float) -> float:
        alphas = sorted(by_alpha)
        if alpha < alphas[0] - 1e-9 or alpha > alphas[-1] + 1e-9:
            raise CalibrationMissError(f"alpha {alpha} outside calibrated range {alphas}")
        return float(np.interp(alpha, alphas, [by_alpha[a] for a in alphas]))

    def bit_accuracy(self, kind: str, coverage: float, alpha: float) -> float:
        if kind not in self._by_kind:
            raise CalibrationMissError(f"no calibration for kind {kind!r}")
        if kind == "clean" or coverage == 0.0:
            return self._interp_alpha(self._by_kind["clean"][0.0], alpha)
        by_cov = self._by_kind[kind]
        covs = sorted(by_cov)
        if coverage > covs[-1] + 1e-9:
            raise CalibrationMissError(f"coverage {coverage} above calibrated range {covs}")
        at_cov = [self._interp_alpha(by_cov[c], alpha) for c in covs]
        # below the lowest calibrated coverage, fall linearly toward clean
        clean = self._interp_alpha(self._by_kind["clean"][0.0], alpha)
        return float(np.interp(coverage, [0.0] + covs, [clean] + at_cov))

    def crossover(self, kind: str, coverage: float, alpha: float) -> float:
        return 1.0 - self.bit_accuracy(kind, coverage, alpha)


def load_default_calibration(burst_model: GilbertElliott | None = None) -> ChannelCalibration:
    raw = resources.files("callshield.data").joinpath("calibration.json").read_text()
    return ChannelCalibration(json.loads(raw)["cells"], burst_model=burst_model)


def bsc_transmit(
    bits,
    calibration: ChannelCalibration,
    condition: tuple[str, float, float],
    rng,
) -> np.ndarray:
    """Flip each bit independently with the calibrated crossover probability.

    `condition` is (kind, coverage, alpha).  With a burst model attached to
    the calibration, flips follow the two-state chain instead.  The random
    draws do not depend on alpha, so runs with the same rng state and
    different strengths are coupled (higher alpha can only remove flips).
    """
    bits = as_bits(bits)
    kind, coverage, alpha = condition
    p = calibration.crossover(kind, coverage, alpha)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if calibration.burst_model is not None:
        mask = calibration.burst_model.flip_mask(bits.size, rng)
    else:
        mask = rng.random(bits.size) < p
    out = bits.copy()
    out[mask] ^= 1
    return out


@dataclass(frozen=True)
class AmbientBitModel:
    """What the frame decoder emits on audio that carries no watermark.

    Decoder output on unwatermarked speech is not quite a fair coin: on
    sparse or tonal audio the correlator's sign leans with whatever energy
    is present.  A slight bias toward 1 reproduces the measured asymmetry
    between the all-ones and all-zeros preambles in the sync study.
    """

    one_bias: float = 0.55
    confidence: float = 0.1

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(n) < self.one_bias).astype(np.uint8)


# -- spread-spectrum signal backend -------------------------------------------

class SpreadSpectrumCodec:
    """One watermark bit per frame via a signed pseudonoise sequence.

    embed: frame + alpha * gain * pn * (+1 for bit 1, -1 for bit 0),
    clamped to [-1, 1].  gain fixes the watermark at -20 dB relative to
    full scale, an inaudibility proxy.  decode correlates the frame with
    the chip sequence; the sign is the bit and |correlation| / gain
    (clipped to 1) is the confidence.
    """

    def __init__(self, pn_seed: int = DEFAULT_PN_SEED, gain: float = 0.1):
        rng = np.random.default_rng(pn_seed)
        self.pn = rng.choice([-1.0, 1.0], size=FRAME_SAMPLES)
        self.gain = gain

    def embed(self, frame: np.ndarray, bit: int, alpha: float) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.size != FRAME_SAMPLES:
            raise ValueError(f"frame must have {FRAME_SAMPLES} samples, got {frame.size}")
        sign = 1.0 if bit else -1.0
        return np.clip(frame + sign * alpha * self.gain * self.pn, -1.0, 1.0)

    def decode(self, frame: np.ndarray) -> DecodedBit:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.size != FRAME_SAMPLES:
            raise ValueError(f"frame must have {FRAME_SAMPLES} samples, got {frame.size}")
        corr = float(np.dot(frame, self.pn)) / FRAME_SAMPLES
        return DecodedBit(bit=1 if corr >= 0 else 0, confidence=min(1.0, abs(corr) / self.gain))

    def embed_stream(
        self, bits, carrier: PcmSignal, alpha: float, start_sample: int = 0
    ) -> PcmSignal:
        bits = as_bits(bits)
        needed = start_sample + bits.size * FRAME_SAMPLES
        if carrier.samples.size < needed:
            raise ValueError(
                f"carrier too short: {carrier.samples.size} samples, need {needed}"
            )
        out = carrier.samples.copy()
        for i, b in enumerate(bits):
            lo = start_sample + i * FRAME_SAMPLES
            out[lo : lo + FRAME_SAMPLES] = self.embed(out[lo : lo + FRAME_SAMPLES], int(b), alpha)
        return PcmSignal(out)

    def decode_stream(
        self, signal: PcmSignal, start_sample: int, n_bits: int
    ) -> list[DecodedBit]:
        needed = start_sample + n_bits * FRAME_SAMPLES
        if start_sample < 0 or signal.samples.size < needed:
            raise ValueError("signal too short for the requested frame range")
        frames = signal.samples[start_sample:needed].reshape(n_bits, FRAME_SAMPLES)
        corr = frames @ self.pn / FRAME_SAMPLES
        return [
            DecodedBit(bit=1 if c >= 0 else 0, confidence=min(1.0, abs(float(c)) / self.gain))
            for c in corr
        ]

    def sync_template(self, sync_bits) -> np.ndarray:
        """Matched-filter waveform for a known preamble."""
        sync_bits = as_bits(sync_bits)
        signs = np.where(sync_bits > 0, 1.0, -1.0)
        return (signs[:, None] * self.pn[None, :]).ravel()

    def acquire(
        self, signal: PcmSignal, sync_bits, search_limit: int, n_candidates: int = 3
    ) -> list[int]:
        """Most likely start samples of the preamble, best first."""
        template = self.sync_template(sync_bits)
        if signal.samples.size < template.size:
            return []
        limit = min(search_limit, signal.samples.size - template.size)
        if limit < 0:
            return []
        corr = np.correlate(signal.samples[: limit + template.size], template, mode="valid")
        order = np.argsort(corr)[::-1]
        picks: list[int] = []
        for idx in order:
            if all(abs(int(idx) - p) >= FRAME_SAMPLES // 2 for p in picks):
                picks.append(int(idx))
            if len(picks) >= n_candidates:
                break
        return picks
