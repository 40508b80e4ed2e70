"""Reliable message delivery over the frame-bit channel.

Every message travels as one fixed-length frame laid out
[sync preamble][systematic BCH codeword] (message bits first, then parity).
The receiver locates the preamble with a sliding minimum-Hamming-distance
search over frame offsets, then BCH-decodes the payload.  Failed deliveries
are retried stop-and-wait style under a bounded attempt budget; the
delivery outcome reaches the sender out-of-band (an in-band ACK encoding is
an extension point, not part of this artifact).

The payload is content-agnostic: any bit pattern of length <= k travels
unchanged, and each protocol phase fixes its payload length so no length
field goes on the air.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import FRAME_SAMPLES, SAMPLE_RATE, DelaySpec, DistortionSpec, PcmSignal, apply_delay, apply_distortion
from .bch import BchCode
from .bits import as_bits
from .watermark import AmbientBitModel, ChannelCalibration, SpreadSpectrumCodec

__all__ = [
    "SyncPattern",
    "DEFAULT_SYNC",
    "DataLinkFrame",
    "ArqPolicy",
    "Delivery",
    "StatisticalFrameLink",
    "SpreadSpectrumFrameLink",
    "build_frame",
    "find_sync",
    "sync_candidates",
    "receive_frame",
    "send_with_arq",
    "ReceiveResult",
    "ArqOutcome",
    "FRAME_SECONDS",
    "DEFAULT_SYNC_THRESHOLD",
    "DEFAULT_SEARCH_WINDOW",
    "DEFAULT_GUARD_SECONDS",
]

FRAME_SECONDS = FRAME_SAMPLES / SAMPLE_RATE  # 40 ms per bit
DEFAULT_SYNC_THRESHOLD = 3
# delay range (3 frames at 120 ms) plus guard frames
DEFAULT_SEARCH_WINDOW = 8
DEFAULT_GUARD_SECONDS = 0.5


@dataclass(frozen=True)
class SyncPattern:
    base: tuple[int, ...]
    repeats: int

    def __post_init__(self):
        if len(self.base) not in (3, 5):
            raise ValueError("sync base pattern must be 3 or 5 bits")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if any(b not in (0, 1) for b in self.base):
            raise ValueError("sync base must be bits")

    @property
    def bits(self) -> np.ndarray:
        return np.asarray(self.base * self.repeats, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.base) * self.repeats

    @property
    def name(self) -> str:
        return "".join(map(str, self.base)) + f"x{self.repeats}"


DEFAULT_SYNC = SyncPattern(base=(0, 1, 0, 1, 0), repeats=3)


@dataclass(frozen=True)
class DataLinkFrame:
    sync: SyncPattern
    payload: np.ndarray  # codeword bits
    phase: str = ""      # label only; never transmitted

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.sync.bits, self.payload])

    def __len__(self) -> int:
        return len(self.sync) + self.payload.size


@dataclass(frozen=True)
class ArqPolicy:
    max_attempts: int = 3
    strategy: str = "constant_alpha"
    alpha_step: float = 0.1
    alpha_cap: float = 1.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.strategy not in ("constant_alpha", "adaptive_alpha"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def alpha_for_attempt(self, base_alpha: float, attempt: int) -> float:
        """Strength for 1-based attempt number; non-decreasing, capped."""
        if self.strategy == "constant_alpha":
            return base_alpha
        return min(self.alpha_cap, base_alpha + self.alpha_step * (attempt - 1))


def build_frame(code: BchCode, sync: SyncPattern, message, phase: str = "") -> DataLinkFrame:
    return DataLinkFrame(sync=sync, payload=code.encode(message).bits, phase=phase)


# -- sync detection -------------------------------------------------------------

def sync_candidates(
    decoded_bits, sync: SyncPattern, search_window: int, threshold: int = DEFAULT_SYNC_THRESHOLD
) -> list[tuple[int, int]]:
    """(distance, offset) for every window offset within threshold, sorted
    by distance then earliest offset."""
    bits = as_bits(decoded_bits)
    pattern = sync.bits
    if bits.size < pattern.size:
        raise ValueError("decoded stream shorter than the sync pattern")
    max_offset = min(search_window, bits.size - pattern.size + 1)
    out = []
    for off in range(max_offset):
        dist = int(np.count_nonzero(bits[off : off + pattern.size] != pattern))
        if dist <= threshold:
            out.append((dist, off))
    out.sort()
    return out


def find_sync(
    decoded_bits, sync: SyncPattern, search_window: int, threshold: int = DEFAULT_SYNC_THRESHOLD
) -> int | None:
    """Offset (in frames) minimising Hamming distance to the preamble.

    A match requires distance <= threshold; ties break to the earliest
    offset.  None means nothing in the window cleared the threshold, which
    triggers retransmission upstream.
    """
    cands = sync_candidates(decoded_bits, sync, search_window, threshold)
    return cands[0][1] if cands else None


# -- channel links ---------------------------------------------------------------

@dataclass(frozen=True)
class Delivery:
    """What one transmission attempt produced at the receiving end.

    `bits`/`confidences` is the receiver-visible decoded frame stream after
    acquisition.  `truth_offset` (frames) and `aligned_at_zero` are ground
    truth for harness diagnostics; receiver logic must not read them.
    """

    bits: np.ndarray
    confidences: np.ndarray
    truth_offset: int
    aligned_at_zero: bool
    audio_seconds: float
    raw_bits: np.ndarray | None = None  # stream as seen with no acquisition at all


class StatisticalFrameLink:
    """Bit-level channel: calibrated flips, random delay, ambient padding.

    Delay shifts the frame by whole frame slots inside the receiver's
    listening window; recovering sub-frame sample alignment is treated as
    part of preamble acquisition, which is why a receiver that skips the
    sync search sees only ambient garbage unless the delay was exactly
    zero.
    """

    def __init__(
        self,
        calibration: ChannelCalibration,
        condition: tuple[str, float, float],
        *,
        delay: DelaySpec = DelaySpec(),
        ambient: AmbientBitModel = AmbientBitModel(),
        search_window: int = DEFAULT_SEARCH_WINDOW,
        guard_seconds: float = DEFAULT_GUARD_SECONDS,
    ):
        self.calibration = calibration
        self.condition = condition
        self.delay = delay
        self.ambient = ambient
        self.search_window = search_window
        self.guard_seconds = guard_seconds

    def deliver(self, frame_bits, alpha: float, rng: np.random.Generator) -> Delivery:
        frame_bits = as_bits(frame_bits)
        kind, coverage, _ = self.condition
        p = self.calibration.crossover(kind, coverage, alpha)

        delay_ms = float(rng.uniform(0.0, self.delay.max_delay_ms)) if self.delay.max_delay_ms > 0 else 0.0
        offset = int(delay_ms // (FRAME_SECONDS * 1000.0))
        aligned = delay_ms == 0.0

        total = self.search_window + frame_bits.size
        stream = self.ambient.draw(total, rng)
        conf = np.full(total, self.ambient.confidence)

        # alpha-independent uniforms keep different-strength runs coupled
        u = rng.random(frame_bits.size)
        if self.calibration.burst_model is not None:
            mask = self.calibration.burst_model.flip_mask(frame_bits.size, rng)
        else:
            mask = u < p
        noisy = frame_bits.copy()
        noisy[mask] ^= 1
        stream[offset : offset + frame_bits.size] = noisy
        conf[offset : offset + frame_bits.size] = max(0.0, 1.0 - 2.0 * p)

        raw = stream if aligned else self.ambient.draw(total, rng)
        audio = self.guard_seconds + frame_bits.size * FRAME_SECONDS
        return Delivery(
            bits=stream,
            confidences=conf,
            truth_offset=offset,
            aligned_at_zero=aligned,
            audio_seconds=audio,
            raw_bits=raw,
        )


class SpreadSpectrumFrameLink:
    """Signal-level channel: embed into a carrier, distort, delay, acquire.

    Acquisition matched-filters the known preamble waveform over the
    possible delay range, then hands a frame-aligned window (with a small
    frame margin) to the same bit-level receiver used by the statistical
    backend.
    """

    def __init__(
        self,
        codec: SpreadSpectrumCodec,
        sync: SyncPattern,
        condition: tuple[str, float, float],
        carrier_factory,
        *,
        delay: DelaySpec = DelaySpec(),
        search_window: int = DEFAULT_SEARCH_WINDOW,
        guard_seconds: float = DEFAULT_GUARD_SECONDS,
        margin_frames: int = 2,
    ):
        self.codec = codec
        self.sync = sync
        self.condition = condition
        self.carrier_factory = carrier_factory
        self.delay = delay
        self.search_window = search_window
        self.guard_seconds = guard_seconds
        self.margin_frames = margin_frames

    def deliver(self, frame_bits, alpha: float, rng: np.random.Generator) -> Delivery:
        frame_bits = as_bits(frame_bits)
        kind, coverage, _ = self.condition
        carrier: PcmSignal = self.carrier_factory(frame_bits.size, rng)
        tx = self.codec.embed_stream(frame_bits, carrier, alpha)
        if kind != "clean" and coverage > 0.0:
            spec = DistortionSpec(kind=kind, coverage=coverage, rng_seed=int(rng.integers(2**63)))
            tx = apply_distortion(tx, spec)
        rx, true_delay = apply_delay(tx, self.delay, int(rng.integers(2**63)))

        search_limit = int(self.delay.max_delay_ms / 1000.0 * SAMPLE_RATE) + FRAME_SAMPLES
        picks = self.codec.acquire(rx, self.sync.bits, search_limit)
        pick = picks[0] if picks else 0
        # back off whole frames only; anything else would break the sample
        # alignment the matched filter just recovered
        margin = min(self.margin_frames, pick // FRAME_SAMPLES)
        base = pick - margin * FRAME_SAMPLES
        n_bits = min(
            self.search_window + frame_bits.size,
            (rx.samples.size - base) // FRAME_SAMPLES,
        )
        decoded = self.codec.decode_stream(rx, base, n_bits)
        bits = np.asarray([d.bit for d in decoded], dtype=np.uint8)
        conf = np.asarray([d.confidence for d in decoded])

        frame_start = true_delay  # embedding starts at sample 0 of tx
        truth = (frame_start - base) // FRAME_SAMPLES if (frame_start - base) % FRAME_SAMPLES == 0 else -1
        raw = np.asarray(
            [d.bit for d in self.codec.decode_stream(rx, 0, min(n_bits, rx.samples.size // FRAME_SAMPLES))],
            dtype=np.uint8,
        )
        audio = self.guard_seconds + frame_bits.size * FRAME_SECONDS
        return Delivery(
            bits=bits,
            confidences=conf,
            truth_offset=truth,
            aligned_at_zero=true_delay == 0,
            audio_seconds=audio,
            raw_bits=raw,
        )


# -- receive / ARQ ---------------------------------------------------------------

@dataclass(frozen=True)
class ReceiveResult:
    message: np.ndarray | None
    sync_offset: int | None
    corrected: int
    candidates_tried: int
    failure: str = ""


LOW_CONFIDENCE = 0.3


def receive_frame(
    delivery: Delivery,
    code: BchCode,
    sync: SyncPattern,
    *,
    search_window: int = DEFAULT_SEARCH_WINDOW,
    threshold: int = DEFAULT_SYNC_THRESHOLD,
    max_candidates: int = 4,
    use_sync: bool = True,
) -> ReceiveResult:
    """Locate the preamble, then BCH-decode the payload.

    The sync search alone cannot be trusted blindly: the preamble is a
    short repeated base, so it matches itself one period early or late,
    and because BCH codes are cyclic the shifted payload window still
    decodes, to a rotation of the real message.  The receiver therefore
    walks the candidate list in (flagged, distance, offset) order, where a
    candidate is flagged when its window contains several low-confidence
    bits (off-frame material decoded from unwatermarked audio), and relies
    on decode failure to reject the remaining wrong offsets.
    """
    bits = delivery.bits
    conf = delivery.confidences
    sync_len = len(sync)
    if not use_sync:
        # no acquisition at all: only an exactly-zero delay lines frames up
        stream = delivery.raw_bits if delivery.raw_bits is not None else bits
        if stream.size < sync_len + code.n:
            return ReceiveResult(None, None, 0, 0, failure="short-stream")
        word = stream[sync_len : sync_len + code.n]
        decoded = code.decode(word)
        if decoded is None:
            return ReceiveResult(None, None, 0, 1, failure="decode-failure")
        return ReceiveResult(decoded[0], 0, decoded[1], 1)

    cands = sync_candidates(bits, sync, search_window, threshold)
    if not cands:
        return ReceiveResult(None, None, 0, 0, failure="sync-not-found")
    frame_len = sync_len + code.n
    ranked = []
    for dist, off in cands:
        if off + frame_len > bits.size:
            continue
        # a window that truly contains the frame has no off-frame bits at
        # all; any low-confidence bit marks a shifted (echo) candidate
        low = int(np.count_nonzero(conf[off : off + frame_len] < LOW_CONFIDENCE))
        ranked.append((low >= 1, dist, off))
    ranked.sort()
    if not ranked:
        return ReceiveResult(None, cands[0][1], 0, 0, failure="short-stream")
    for tried, (_, _, off) in enumerate(ranked[:max_candidates], start=1):
        start = off + sync_len
        decoded = code.decode(bits[start : start + code.n])
        if decoded is not None:
            return ReceiveResult(decoded[0], off, decoded[1], tried)
    return ReceiveResult(None, ranked[0][2], 0, min(len(ranked), max_candidates), failure="decode-failure")


@dataclass(frozen=True)
class ArqOutcome:
    ok: bool
    attempts: int
    final_alpha: float
    audio_seconds: float
    corrected: int
    message: np.ndarray | None
    failure: str = ""


def send_with_arq(
    link,
    code: BchCode,
    sync: SyncPattern,
    message,
    policy: ArqPolicy,
    base_alpha: float,
    rng_for_attempt,
    *,
    threshold: int = DEFAULT_SYNC_THRESHOLD,
    search_window: int = DEFAULT_SEARCH_WINDOW,
    validator=None,
    phase: str = "",
    truncate_to: int | None = None,
) -> ArqOutcome:
    """Deliver one message under stop-and-wait retransmission.

    `rng_for_attempt(attempt)` supplies the per-attempt random stream so
    trials stay replayable; `validator`, when given, is the receiver-side
    content check (e.g. the expected beacon value) and a mismatch counts as
    a failed attempt.  `truncate_to` strips zero padding down to the
    phase's true payload length.
    """
    message = as_bits(message)
    frame = build_frame(code, sync, message, phase=phase)
    audio = 0.0
    last_failure = "exhausted"
    for attempt in range(1, policy.max_attempts + 1):
        alpha = policy.alpha_for_attempt(base_alpha, attempt)
        rng = rng_for_attempt(attempt)
        delivery = link.deliver(frame.bits, alpha, rng)
        audio += delivery.audio_seconds
        result = receive_frame(
            delivery, code, sync, search_window=search_window, threshold=threshold
        )
        if result.message is not None:
            got = result.message
            pads_ok = True
            if truncate_to is not None:
                # the sender always zero-pads up to k; nonzero padding means
                # the decoder locked onto a rotation or noise
                pads_ok = not got[truncate_to:].any()
                got = got[:truncate_to]
            if pads_ok and (validator is None or validator(got)):
                return ArqOutcome(
                    ok=True,
                    attempts=attempt,
                    final_alpha=alpha,
                    audio_seconds=audio,
                    corrected=result.corrected,
                    message=got,
                )
            last_failure = "content-mismatch"
        else:
            last_failure = result.failure
    return ArqOutcome(
        ok=False,
        attempts=policy.max_attempts,
        final_alpha=policy.alpha_for_attempt(base_alpha, policy.max_attempts),
        audio_seconds=audio,
        corrected=0,
        message=None,
        failure=last_failure,
    )
