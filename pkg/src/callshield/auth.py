"""Four-phase symmetric-key challenge-response authentication.

Start: the caller embeds a fixed 8-bit beacon.  Challenge: the receiver
answers with a fresh 64-bit nonce plus 64-bit session id.  Response: the
caller returns the first 128 bits of HMAC-SHA256(key, nonce || session),
both fields big-endian.  Finish: the receiver confirms with the
complementary 8-bit beacon.  Every message rides the datalink (sync
preamble + BCH codeword); phase payload sizes are fixed, so zero padding
is stripped by length, never signalled on the air.

Timers cap the wait for each expected transmission and restart on every
retransmission, so they only bite when a peer stays silent (e.g. a caller
that never sends the beacon).  On a MAC mismatch the receiver restarts
from the challenge phase with a fresh nonce; reusing the old nonce after a
failed exchange would weaken freshness.

The whole call runs lock-step in one thread: endpoints own their session
state and exchange only immutable bit buffers, and a single master seed
makes every run replayable.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
from dataclasses import dataclass, field

import numpy as np

from .bch import BchCode, build_code
from .bits import as_bits, bits_from_bytes, bits_to_bytes, bits_to_hex
from .datalink import (
    DEFAULT_GUARD_SECONDS,
    DEFAULT_SEARCH_WINDOW,
    DEFAULT_SYNC,
    DEFAULT_SYNC_THRESHOLD,
    ArqPolicy,
    SyncPattern,
    build_frame,
    receive_frame,
    send_with_arq,
)

__all__ = [
    "KEY_BYTES",
    "START_BEACON",
    "FINISH_BEACON",
    "KeyStore",
    "KeyStorePermissionError",
    "Challenge",
    "MacResponse",
    "SessionTimers",
    "SessionState",
    "SessionReport",
    "compute_mac",
    "verify_mac",
    "beacon_code",
    "payload_code",
    "run_call",
    "caller_run",
    "receiver_run",
    "simulate_attack",
    "AttackReport",
]

KEY_BYTES = 32
START_BEACON = as_bits("10110010")
FINISH_BEACON = as_bits("01001101")  # bitwise complement of the start beacon

_CODE_CACHE: dict[tuple[int, int], BchCode] = {}


def beacon_code() -> BchCode:
    """The (31, 11, 5) code framing the 8-bit start/finish beacons."""
    return _cached_code(5, 5)


def payload_code() -> BchCode:
    """The (511, 130, 55) code framing 128-bit challenges and MACs."""
    return _cached_code(9, 55)


def _cached_code(m: int, t: int) -> BchCode:
    key = (m, t)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = build_code(m, t)
    return _CODE_CACHE[key]


# -- keys and MACs ---------------------------------------------------------------

class KeyStorePermissionError(PermissionError):
    pass


class KeyStore:
    """contact-id -> 256-bit symmetric key; keys never leave the process."""

    def __init__(self, keys: dict[str, bytes] | None = None):
        self._keys: dict[str, bytes] = {}
        for contact, key in (keys or {}).items():
            self.add(contact, key)

    def add(self, contact: str, key: bytes) -> None:
        if len(key) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes, got {len(key)}")
        self._keys[contact] = bytes(key)

    def key_for(self, contact: str) -> bytes | None:
        return self._keys.get(contact)

    def contacts(self) -> tuple[str, ...]:
        return tuple(sorted(self._keys))

    @classmethod
    def generate(cls, contacts, rng: np.random.Generator | None = None) -> "KeyStore":
        store = cls()
        for contact in contacts:
            if rng is None:
                key = secrets.token_bytes(KEY_BYTES)
            else:
                key = rng.integers(0, 256, size=KEY_BYTES, dtype=np.uint8).tobytes()
            store.add(contact, key)
        return store

    @classmethod
    def load(cls, path, allow_insecure: bool = False) -> "KeyStore":
        mode = os.stat(path).st_mode
        if mode & 0o077 and not allow_insecure:
            raise KeyStorePermissionError(
                f"{path} is readable by other users (mode {oct(mode & 0o777)}); "
                "chmod 600 or pass allow_insecure=True"
            )
        with open(path) as fh:
            raw = json.load(fh)
        return cls({contact: bytes.fromhex(hexkey) for contact, hexkey in raw.items()})

    def save(self, path) -> None:
        payload = {contact: key.hex() for contact, key in self._keys.items()}
        fd = os.open(str(path), os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2)


@dataclass(frozen=True)
class Challenge:
    nonce: int       # 64 bits
    session_id: int  # 64 bits

    def __post_init__(self):
        for name, value in (("nonce", self.nonce), ("session_id", self.session_id)):
            if not 0 <= value < 1 << 64:
                raise ValueError(f"{name} must fit in 64 bits")

    def to_bytes(self) -> bytes:
        return self.nonce.to_bytes(8, "big") + self.session_id.to_bytes(8, "big")

    def to_bits(self) -> np.ndarray:
        return bits_from_bytes(self.to_bytes())

    @classmethod
    def from_bits(cls, bits) -> "Challenge":
        raw = bits_to_bytes(as_bits(bits))
        if len(raw) != 16:
            raise ValueError("challenge must be exactly 128 bits")
        return cls(
            nonce=int.from_bytes(raw[:8], "big"),
            session_id=int.from_bytes(raw[8:], "big"),
        )

    @classmethod
    def fresh(cls, rng: np.random.Generator | None = None) -> "Challenge":
        if rng is None:
            return cls(
                nonce=int.from_bytes(secrets.token_bytes(8), "big"),
                session_id=int.from_bytes(secrets.token_bytes(8), "big"),
            )
        return cls(
            nonce=int(rng.integers(0, 1 << 63)) << 1 | int(rng.integers(0, 2)),
            session_id=int(rng.integers(0, 1 << 63)) << 1 | int(rng.integers(0, 2)),
        )


@dataclass(frozen=True)
class MacResponse:
    mac: bytes  # 128 bits

    def __post_init__(self):
        if len(self.mac) != 16:
            raise ValueError("mac must be exactly 16 bytes")

    def to_bits(self) -> np.ndarray:
        return bits_from_bytes(self.mac)

    @classmethod
    def from_bits(cls, bits) -> "MacResponse":
        return cls(mac=bits_to_bytes(as_bits(bits)))


def compute_mac(key: bytes, challenge: Challenge) -> MacResponse:
    """First 128 bits of HMAC-SHA256 over nonce || session_id (big-endian)."""
    if len(key) != KEY_BYTES:
        raise ValueError(f"key must be {KEY_BYTES} bytes")
    digest = hmac.new(key, challenge.to_bytes(), hashlib.sha256).digest()
    return MacResponse(mac=digest[:16])


def verify_mac(key: bytes, challenge: Challenge, received: MacResponse) -> bool:
    expected = compute_mac(key, challenge)
    return hmac.compare_digest(expected.mac, received.mac)


# -- session state -----------------------------------------------------------------

@dataclass(frozen=True)
class SessionTimers:
    t_start: float = 10.0
    t_challenge: float = 30.0
    t_response: float = 30.0
    t_finish: float = 10.0


PHASES = ("idle", "await_challenge", "await_response", "await_finish", "done", "failed")

_CALLER_ORDER = {"idle": 0, "await_challenge": 1, "await_finish": 2, "done": 3, "failed": 3}
_RECEIVER_ORDER = {"idle": 0, "await_response": 1, "done": 2, "failed": 2}


@dataclass
class SessionState:
    role: str
    alpha: float = 0.6
    phase: str = "idle"
    attempts: dict = field(default_factory=dict)
    timers: SessionTimers = field(default_factory=SessionTimers)
    transcript: list = field(default_factory=list)
    seen_challenges: set = field(default_factory=set)  # replay cache: (nonce, session)

    def advance(self, phase: str) -> None:
        order = _CALLER_ORDER if self.role == "caller" else _RECEIVER_ORDER
        if phase not in order:
            raise ValueError(f"phase {phase!r} not valid for role {self.role!r}")
        if order[phase] < order[self.phase]:
            raise RuntimeError(f"illegal transition {self.phase} -> {phase}")
        self.phase = phase

    def log(self, t: float, direction: str, phase: str, bits, note: str = "") -> None:
        self.transcript.append(
            {"t": round(t, 3), "dir": direction, "phase": phase,
             "bits": bits_to_hex(bits) if bits is not None and len(bits) % 8 == 0 else "",
             "note": note}
        )

    def bump(self, phase: str, n: int = 1) -> None:
        self.attempts[phase] = self.attempts.get(phase, 0) + n


@dataclass
class SessionReport:
    caller_outcome: str = "failed"
    receiver_outcome: str = "failed"
    beacon_ok: bool = False
    challenge_ok: bool = False
    response_ok: bool = False
    mac_ok: bool = False
    finish_ok: bool = False
    overall_ok: bool = False
    attempts: dict = field(default_factory=dict)
    total_transmissions: int = 0
    restart_cycles: int = 0
    audio_seconds: float = 0.0
    corrected_bits: int = 0
    failure_stage: str = ""
    challenge: Challenge | None = None
    caller_transcript: list = field(default_factory=list)
    receiver_transcript: list = field(default_factory=list)


# -- the lock-step call -----------------------------------------------------------

def run_call(
    link,
    caller_key: bytes | None,
    receiver_key: bytes,
    *,
    policy: ArqPolicy = ArqPolicy(),
    base_alpha: float = 0.6,
    sync: SyncPattern = DEFAULT_SYNC,
    threshold: int = DEFAULT_SYNC_THRESHOLD,
    search_window: int = DEFAULT_SEARCH_WINDOW,
    timers: SessionTimers = SessionTimers(),
    master_seed: int = 0,
    caller_present: bool = True,
    max_restart_cycles: int | None = None,
    challenge_rng: np.random.Generator | None = None,
) -> SessionReport:
    """Execute one authentication call over the given frame link.

    `caller_key` is what the caller actually uses (None means the caller
    never starts the protocol); `receiver_key` is the receiver's stored key
    for the claimed contact.  Per-attempt randomness derives from
    (master_seed, phase, cycle, attempt) and never from alpha, so runs at
    different strengths are coupled.
    """
    caller = SessionState(role="caller", alpha=base_alpha, timers=timers)
    receiver = SessionState(role="receiver", alpha=base_alpha, timers=timers)
    report = SessionReport()
    bcode, pcode = beacon_code(), payload_code()
    if max_restart_cycles is None:
        max_restart_cycles = policy.max_attempts
    challenge_rng = challenge_rng or np.random.default_rng(
        np.random.SeedSequence((master_seed, 0xC4A11E))
    )
    clock = 0.0

    def rng_factory(phase_idx: int, cycle: int):
        def make(attempt: int) -> np.random.Generator:
            return np.random.default_rng(
                np.random.SeedSequence((master_seed, phase_idx, cycle, attempt))
            )
        return make

    def track(outcome) -> None:
        nonlocal clock
        clock += outcome.audio_seconds
        report.total_transmissions += outcome.attempts
        report.corrected_bits += outcome.corrected

    def sealed() -> SessionReport:
        report.audio_seconds = clock
        report.caller_transcript = caller.transcript
        report.receiver_transcript = receiver.transcript
        return report

    if not caller_present:
        # receiver scans for T_start and concludes the call is unprotected
        clock += timers.t_start
        receiver.advance("done")
        report.receiver_outcome = "unauthenticated"
        report.caller_outcome = "failed"
        report.failure_stage = "beacon"
        return sealed()

    # ---- Start phase: caller -> receiver ----
    beacon_out = send_with_arq(
        link, bcode, sync, START_BEACON, policy, base_alpha, rng_factory(1, 0),
        threshold=threshold, search_window=search_window,
        validator=lambda got: np.array_equal(got, START_BEACON),
        phase="start", truncate_to=START_BEACON.size,
    )
    track(beacon_out)
    caller.bump("start", beacon_out.attempts)
    receiver.bump("start", beacon_out.attempts)
    caller.log(clock, "tx", "start", START_BEACON)
    report.attempts["start"] = beacon_out.attempts
    if not beacon_out.ok:
        report.failure_stage = "beacon"
        receiver.advance("done")
        report.receiver_outcome = "unauthenticated"
        caller.advance("failed")
        return sealed()
    report.beacon_ok = True
    receiver.log(clock, "rx", "start", beacon_out.message)
    caller.advance("await_challenge")

    # ---- Challenge / Response / Finish, with full restarts on MAC mismatch ----
    for cycle in range(max_restart_cycles):
        report.restart_cycles = cycle
        challenge = Challenge.fresh(challenge_rng)
        while (challenge.nonce, challenge.session_id) in receiver.seen_challenges:
            challenge = Challenge.fresh(challenge_rng)  # pragma: no cover (2^-128)
        receiver.seen_challenges.add((challenge.nonce, challenge.session_id))
        report.challenge = challenge

        challenge_out = send_with_arq(
            link, pcode, sync, challenge.to_bits(), policy, base_alpha,
            rng_factory(2, cycle), threshold=threshold, search_window=search_window,
            phase="challenge", truncate_to=128,
        )
        track(challenge_out)
        receiver.bump("challenge", challenge_out.attempts)
        receiver.log(clock, "tx", "challenge", challenge.to_bits())
        report.attempts["challenge"] = report.attempts.get("challenge", 0) + challenge_out.attempts
        if not challenge_out.ok:
            report.failure_stage = "challenge"
            break
        got_challenge = Challenge.from_bits(challenge_out.message)
        report.challenge_ok = got_challenge == challenge
        caller.log(clock, "rx", "challenge", challenge_out.message)

        receiver.advance("await_response")
        mac = compute_mac(caller_key, got_challenge)
        response_out = send_with_arq(
            link, pcode, sync, mac.to_bits(), policy, base_alpha,
            rng_factory(3, cycle), threshold=threshold, search_window=search_window,
            phase="response", truncate_to=128,
        )
        track(response_out)
        caller.bump("response", response_out.attempts)
        caller.log(clock, "tx", "response", mac.to_bits())
        report.attempts["response"] = report.attempts.get("response", 0) + response_out.attempts
        if not response_out.ok:
            report.failure_stage = "response"
            break
        report.response_ok = True
        receiver.log(clock, "rx", "response", response_out.message)

        got_mac = MacResponse.from_bits(response_out.message)
        if verify_mac(receiver_key, challenge, got_mac):
            report.mac_ok = True
            caller.advance("await_finish")
            finish_out = send_with_arq(
                link, bcode, sync, FINISH_BEACON, policy, base_alpha,
                rng_factory(4, cycle), threshold=threshold, search_window=search_window,
                validator=lambda got: np.array_equal(got, FINISH_BEACON),
                phase="finish", truncate_to=FINISH_BEACON.size,
            )
            track(finish_out)
            receiver.bump("finish", finish_out.attempts)
            receiver.log(clock, "tx", "finish", FINISH_BEACON)
            report.attempts["finish"] = report.attempts.get("finish", 0) + finish_out.attempts
            if finish_out.ok:
                report.finish_ok = True
                report.overall_ok = True
                caller.log(clock, "rx", "finish", finish_out.message)
                caller.advance("done")
                receiver.advance("done")
                report.caller_outcome = "authenticated"
                report.receiver_outcome = "authenticated"
            else:
                # receiver verified the MAC but the caller never saw the
                # confirmation; the receiver trusts the link, the caller
                # must treat the call as unconfirmed
                report.failure_stage = "finish"
                receiver.advance("done")
                report.receiver_outcome = "authenticated"
                caller.advance("failed")
            return sealed()
        # MAC mismatch: a transmission error or an impostor; retry with a
        # fresh challenge (never reuse the nonce)
        report.failure_stage = "mac"
    if caller.phase != "done":
        caller.advance("failed")
    if receiver.phase != "done":
        receiver.advance("failed")
    report.caller_outcome = "failed"
    report.receiver_outcome = "failed"
    return sealed()


def caller_run(link, key: bytes, peer_key: bytes | None = None, **kwargs) -> str:
    """Run a call from the caller's seat; returns 'authenticated' or 'failed'.

    `peer_key` is what the receiver has on file for this contact (defaults
    to the caller's own key, i.e. an honestly provisioned pair).
    """
    report = run_call(link, key, peer_key if peer_key is not None else key, **kwargs)
    return report.caller_outcome


def receiver_run(link, keystore: KeyStore, contact: str, caller_key: bytes | None, **kwargs) -> str:
    """Run a call from the receiver's seat.

    Returns 'authenticated:<contact>', 'unauthenticated' (no valid start
    beacon inside T_start) or 'failed'.
    """
    stored = keystore.key_for(contact)
    if stored is None:
        raise KeyError(f"no key on file for contact {contact!r}")
    report = run_call(
        link, caller_key, stored, caller_present=caller_key is not None, **kwargs
    )
    if report.receiver_outcome == "authenticated":
        return f"authenticated:{contact}"
    return report.receiver_outcome


# -- attack drills ------------------------------------------------------------------

@dataclass
class AttackReport:
    kind: str
    trials: int
    acceptances: int
    notes: str = ""


def simulate_attack(
    kind: str,
    trials: int,
    link=None,
    *,
    master_seed: int = 0,
    policy: ArqPolicy = ArqPolicy(),
    sync: SyncPattern = DEFAULT_SYNC,
) -> AttackReport:
    """Adversary with full protocol knowledge and channel access, no key.

    replay: replays a previously recorded valid response into a new session.
    forgery: guesses 128-bit MACs against a fresh challenge.
    spoofed_id: runs the honest protocol under a random key.
    injected_watermark: embeds well-formed frames with attacker-chosen
    payloads; the datalink accepts them, MAC verification must not.
    """
    rng = np.random.default_rng(np.random.SeedSequence((master_seed, 0xA77AC4)))
    key = rng.integers(0, 256, size=KEY_BYTES, dtype=np.uint8).tobytes()
    accept = 0
    notes = ""

    if kind == "forgery":
        challenge = Challenge.fresh(rng)
        for _ in range(trials):
            guess = MacResponse(rng.integers(0, 256, size=16, dtype=np.uint8).tobytes())
            if verify_mac(key, challenge, guess):
                accept += 1
    elif kind == "replay":
        # one honest session to record, then replay its response elsewhere
        recorded_challenge = Challenge.fresh(rng)
        recorded_mac = compute_mac(key, recorded_challenge)
        for _ in range(trials):
            fresh = Challenge.fresh(rng)
            while fresh == recorded_challenge:
                fresh = Challenge.fresh(rng)  # pragma: no cover
            if verify_mac(key, fresh, recorded_mac):
                accept += 1
        notes = "response recorded from a prior session, replayed against fresh challenges"
    elif kind == "spoofed_id":
        for _ in range(trials):
            wrong_key = rng.integers(0, 256, size=KEY_BYTES, dtype=np.uint8).tobytes()
            challenge = Challenge.fresh(rng)
            if verify_mac(key, challenge, compute_mac(wrong_key, challenge)):
                accept += 1
        notes = "caller holds a random key but claims a provisioned identity"
    elif kind == "injected_watermark":
        if link is None:
            raise ValueError("injected_watermark needs a frame link")
        pcode = payload_code()
        delivered = 0
        challenge = Challenge.fresh(rng)
        for i in range(trials):
            fake_mac = MacResponse(rng.integers(0, 256, size=16, dtype=np.uint8).tobytes())
            frame = build_frame(pcode, sync, fake_mac.to_bits(), phase="response")
            delivery = link.deliver(frame.bits, 1.0, np.random.default_rng(
                np.random.SeedSequence((master_seed, 0x1D, i))))
            result = receive_frame(delivery, pcode, sync)
            if result.message is not None:
                delivered += 1
                got = MacResponse.from_bits(result.message[:128])
                if verify_mac(key, challenge, got):
                    accept += 1
        notes = f"datalink delivered {delivered}/{trials} well-formed attacker frames"
    else:
        raise ValueError(f"unknown attack kind {kind!r}")
    return AttackReport(kind=kind, trials=trials, acceptances=accept, notes=notes)
