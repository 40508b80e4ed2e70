"""Caller authentication over a per-frame audio bit channel.

Layers, bottom to top:

- ``gf`` / ``bch``: GF(2^m) arithmetic and binary BCH error correction.
- ``audio``: 8 kHz PCM signals, WAV I/O, telephony-style distortions,
  random network delay.
- ``watermark``: the one-bit-per-40ms-frame channel, with a calibrated
  statistical backend and a spread-spectrum signal backend.
- ``datalink``: sync preambles, framing, sliding-window sync detection,
  stop-and-wait retransmission.
- ``auth``: the four-phase challenge-response protocol and attack drills.
- ``harness``: experiment runners and result emitters.
"""
from .bch import BchCode, Codeword, build_code
from .gf import GaloisField

__all__ = ["BchCode", "Codeword", "build_code", "GaloisField"]
__version__ = "0.1.0"
