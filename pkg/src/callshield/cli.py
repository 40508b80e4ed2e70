"""Command-line front end.

Subcommands: bch, distort, datalink, sync-eval, ablation, auth, attack,
sweep, timing, plot.  Results go to JSONL (one record per trial/cell) and
CSV aggregates; `plot` converts result files into gnuplot-ready .dat.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .audio import (
    FRAME_SAMPLES,
    DelaySpec,
    DistortionSpec,
    apply_distortion,
    load_wav,
    save_wav,
    synthetic_speech,
)
from .auth import beacon_code, payload_code, run_call, simulate_attack
from .bch import build_code
from .bits import bits_from_hex, bits_to_hex
from .datalink import (
    DEFAULT_SYNC,
    ArqPolicy,
    SpreadSpectrumFrameLink,
    StatisticalFrameLink,
    build_frame,
    receive_frame,
)
from .harness import ExperimentSpec
from .watermark import SpreadSpectrumCodec, load_default_calibration


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--backend", choices=("statistical", "spread_spectrum"), default="statistical")
    p.add_argument("--out", default=None, help="output path stem (JSONL + CSV)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--config", default=None, help="JSON file overriding flag defaults")


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            for key, val in json.load(fh).items():
                setattr(args, key, val)
    return args


def _emit(rows, args, default_stem: str) -> None:
    stem = args.out or default_stem
    harness.write_jsonl(rows, stem + ".jsonl")
    if isinstance(rows, list) and rows and isinstance(rows[0], dict):
        harness.write_csv(rows, stem + ".csv")
    print(f"wrote {stem}.jsonl")


def _cmd_bch(args) -> int:
    code = build_code(args.m, args.t)
    if args.action == "info":
        print(f"n={code.n} k={code.k} t={code.t} generator=0x{code.generator_poly:x}")
        return 0
    bits = bits_from_hex(args.hex)
    if args.action == "encode":
        cw = code.encode(bits[: code.k])
        pad = (-cw.bits.size) % 8
        print(bits_to_hex(np.concatenate([cw.bits, np.zeros(pad, dtype=np.uint8)])))
        return 0
    received = bits[: code.n]
    if received.size < code.n:
        print(f"need {code.n} bits, got {received.size}", file=sys.stderr)
        return 2
    out = code.decode(received)
    if out is None:
        print("decode-failure")
        return 1
    msg, corrected = out
    pad = (-msg.size) % 8
    print(bits_to_hex(np.concatenate([msg, np.zeros(pad, dtype=np.uint8)])), f"corrected={corrected}")
    return 0


def _cmd_distort(args) -> int:
    signal = load_wav(args.infile)
    spec = DistortionSpec(kind=args.kind, coverage=args.coverage, rng_seed=args.seed)
    save_wav(apply_distortion(signal, spec), args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _cmd_datalink(args) -> int:
    code = payload_code() if args.code == "payload" else beacon_code()
    codec = SpreadSpectrumCodec()
    if args.action == "send":
        message = bits_from_hex(args.hex)[: code.k]
        frame = build_frame(code, DEFAULT_SYNC, message)
        rng = np.random.default_rng(args.seed)
        if args.infile:
            carrier = load_wav(args.infile)
        else:
            carrier = synthetic_speech(frame.bits.size * FRAME_SAMPLES, rng)
        save_wav(codec.embed_stream(frame.bits, carrier, args.alpha), args.outfile)
        print(f"wrote {args.outfile} ({frame.bits.size} frames, {frame.bits.size * 0.04:.2f} s)")
        return 0
    signal = load_wav(args.infile)
    picks = codec.acquire(signal, DEFAULT_SYNC.bits, signal.samples.size)
    if not picks:
        print("sync-not-found", file=sys.stderr)
        return 1
    n_bits = min(len(DEFAULT_SYNC) + code.n + 8, signal.samples.size // FRAME_SAMPLES)
    decoded = codec.decode_stream(signal, picks[0], n_bits)
    from .datalink import Delivery

    delivery = Delivery(
        bits=np.asarray([d.bit for d in decoded], dtype=np.uint8),
        confidences=np.asarray([d.confidence for d in decoded]),
        truth_offset=-1,
        aligned_at_zero=False,
        audio_seconds=signal.duration_s,
    )
    result = receive_frame(delivery, code, DEFAULT_SYNC)
    if result.message is None:
        print(f"decode-failure ({result.failure})", file=sys.stderr)
        return 1
    msg = result.message
    pad = (-msg.size) % 8
    print(bits_to_hex(np.concatenate([msg, np.zeros(pad, dtype=np.uint8)])),
          f"offset={result.sync_offset} corrected={result.corrected}")
    return 0


def _spec_from_args(args, experiment: str, **overrides) -> ExperimentSpec:
    kw = dict(
        experiment=experiment,
        backend=args.backend,
        trials=args.trials,
        master_seed=args.seed,
    )
    kw.update(overrides)
    return ExperimentSpec(**kw)


def _cmd_sync_eval(args) -> int:
    rows = harness.run_sync_eval(_spec_from_args(args, "sync_eval"), alpha=args.alpha)
    ref = harness.load_sync_reference()
    for r in rows:
        expect = ref.get(r["pattern"], {})
        print(f"{r['pattern']:10s} clean {r['clean']:.3f} (ref {expect.get('clean', float('nan')):.2f}) "
              f"dist {r['dist']:.3f} (ref {expect.get('dist', float('nan')):.2f})")
    _emit(rows, args, "sync_eval")
    return 0


def _cmd_ablation(args) -> int:
    res = harness.run_ablation(_spec_from_args(args, "ablation"))
    rows = [{"config": k, **v} for k, v in res.items()]
    for row in rows:
        print(f"{row['config']:10s} {row['success']:.3f}  CI ({row['ci'][0]:.3f}, {row['ci'][1]:.3f})")
    _emit(rows, args, "ablation")
    return 0


def _cmd_auth(args) -> int:
    calibration = load_default_calibration()
    cond = (args.distortion, args.coverage, args.alpha)
    if args.backend == "statistical":
        link = StatisticalFrameLink(calibration, cond)
    else:
        codec = SpreadSpectrumCodec()
        link = SpreadSpectrumFrameLink(
            codec, DEFAULT_SYNC, cond,
            lambda n_bits, rng: synthetic_speech(n_bits * FRAME_SAMPLES, rng),
        )
    key = bytes(range(32))
    policy = ArqPolicy(max_attempts=args.attempts, strategy=args.strategy)
    rows = []
    ok = 0
    for t in range(args.trials):
        rep = run_call(link, key, key, policy=policy, base_alpha=args.alpha,
                       master_seed=args.seed + t, max_restart_cycles=args.attempts)
        ok += rep.overall_ok
        rows.append({
            "trial": t, "seed": args.seed + t, "overall": rep.overall_ok,
            "beacon": rep.beacon_ok, "challenge": rep.challenge_ok,
            "response": rep.response_ok, "mac": rep.mac_ok, "finish": rep.finish_ok,
            "attempts": rep.attempts, "audio_seconds": rep.audio_seconds,
            "failure_stage": rep.failure_stage,
        })
    lo, hi = harness.wilson_interval(ok, args.trials)
    print(f"success {ok}/{args.trials} = {ok/args.trials:.3f}  CI ({lo:.3f}, {hi:.3f})")
    _emit(rows, args, "auth_run")
    return 0


def _cmd_attack(args) -> int:
    calibration = load_default_calibration()
    link = StatisticalFrameLink(calibration, ("clean", 0.0, 1.0))
    report = simulate_attack(args.kind, args.trials, link, master_seed=args.seed)
    print(f"{report.kind}: {report.acceptances}/{report.trials} accepted. {report.notes}")
    _emit([report.__dict__], args, f"attack_{args.kind}")
    return 0 if report.acceptances == 0 else 1


def _cmd_sweep(args) -> int:
    spec = _spec_from_args(args, "stages", alphas=tuple(args.alphas))
    rows = harness.run_protocol_stages(spec)
    for r in rows:
        print(f"{r['kind']:12s} cov {r['coverage']:.1f} a {r['alpha']:.1f} "
              f"beacon {r['beacon']:.3f} overall {r['overall']:.3f}")
    _emit(rows, args, "sweep_stages")
    retry = harness.run_retry_comparison(_spec_from_args(args, "retry", alphas=(args.alphas[0],)))
    stem = (args.out or "sweep_stages") + "_retry"
    harness.write_jsonl(retry, stem + ".jsonl")
    harness.write_csv(retry, stem + ".csv")
    print(f"wrote {stem}.jsonl")
    return 0


def _cmd_timing(args) -> int:
    res = harness.run_timing(_spec_from_args(args, "timing"), guard_seconds=args.guard)
    for n, group in res["groups"].items():
        if group:
            print(f"{n} attempt(s): mean {group['mean_s']:.2f} min {group['min_s']:.2f} "
                  f"max {group['max_s']:.2f} (n={group['count']})")
    rows = [{"attempts": n, **(g or {})} for n, g in res["groups"].items()]
    _emit(rows, args, "timing")
    return 0


def _cmd_plot(args) -> int:
    rows = harness.read_jsonl(args.infile)
    harness.write_plot_data(rows, args.outfile, args.x, args.y, ci_key=args.ci)
    print(f"wrote {args.outfile}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="callshield", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bch", help="encode/decode hex bitstreams")
    p.add_argument("action", choices=("encode", "decode", "info"))
    p.add_argument("hex", nargs="?", default="")
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--t", type=int, default=5)
    p.set_defaults(func=_cmd_bch)

    p = sub.add_parser("distort", help="apply a channel distortion to a WAV file")
    p.add_argument("infile")
    p.add_argument("outfile")
    p.add_argument("--kind", required=True)
    p.add_argument("--coverage", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_distort)

    p = sub.add_parser("datalink", help="send/recv one framed message over WAV")
    p.add_argument("action", choices=("send", "recv"))
    p.add_argument("--hex", default="b2")
    p.add_argument("--code", choices=("beacon", "payload"), default="beacon")
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", default=None)
    p.add_argument("--out", dest="outfile", default="frame.wav")
    p.set_defaults(func=_cmd_datalink)

    p = sub.add_parser("sync-eval", help="preamble detection study")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=_cmd_sync_eval)

    p = sub.add_parser("ablation", help="no-sync / sync-only / full comparison")
    _add_common(p)
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("auth", help="run authentication trials")
    _add_common(p)
    p.add_argument("--distortion", default="clean")
    p.add_argument("--coverage", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--strategy", choices=("constant_alpha", "adaptive_alpha"), default="adaptive_alpha")
    p.add_argument("--attempts", type=int, default=3)
    p.set_defaults(func=_cmd_auth)

    p = sub.add_parser("attack", help="attack drills against the protocol")
    _add_common(p)
    p.add_argument("--kind", required=True,
                   choices=("replay", "forgery", "spoofed_id", "injected_watermark"))
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("sweep", help="protocol stage grid + retry comparison")
    _add_common(p)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.6])
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("timing", help="authentication time by retry count")
    _add_common(p)
    p.add_argument("--guard", type=float, default=harness.TIMING_GUARD_SECONDS)
    p.set_defaults(func=_cmd_timing)

    p = sub.add_parser("plot", help="convert results JSONL to gnuplot .dat")
    p.add_argument("infile")
    p.add_argument("outfile")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--ci", default=None)
    p.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    args = _apply_config(args)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
