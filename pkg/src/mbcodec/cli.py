"""``mbcodec`` command line.

Exit codes: 0 success, 2 usage error (bad flags, bad config file), 3 data
error (any :class:`~mbcodec.errors.CodecError` or unreadable input).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import audio, bitstream, depth_sampler, pipeline, pqmf
from .errors import CodecError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

_CODEC_KEYS = {f.name: f.type for f in dataclasses.fields(pipeline.CodecConfig)}
_TRAINING_KEYS = {f.name: f.type for f in dataclasses.fields(pipeline.TrainingConfig)}


class UsageError(Exception):
    pass


def _kebab(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "-", name).lower()


def _convert(key: str, value: str):
    if key == "stage2":
        return depth_sampler.DepthDistribution.parse(value)
    if key == "reserve_zero":
        if value.lower() not in {"true", "false", "1", "0"}:
            raise UsageError(f"reserve_zero must be a boolean, got {value!r}")
        return value.lower() in {"true", "1"}
    if key in {"ema_decay", "reseed_threshold"}:
        return float(value)
    return int(value)


def read_config(path) -> tuple[pipeline.CodecConfig, pipeline.TrainingConfig]:
    """Parse a ``key=value`` file; unknown keys are an error."""
    codec, training = {}, {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CODEC_KEYS and key not in _TRAINING_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            converted = _convert(key, value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        (codec if key in _CODEC_KEYS else training)[key] = converted
    return pipeline.CodecConfig(**codec), pipeline.TrainingConfig(**training)


def cmd_design_pqmf(args) -> int:
    proto = pqmf.design_prototype(args.bands, args.taps, args.attenuation)
    bank = pqmf.build_bank(proto)
    if args.out:
        pqmf.save_filter(proto, args.out)
    print(f"bands={proto.num_bands} taps={proto.num_taps} cutoff={proto.cutoff:.6f} beta={proto.beta:.4f}")
    print(f"impulse roundtrip error: {pqmf.impulse_roundtrip_error_db(bank):.2f} dB")
    print(f"product-filter secondary tap ratio: {pqmf.nyquist_tap_ratio(proto):.3e}")
    return EXIT_OK


def cmd_train(args) -> int:
    config, training = read_config(args.config) if args.config else (pipeline.CodecConfig(), pipeline.TrainingConfig())
    if args.seed is not None:
        training = dataclasses.replace(training, seed=args.seed)
    files = sorted(Path(args.corpus_dir).glob("*.wav"))
    if not files:
        raise CodecError(f"no .wav files in {args.corpus_dir}")
    model = pipeline.train(config, files, training)
    pipeline.save_model(model, args.out_model)
    log_path = Path(args.log) if args.log else Path(str(args.out_model) + ".log.jsonl")
    with log_path.open("w") as f:
        for record in model.training_log:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"wrote {args.out_model} ({len(files)} files, log {log_path})")
    return EXIT_OK


def cmd_encode(args) -> int:
    model = pipeline.load_model(args.model)
    x, sr = audio.read_wav(args.input)
    semantic = audio.read_features(args.semantic) if args.semantic else None
    stream = pipeline.encode(model, x, depth=args.depth, sample_rate=sr, semantic=semantic)
    Path(args.output).write_bytes(stream.to_bytes())
    h = stream.header
    print(f"{h.num_frames} frames, {bitstream.bitrate_bps(h)} bps")
    return EXIT_OK


def cmd_decode(args) -> int:
    model = pipeline.load_model(args.model)
    y = pipeline.decode(model, Path(args.input).read_bytes())
    audio.write_wav(args.output, y, model.config.sample_rate)
    print(f"{y.size} samples")
    return EXIT_OK


def cmd_eval(args) -> int:
    report = pipeline.evaluate(args.reference, args.decoded)
    print(report.to_record() if args.json else report.to_text())
    return EXIT_OK


def cmd_info(args) -> int:
    if args.stream:
        header, _ = bitstream.unpack_codes(Path(args.stream).read_bytes())
    else:
        if args.config:
            config, _ = read_config(args.config)
        else:
            config = pipeline.CodecConfig(frame_rate=args.frame_rate, total_codebooks=args.codebooks)
        header = config.header(0)
    print(f"N={header.total_codebooks}")
    print(f"FR={header.frame_rate} Hz")
    print(f"bits_per_code={header.bits_per_code}")
    print(f"BPS={bitstream.bitrate_bps(header)} bps")
    print(f"compression={bitstream.compression_ratio(header):.1f}x")
    if args.stream:
        print(f"frames={header.num_frames}")
    return EXIT_OK


def cmd_sample_depths(args) -> int:
    dist = depth_sampler.DepthDistribution.parse(args.dist)
    rng = np.random.default_rng(args.seed or 0)
    draws = depth_sampler.sample(dist, args.layers, rng, size=args.count)
    emp = depth_sampler.histogram(draws, args.layers)
    exact = depth_sampler.pmf(dist, args.layers)
    print("depth empirical pmf")
    for k in range(args.layers):
        print(f"{k + 1:5d} {emp[k]:.5f} {exact[k]:.5f}")
    print(f"L1={np.abs(emp - exact).sum():.5f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbcodec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--seed", type=int, default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("design-pqmf", help="design a prototype filter and report reconstruction error")
    s.add_argument("--bands", type=int, required=True)
    s.add_argument("--taps", type=int, default=pqmf.DEFAULT_TAPS)
    s.add_argument("--attenuation", type=float, default=pqmf.DEFAULT_ATTENUATION_DB)
    s.add_argument("--out")
    s.set_defaults(func=cmd_design_pqmf)

    s = sub.add_parser("train", help="train codebooks on a directory of WAV files")
    s.add_argument("--config")
    s.add_argument("--corpus-dir", required=True)
    s.add_argument("--out-model", required=True)
    s.add_argument("--log")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("encode", help="WAV -> .mbc")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--model", required=True)
    s.add_argument("--depth", type=int)
    s.add_argument("--semantic", help="MBSF file of external per-frame semantic features")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help=".mbc -> WAV")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("eval", help="objective metrics between two WAV files")
    s.add_argument("reference")
    s.add_argument("decoded")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("info", help="bitrate and compression of a stream or configuration")
    s.add_argument("stream", nargs="?")
    s.add_argument("--config")
    s.add_argument("--frame-rate", type=int, default=25)
    s.add_argument("--codebooks", type=int, default=8)
    s.set_defaults(func=cmd_info)

    s = sub.add_parser("sample-depths", help="histogram of sampled dropout depths next to the pmf")
    s.add_argument("--dist", required=True)
    s.add_argument("--layers", type=int, required=True)
    s.add_argument("--count", type=int, default=100000)
    s.set_defaults(func=cmd_sample_depths)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CodecError as exc:
        kind = "data-error" if type(exc) is CodecError else _kebab(type(exc).__name__)
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, EOFError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
