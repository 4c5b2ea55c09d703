"""Command-line entry point: ``tkc <subcommand> ...``.

Exit codes: 0 success, 2 usage error (bad flags, missing inputs), 3 configuration
error (hash or config mismatch), 1 any other library error. Failures print one
JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import ConfigurationError, TKCError, __version__
from .io import sha256_bytes, sha256_file

log = logging.getLogger("tkc")

RUN_MANIFEST = "run_manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


# -- helpers ---------------------------------------------------------------------

def _need(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _tree_sha(root) -> str:
    root = Path(root)
    lines = [f"{p.relative_to(root).as_posix()} {sha256_file(p)}"
             for p in sorted(root.rglob("*")) if p.is_file() and p.name != RUN_MANIFEST]
    return sha256_bytes("\n".join(lines).encode("utf-8"))


def _write_manifest(path, command: str, config: dict, seeds: dict | None = None, hashes: dict | None = None):
    from .io import run_manifest, write_json

    write_json(path, run_manifest(command, config, seeds, hashes))


def _load_config_file(path) -> dict:
    p = _need(path, "config file")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a mapping")
    return data


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _kernel_pool(paths, pool_length: int | None) -> list[np.ndarray]:
    from .io import read_tkck

    pool = []
    for p in paths:
        ks = read_tkck(_need(p, "kernel file"))
        if pool_length:
            pool.extend(ks[i:i + pool_length] for i in range(0, len(ks) - pool_length + 1, pool_length))
        else:
            pool.append(ks)
    return pool


def _load_codec(path):
    from .kernelcodec import KernelCodec

    return KernelCodec.load(_need(path, "codec file"))


def _degradation(args):
    from .degrade import DegradationConfig

    cfg = DegradationConfig(scale=args.scale, downsample_mode=args.mode, additive_noise_sigma=args.noise_sigma)
    cfg.validate()
    return cfg


# -- subcommands -----------------------------------------------------------------

def cmd_synth_kernels(args) -> None:
    from .io import write_tkck
    from .kernelsynth import KernelSampler, interpolated_sequence, sample_kernels
    from .rng import substream

    sampler = KernelSampler(sigma_range=(args.sigma_min, args.sigma_max), noise_level=args.noise,
                            size=args.size, rng_seed=args.seed)
    sampler.validate()
    rng = substream(args.seed, "synth-kernels")
    if args.interpolate:
        ks = interpolated_sequence(sampler, args.count, rng, anchors=args.interpolate)
    else:
        ks = sample_kernels(sampler, args.count, rng)
    config = {"count": args.count, "sampler": sampler.to_dict(), "interpolate_anchors": args.interpolate}
    write_tkck(args.out, ks)
    _write_manifest(str(args.out) + ".json", "synth-kernels", config, {"seed": args.seed})


def cmd_fit_codec(args) -> None:
    from .io import read_tkck
    from .kernelcodec import fit_codec

    parts, hashes = [], {}
    for p in args.kernels:
        data = _need(p, "kernel file").read_bytes()
        hashes[Path(p).name] = sha256_bytes(data)
        parts.append(read_tkck(p))
    corpus_sha = sha256_bytes(json.dumps(hashes, sort_keys=True).encode("utf-8"))
    codec = fit_codec(np.concatenate(parts), args.dim, corpus_sha=corpus_sha)
    codec.save(args.out)
    _write_manifest(str(args.out) + ".json", "fit-codec", {"dim": args.dim, "corpus_size": int(sum(map(len, parts)))},
                    hashes={"corpus": corpus_sha, "codec": codec.sha, **hashes})


def cmd_degrade(args) -> None:
    from .consistency import kernel_change_series
    from .dataset import write_sequence
    from .degrade import degrade_sequence
    from .io import load_frames, read_tkck

    hr = load_frames(_need(args.input, "HR frame directory"))
    ks = read_tkck(_need(args.kernels, "kernel file"))
    cfg = _degradation(args)
    lr, used = degrade_sequence(hr, ks, cfg, seed=args.seed)
    manifest = {"name": Path(args.out).name, "frames": int(len(hr)), "degradation": cfg.to_dict(),
                "seed": args.seed, "looped": bool(len(hr) > len(ks)), "codec_sha": ""}
    hashes = {}
    if args.codec:
        codec = _load_codec(args.codec)
        manifest["codec_sha"] = codec.sha
        hashes["codec"] = codec.sha
        if len(used) > 1:
            manifest["consistency"] = kernel_change_series(used, codec).summary
    write_sequence(args.out, lr, used, manifest, hr=hr if args.keep_hr else None)
    _write_manifest(Path(args.out) / RUN_MANIFEST, "degrade", manifest, {"seed": args.seed},
                    {"kernels": sha256_file(args.kernels), **hashes})


def _consistency_outputs(series, out: Path) -> None:
    from .io import atomic_write_bytes, write_json

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "change"])
    for t, c in enumerate(series.changes, start=1):
        w.writerow([t, repr(float(c))])
    atomic_write_bytes(out / "consistency.csv", buf.getvalue().encode("utf-8"))
    write_json(out / "summary.json", series.summary)


def cmd_analyze_consistency(args) -> None:
    from .consistency import classify_consistency, kernel_change_series, shuffled_baseline
    from .io import read_tkck, write_json
    from .rng import substream

    codec = _load_codec(args.codec)
    out = Path(args.out)
    seqs = {Path(p).stem: read_tkck(_need(p, "kernel file")) for p in args.kernels}
    if len(seqs) != len(args.kernels):
        raise UsageError("kernel files must have distinct names")
    series = {name: kernel_change_series(ks, codec) for name, ks in seqs.items()}
    config = {"threshold": args.threshold}
    if len(series) == 1:
        _consistency_outputs(next(iter(series.values())), out)
    else:
        for name, s in series.items():
            _consistency_outputs(s, out / name)
        base = shuffled_baseline(list(seqs.values()), codec, substream(args.seed, "shuffled-baseline"))
        _consistency_outputs(base, out / "shuffled")
        threshold = args.threshold
        if threshold is None:
            threshold = float(np.median([s.median for s in series.values()]))
        labels = {name: classify_consistency(s, threshold) for name, s in series.items()}
        write_json(out / "classification.json", {"threshold": threshold, "labels": labels})
        config["threshold"] = threshold
    hashes = {"codec": codec.sha, **{Path(p).name: sha256_file(p) for p in args.kernels}}
    _write_manifest(out / RUN_MANIFEST, "analyze-consistency", config, {"seed": args.seed}, hashes)


def cmd_build_benchmark(args) -> None:
    from .evalbench import build_benchmark
    from .io import load_frames

    root = _need(args.hr, "HR video root")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise UsageError(f"no video directories under {root}")
    videos = {d.name: load_frames(d) for d in dirs}
    pool = _kernel_pool(args.kernels, args.pool_length)
    codec = _load_codec(args.codec) if args.codec else None
    cfg = _degradation(args)
    build_benchmark(videos, pool, cfg, args.seed, args.out, codec=codec,
                    provenance={"hr_videos": sorted(videos)})
    config = {"degradation": cfg.to_dict(), "pool_length": args.pool_length, "pool_size": len(pool)}
    hashes = {"hr": _tree_sha(root), "pool": [sha256_file(p) for p in args.kernels]}
    if codec is not None:
        hashes["codec"] = codec.sha
    hashes["dataset"] = _tree_sha(args.out)
    _write_manifest(Path(args.out) / RUN_MANIFEST, "build-benchmark", config, {"seed": args.seed}, hashes)


_MODEL_FLAGS = ("est_frames", "res_frames", "iterations")
_TRAIN_FLAGS = ("epochs", "steps_per_epoch", "lr", "patch", "batch", "seed", "checkpoint_every")


def resolve_train_config(args):
    """Preset defaults, overlaid by the config file, overlaid by explicit flags."""
    from .srcore import ModelConfig, model_preset
    from .train import TrainConfig, train_preset

    file_cfg = _load_config_file(args.config) if args.config else {}
    preset = args.preset or file_cfg.get("preset", "desk")
    model = _deep_merge(model_preset(preset).to_dict(), file_cfg.get("model", {}))
    train = _deep_merge(train_preset(preset).to_dict(), file_cfg.get("train", {}))
    for k in _MODEL_FLAGS:
        if getattr(args, k) is not None:
            model[k] = getattr(args, k)
    if args.scale is not None:
        model["scale"] = args.scale
    for k in _TRAIN_FLAGS:
        if getattr(args, k) is not None:
            train[k] = getattr(args, k)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(train) - known
    if unknown:
        raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
    train["adam_betas"] = tuple(train["adam_betas"])
    train["preset"] = preset
    try:
        mcfg = ModelConfig.from_dict(model)
    except TypeError as exc:
        raise ConfigurationError(f"bad model config: {exc}") from None
    return mcfg, TrainConfig(**train)


def cmd_train(args) -> None:
    import torch

    from .dataset import TrainingSequence, load_root
    from .kernelcodec import encode
    from .kernelsynth import dirac_kernel
    from .train import init_model, train_loop

    codec = _load_codec(args.codec)
    mcfg, tcfg = resolve_train_config(args)
    mcfg = replace(mcfg, code_dim=codec.dim)
    mcfg.validate()
    if args.resume:
        _need(args.resume, "resume checkpoint")
    seqs = load_root(_need(args.data, "training data"), codec)
    for s in seqs:
        scale = s.manifest.get("degradation", {}).get("scale", mcfg.scale)
        if scale != mcfg.scale:
            raise ConfigurationError(f"sequence {s.name} has scale {scale}, model uses {mcfg.scale}")
    data = [TrainingSequence.from_sequence(s, codec) for s in seqs]
    model = init_model(mcfg, encode(codec, dirac_kernel(codec.size)), tcfg.seed)
    out = Path(args.out)
    result = train_loop(data, model, tcfg, codec_sha=codec.sha, out_dir=out, resume=args.resume,
                        max_steps=args.max_steps)
    config = {"model": mcfg.to_dict(), "train": tcfg.to_dict(), "max_steps": args.max_steps,
              "resume": str(args.resume) if args.resume else None, "threads": torch.get_num_threads()}
    hashes = {"codec": codec.sha, "dataset": _tree_sha(args.data),
              "checkpoints": {p.name: sha256_file(p) for p in result.checkpoints}}
    _write_manifest(out / RUN_MANIFEST, "train", config, {"seed": tcfg.seed}, hashes)


def cmd_evaluate(args) -> None:
    from .checkpoint import load_model
    from .dataset import load_root
    from .evalbench import evaluate, evaluate_bicubic, write_report

    codec = _load_codec(args.codec) if args.codec else None
    seqs = load_root(_need(args.benchmark, "benchmark"), codec)
    labels = args.labels or [None] * len(args.checkpoint)
    if len(labels) != len(args.checkpoint):
        raise UsageError("--labels must match --checkpoint one to one")
    rows, hashes, scale = [], {}, None
    for path, label in zip(args.checkpoint, labels):
        model, header = load_model(_need(path, "checkpoint"), codec_sha=codec.sha if codec else None)
        scale = model.cfg.scale
        hashes[Path(path).name] = sha256_file(path)
        rows.extend(evaluate(model, seqs, codec_sha=codec.sha if codec else header.get("codec_sha"), label=label))
    if args.bicubic:
        if scale is None:
            scale = seqs[0].manifest.get("degradation", {}).get("scale", 4)
        rows = evaluate_bicubic(seqs, scale) + rows
    if not rows:
        raise UsageError("nothing to evaluate: pass --checkpoint and/or --bicubic")
    write_report(rows, args.out)
    if codec is not None:
        hashes["codec"] = codec.sha
    hashes["dataset"] = _tree_sha(args.benchmark)
    _write_manifest(Path(args.out) / RUN_MANIFEST, "evaluate", {"labels": args.labels, "bicubic": args.bicubic},
                    hashes=hashes)


def cmd_upscale(args) -> None:
    from .checkpoint import load_model
    from .evalbench import upscale_frames
    from .io import load_frames, save_frames

    model, _ = load_model(_need(args.checkpoint, "checkpoint"))
    lr = load_frames(_need(args.input, "LR frame directory"))
    save_frames(args.out, upscale_frames(model, lr))
    _write_manifest(Path(args.out) / RUN_MANIFEST, "upscale", {"model": model.cfg.to_dict(), "frames": len(lr)},
                    hashes={"checkpoint": sha256_file(args.checkpoint), "input": _tree_sha(args.input)})


# -- parser ----------------------------------------------------------------------

def _add_degradation_flags(p) -> None:
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--mode", choices=["bicubic", "direct-subsample"], default="bicubic")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="additive Gaussian noise std on [0, 1] frames")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tkc", description="Temporal kernel consistency toolkit for blind video super-resolution.")
    ap.add_argument("--version", action="version", version=f"tkc {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-kernels", help="sample anisotropic Gaussian kernels to a .tkck file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma-min", type=float, default=0.6)
    p.add_argument("--sigma-max", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.25, help="multiplicative noise level")
    p.add_argument("--size", type=int, default=13)
    p.add_argument("--interpolate", type=int, default=0, metavar="ANCHORS",
                   help="blend between this many anchor kernels instead of i.i.d. draws")
    p.set_defaults(func=cmd_synth_kernels)

    p = sub.add_parser("fit-codec", help="fit the PCA kernel codec")
    p.add_argument("--kernels", nargs="+", required=True)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_codec)

    p = sub.add_parser("degrade", help="blur and downsample an HR frame directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kernels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--codec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-hr", action="store_true", help="copy ground truth into out/hr")
    _add_degradation_flags(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("analyze-consistency", help="per-step code change series and summaries")
    p.add_argument("--kernels", nargs="+", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="high/low split; default is the median of medians")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze_consistency)

    p = sub.add_parser("build-benchmark", help="degrade HR videos with sampled kernel sequences")
    p.add_argument("--hr", required=True, help="directory of per-video frame directories")
    p.add_argument("--kernels", nargs="+", required=True, help="kernel sequence files forming the pool")
    p.add_argument("--pool-length", type=int, help="split each kernel file into sequences of this length")
    p.add_argument("--codec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_degradation_flags(p)
    p.set_defaults(func=cmd_build_benchmark)

    p = sub.add_parser("train", help="train an Est-a + Res-b model")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=["desk", "paper"])
    p.add_argument("--resume")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--est-frames", type=int)
    p.add_argument("--res-frames", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patch", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Y-PSNR/SSIM report over a benchmark")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--checkpoint", nargs="*", default=[])
    p.add_argument("--labels", nargs="*")
    p.add_argument("--codec")
    p.add_argument("--bicubic", action="store_true", help="add the bicubic baseline row")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("upscale", help="super-resolve a directory of LR frames")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_upscale)
    return ap


def _set_threads() -> None:
    value = os.environ.get("TKC_THREADS")
    if not value:
        return
    import torch

    n = int(value)
    if n < 1:
        raise UsageError("TKC_THREADS must be a positive integer")
    torch.set_num_threads(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads()
        args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        _emit_error("usage", str(exc))
        return 2
    except ConfigurationError as exc:
        _emit_error("configuration", str(exc))
        return 3
    except (TKCError, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
