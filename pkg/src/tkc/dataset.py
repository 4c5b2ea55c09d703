"""On-disk sequence layout and in-memory training sequences.

A sequence directory holds LR frames ``%08d.png``, ``kernels.tkck`` (one
kernel per frame, as applied), ``manifest.json`` and, for training and
benchmark data, the ground-truth frames under ``hr/``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ConfigurationError
from .io import load_frames, read_json, read_tkck, save_frames, write_json, write_tkck
from .kernelcodec import KernelCodec, encode

MANIFEST = "manifest.json"
KERNELS = "kernels.tkck"
HR_DIR = "hr"


@dataclass
class Sequence:
    name: str
    lr: np.ndarray  # (T, h, w, 3)
    hr: np.ndarray | None  # (T, H, W, 3)
    kernels: np.ndarray  # (T, size, size)
    manifest: dict

    def __len__(self) -> int:
        return len(self.lr)


def write_sequence(directory, lr, kernels, manifest: dict, hr=None) -> None:
    directory = Path(directory)
    save_frames(directory, lr)
    if hr is not None:
        save_frames(directory / HR_DIR, hr)
    write_tkck(directory / KERNELS, kernels)
    write_json(directory / MANIFEST, manifest)


def is_sequence_dir(path) -> bool:
    p = Path(path)
    return (p / MANIFEST).is_file() and (p / KERNELS).is_file()


def load_sequence(directory) -> Sequence:
    d = Path(directory)
    hr = load_frames(d / HR_DIR) if (d / HR_DIR).is_dir() else None
    return Sequence(d.name, load_frames(d), hr, read_tkck(d / KERNELS), read_json(d / MANIFEST))


def sequence_dirs(root) -> list[Path]:
    root = Path(root)
    if is_sequence_dir(root):
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir() and is_sequence_dir(p))


def load_root(root, codec: KernelCodec | None = None) -> list[Sequence]:
    """Load every sequence under ``root``; verifies the codec hash recorded in manifests."""
    dirs = sequence_dirs(root)
    if not dirs:
        raise FileNotFoundError(f"no sequence directories under {root}")
    seqs = [load_sequence(d) for d in dirs]
    if codec is not None:
        check_codec(seqs, codec)
    return seqs


def check_codec(seqs: list[Sequence], codec: KernelCodec) -> None:
    sha = codec.sha
    for s in seqs:
        recorded = s.manifest.get("codec_sha")
        if recorded and recorded != sha:
            raise ConfigurationError(
                f"sequence {s.name} was built with codec {recorded[:12]}, but codec {sha[:12]} was given")


@dataclass
class TrainingSequence:
    lr: np.ndarray  # (T, 3, h, w) float32
    hr: np.ndarray  # (T, 3, H, W) float32
    codes: np.ndarray  # (T, d) float32

    @classmethod
    def from_sequence(cls, seq: Sequence, codec: KernelCodec) -> "TrainingSequence":
        if seq.hr is None:
            raise ConfigurationError(f"sequence {seq.name} has no ground-truth frames")
        return cls.from_arrays(seq.lr, seq.hr, seq.kernels, codec)

    @classmethod
    def from_arrays(cls, lr, hr, kernels, codec: KernelCodec) -> "TrainingSequence":
        return cls(
            lr=np.ascontiguousarray(np.asarray(lr).transpose(0, 3, 1, 2), dtype=np.float32),
            hr=np.ascontiguousarray(np.asarray(hr).transpose(0, 3, 1, 2), dtype=np.float32),
            codes=encode(codec, kernels).astype(np.float32),
        )

    def __len__(self) -> int:
        return len(self.lr)
