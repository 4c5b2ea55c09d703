"""File formats shared across the package: kernel sequences, frames, manifests."""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from . import ShapeError, TKCError, __version__

TKCK_MAGIC = b"TKCK"
TKCK_VERSION = 1
FRAME_PATTERN = "{:08d}.png"


class FormatError(TKCError, ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_json(path, obj) -> None:
    atomic_write_bytes(path, dump_json(obj))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- kernel sequences ---------------------------------------------------------

def encode_tkck(kernels: np.ndarray) -> bytes:
    k = np.asarray(kernels)
    if k.ndim == 2:
        k = k[None]
    if k.ndim != 3 or k.shape[1] != k.shape[2] or len(k) == 0:
        raise ShapeError(f"expected (count, size, size) kernels, got {k.shape}")
    header = TKCK_MAGIC + struct.pack("<III", TKCK_VERSION, k.shape[0], k.shape[1])
    return header + np.ascontiguousarray(k, dtype="<f4").tobytes()


def decode_tkck(data: bytes) -> np.ndarray:
    """Decode to float64 kernels, each renormalized to sum to one."""
    if len(data) < 16 or data[:4] != TKCK_MAGIC:
        raise FormatError("not a TKCK kernel-sequence file")
    version, count, size = struct.unpack("<III", data[4:16])
    if version != TKCK_VERSION:
        raise FormatError(f"unsupported TKCK version {version}")
    expected = 16 + 4 * count * size * size
    if len(data) != expected:
        raise FormatError(f"TKCK payload is {len(data)} bytes, expected {expected}")
    k = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64).reshape(count, size, size)
    return k / k.sum(axis=(1, 2), keepdims=True)


def write_tkck(path, kernels: np.ndarray, manifest: dict | None = None) -> None:
    atomic_write_bytes(path, encode_tkck(kernels))
    if manifest is not None:
        write_json(str(path) + ".json", manifest)


def read_tkck(path) -> np.ndarray:
    return decode_tkck(Path(path).read_bytes())


# -- frames ---------------------------------------------------------------------

def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(path, frame: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(frame), mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def frame_paths(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")


def load_frames(directory) -> np.ndarray:
    """All PNG frames of a directory in name order as ``(T, H, W, 3)`` floats in [0, 1]."""
    paths = frame_paths(directory)
    if not paths:
        raise FileNotFoundError(f"no PNG frames in {directory}")
    frames = [load_png(p) for p in paths]
    if len({f.shape for f in frames}) != 1:
        raise ShapeError(f"frames in {directory} have mixed shapes")
    return np.stack(frames)


def save_frames(directory, frames) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        save_png(directory / FRAME_PATTERN.format(t), frame)


def run_manifest(command: str, config: dict, seeds: dict | None = None, hashes: dict | None = None) -> dict:
    return {
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "hashes": hashes or {},
        "tool_version": __version__,
    }
