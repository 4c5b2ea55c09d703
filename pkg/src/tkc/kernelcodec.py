"""PCA codes for vectorized kernels.

A :class:`KernelCodec` is fitted once on a seeded corpus and shipped as a file;
every consumer (training, evaluation, consistency analysis) must load the same
file, since codes are only comparable under one basis.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import InsufficientDataError, ShapeError
from .io import FormatError, atomic_write_bytes, sha256_bytes

CODEC_MAGIC = b"TKCC"
CODEC_VERSION = 1
SIGN_CONVENTION = "largest-magnitude-entry-positive"


@dataclass(frozen=True, eq=False)
class KernelCodec:
    mean: np.ndarray  # (size*size,)
    basis: np.ndarray  # (dim, size*size), orthonormal rows
    size: int
    explained_variance_ratio: np.ndarray = field(default_factory=lambda: np.zeros(0))
    corpus_sha: str = ""

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def encode(self, kernel: np.ndarray) -> np.ndarray:
        return encode(self, kernel)

    def decode(self, code: np.ndarray) -> np.ndarray:
        return decode(self, code)

    def to_bytes(self) -> bytes:
        header = {
            "version": CODEC_VERSION,
            "dim": self.dim,
            "size": self.size,
            "dtype": "<f8",
            "sign_convention": SIGN_CONVENTION,
            "corpus_sha": self.corpus_sha,
            "explained_variance_ratio": [float(v) for v in self.explained_variance_ratio],
        }
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        body = np.ascontiguousarray(self.mean, "<f8").tobytes() + np.ascontiguousarray(self.basis, "<f8").tobytes()
        return CODEC_MAGIC + struct.pack("<I", len(hb)) + hb + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "KernelCodec":
        if data[:4] != CODEC_MAGIC:
            raise FormatError("not a kernel codec file")
        (hlen,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
        if header.get("version") != CODEC_VERSION:
            raise FormatError(f"unsupported codec version {header.get('version')}")
        dim, size = header["dim"], header["size"]
        n = size * size
        body = np.frombuffer(data, dtype="<f8", offset=8 + hlen)
        if body.size != n + dim * n:
            raise FormatError("codec payload has the wrong length")
        return cls(
            mean=body[:n].copy(),
            basis=body[n:].reshape(dim, n).copy(),
            size=size,
            explained_variance_ratio=np.asarray(header.get("explained_variance_ratio", []), dtype=np.float64),
            corpus_sha=header.get("corpus_sha", ""),
        )

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "KernelCodec":
        return cls.from_bytes(Path(path).read_bytes())

    @property
    def sha(self) -> str:
        return sha256_bytes(self.to_bytes())


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_codec(kernels, dim: int = 10, corpus_sha: str = "") -> KernelCodec:
    """Mean-centered PCA over vectorized kernels, top ``dim`` directions."""
    ks = np.asarray(kernels, dtype=np.float64)
    if ks.ndim != 3 or ks.shape[1] != ks.shape[2]:
        raise ShapeError(f"expected (count, size, size) kernels, got {ks.shape}")
    n, size = ks.shape[0], ks.shape[1]
    if dim < 1 or dim > size * size:
        raise ShapeError(f"dim must be in [1, {size * size}], got {dim}")
    if n < dim + 1:
        raise InsufficientDataError(f"need at least {dim + 1} kernels to fit dim={dim}, got {n}")
    x = ks.reshape(n, -1)
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s**2
    total = var.sum()
    ratio = var[:dim] / total if total > 0 else np.zeros(dim)
    return KernelCodec(mean=mean, basis=_fix_signs(vt[:dim]), size=size,
                       explained_variance_ratio=ratio, corpus_sha=corpus_sha)


def encode(codec: KernelCodec, kernel) -> np.ndarray:
    """Codes for one ``(size, size)`` kernel or a stack ``(..., size, size)``."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.shape[-2:] != (codec.size, codec.size):
        raise ShapeError(f"kernel shape {k.shape[-2:]} does not match codec size {codec.size}")
    flat = k.reshape(k.shape[:-2] + (-1,))
    return (flat - codec.mean) @ codec.basis.T


def decode(codec: KernelCodec, code) -> np.ndarray:
    """Code-space reconstruction; not renormalized and may be slightly negative."""
    c = np.asarray(code, dtype=np.float64)
    if c.shape[-1] != codec.dim:
        raise ShapeError(f"code length {c.shape[-1]} does not match codec dim {codec.dim}")
    flat = codec.mean + c @ codec.basis
    return flat.reshape(c.shape[:-1] + (codec.size, codec.size))
