"""Per-frame degradation ``y = (x * k) downscaled by s + n``.

Frames are ``(H, W, 3)`` float64 arrays in [0, 1]; nothing is clamped here,
clamping happens only when frames are written to PNG.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import InvalidParameterError, ShapeError
from .kernelsynth import check_kernel
from .rng import substream

BICUBIC = "bicubic"
SUBSAMPLE = "direct-subsample"


@dataclass(frozen=True)
class DegradationConfig:
    scale: int = 4
    downsample_mode: str = BICUBIC
    boundary: str = "reflect"
    additive_noise_sigma: float = 0.0

    def validate(self) -> None:
        if self.scale < 2:
            raise InvalidParameterError(f"scale must be >= 2, got {self.scale}")
        if self.downsample_mode not in (BICUBIC, SUBSAMPLE):
            raise InvalidParameterError(f"unknown downsample mode {self.downsample_mode!r}")
        if self.boundary != "reflect":
            raise InvalidParameterError(f"only reflect boundary is supported, got {self.boundary!r}")
        if self.additive_noise_sigma < 0:
            raise InvalidParameterError("additive_noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _as_frame(frame) -> np.ndarray:
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 2:
        f = f[..., None]
    if f.ndim != 3:
        raise ShapeError(f"frame must be (H, W, C), got {f.shape}")
    return f


def crop_to_multiple(frame, scale: int) -> np.ndarray:
    """Crop bottom/right so both spatial dimensions are divisible by ``scale``."""
    f = np.asarray(frame)
    h, w = f.shape[0] - f.shape[0] % scale, f.shape[1] - f.shape[1] % scale
    return f[:h, :w]


def convolve_frame(frame, kernel) -> np.ndarray:
    """Per-channel 2-D correlation with reflect (mirror, edge not repeated) padding."""
    f = _as_frame(frame)
    k = check_kernel(kernel)
    out = np.empty_like(f)
    for c in range(f.shape[2]):
        ndimage.correlate(f[..., c], k, output=out[..., c], mode="mirror")
    return out


def cubic(x, a: float = -0.5):
    """Keys cubic convolution kernel."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense ``(n_out, n_in)`` bicubic resampling matrix.

    When shrinking, the cubic support is stretched by the scale factor
    (antialiasing); row weights are normalized and out-of-range taps are
    mirrored (half-sample symmetric), following the imresize convention.
    """
    scale = n_out / n_in
    width = 4.0 / scale if scale < 1 else 4.0
    u = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(u - width / 2).astype(int)
    taps = int(np.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = scale * cubic(scale * dist) if scale < 1 else cubic(dist)
    w = w / w.sum(axis=1, keepdims=True)
    period = 2 * n_in
    idx = np.mod(idx, period)
    idx = np.where(idx >= n_in, period - 1 - idx, idx)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(np.arange(n_out), taps), idx.ravel()), w.ravel())
    return mat


def resize_bicubic(frame, out_hw: tuple[int, int]) -> np.ndarray:
    f = _as_frame(frame)
    rows = resize_matrix(f.shape[0], out_hw[0])
    cols = resize_matrix(f.shape[1], out_hw[1])
    return np.einsum("ij,jkc,lk->ilc", rows, f, cols)


def downsample(frame, scale: int, mode: str = BICUBIC) -> np.ndarray:
    f = _as_frame(frame)
    h, w = f.shape[:2]
    if h % scale or w % scale:
        raise ShapeError(f"frame {h}x{w} is not divisible by scale {scale}; crop first")
    if mode == SUBSAMPLE:
        return f[::scale, ::scale].copy()
    if mode == BICUBIC:
        return resize_bicubic(f, (h // scale, w // scale))
    raise InvalidParameterError(f"unknown downsample mode {mode!r}")


def upscale_bicubic(frame, scale: int) -> np.ndarray:
    f = _as_frame(frame)
    return resize_bicubic(f, (f.shape[0] * scale, f.shape[1] * scale))


def degrade_frame(x, k, cfg: DegradationConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    cfg.validate()
    y = downsample(convolve_frame(x, k), cfg.scale, cfg.downsample_mode)
    if cfg.additive_noise_sigma > 0:
        if rng is None:
            raise InvalidParameterError("an rng is required when additive_noise_sigma > 0")
        y = y + rng.normal(0.0, cfg.additive_noise_sigma, size=y.shape)
    return y


def expand_kernels(kseq, length: int) -> np.ndarray:
    """Per-frame kernels for ``length`` frames, looping over ``kseq`` when it is shorter."""
    ks = np.asarray(kseq, dtype=np.float64)
    if ks.ndim != 3 or len(ks) == 0:
        raise ShapeError(f"kernel sequence must be (count, size, size), got {ks.shape}")
    return ks[np.arange(length) % len(ks)]


def degrade_sequence(video, kseq, cfg: DegradationConfig, seed: int = 0):
    """Degrade every frame; frame ``t`` uses ``kseq[t % len(kseq)]``.

    Returns ``(lr_frames, kernels_used)``. Additive noise for frame ``t`` is
    drawn from the substream ``(seed, "degrade-noise", t)``.
    """
    frames = np.asarray(video, dtype=np.float64)
    if frames.ndim != 4 or len(frames) == 0:
        raise ShapeError(f"video must be (T, H, W, C), got {frames.shape}")
    used = expand_kernels(kseq, len(frames))
    lr = np.stack([
        degrade_frame(frames[t], used[t], cfg, substream(seed, "degrade-noise", t))
        for t in range(len(frames))
    ])
    return lr, used
