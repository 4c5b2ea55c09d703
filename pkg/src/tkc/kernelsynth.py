"""Anisotropic Gaussian SR kernel synthesis.

Kernels are plain ``(size, size)`` float64 numpy arrays that are non-negative
and sum to one. The grid center is ``(size - 1) / 2`` and the Gaussian is
evaluated at integer offsets from it (no sub-pixel shift, no supersampling).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import InvalidParameterError, ShapeError

DEFAULT_SIZE = 13


@dataclass(frozen=True)
class AnisoGaussianParams:
    sigma1: float
    sigma2: float
    theta: float

    def validate(self) -> None:
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise InvalidParameterError(f"sigmas must be positive, got {self.sigma1}, {self.sigma2}")
        if not math.isfinite(self.theta):
            raise InvalidParameterError(f"theta must be finite, got {self.theta}")


@dataclass(frozen=True)
class KernelSampler:
    sigma_range: tuple[float, float] = (0.6, 5.0)
    theta_range: tuple[float, float] = (-math.pi, math.pi)
    noise_level: float = 0.25
    size: int = DEFAULT_SIZE
    rng_seed: int = 0

    def validate(self) -> None:
        lo, hi = self.sigma_range
        if not (0 < lo < hi):
            raise InvalidParameterError(f"bad sigma_range {self.sigma_range}")
        if not self.theta_range[0] < self.theta_range[1]:
            raise InvalidParameterError(f"bad theta_range {self.theta_range}")
        if not 0 <= self.noise_level <= 1:
            raise InvalidParameterError(f"noise_level must be in [0, 1], got {self.noise_level}")
        _check_size(self.size)

    def to_dict(self) -> dict:
        return asdict(self)


class KernelDraw(NamedTuple):
    kernel: np.ndarray
    params: AnisoGaussianParams
    noise_factors: np.ndarray


def _check_size(size: int) -> None:
    if not isinstance(size, (int, np.integer)) or size < 1 or size % 2 == 0:
        raise InvalidParameterError(f"kernel size must be a positive odd integer, got {size!r}")


def check_kernel(kernel: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Validate a kernel grid and return it as float64."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ShapeError(f"kernel must be an odd square grid, got shape {k.shape}")
    if (k < 0).any():
        raise InvalidParameterError("kernel has negative weights")
    if abs(k.sum() - 1.0) > atol:
        raise InvalidParameterError(f"kernel sums to {k.sum()}, expected 1")
    return k


def covariance(params: AnisoGaussianParams) -> np.ndarray:
    """R(theta) diag(sigma1^2, sigma2^2) R(theta)^T."""
    c, s = math.cos(params.theta), math.sin(params.theta)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([params.sigma1**2, params.sigma2**2]) @ rot.T


def synth_aniso_gaussian(params: AnisoGaussianParams, size: int = DEFAULT_SIZE) -> np.ndarray:
    params.validate()
    _check_size(size)
    inv = np.linalg.inv(covariance(params))
    # Symmetrize so that 180-degree grid symmetry holds to the last bit.
    inv = 0.5 * (inv + inv.T)
    c = (size - 1) / 2
    d = np.arange(size, dtype=np.float64) - c
    du, dv = np.meshgrid(d, d, indexing="ij")
    q = inv[0, 0] * du * du + 2.0 * inv[0, 1] * du * dv + inv[1, 1] * dv * dv
    w = np.exp(-0.5 * q)
    return w / w.sum()


def apply_multiplicative_noise(kernel: np.ndarray, noise_level: float, rng: np.random.Generator,
                               return_factors: bool = False):
    """Multiply each weight by an i.i.d. factor in U[1 - level, 1 + level], then renormalize."""
    if not 0 <= noise_level <= 1:
        raise InvalidParameterError(f"noise_level must be in [0, 1], got {noise_level}")
    k = np.asarray(kernel, dtype=np.float64)
    if noise_level == 0:
        factors = np.ones_like(k)
        out = k.copy()
    else:
        factors = rng.uniform(1.0 - noise_level, 1.0 + noise_level, size=k.shape)
        noisy = k * factors
        out = noisy / noisy.sum()
    return (out, factors) if return_factors else out


def dirac_kernel(size: int = DEFAULT_SIZE) -> np.ndarray:
    _check_size(size)
    k = np.zeros((size, size), dtype=np.float64)
    k[size // 2, size // 2] = 1.0
    return k


def draw_kernel(sampler: KernelSampler, rng: np.random.Generator) -> KernelDraw:
    """Sample parameters, synthesize, apply noise; returns all intermediate draws."""
    sampler.validate()
    s1, s2 = rng.uniform(*sampler.sigma_range, size=2)
    theta = rng.uniform(*sampler.theta_range)
    params = AnisoGaussianParams(float(s1), float(s2), float(theta))
    clean = synth_aniso_gaussian(params, sampler.size)
    kernel, factors = apply_multiplicative_noise(clean, sampler.noise_level, rng, return_factors=True)
    return KernelDraw(kernel, params, factors)


def sample_kernel(sampler: KernelSampler, rng: np.random.Generator | None = None) -> np.ndarray:
    if rng is None:
        rng = np.random.default_rng(sampler.rng_seed)
    return draw_kernel(sampler, rng).kernel


def sample_kernels(sampler: KernelSampler, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``count`` i.i.d. kernels stacked as ``(count, size, size)``."""
    if rng is None:
        rng = np.random.default_rng(sampler.rng_seed)
    return np.stack([draw_kernel(sampler, rng).kernel for _ in range(count)])


def interpolated_sequence(sampler: KernelSampler, length: int, rng: np.random.Generator,
                          anchors: int = 2) -> np.ndarray:
    """A slowly varying sequence: kernels linearly blended between a few sampled anchors.

    Convex blends of normalized non-negative kernels stay normalized and non-negative.
    """
    if length < 1 or anchors < 1:
        raise InvalidParameterError("length and anchors must be positive")
    keys = np.stack([draw_kernel(sampler, rng).kernel for _ in range(anchors)])
    if anchors == 1 or length == 1:
        return np.repeat(keys[:1], length, axis=0)
    pos = np.linspace(0, anchors - 1, length)
    lo = np.minimum(np.floor(pos).astype(int), anchors - 2)
    a = (pos - lo)[:, None, None]
    seq = (1 - a) * keys[lo] + a * keys[lo + 1]
    return seq / seq.sum(axis=(1, 2), keepdims=True)
