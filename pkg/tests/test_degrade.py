import numpy as np
import pytest
from conftest import brute_force_correlate, direct_bicubic
from hypothesis import given, settings
from hypothesis import strategies as st

from tkc import ShapeError
from tkc.degrade import (
    SUBSAMPLE,
    DegradationConfig,
    convolve_frame,
    crop_to_multiple,
    degrade_frame,
    degrade_sequence,
    downsample,
    expand_kernels,
)
from tkc.kernelsynth import KernelSampler, dirac_kernel, sample_kernel, sample_kernels


def test_constant_frame_stays_constant(sampler):
    frame = np.full((20, 24, 3), 0.5)
    k = sample_kernel(sampler, np.random.default_rng(0))
    assert np.abs(convolve_frame(frame, k) - 0.5).max() < 1e-12


def test_dirac_convolution_is_identity():
    frame = np.random.default_rng(0).random((16, 16, 3))
    assert np.array_equal(convolve_frame(frame, dirac_kernel(13)), frame)


def test_convolution_matches_brute_force(sampler):
    rng = np.random.default_rng(1)
    frame = rng.random((16, 16, 3))
    k = sample_kernel(sampler, rng)
    assert np.abs(convolve_frame(frame, k) - brute_force_correlate(frame, k)).max() < 1e-6


def test_convolution_is_correlation_not_flipped():
    frame = np.zeros((9, 9, 1))
    frame[4, 4] = 1
    k = np.zeros((3, 3))
    k[0, 2] = 1.0
    out = convolve_frame(frame, k)
    # correlation: out[y, x] = frame[y - 1, x + 1], so the impulse lands at (5, 3)
    assert out[5, 3, 0] == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_mean_preserved(seed, border_value):
    # Texture kept more than the kernel radius (6 px) from the edges, so reflect
    # padding only mirrors the constant border and no mass leaves the frame.
    rng = np.random.default_rng(seed)
    frame = np.full((30, 32, 3), border_value)
    frame[7:-7, 7:-7] = rng.random((16, 18, 3))
    k = sample_kernel(KernelSampler(), rng)
    assert abs(convolve_frame(frame, k).mean() - frame.mean()) < 1e-6


def test_downsample_constant():
    out = downsample(np.full((32, 48, 3), 0.3), 4)
    assert out.shape == (8, 12, 3)
    assert np.abs(out - 0.3).max() < 1e-12


def test_direct_subsample_columns():
    frame = np.tile(np.arange(32, dtype=float)[None, :, None], (16, 1, 3))
    out = downsample(frame, 4, SUBSAMPLE)
    assert np.array_equal(out[0, :, 0], np.arange(0, 32, 4))


@pytest.mark.parametrize("shape,scale", [((32, 32), 4), ((24, 36), 3), ((16, 20), 2)])
def test_bicubic_matches_direct_evaluation(shape, scale):
    frame = np.random.default_rng(2).random(shape + (3,))
    out = downsample(frame, scale)
    ref = direct_bicubic(frame, shape[0] // scale, shape[1] // scale)
    assert np.abs(out - ref).max() < 1e-6


def test_bicubic_linear_ramp_lands_between_pixels():
    # antialiased cubic is symmetric, so a linear ramp is sampled at the block centers
    frame = np.tile(np.arange(64, dtype=float)[None, :, None], (8, 1, 1))
    out = downsample(frame, 4)
    interior = out[0, 2:-2, 0]
    assert np.allclose(interior, 4 * np.arange(2, 14) + 1.5, atol=1e-9)


def test_downsample_rejects_nondivisible():
    with pytest.raises(ShapeError):
        downsample(np.zeros((30, 32, 3)), 4)
    assert crop_to_multiple(np.zeros((30, 33, 3)), 4).shape == (28, 32, 3)


def test_degrade_frame_compositions(sampler):
    rng = np.random.default_rng(3)
    x = rng.random((32, 32, 3))
    cfg = DegradationConfig()
    assert np.array_equal(degrade_frame(x, dirac_kernel(13), cfg), downsample(x, 4))
    k = sample_kernel(sampler, rng)
    oracle = direct_bicubic(brute_force_correlate(x, k), 8, 8)
    assert np.abs(degrade_frame(x, k, cfg) - oracle).max() < 1e-6
    const = degrade_frame(np.full((32, 32, 3), 0.7), k, cfg)
    assert np.abs(const - 0.7).max() < 1e-12


def test_degrade_noise_is_seeded(sampler):
    cfg = DegradationConfig(additive_noise_sigma=0.01)
    x = np.random.default_rng(0).random((16, 16, 3))
    k = sample_kernel(sampler, np.random.default_rng(1))
    a = degrade_frame(x, k, cfg, np.random.default_rng(5))
    b = degrade_frame(x, k, cfg, np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert 0.005 < np.std(a - degrade_frame(x, k, DegradationConfig())) < 0.02


def test_sequence_loops_over_kernels(sampler):
    ks = sample_kernels(sampler, 40, np.random.default_rng(0))
    used = expand_kernels(ks, 100)
    assert len(used) == 100
    for t in range(40):
        assert np.array_equal(used[t], ks[t])
    assert np.array_equal(used[40], ks[0])
    assert np.array_equal(used[99], ks[19])


def test_sequence_no_loop_when_long_enough(sampler):
    ks = sample_kernels(sampler, 12, np.random.default_rng(0))
    assert np.array_equal(expand_kernels(ks, 10), ks[:10])


def test_single_kernel_sequence_equals_fixed_degradation(sampler):
    rng = np.random.default_rng(4)
    video = rng.random((5, 16, 16, 3))
    k = sample_kernel(sampler, rng)
    cfg = DegradationConfig()
    lr, used = degrade_sequence(video, k[None], cfg)
    assert used.shape == (5, 13, 13)
    for t in range(5):
        assert np.array_equal(lr[t], degrade_frame(video[t], k, cfg))
    lr2, _ = degrade_sequence(video, np.stack([k] * 5), cfg)
    assert np.array_equal(lr, lr2)


def test_sequence_deterministic_with_noise(sampler):
    video = np.random.default_rng(0).random((3, 16, 16, 3))
    ks = sample_kernels(sampler, 2, np.random.default_rng(1))
    cfg = DegradationConfig(additive_noise_sigma=0.02)
    a, _ = degrade_sequence(video, ks, cfg, seed=9)
    b, _ = degrade_sequence(video, ks, cfg, seed=9)
    c, _ = degrade_sequence(video, ks, cfg, seed=10)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sequence_kernel_shape_error():
    with pytest.raises(ShapeError):
        degrade_sequence(np.zeros((2, 16, 16, 3)), np.zeros((0, 13, 13)), DegradationConfig())
