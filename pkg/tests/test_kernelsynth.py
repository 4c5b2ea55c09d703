import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from tkc import InvalidParameterError
from tkc.kernelsynth import (
    AnisoGaussianParams,
    KernelSampler,
    apply_multiplicative_noise,
    covariance,
    dirac_kernel,
    draw_kernel,
    interpolated_sequence,
    sample_kernel,
    synth_aniso_gaussian,
)

sigmas = st.floats(0.3, 6.0)
thetas = st.floats(-math.pi, math.pi)


def test_isotropic_kernel_ignores_rotation():
    a = synth_aniso_gaussian(AnisoGaussianParams(1.0, 1.0, 0.7), 13)
    b = synth_aniso_gaussian(AnisoGaussianParams(1.0, 1.0, 0.0), 13)
    assert np.abs(a - b).max() < 1e-12


def test_pi_periodicity_of_axes():
    a = synth_aniso_gaussian(AnisoGaussianParams(5.0, 0.6, math.pi / 4), 13)
    b = synth_aniso_gaussian(AnisoGaussianParams(5.0, 0.6, math.pi / 4 - math.pi), 13)
    assert np.abs(a - b).max() < 1e-12


def test_matches_closed_form_density():
    # independent evaluation: scipy's Gaussian density on the integer grid, normalized
    params = AnisoGaussianParams(1.0, 1.0, 0.0)
    k = synth_aniso_gaussian(params, 13)
    d = np.arange(13) - 6.0
    grid = np.stack(np.meshgrid(d, d, indexing="ij"), -1)
    dens = multivariate_normal(mean=[0, 0], cov=covariance(params)).pdf(grid)
    dens /= dens.sum()
    assert k[6, 6] == pytest.approx(dens[6, 6], abs=1e-14)
    assert np.abs(k - dens).max() < 1e-14


def test_anisotropic_matches_closed_form_density():
    params = AnisoGaussianParams(3.1, 0.9, 0.4)
    d = np.arange(13) - 6.0
    grid = np.stack(np.meshgrid(d, d, indexing="ij"), -1)
    dens = multivariate_normal(mean=[0, 0], cov=covariance(params)).pdf(grid)
    assert np.abs(synth_aniso_gaussian(params, 13) - dens / dens.sum()).max() < 1e-14


def test_major_axis_follows_theta():
    # theta=0 puts sigma1 along the first (row) axis
    k = synth_aniso_gaussian(AnisoGaussianParams(4.0, 0.7, 0.0), 13)
    assert k[:, 6].sum() > k[6, :].sum()
    assert k[0, 6] > k[6, 0]


@pytest.mark.parametrize("bad", [dict(sigma1=0.0, sigma2=1.0), dict(sigma1=1.0, sigma2=-2.0)])
def test_rejects_non_positive_sigma(bad):
    with pytest.raises(InvalidParameterError):
        synth_aniso_gaussian(AnisoGaussianParams(theta=0.0, **bad), 13)


@pytest.mark.parametrize("size", [12, 0, -3])
def test_rejects_bad_size(size):
    with pytest.raises(InvalidParameterError):
        synth_aniso_gaussian(AnisoGaussianParams(1.0, 1.0, 0.0), size)
    with pytest.raises(InvalidParameterError):
        dirac_kernel(size)


@settings(max_examples=60, deadline=None)
@given(sigmas, sigmas, thetas)
def test_gaussian_invariants(s1, s2, theta):
    k = synth_aniso_gaussian(AnisoGaussianParams(s1, s2, theta), 13)
    assert (k >= 0).all()
    assert abs(k.sum() - 1) < 1e-12
    assert np.abs(k - k[::-1, ::-1]).max() < 1e-15
    shifted = synth_aniso_gaussian(AnisoGaussianParams(s1, s2, theta + math.pi), 13)
    assert np.abs(k - shifted).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(sigmas, thetas)
def test_isotropic_rotation_invariance(s, theta):
    a = synth_aniso_gaussian(AnisoGaussianParams(s, s, theta), 13)
    b = synth_aniso_gaussian(AnisoGaussianParams(s, s, 0.0), 13)
    assert np.abs(a - b).max() < 1e-12


def test_zero_noise_is_identity():
    k = synth_aniso_gaussian(AnisoGaussianParams(2.0, 1.0, 0.3))
    out = apply_multiplicative_noise(k, 0.0, np.random.default_rng(0))
    assert np.array_equal(out, k)


def test_noise_factors_bounded_and_renormalized():
    k = synth_aniso_gaussian(AnisoGaussianParams(2.0, 1.0, 0.3))
    out, factors = apply_multiplicative_noise(k, 0.25, np.random.default_rng(3), return_factors=True)
    assert abs(out.sum() - 1) < 1e-8
    assert (factors >= 0.75).all() and (factors <= 1.25).all()
    pre = out * (k * factors).sum()  # undo renormalization
    assert np.all(np.abs(pre - k) <= 0.25 * k + 1e-15)


def test_noise_keeps_dirac():
    out = apply_multiplicative_noise(dirac_kernel(13), 0.25, np.random.default_rng(0))
    assert np.array_equal(out, dirac_kernel(13))


@pytest.mark.parametrize("level", [-0.1, 1.5])
def test_noise_level_out_of_range(level):
    with pytest.raises(InvalidParameterError):
        apply_multiplicative_noise(dirac_kernel(13), level, np.random.default_rng(0))


def test_dirac_definition():
    k = dirac_kernel(13)
    assert k[6, 6] == 1 and k.sum() == 1 and np.count_nonzero(k) == 1


def test_sampling_is_seeded():
    s = KernelSampler(rng_seed=11)
    assert np.array_equal(sample_kernel(s), sample_kernel(s))
    a = sample_kernel(s, np.random.default_rng(4))
    b = sample_kernel(s, np.random.default_rng(4))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_kernel(s, np.random.default_rng(5)))


def test_draws_within_ranges():
    s = KernelSampler()
    rng = np.random.default_rng(0)
    for _ in range(300):
        d = draw_kernel(s, rng)
        assert 0.6 <= d.params.sigma1 < 5 and 0.6 <= d.params.sigma2 < 5
        assert -math.pi <= d.params.theta < math.pi
        assert abs(d.kernel.sum() - 1) < 1e-8 and (d.kernel >= 0).all()


def test_sampler_validation():
    with pytest.raises(InvalidParameterError):
        KernelSampler(noise_level=1.2).validate()
    with pytest.raises(InvalidParameterError):
        KernelSampler(sigma_range=(3.0, 1.0)).validate()
    with pytest.raises(InvalidParameterError):
        KernelSampler(size=10).validate()


def test_interpolated_sequence_is_smooth_and_normalized():
    seq = interpolated_sequence(KernelSampler(), 20, np.random.default_rng(0), anchors=2)
    assert seq.shape == (20, 13, 13)
    assert np.allclose(seq.sum(axis=(1, 2)), 1, atol=1e-12)
    steps = np.abs(np.diff(seq, axis=0)).sum(axis=(1, 2))
    assert steps.max() <= np.abs(seq[-1] - seq[0]).sum() / 19 * 1.0001
