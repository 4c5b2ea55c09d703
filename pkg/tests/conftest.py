import numpy as np
import pytest
import torch

from tkc.kernelcodec import fit_codec
from tkc.kernelsynth import KernelSampler, sample_kernels


@pytest.fixture(scope="session")
def sampler():
    return KernelSampler()


@pytest.fixture(scope="session")
def corpus(sampler):
    return sample_kernels(sampler, 2000, np.random.default_rng(1234))


@pytest.fixture(scope="session")
def codec(corpus):
    return fit_codec(corpus, 10)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def reflect_index(i: int, n: int) -> int:
    """Mirror index without repeating the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …)."""
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def brute_force_correlate(frame, kernel):
    h, w, c = frame.shape
    k = kernel.shape[0]
    r = k // 2
    out = np.zeros_like(frame)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(c)
            for u in range(k):
                for v in range(k):
                    acc += kernel[u, v] * frame[reflect_index(y + u - r, h), reflect_index(x + v - r, w)]
            out[y, x] = acc
    return out


def keys_cubic(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def direct_bicubic_axis(n_in, n_out):
    """(n_out, n_in) weights, evaluated tap by tap with half-sample symmetric boundaries."""
    scale = n_out / n_in
    stretch = 1 / scale if scale < 1 else 1.0
    mat = np.zeros((n_out, n_in))
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        taps, weights = [], []
        for j in range(int(np.floor(center - 2 * stretch)) - 1, int(np.ceil(center + 2 * stretch)) + 2):
            wgt = keys_cubic((center - j) / stretch) / stretch
            if wgt == 0:
                continue
            jj = j
            while jj < 0 or jj >= n_in:
                jj = -jj - 1 if jj < 0 else 2 * n_in - 1 - jj
            taps.append(jj)
            weights.append(wgt)
        total = sum(weights)
        for jj, wgt in zip(taps, weights):
            mat[i, jj] += wgt / total
    return mat


def direct_bicubic(frame, out_h, out_w):
    rows = direct_bicubic_axis(frame.shape[0], out_h)
    cols = direct_bicubic_axis(frame.shape[1], out_w)
    out = np.zeros((out_h, out_w, frame.shape[2]))
    for i in range(out_h):
        tmp = np.zeros((frame.shape[1], frame.shape[2]))
        for j in range(frame.shape[0]):
            if rows[i, j]:
                tmp += rows[i, j] * frame[j]
        for x in range(out_w):
            out[i, x] = (cols[x][:, None] * tmp).sum(axis=0)
    return out


def directional_fd_errors(loss_fn, params, eps=1e-6, n_dirs=2, seed=0):
    """Relative errors between autograd and central finite differences along random directions.

    ``loss_fn`` must read ``params`` in place (e.g. module parameters).
    """
    gen = torch.Generator().manual_seed(seed)
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    errors = []
    for p, g in zip(params, grads):
        g = torch.zeros_like(p) if g is None else g
        for _ in range(n_dirs):
            v = torch.randn(p.shape, generator=gen, dtype=p.dtype)
            with torch.no_grad():
                p.add_(eps * v)
                lp = float(loss_fn())
                p.sub_(2 * eps * v)
                lm = float(loss_fn())
                p.add_(eps * v)
            fd = (lp - lm) / (2 * eps)
            ad = float((g * v).sum())
            errors.append(abs(fd - ad) / max(abs(fd), abs(ad), 1e-12))
    return errors


def weighted_sum(out, seed=1):
    w = torch.randn(out.shape, generator=torch.Generator().manual_seed(seed), dtype=out.dtype)
    return (out * w).sum()
