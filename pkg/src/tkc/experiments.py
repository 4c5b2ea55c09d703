"""Toy experiments on synthetic data, shared by ``scripts/`` and the acceptance suite."""
from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import TrainingSequence, load_root
from .degrade import DegradationConfig, degrade_sequence
from .evalbench import build_benchmark, evaluate, evaluate_bicubic, quantize
from .kernelcodec import KernelCodec, encode, fit_codec
from .kernelsynth import KernelSampler, dirac_kernel, interpolated_sequence, sample_kernels
from .rng import substream
from .srcore import BlindVSR, model_preset, temporal_window
from .synthvideo import synthetic_video
from .train import compute_losses, init_model, train_loop, train_preset


def toy_codec(seed: int = 0, corpus: int = 2000, dim: int = 10) -> KernelCodec:
    return fit_codec(sample_kernels(KernelSampler(), corpus, substream(seed, "toy-corpus")), dim)


def toy_kernels(length: int, seed: int, consistent: bool = False) -> np.ndarray:
    rng = substream(seed, "toy-kernels")
    if consistent:
        return interpolated_sequence(KernelSampler(), length, rng)
    return sample_kernels(KernelSampler(), length, rng)


def toy_sequence(codec: KernelCodec, seed: int, frames: int = 8, size: int = 64, consistent: bool = False,
                 cfg: DegradationConfig = DegradationConfig()) -> TrainingSequence:
    """8-bit synthetic HR video, per-frame kernels with known codes, noise-free LR."""
    hr = quantize(synthetic_video(frames, size, size, seed=seed))
    lr, used = degrade_sequence(hr, toy_kernels(frames, seed, consistent), cfg)
    return TrainingSequence.from_arrays(lr, hr, used, codec)


def _windows(model: BlindVSR, data: TrainingSequence):
    b = model.cfg.res_frames
    idx = [temporal_window(len(data), t, b) for t in range(len(data))]
    return (torch.from_numpy(data.lr[idx]), torch.from_numpy(data.hr[idx]), torch.from_numpy(data.codes[idx]))


def frozen_loss(model: BlindVSR, data: TrainingSequence) -> float:
    """Total training loss on full frames, every frame as reference once."""
    ys, xs, cs = _windows(model, data)
    model.eval()
    with torch.no_grad():
        return float(compute_losses(model(ys), xs, cs, model.cfg.est_frames).total)


def code_distances(model: BlindVSR, data: TrainingSequence) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame L1 distance of the final reference-code estimate, and of the Dirac code, to the truth."""
    ys, _, _ = _windows(model, data)
    model.eval()
    with torch.no_grad():
        out = model(ys)
    est = out.trace[-1].codes[:, model.cfg.est_frames // 2].double().numpy()
    gt = data.codes.astype(np.float64)
    dirac = model.dirac_code.double().numpy()
    return np.abs(est - gt).sum(1), np.abs(dirac[None] - gt).sum(1)


@dataclass
class OverfitResult:
    initial_loss: float
    final_loss: float
    est_l1: np.ndarray
    dirac_l1: np.ndarray
    history: list[dict] = field(repr=False, default_factory=list)

    @property
    def ratio(self) -> float:
        return self.final_loss / self.initial_loss

    @property
    def closer_fraction(self) -> float:
        return float(np.mean(self.est_l1 < self.dirac_l1))


def overfit_sanity(steps: int = 2000, est_frames: int = 1, res_frames: int = 1, seed: int = 0,
                   lr: float | None = None, callback=None) -> OverfitResult:
    """Overfit the desk model to one 8-frame sequence and measure loss drop and code recovery."""
    codec = toy_codec(seed)
    data = toy_sequence(codec, seed=seed + 100)
    mcfg = model_preset("desk", est_frames=est_frames, res_frames=res_frames)
    model = init_model(mcfg, encode(codec, dirac_kernel()), seed)
    initial = frozen_loss(model, data)
    tcfg = train_preset("desk", seed=seed, **({} if lr is None else {"lr": lr}))
    res = train_loop([data], model, tcfg, codec_sha=codec.sha, max_steps=steps, callback=callback)
    est, dirac = code_distances(model, data)
    return OverfitResult(initial, frozen_loss(model, data), est, dirac, res.history)


def ablation(configs=((1, 1), (3, 3)), seeds=(0, 1, 2), train_sequences: int = 8, bench_sequences: int = 4,
             frames: int = 8, size: int = 64, steps: int | None = None, work_dir=None, callback=None) -> list[dict]:
    """Train each (est_frames, res_frames) config per seed under one budget; mean Y-PSNR/SSIM rows.

    Training and benchmark kernels are i.i.d. per frame (low temporal consistency).
    The data is fixed; the seed drives initialization and batch sampling.
    """
    codec = toy_codec(0)
    train = [toy_sequence(codec, seed=1000 + i, frames=frames, size=size) for i in range(train_sequences)]
    videos = {f"seq{i:02d}": synthetic_video(frames, size, size, seed=2000 + i) for i in range(bench_sequences)}
    pool = [toy_kernels(frames, 3000 + i) for i in range(bench_sequences)]
    with tempfile.TemporaryDirectory(dir=work_dir) as tmp:
        build_benchmark(videos, pool, DegradationConfig(), 0, Path(tmp) / "bench", codec=codec)
        bench = load_root(Path(tmp) / "bench", codec)
    rows = [dict(evaluate_bicubic(bench, 4)[-1], seed=None)]
    dirac = encode(codec, dirac_kernel())
    for seed in seeds:
        for a, b in configs:
            model = init_model(model_preset("desk", est_frames=a, res_frames=b), dirac, seed)
            tcfg = train_preset("desk", seed=seed)
            train_loop(train, model, tcfg, codec_sha=codec.sha, max_steps=steps)
            mean = evaluate(model, bench, codec_sha=codec.sha)[-1]
            rows.append(dict(mean, seed=seed))
            if callback is not None:
                callback(rows[-1])
    return rows
