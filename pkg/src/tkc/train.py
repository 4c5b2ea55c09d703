"""Joint training of the estimator and restorer with L1 frame and code losses."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import ConfigurationError, ShapeError
from .checkpoint import read_checkpoint, restore_optimizer, save_checkpoint
from .dataset import TrainingSequence
from .rng import substream, torch_seed
from .srcore import BlindVSR, SROutput, temporal_window

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    patch: int = 100
    batch: int = 4
    epochs: int = 300
    steps_per_epoch: int | None = None  # None: one pass over all (sequence, frame) samples
    lr: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 200
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 keeps only the final checkpoint
    preset: str = "paper"

    def validate(self, scale: int) -> None:
        if min(self.patch, self.batch, self.epochs, self.lr_decay_every) < 1 or self.lr <= 0:
            raise ConfigurationError("training sizes and learning rate must be positive")
        if self.patch % scale:
            raise ConfigurationError(f"patch {self.patch} is not divisible by scale {scale}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


TRAIN_PRESETS = {
    "paper": dict(patch=100, batch=4, epochs=300, steps_per_epoch=None, preset="paper"),
    # short budgets need a larger step; 1e-4 stalls near 0.14x of the initial loss on the overfit check
    "desk": dict(patch=64, batch=4, epochs=20, steps_per_epoch=50, lr=4e-4, preset="desk"),
}


def train_preset(name: str, **overrides) -> TrainConfig:
    if name not in TRAIN_PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}")
    return TrainConfig(**{**TRAIN_PRESETS[name], **overrides})


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def support_weight(res_frames: int) -> float:
    """Weight 1/(2N) on each supporting-frame loss for a window of 2N+1 frames."""
    n = res_frames // 2
    return 1.0 / (2 * n) if n else 0.0


@dataclass
class LossReport:
    total: torch.Tensor
    frame_loss: torch.Tensor
    kernel_loss: torch.Tensor
    per_iteration: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "total": float(self.total.detach()),
            "frame": float(self.frame_loss.detach()),
            "kernel": float(self.kernel_loss.detach()),
        }


def compute_losses(outputs: SROutput, hr: torch.Tensor, codes: torch.Tensor, est_frames: int) -> LossReport:
    """L1 losses.

    hr: (B, b, 3, H, W) ground truth for the window; codes: (B, b, d) ground-truth codes.
    The kernel loss sums the mean L1 code error over every iteration and every
    estimated frame; the frame loss is L1 on the restored reference plus the
    1/(2N)-weighted L1 of the last-iteration single-frame outputs of supporting frames.
    """
    b_frames = hr.shape[1]
    center = b_frames // 2
    n = est_frames // 2
    gt = codes[:, center - n:center + n + 1]
    if outputs.sr.shape != hr[:, center].shape:
        raise ShapeError(f"restored frame {tuple(outputs.sr.shape)} vs target {tuple(hr[:, center].shape)}")
    per_iter = []
    kernel = hr.new_zeros(())
    for step in outputs.trace:
        if step.codes.shape != gt.shape:
            raise ShapeError(f"estimated codes {tuple(step.codes.shape)} vs target {tuple(gt.shape)}")
        it = sum((step.codes[:, i] - gt[:, i]).abs().mean() for i in range(gt.shape[1]))
        per_iter.append(float(it.detach()))
        kernel = kernel + it
    frame = (outputs.sr - hr[:, center]).abs().mean()
    if b_frames > 1:
        last = outputs.trace[-1].srs
        w = support_weight(b_frames)
        for i in range(b_frames):
            if i != center:
                frame = frame + w * (last[:, i] - hr[:, i]).abs().mean()
    return LossReport(frame + kernel, frame, kernel, per_iter)


def sample_batch(data: list[TrainingSequence], frames: int, scale: int, patch: int, batch: int,
                 rng: np.random.Generator):
    """Random windows with aligned HR/LR crops: (ys, xs, codes) tensors."""
    lp = patch // scale
    ys, xs, cs = [], [], []
    for _ in range(batch):
        seq = data[int(rng.integers(len(data)))]
        t = int(rng.integers(len(seq)))
        idx = temporal_window(len(seq), t, frames)
        h, w = seq.lr.shape[-2:]
        if h < lp or w < lp:
            raise ShapeError(f"LR frames {h}x{w} are smaller than the {lp}x{lp} patch")
        i = int(rng.integers(h - lp + 1))
        j = int(rng.integers(w - lp + 1))
        ys.append(seq.lr[idx, :, i:i + lp, j:j + lp])
        xs.append(seq.hr[idx, :, i * scale:(i + lp) * scale, j * scale:(j + lp) * scale])
        cs.append(seq.codes[idx])
    return (torch.from_numpy(np.stack(ys)), torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(cs)))


def init_model(model_cfg, dirac_code, seed: int) -> BlindVSR:
    torch.manual_seed(torch_seed(seed, "init"))
    return BlindVSR(model_cfg, dirac_code)


@dataclass
class TrainResult:
    history: list[dict]
    checkpoints: list[Path]
    model: BlindVSR


def steps_per_epoch(cfg: TrainConfig, data: list[TrainingSequence]) -> int:
    if cfg.steps_per_epoch:
        return cfg.steps_per_epoch
    return max(1, math.ceil(sum(len(s) for s in data) / cfg.batch))


def train_loop(data: list[TrainingSequence], model: BlindVSR, cfg: TrainConfig, codec_sha: str = "",
               out_dir=None, resume=None, max_steps: int | None = None, callback=None) -> TrainResult:
    """Adam training; batches depend only on ``(seed, step)`` so resumed runs replay exactly."""
    if not data:
        raise ConfigurationError("training dataset is empty")
    mcfg = model.cfg
    cfg.validate(mcfg.scale)
    spe = steps_per_epoch(cfg, data)
    total_steps = cfg.epochs * spe if max_steps is None else max_steps
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=tuple(cfg.adam_betas))
    history: list[dict] = []
    start = 0
    if resume is not None:
        header, tensors = read_checkpoint(resume)
        if codec_sha and header.get("codec_sha") and header["codec_sha"] != codec_sha:
            raise ConfigurationError("resume checkpoint was trained with a different codec")
        state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
        model.load_state_dict(state, strict=True)
        restore_optimizer(opt, model, header, tensors)
        start = int(header["meta"].get("step", 0))
        history = list(header["meta"].get("history", []))
    out = Path(out_dir) if out_dir is not None else None
    checkpoints: list[Path] = []
    model.train()
    for step in range(start, total_steps):
        epoch = step // spe
        lr = lr_at_epoch(cfg, epoch)
        for g in opt.param_groups:
            g["lr"] = lr
        ys, xs, cs = sample_batch(data, mcfg.res_frames, mcfg.scale, cfg.patch, cfg.batch,
                                  substream(cfg.seed, "batch", step))
        report = compute_losses(model(ys), xs, cs, mcfg.est_frames)
        opt.zero_grad(set_to_none=True)
        report.total.backward()
        opt.step()
        row = {"step": step + 1, "epoch": epoch, "lr": lr, **report.as_dict()}
        history.append(row)
        if callback is not None:
            callback(row)
        if step % 50 == 0:
            log.info("step %d epoch %d loss %.5f", step + 1, epoch, row["total"])
        done = step + 1 == total_steps
        end_of_epoch = (step + 1) % spe == 0
        if out is not None and (done or (cfg.checkpoint_every and end_of_epoch
                                         and (epoch + 1) % cfg.checkpoint_every == 0)):
            path = out / ("last.tkcp" if done else f"epoch{epoch + 1:04d}.tkcp")
            meta = {"step": step + 1, "epoch": epoch, "train_config": cfg.to_dict(), "history": history}
            save_checkpoint(path, model, codec_sha, opt, meta)
            checkpoints.append(path)
    if out is not None:
        write_losses_csv(out / "losses.csv", history)
    return TrainResult(history, checkpoints, model)


def write_losses_csv(path, history: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "epoch", "lr", "total", "frame", "kernel"])
        for r in history:
            w.writerow([r["step"], r["epoch"], repr(r["lr"]), repr(r["total"]), repr(r["frame"]), repr(r["kernel"])])
