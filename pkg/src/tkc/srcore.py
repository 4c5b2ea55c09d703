"""Alternating kernel estimation and restoration with a multi-frame estimator.

The restorer and estimator are built from conditional residual blocks; one
restorer and one estimator are shared across frames and iterations.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from . import ConfigurationError, ShapeError
from .mfr import MultiFrameRestorer, PyramidConfig, conv3


@dataclass
class CRBConfig:
    channels: int = 32
    blocks_restorer: int = 8
    blocks_estimator: int = 4
    attention_reduction: int = 8

    def validate(self) -> None:
        if min(self.channels, self.blocks_restorer, self.blocks_estimator, self.attention_reduction) < 1:
            raise ConfigurationError("CRB sizes must be positive")
        if self.channels % self.attention_reduction:
            raise ConfigurationError("channels must be divisible by attention_reduction")


@dataclass
class ModelConfig:
    est_frames: int = 1
    res_frames: int = 1
    iterations: int = 4
    scale: int = 4
    code_dim: int = 10
    crb: CRBConfig = field(default_factory=CRBConfig)
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)

    def validate(self) -> None:
        for name in ("est_frames", "res_frames"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ConfigurationError(f"{name} must be a positive odd number, got {v}")
        if self.est_frames > self.res_frames:
            raise ConfigurationError(
                f"estimator window ({self.est_frames}) cannot exceed restorer window ({self.res_frames})")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.scale < 2:
            raise ConfigurationError("scale must be >= 2")
        self.crb.validate()
        self.pyramid.validate()

    @property
    def window(self) -> int:
        return self.res_frames

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        crb = CRBConfig(**d.pop("crb", {}))
        pyr = PyramidConfig(**d.pop("pyramid", {}))
        return cls(crb=crb, pyramid=pyr, **d)


PRESETS = {
    "desk": dict(crb=CRBConfig(32, 8, 4, 8), pyramid=PyramidConfig(levels=2, cascade=False, restore_blocks=2)),
    "paper": dict(crb=CRBConfig(64, 40, 5, 8), pyramid=PyramidConfig(levels=3, cascade=True, deform_groups=8,
                                                                       restore_blocks=10)),
}


def model_preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}")
    base = PRESETS[name]
    cfg = ModelConfig(crb=replace(base["crb"]), pyramid=replace(base["pyramid"]))
    return replace(cfg, **overrides)


def _lrelu():
    return nn.LeakyReLU(0.1)


class CALayer(nn.Module):
    """Channel attention: global pool, bottleneck, sigmoid gate."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        mid = max(1, channels // reduction)
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, mid, 1),
            nn.LeakyReLU(0.1),
            nn.Conv2d(mid, channels, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return x * self.gate(x)


class CRB(nn.Module):
    """Conditional residual block.

    The basic and conditional maps are concatenated channel-wise, passed through
    two 3x3 convolutions and channel attention, projected back to the basic
    width, and added to the basic input.
    """

    def __init__(self, channels: int, cond_channels: int, reduction: int = 8, zero_init: bool = False):
        super().__init__()
        self.channels = channels
        self.body = nn.Sequential(
            conv3(channels + cond_channels, channels),
            _lrelu(),
            conv3(channels, channels),
        )
        self.attention = CALayer(channels, reduction)
        self.project = nn.Conv2d(channels, channels, 1)
        if zero_init:
            nn.init.zeros_(self.project.weight)
            nn.init.zeros_(self.project.bias)

    def forward(self, basic, cond):
        if basic.shape[-2:] != cond.shape[-2:]:
            raise ShapeError(f"basic {tuple(basic.shape)} and conditional {tuple(cond.shape)} sizes differ")
        f = self.attention(self.body(torch.cat([basic, cond], 1)))
        return basic + self.project(f)


class Restorer(nn.Module):
    """Single-frame restorer conditioned on a kernel code broadcast over the LR grid."""

    def __init__(self, cfg: ModelConfig, zero_init: bool = False):
        super().__init__()
        c, s = cfg.crb.channels, cfg.scale
        self.code_dim = cfg.code_dim
        self.head = conv3(3, c)
        self.blocks = nn.ModuleList(
            CRB(c, cfg.code_dim, cfg.crb.attention_reduction) for _ in range(cfg.crb.blocks_restorer)
        )
        self.fuse = conv3(c, c)
        self.up = nn.Sequential(conv3(c, c * s * s), nn.PixelShuffle(s), _lrelu())
        self.last = conv3(c, 3)
        if zero_init:
            nn.init.zeros_(self.last.weight)
            nn.init.zeros_(self.last.bias)

    def forward(self, y, code):
        """y: (B, 3, h, w), code: (B, d) -> (sr (B, 3, sh, sw), feats (B, C, h, w))."""
        if code.shape[-1] != self.code_dim:
            raise ShapeError(f"code length {code.shape[-1]} != {self.code_dim}")
        cond = code[:, :, None, None].expand(-1, -1, y.shape[-2], y.shape[-1])
        head = self.head(y)
        f = head
        for blk in self.blocks:
            f = blk(f, cond)
        feats = self.fuse(f) + head
        return self.last(self.up(feats)), feats


class Estimator(nn.Module):
    """Kernel-code estimator over a window of ``frames`` LR/HR pairs with early fusion.

    Per-frame LR and HR features are concatenated over the window: LR features
    form the basic input and stride-s-downsampled HR features the conditional
    input of every block. The head pools one code per frame.
    """

    def __init__(self, cfg: ModelConfig, frames: int):
        super().__init__()
        c, s = cfg.crb.channels, cfg.scale
        self.frames = frames
        self.code_dim = cfg.code_dim
        self.head_lr = conv3(3, c)
        self.head_hr = nn.Conv2d(3, c, 2 * s + 1, stride=s, padding=s)
        width = frames * c
        self.blocks = nn.ModuleList(
            CRB(width, width, cfg.crb.attention_reduction) for _ in range(cfg.crb.blocks_estimator)
        )
        self.tail = nn.Sequential(conv3(width, width), _lrelu(), conv3(width, frames * cfg.code_dim))

    def forward(self, ys, hrs):
        """ys: (B, a, 3, h, w), hrs: (B, a, 3, sh, sw) -> codes (B, a, d)."""
        if ys.dim() != 5 or ys.shape[1] != self.frames or hrs.shape[:2] != ys.shape[:2]:
            raise ShapeError(f"estimator expects {self.frames} LR and HR frames, got {tuple(ys.shape)}, "
                             f"{tuple(hrs.shape)}")
        b, a = ys.shape[:2]
        lr = self.head_lr(ys.flatten(0, 1))
        hr = self.head_hr(hrs.flatten(0, 1))
        if hr.shape[-2:] != lr.shape[-2:]:
            raise ShapeError("HR frames are not scale x the LR frames")
        h, w = lr.shape[-2:]
        f = lr.reshape(b, -1, h, w)
        cond = hr.reshape(b, -1, h, w)
        for blk in self.blocks:
            f = blk(f, cond)
        return self.tail(f).mean(dim=(2, 3)).reshape(b, a, self.code_dim)


class IterationStep(NamedTuple):
    codes: torch.Tensor  # (B, a, d) codes estimated for the a-window at this iteration
    srs: torch.Tensor  # (B, b, 3, sh, sw) restorer outputs of all window frames
    feats: torch.Tensor  # (B, b, C, h, w)


class SROutput(NamedTuple):
    sr: torch.Tensor  # (B, 3, sh, sw) restored reference frame
    trace: list[IterationStep]


class BlindVSR(nn.Module):
    """Est-a + Res-b: alternating restoration and multi-frame kernel estimation."""

    def __init__(self, cfg: ModelConfig, dirac_code):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.register_buffer("dirac_code", torch.as_tensor(dirac_code, dtype=torch.float32).reshape(cfg.code_dim))
        self.restorer = Restorer(cfg)
        self.estimator = Estimator(cfg, cfg.est_frames)
        self.mfr = (MultiFrameRestorer(cfg.crb.channels, cfg.res_frames, cfg.scale, cfg.pyramid)
                    if cfg.res_frames > 1 else None)

    @property
    def center(self) -> int:
        return self.cfg.res_frames // 2

    @property
    def est_slice(self) -> slice:
        n = self.cfg.est_frames // 2
        return slice(self.center - n, self.center + n + 1)

    def forward(self, ys) -> SROutput:
        """ys: (B, b, 3, h, w) LR window centered on the reference frame."""
        cfg = self.cfg
        if ys.dim() != 5 or ys.shape[1] != cfg.res_frames:
            raise ShapeError(f"expected (B, {cfg.res_frames}, 3, h, w) input, got {tuple(ys.shape)}")
        b, n = ys.shape[:2]
        win = self.est_slice
        codes = self.dirac_code.to(ys.dtype).expand(b, n, -1)
        trace = []
        for _ in range(cfg.iterations):
            sr, feats = self.restorer(ys.flatten(0, 1), codes.flatten(0, 1))
            sr = sr.unflatten(0, (b, n))
            feats = feats.unflatten(0, (b, n))
            est = self.estimator(ys[:, win], sr[:, win])
            codes = torch.cat([codes[:, :win.start], est, codes[:, win.stop:]], 1)
            trace.append(IterationStep(est, sr, feats))
        last = trace[-1]
        if self.mfr is None:
            out = last.srs[:, self.center]
        else:
            out = self.mfr(last.feats, ys[:, self.center])
        return SROutput(out, trace)


def alternating_sr(model: BlindVSR, ys) -> SROutput:
    """Inference entry point: ``ys`` is (b, 3, h, w) or (B, b, 3, h, w)."""
    ys = torch.as_tensor(ys)
    if ys.dim() == 4:
        ys = ys.unsqueeze(0)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return model(ys.to(model.dirac_code.dtype))
    finally:
        model.train(was_training)


def temporal_window(length: int, t: int, size: int) -> list[int]:
    """Frame indices of a ``size``-frame window centered at ``t`` with reflect padding at the ends."""
    n = size // 2
    idx = []
    for i in range(t - n, t + n + 1):
        if length == 1:
            idx.append(0)
            continue
        period = 2 * (length - 1)
        j = abs(i) % period
        idx.append(period - j if j >= length else j)
    return idx
