"""Multi-frame alignment (PCD), fusion (TSA) and restoration on restorer features."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from . import ShapeError


@dataclass
class PyramidConfig:
    levels: int = 2
    align_kernel: int = 3
    fusion_channels: int | None = None  # defaults to the feature width
    cascade: bool = False
    deform_groups: int = 1
    restore_blocks: int = 2

    def validate(self) -> None:
        if self.levels < 1:
            raise ValueError("pyramid needs at least one level")
        if self.align_kernel % 2 == 0:
            raise ValueError("align_kernel must be odd")


def _lrelu():
    return nn.LeakyReLU(0.1)


def conv3(cin: int, cout: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, stride, 1)


def _resize_like(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    if x.shape[-2:] == ref.shape[-2:]:
        return x
    return F.interpolate(x, size=ref.shape[-2:], mode="bilinear", align_corners=False)


def bilinear_gather(x: torch.Tensor, py: torch.Tensor, px: torch.Tensor) -> torch.Tensor:
    """Sample ``x`` at fractional positions with zero padding outside the image.

    x: (B, G, Cg, H, W); py, px: (B, G, P) pixel coordinates. Returns (B, G, Cg, P).
    """
    b, g, cg, h, w = x.shape
    flat = x.reshape(b, g, cg, h * w)
    y0 = torch.floor(py)
    x0 = torch.floor(px)
    wy1 = py - y0
    wx1 = px - x0
    out = 0
    for dy, wy in ((0, 1 - wy1), (1, wy1)):
        for dx, wx in ((0, 1 - wx1), (1, wx1)):
            yi = y0 + dy
            xi = x0 + dx
            valid = (yi >= 0) & (yi <= h - 1) & (xi >= 0) & (xi <= w - 1)
            idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1)).long()
            vals = torch.gather(flat, 3, idx.unsqueeze(2).expand(b, g, cg, idx.shape[-1]))
            out = out + vals * (wy * wx * valid.to(x.dtype)).unsqueeze(2)
    return out


def modulated_deform_conv2d(x, offset, mask, weight, bias=None, padding: int = 1, dilation: int = 1):
    """Modulated deformable convolution, stride 1.

    ``offset`` is (B, 2*G*K*K, H, W) with interleaved (dy, dx) per kernel tap,
    ``mask`` is (B, G*K*K, H, W); the layout matches ``torchvision.ops.deform_conv2d``.
    """
    b, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    if cin != c:
        raise ShapeError(f"weight expects {cin} input channels, got {c}")
    taps = kh * kw
    g = offset.shape[1] // (2 * taps)
    if g < 1 or c % g or offset.shape[1] != 2 * g * taps or mask.shape[1] != g * taps:
        raise ShapeError("offset/mask channels do not match kernel size and groups")
    ho = h + 2 * padding - dilation * (kh - 1)
    wo = w + 2 * padding - dilation * (kw - 1)
    if offset.shape[-2:] != (ho, wo) or mask.shape[-2:] != (ho, wo):
        raise ShapeError("offset/mask spatial size does not match the output")
    off = offset.reshape(b, g, taps, 2, ho, wo)
    ki = torch.arange(kh, device=x.device, dtype=x.dtype).repeat_interleave(kw) * dilation - padding
    kj = torch.arange(kw, device=x.device, dtype=x.dtype).repeat(kh) * dilation - padding
    gy = torch.arange(ho, device=x.device, dtype=x.dtype).view(1, 1, 1, ho, 1)
    gx = torch.arange(wo, device=x.device, dtype=x.dtype).view(1, 1, 1, 1, wo)
    py = gy + ki.view(1, 1, taps, 1, 1) + off[:, :, :, 0]
    px = gx + kj.view(1, 1, taps, 1, 1) + off[:, :, :, 1]
    cols = bilinear_gather(x.reshape(b, g, c // g, h, w), py.reshape(b, g, -1), px.reshape(b, g, -1))
    cols = cols.reshape(b, g, c // g, taps, ho, wo) * mask.reshape(b, g, 1, taps, ho, wo)
    cols = cols.reshape(b, c, taps, ho, wo)
    out = torch.einsum("bckhw,ock->bohw", cols, weight.reshape(cout, cin, taps))
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


class ModulatedDeformConv(nn.Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3):
        super().__init__()
        self.padding = kernel // 2
        ref = nn.Conv2d(cin, cout, kernel, padding=self.padding)
        self.weight = nn.Parameter(ref.weight.detach().clone())
        self.bias = nn.Parameter(ref.bias.detach().clone())

    def forward(self, x, offset, mask):
        return modulated_deform_conv2d(x, offset, mask, self.weight, self.bias, self.padding)


class DCNPack(nn.Module):
    """Deformable conv whose offsets and masks are predicted from a separate feature."""

    def __init__(self, channels: int, kernel: int = 3, groups: int = 1):
        super().__init__()
        self.taps = kernel * kernel
        self.groups = groups
        self.conv_offset_mask = conv3(channels, 3 * groups * self.taps)
        nn.init.zeros_(self.conv_offset_mask.weight)
        nn.init.zeros_(self.conv_offset_mask.bias)
        self.dcn = ModulatedDeformConv(channels, channels, kernel)

    def split(self, offset_feat):
        out = self.conv_offset_mask(offset_feat)
        n = 2 * self.groups * self.taps
        return out[:, :n], torch.sigmoid(out[:, n:])

    def forward(self, x, offset_feat):
        offset, mask = self.split(offset_feat)
        return self.dcn(x, offset, mask)


class PCDAlign(nn.Module):
    """Pyramid, cascading and deformable alignment of one supporting feature map."""

    def __init__(self, channels: int, cfg: PyramidConfig):
        super().__init__()
        cfg.validate()
        self.levels = cfg.levels
        self.cascade = cfg.cascade
        c, k, g = channels, cfg.align_kernel, cfg.deform_groups
        self.down = nn.ModuleList(
            nn.Sequential(conv3(c, c, 2), _lrelu(), conv3(c, c), _lrelu()) for _ in range(cfg.levels - 1)
        )
        self.offset_conv1 = nn.ModuleList(conv3(2 * c, c) for _ in range(cfg.levels))
        # index 0 is the finest level; the coarsest level has no coarser offsets to merge
        self.offset_conv2 = nn.ModuleList(
            conv3(2 * c if lvl < cfg.levels - 1 else c, c) for lvl in range(cfg.levels)
        )
        self.offset_conv3 = nn.ModuleList(conv3(c, c) for _ in range(cfg.levels - 1))
        self.dcn = nn.ModuleList(DCNPack(c, k, g) for _ in range(cfg.levels))
        self.fea_conv = nn.ModuleList(conv3(2 * c, c) for _ in range(cfg.levels - 1))
        if cfg.cascade:
            self.cas_offset = nn.Sequential(conv3(2 * c, c), _lrelu(), conv3(c, c), _lrelu())
            self.cas_dcn = DCNPack(c, k, g)
        self.act = _lrelu()

    def pyramid(self, feat):
        levels = [feat]
        for down in self.down:
            levels.append(down(levels[-1]))
        return levels

    def forward(self, ref, sup):
        if ref.shape != sup.shape:
            raise ShapeError(f"reference {tuple(ref.shape)} and supporting {tuple(sup.shape)} differ")
        ref_l, sup_l = self.pyramid(ref), self.pyramid(sup)
        offset = fea = None
        for lvl in reversed(range(self.levels)):
            off = self.act(self.offset_conv1[lvl](torch.cat([sup_l[lvl], ref_l[lvl]], 1)))
            if offset is None:
                off = self.act(self.offset_conv2[lvl](off))
            else:
                up = _resize_like(offset, off) * 2
                off = self.act(self.offset_conv2[lvl](torch.cat([off, up], 1)))
                off = self.act(self.offset_conv3[lvl](off))
            aligned = self.dcn[lvl](sup_l[lvl], off)
            if fea is None:
                aligned = self.act(aligned)
            else:
                aligned = self.fea_conv[lvl](torch.cat([aligned, _resize_like(fea, aligned)], 1))
                if lvl > 0 or not self.cascade:
                    aligned = self.act(aligned)
            offset, fea = off, aligned
        if self.cascade:
            off = self.cas_offset(torch.cat([fea, ref], 1))
            fea = self.act(self.cas_dcn(fea, off))
        return fea


class TSAFusion(nn.Module):
    """Temporal attention against the reference frame, 1x1 fusion, then pyramid spatial attention."""

    def __init__(self, channels: int, frames: int, center: int | None = None, out_channels: int | None = None):
        super().__init__()
        c = channels
        o = out_channels or channels
        self.frames = frames
        self.center = frames // 2 if center is None else center
        self.emb_ref = conv3(c, c)
        self.emb = conv3(c, c)
        self.fusion = nn.Conv2d(frames * c, o, 1)
        self.sa1 = nn.Conv2d(frames * c, o, 1)
        self.sa2 = nn.Conv2d(2 * o, o, 1)
        self.sa3 = conv3(o, o)
        self.sa4 = nn.Conv2d(o, o, 1)
        self.sa5 = conv3(o, o)
        self.sa_l1 = nn.Conv2d(o, o, 1)
        self.sa_l2 = conv3(2 * o, o)
        self.sa_l3 = conv3(o, o)
        self.sa_add1 = nn.Conv2d(o, o, 1)
        self.sa_add2 = nn.Conv2d(o, o, 1)
        self.act = _lrelu()

    @staticmethod
    def _pool(x):
        return torch.cat([F.max_pool2d(x, 3, 2, 1), F.avg_pool2d(x, 3, 2, 1, count_include_pad=False)], 1)

    def temporal_attention(self, aligned):
        b, n, c, h, w = aligned.shape
        ref = self.emb_ref(aligned[:, self.center])
        emb = self.emb(aligned.reshape(b * n, c, h, w)).reshape(b, n, c, h, w)
        return torch.sigmoid((emb * ref.unsqueeze(1)).sum(2, keepdim=True))  # (B, N, 1, H, W)

    def forward(self, aligned):
        if aligned.dim() != 5 or aligned.shape[1] != self.frames:
            raise ShapeError(f"expected (B, {self.frames}, C, H, W) aligned features, got {tuple(aligned.shape)}")
        b, n, c, h, w = aligned.shape
        weighted = (aligned * self.temporal_attention(aligned)).reshape(b, n * c, h, w)
        fea = self.act(self.fusion(weighted))

        att = self.act(self.sa1(weighted))
        att = self.act(self.sa2(self._pool(att)))
        att_l = self.act(self.sa_l1(att))
        att_l = self.act(self.sa_l2(self._pool(att_l)))
        att_l = self.act(self.sa_l3(att_l))
        att = self.act(self.sa3(att)) + _resize_like(att_l, att)
        att = self.act(self.sa4(att))
        att = self.sa5(F.interpolate(att, size=(h, w), mode="bilinear", align_corners=False))
        att_add = self.sa_add2(self.act(self.sa_add1(att)))
        return fea * torch.sigmoid(att) * 2 + att_add


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = conv3(channels, channels)
        self.conv2 = conv3(channels, channels)
        self.act = _lrelu()

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class RestoreHead(nn.Module):
    """Residual blocks, sub-pixel upsampling, and a bilinear skip of the reference LR frame."""

    def __init__(self, channels: int, blocks: int, scale: int, zero_init: bool = False):
        super().__init__()
        self.scale = scale
        self.body = nn.Sequential(*(ResidualBlock(channels) for _ in range(blocks)))
        self.up = nn.Sequential(conv3(channels, channels * scale * scale), nn.PixelShuffle(scale), _lrelu())
        self.last = conv3(channels, 3)
        if zero_init:
            nn.init.zeros_(self.last.weight)
            nn.init.zeros_(self.last.bias)

    def forward(self, fused, y_ref):
        res = self.last(self.up(self.body(fused)))
        base = F.interpolate(y_ref, scale_factor=self.scale, mode="bilinear", align_corners=False)
        return base + res


class MultiFrameRestorer(nn.Module):
    def __init__(self, channels: int, frames: int, scale: int, cfg: PyramidConfig | None = None,
                 zero_init: bool = False):
        super().__init__()
        cfg = cfg or PyramidConfig()
        self.frames = frames
        self.center = frames // 2
        fused = cfg.fusion_channels or channels
        self.align = PCDAlign(channels, cfg)
        self.fuse = TSAFusion(channels, frames, self.center, fused)
        self.restore = RestoreHead(fused, cfg.restore_blocks, scale, zero_init)

    def forward(self, feats, y_ref):
        """feats: (B, N, C, h, w) last-iteration restorer features; y_ref: (B, 3, h, w)."""
        if feats.dim() != 5 or feats.shape[1] != self.frames:
            raise ShapeError(f"expected (B, {self.frames}, C, h, w) features, got {tuple(feats.shape)}")
        ref = feats[:, self.center]
        aligned = torch.stack([self.align(ref, feats[:, i]) for i in range(self.frames)], 1)
        return self.restore(self.fuse(aligned), y_ref)
