"""Y-channel PSNR/SSIM, benchmark construction and the evaluation harness."""
from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy import signal

from . import ConfigurationError, ShapeError
from .consistency import kernel_change_series
from .dataset import Sequence, write_sequence
from .degrade import DegradationConfig, degrade_sequence, upscale_bicubic
from .io import atomic_write_bytes, decode_tkck, encode_tkck, to_uint8, write_json
from .kernelcodec import KernelCodec
from .rng import substream
from .srcore import BlindVSR, alternating_sr, temporal_window

Y_COEFFS = (65.481 / 255.0, 128.553 / 255.0, 24.966 / 255.0)
Y_OFFSET = 16.0 / 255.0


@dataclass(frozen=True)
class MetricConfig:
    scale: int = 4
    trim: int | None = None  # defaults to scale
    psnr_cap: float = 100.0

    @property
    def border(self) -> int:
        return self.scale if self.trim is None else self.trim


def rgb_to_y(frame) -> np.ndarray:
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 2:
        return f
    return f[..., 0] * Y_COEFFS[0] + f[..., 1] * Y_COEFFS[1] + f[..., 2] * Y_COEFFS[2] + Y_OFFSET


def _prep(a, b, cfg: MetricConfig):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"frames differ in shape: {a.shape} vs {b.shape}")
    ya, yb = rgb_to_y(a), rgb_to_y(b)
    t = cfg.border
    if t:
        ya, yb = ya[t:-t, t:-t], yb[t:-t, t:-t]
    return ya, yb


def psnr_from_mse(mse: float, cap: float = 100.0) -> float:
    if mse <= 0:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def psnr_y(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    ya, yb = _prep(a, b, cfg)
    return psnr_from_mse(float(np.mean((ya - yb) ** 2)), cfg.psnr_cap)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    """SSIM of two [0, 1] planes with an 11x11 Gaussian window, valid region only."""
    c1, c2 = 0.01**2, 0.03**2
    win = gaussian_window()

    def filt(x):
        return signal.correlate(x, win, mode="valid", method="direct")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_y(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    ya, yb = _prep(a, b, cfg)
    return ssim_plane(ya, yb)


def quantize(frame) -> np.ndarray:
    return to_uint8(frame).astype(np.float64) / 255.0


# -- benchmark construction -------------------------------------------------------

def build_benchmark(hr_videos: dict, kernel_pool: list, cfg: DegradationConfig, seed: int, out_dir,
                    codec: KernelCodec | None = None, provenance: dict | None = None) -> dict:
    """Assign one pool sequence per video (seeded), degrade with looping, write the layout.

    HR frames are quantized to 8 bit and kernels rounded through the TKCK
    float32 format before degradation, so the files on disk describe exactly
    what was applied.
    """
    if not kernel_pool:
        raise ConfigurationError("kernel pool is empty")
    cfg.validate()
    out = Path(out_dir)
    pool = [decode_tkck(encode_tkck(k)) for k in kernel_pool]
    rng = substream(seed, "benchmark-assign")
    names = sorted(hr_videos)
    entries = {}
    for vi, name in enumerate(names):
        hr = quantize(np.asarray(hr_videos[name]))
        if hr.shape[1] % cfg.scale or hr.shape[2] % cfg.scale:
            raise ShapeError(f"video {name} ({hr.shape[1]}x{hr.shape[2]}) is not divisible by {cfg.scale}")
        pick = int(rng.integers(len(pool)))
        lr, used = degrade_sequence(hr, pool[pick], cfg, seed=int(substream(seed, "benchmark-noise", vi)
                                                                   .integers(2**31)))
        used = decode_tkck(encode_tkck(used))
        manifest = {
            "name": name,
            "frames": int(len(hr)),
            "degradation": cfg.to_dict(),
            "seed": seed,
            "kernel_pool_index": pick,
            "kernel_pool_length": int(len(pool[pick])),
            "looped": bool(len(hr) > len(pool[pick])),
            "codec_sha": codec.sha if codec is not None else "",
            "provenance": provenance or {},
        }
        if codec is not None and len(used) > 1:
            manifest["consistency"] = kernel_change_series(used, codec).summary
        write_sequence(out / name, lr, used, manifest, hr=hr)
        entries[name] = manifest
    top = {
        "seed": seed,
        "degradation": cfg.to_dict(),
        "pool_size": len(pool),
        "codec_sha": codec.sha if codec is not None else "",
        "sequences": entries,
    }
    write_json(out / "benchmark.json", top)
    return top


# -- evaluation -------------------------------------------------------------------

def model_label(model: BlindVSR) -> str:
    return f"Est-{model.cfg.est_frames} + Res-{model.cfg.res_frames}"


def upscale_frames(model: BlindVSR, lr) -> np.ndarray:
    """Restore every frame of an LR video ``(T, h, w, 3)``; returns ``(T, sH, sW, 3)`` unclamped."""
    lr = np.asarray(lr, dtype=np.float32)
    t_len = len(lr)
    ys_all = torch.from_numpy(np.ascontiguousarray(lr.transpose(0, 3, 1, 2)))
    out = []
    for t in range(t_len):
        idx = temporal_window(t_len, t, model.cfg.res_frames)
        sr = alternating_sr(model, ys_all[idx]).sr[0]
        out.append(sr.permute(1, 2, 0).double().numpy())
    return np.stack(out)


def _rows_for(label: str, seqs: list[Sequence], restore, cfg: MetricConfig) -> list[dict]:
    rows = []
    for s in seqs:
        if s.hr is None:
            raise ConfigurationError(f"sequence {s.name} has no ground truth")
        sr = restore(s)
        ps = [psnr_y(quantize(sr[t]), s.hr[t], cfg) for t in range(len(s))]
        ss = [ssim_y(quantize(sr[t]), s.hr[t], cfg) for t in range(len(s))]
        rows.append({"model": label, "sequence": s.name, "frames": len(s),
                     "psnr": float(np.mean(ps)), "ssim": float(np.mean(ss))})
    rows.append({"model": label, "sequence": "mean", "frames": sum(r["frames"] for r in rows),
                 "psnr": float(np.mean([r["psnr"] for r in rows])),
                 "ssim": float(np.mean([r["ssim"] for r in rows]))})
    return rows


def check_benchmark(seqs: list[Sequence], scale: int, codec_sha: str | None) -> None:
    for s in seqs:
        deg = s.manifest.get("degradation", {})
        if deg.get("scale", scale) != scale:
            raise ConfigurationError(f"sequence {s.name} has scale {deg.get('scale')}, model expects {scale}")
        recorded = s.manifest.get("codec_sha")
        if codec_sha and recorded and recorded != codec_sha:
            raise ConfigurationError(f"sequence {s.name} was built with a different codec")


def evaluate(model: BlindVSR, seqs: list[Sequence], codec_sha: str | None = None,
             label: str | None = None) -> list[dict]:
    """Per-sequence and mean Y-PSNR/SSIM for one model; the last row is the mean."""
    check_benchmark(seqs, model.cfg.scale, codec_sha)
    cfg = MetricConfig(scale=model.cfg.scale)
    return _rows_for(label or model_label(model), seqs, lambda s: upscale_frames(model, s.lr), cfg)


def evaluate_bicubic(seqs: list[Sequence], scale: int) -> list[dict]:
    cfg = MetricConfig(scale=scale)
    return _rows_for("Bicubic", seqs, lambda s: np.stack([upscale_bicubic(f, scale) for f in s.lr]), cfg)


def evaluate_identity(seqs: list[Sequence], scale: int) -> list[dict]:
    cfg = MetricConfig(scale=scale)
    return _rows_for("Ground truth", seqs, lambda s: s.hr, cfg)


def results_csv(rows: list[dict]) -> bytes:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "sequence", "frames", "psnr", "ssim"])
    for r in rows:
        w.writerow([r["model"], r["sequence"], r["frames"], f"{r['psnr']:.6f}", f"{r['ssim']:.6f}"])
    return buf.getvalue().encode("utf-8")


def table_md(rows: list[dict]) -> bytes:
    lines = ["| Models | PSNR/SSIM |", "|---|---|"]
    for r in rows:
        if r["sequence"] == "mean":
            lines.append(f"| {r['model']} | {r['psnr']:.2f}/{r['ssim']:.4f} |")
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_report(rows: list[dict], out_dir) -> None:
    out = Path(out_dir)
    atomic_write_bytes(out / "results.csv", results_csv(rows))
    atomic_write_bytes(out / "table.md", table_md(rows))
