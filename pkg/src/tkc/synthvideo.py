"""Seeded synthetic HR videos: a textured canvas panned by a moving camera."""
from __future__ import annotations

import numpy as np

from .rng import substream


def texture_canvas(height: int, width: int, rng: np.random.Generator, shapes: int = 40) -> np.ndarray:
    """Oriented sinusoid gratings with sharp-edged rectangles and disks on top, in [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    canvas = np.zeros((height, width, 3))
    for _ in range(4):
        freq = rng.uniform(0.03, 0.25)
        ang = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(freq * 2 * np.pi * (np.cos(ang) * xx + np.sin(ang) * yy) + phase)
        canvas += wave[..., None] * rng.uniform(0.05, 0.2, size=3)
    canvas += rng.uniform(0.3, 0.6, size=3)
    for _ in range(shapes):
        color = rng.uniform(0, 1, size=3)
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        r = rng.uniform(2, max(3.0, min(height, width) / 8))
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            mask = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r * rng.uniform(0.3, 2.0))
        canvas[mask] = color
    return np.clip(canvas, 0.0, 1.0)


def synthetic_video(frames: int, height: int, width: int, seed: int, max_speed: float = 2.0) -> np.ndarray:
    """``(frames, height, width, 3)`` frames of an integer-pixel pan across a random canvas."""
    rng = substream(seed, "synthvideo")
    vy, vx = rng.uniform(-max_speed, max_speed, size=2)
    margin = int(np.ceil(max_speed * frames)) + 2
    canvas = texture_canvas(height + 2 * margin, width + 2 * margin, rng)
    out = np.empty((frames, height, width, 3))
    for t in range(frames):
        oy = margin + int(round(vy * t))
        ox = margin + int(round(vx * t))
        out[t] = canvas[oy:oy + height, ox:ox + width]
    return out
