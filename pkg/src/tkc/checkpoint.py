"""Checkpoint container: JSON header plus little-endian float32 tensors.

Layout: ``b"TKCP"``, u32 version, u32 header length, UTF-8 JSON header, then
the raw tensor payload. The header echoes the model config, the codec hash
the model was trained against, free-form metadata, and a tensor index.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from . import ConfigurationError
from .io import FormatError, atomic_write_bytes
from .srcore import BlindVSR, ModelConfig

MAGIC = b"TKCP"
VERSION = 1


def pack(tensors: dict[str, torch.Tensor], header: dict) -> bytes:
    index, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    hb = json.dumps(dict(header, version=VERSION, tensors=index), sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + b"".join(chunks)


def unpack(data: bytes) -> tuple[dict, dict[str, torch.Tensor]]:
    if data[:4] != MAGIC:
        raise FormatError("not a checkpoint file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    base = 12 + hlen
    tensors = {}
    for entry in header["tensors"]:
        start = base + entry["offset"]
        arr = np.frombuffer(data[start:start + entry["nbytes"]], dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.astype(np.float32))
    return header, tensors


def save_checkpoint(path, model: BlindVSR, codec_sha: str, optimizer: torch.optim.Optimizer | None = None,
                    meta: dict | None = None) -> None:
    tensors = {f"model/{k}": v for k, v in model.state_dict().items()}
    header = {"model_config": model.cfg.to_dict(), "codec_sha": codec_sha, "meta": meta or {}}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        steps = {}
        for group in optimizer.param_groups:
            for p in group["params"]:
                st = optimizer.state.get(p)
                if not st:
                    continue
                n = names[id(p)]
                tensors[f"adam/{n}/exp_avg"] = st["exp_avg"]
                tensors[f"adam/{n}/exp_avg_sq"] = st["exp_avg_sq"]
                steps[n] = float(st["step"])
        header["adam_steps"] = steps
    atomic_write_bytes(path, pack(tensors, header))


def read_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    return unpack(Path(path).read_bytes())


def load_model(path, codec_sha: str | None = None, expect: ModelConfig | None = None) -> tuple[BlindVSR, dict]:
    """Rebuild the model; raises ConfigurationError on codec or config mismatch."""
    header, tensors = read_checkpoint(path)
    cfg = ModelConfig.from_dict(header["model_config"])
    if expect is not None and expect.to_dict() != cfg.to_dict():
        raise ConfigurationError("checkpoint model config does not match the requested config")
    if codec_sha is not None and header.get("codec_sha") and header["codec_sha"] != codec_sha:
        raise ConfigurationError(
            f"checkpoint was trained with codec {header['codec_sha'][:12]}, got {codec_sha[:12]}")
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    model = BlindVSR(cfg, state["dirac_code"])
    model.load_state_dict(state, strict=True)
    return model, header


def restore_optimizer(optimizer: torch.optim.Optimizer, model: BlindVSR, header: dict,
                      tensors: dict[str, torch.Tensor]) -> None:
    steps = header.get("adam_steps", {})
    for n, p in model.named_parameters():
        if n not in steps:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(steps[n]),
            "exp_avg": tensors[f"adam/{n}/exp_avg"].clone(),
            "exp_avg_sq": tensors[f"adam/{n}/exp_avg_sq"].clone(),
        }
