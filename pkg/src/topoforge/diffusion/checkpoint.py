"""Self-describing checkpoint files for the denoiser and its schedule.

Layout (little endian):
    8 bytes   magic b"TFCKPT01"
    8 bytes   header length (uint64)
    N bytes   header JSON: architecture, schedule length, tensor manifest
    ...       alpha_bar as float64, then each tensor as float32, manifest order
    32 bytes  sha256 over everything above
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .schedule import NoiseSchedule
from .unet import Denoiser

MAGIC = b"TFCKPT01"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: Denoiser, schedule: NoiseSchedule) -> None:
    state = model.state_dict()
    manifest = [
        {"name": k, "shape": list(v.shape)}
        for k, v in state.items()
        if v.dtype.is_floating_point
    ]
    header = {
        "architecture": model.architecture(),
        "total_steps": schedule.total_steps,
        "tensors": manifest,
    }
    blob = bytearray()
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob += MAGIC
    blob += len(head).to_bytes(8, "little")
    blob += head
    blob += np.ascontiguousarray(schedule.alpha_bar, dtype="<f8").tobytes()
    for entry in manifest:
        t = state[entry["name"]].detach().to(torch.float32).cpu().numpy()
        blob += np.ascontiguousarray(t, dtype="<f4").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[Denoiser, NoiseSchedule]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + 32:
        raise CheckpointError("checkpoint file is truncated")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checkpoint integrity check failed (sha256 mismatch)")
    if body[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    off = len(MAGIC)
    head_len = int.from_bytes(body[off : off + 8], "little")
    off += 8
    try:
        header = json.loads(body[off : off + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint header is unreadable: {exc}") from exc
    off += head_len

    arch = header["architecture"]
    total_steps = int(header["total_steps"])
    n_ab = (total_steps + 1) * 8
    if off + n_ab > len(body):
        raise CheckpointError("checkpoint truncated inside alpha_bar")
    alpha_bar = np.frombuffer(body[off : off + n_ab], dtype="<f8").copy()
    off += n_ab
    schedule = NoiseSchedule(total_steps=total_steps, alpha_bar=alpha_bar)

    model = Denoiser(
        widths=tuple(arch["widths"]), resolution=int(arch["resolution"])
    )
    state = model.state_dict()
    loaded = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in state:
            raise CheckpointError(f"checkpoint tensor {name!r} not present in model")
        if tuple(state[name].shape) != shape:
            raise CheckpointError(
                f"checkpoint tensor {name!r} has shape {shape}, "
                f"model expects {tuple(state[name].shape)}"
            )
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if off + nbytes > len(body):
            raise CheckpointError(f"checkpoint truncated inside tensor {name!r}")
        arr = np.frombuffer(body[off : off + nbytes], dtype="<f4").copy().reshape(shape)
        loaded[name] = torch.from_numpy(arr)
        off += nbytes
    if off != len(body):
        raise CheckpointError("checkpoint has trailing bytes after last tensor")

    missing = [k for k, v in state.items() if v.dtype.is_floating_point and k not in loaded]
    if missing:
        raise CheckpointError(f"checkpoint is missing tensor {missing[0]!r}")
    model.load_state_dict(loaded, strict=False)
    model.eval()
    return model, schedule
