"""Velocity-prediction network: a small conditioned UNet on square latents.

Context (condition embedding + sinusoidal time embedding) is injected into
every block through a learned per-block projection added channelwise.
"""

from __future__ import annotations

import hashlib
import json
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core import ProblemSpec
from .conditioning import COND_DIM, ConditionEmbedding, ConditionEncoder

TIME_DIM = 128
DEFAULT_WIDTHS = (32, 64, 128, 128)


def time_embedding(t: torch.Tensor, dim: int = TIME_DIM) -> torch.Tensor:
    """Sinusoidal features of the integer step index. t: (B,) -> (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / (half - 1)
    ).to(t.device)
    ang = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class _Block(nn.Module):
    def __init__(self, cin: int, cout: int, ctx_dim: int):
        super().__init__()
        groups = math.gcd(8, cout)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm1 = nn.GroupNorm(groups, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, cout)
        self.ctx = nn.Linear(ctx_dim, cout)

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.norm1(self.conv1(x)))
        h = h + self.ctx(ctx)[:, :, None, None]
        return F.silu(self.norm2(self.conv2(h)))


class Denoiser(nn.Module):
    """Predicts velocity v from (z_t, t, condition). Output shape == input."""

    def __init__(
        self,
        widths: tuple[int, int, int, int] = DEFAULT_WIDTHS,
        resolution: int = 64,
        seed: int = 0,
    ):
        super().__init__()
        # three downsamplings: 16 keeps the bottleneck at 2x2 or larger so
        # normalization statistics never collapse to a single value
        if resolution % 8 != 0 or resolution < 16:
            raise ValueError("resolution must be a multiple of 8, at least 16")
        self.widths = tuple(int(w) for w in widths)
        self.resolution = int(resolution)
        ctx = COND_DIM + TIME_DIM
        w0, w1, w2, w3 = self.widths
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.cond_encoder = ConditionEncoder()
            self.time_mlp = nn.Sequential(
                nn.Linear(TIME_DIM, TIME_DIM), nn.SiLU(), nn.Linear(TIME_DIM, TIME_DIM)
            )
            self.enc0 = _Block(1, w0, ctx)
            self.enc1 = _Block(w0, w1, ctx)
            self.enc2 = _Block(w1, w2, ctx)
            self.mid = _Block(w2, w3, ctx)
            self.dec2 = _Block(w3 + w2, w2, ctx)
            self.dec1 = _Block(w2 + w1, w1, ctx)
            self.dec0 = _Block(w1 + w0, w0, ctx)
            self.out = nn.Conv2d(w0, 1, 3, padding=1)

    def architecture(self) -> dict:
        return {
            "family": "unet-v1",
            "widths": list(self.widths),
            "cond_dim": COND_DIM,
            "time_dim": TIME_DIM,
            "resolution": self.resolution,
        }

    def arch_hash(self) -> str:
        doc = json.dumps(self.architecture(), sort_keys=True).encode()
        return hashlib.sha256(doc).hexdigest()

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, z: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.resolution or z.shape[-2] != self.resolution:
            raise ValueError(
                f"latent is {tuple(z.shape[-2:])}, model expects "
                f"{(self.resolution, self.resolution)}"
            )
        temb = self.time_mlp(time_embedding(t).to(z.dtype))
        ctx = torch.cat([cond, temb], dim=1)
        h0 = self.enc0(z, ctx)
        h1 = self.enc1(F.avg_pool2d(h0, 2), ctx)
        h2 = self.enc2(F.avg_pool2d(h1, 2), ctx)
        m = self.mid(F.avg_pool2d(h2, 2), ctx)
        d2 = self.dec2(torch.cat([F.interpolate(m, scale_factor=2, mode="nearest"), h2], 1), ctx)
        d1 = self.dec1(torch.cat([F.interpolate(d2, scale_factor=2, mode="nearest"), h1], 1), ctx)
        d0 = self.dec0(torch.cat([F.interpolate(d1, scale_factor=2, mode="nearest"), h0], 1), ctx)
        return self.out(d0)

    def embed(self, spec: ProblemSpec) -> ConditionEmbedding:
        return self.cond_encoder.embed(spec)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype
