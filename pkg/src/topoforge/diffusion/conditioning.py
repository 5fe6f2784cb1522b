"""Problem-spec conditioning: permutation-invariant set encoders for supports
and loads plus learned scalar maps, concatenated into a fixed 128-d vector.

Block layout (start, end): supports (0, 48), loads (48, 96), volume fraction
(96, 112), cell size (112, 120), aspect (120, 128). Points are sorted
canonically before pooling so the embedding is bit-identical under input
permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ..core import ProblemSpec

BLOCKS = {
    "supports": (0, 48),
    "loads": (48, 96),
    "volume_fraction": (96, 112),
    "cell_size": (112, 120),
    "aspect": (120, 128),
}
COND_DIM = 128


@dataclass(frozen=True)
class ConditionEmbedding:
    vector: np.ndarray  # (128,) float32
    blocks: dict

    def block(self, name: str) -> np.ndarray:
        lo, hi = self.blocks[name]
        return self.vector[lo:hi]


def support_features(spec: ProblemSpec) -> np.ndarray:
    """(n, 4) rows (x, y, fix_x, fix_y), canonically sorted."""
    rows = sorted((s.x, s.y, float(s.fix_x), float(s.fix_y)) for s in spec.supports)
    return np.array(rows, dtype=np.float32)


def load_features(spec: ProblemSpec) -> np.ndarray:
    """(n, 4) rows (x, y, fx, fy), canonically sorted."""
    rows = sorted((l.x, l.y, l.fx, l.fy) for l in spec.loads)
    return np.array(rows, dtype=np.float32)


def scalar_features(spec: ProblemSpec) -> np.ndarray:
    """(4,) = (volume_fraction, cell_size, aspect_x, aspect_y)."""
    return np.array(
        [spec.volume_fraction, spec.cell_size, spec.aspect[0], spec.aspect[1]],
        dtype=np.float32,
    )


class _PointSetNet(nn.Module):
    """Shared MLP over point features with masked mean pooling."""

    def __init__(self, out_dim: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(4, hidden), nn.SiLU(), nn.Linear(hidden, out_dim))

    def forward(self, feats: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # feats (B, N, 4), mask (B, N) with at least one valid point per row
        h = self.net(feats) * mask.unsqueeze(-1)
        return h.sum(dim=1) / mask.sum(dim=1, keepdim=True)


class ConditionEncoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.support_net = _PointSetNet(48)
        self.load_net = _PointSetNet(48)
        self.vf_map = nn.Linear(1, 16)
        self.cell_map = nn.Linear(1, 8)
        self.aspect_map = nn.Linear(2, 8)

    def forward(
        self,
        sup: torch.Tensor,
        sup_mask: torch.Tensor,
        load: torch.Tensor,
        load_mask: torch.Tensor,
        scalars: torch.Tensor,
    ) -> torch.Tensor:
        parts = [
            self.support_net(sup, sup_mask),
            self.load_net(load, load_mask),
            self.vf_map(scalars[:, 0:1]),
            self.cell_map(scalars[:, 1:2]),
            self.aspect_map(scalars[:, 2:4]),
        ]
        return torch.cat(parts, dim=1)

    @torch.no_grad()
    def embed(self, spec: ProblemSpec) -> ConditionEmbedding:
        dtype = next(self.parameters()).dtype
        sup = torch.from_numpy(support_features(spec)).to(dtype).unsqueeze(0)
        load = torch.from_numpy(load_features(spec)).to(dtype).unsqueeze(0)
        scalars = torch.from_numpy(scalar_features(spec)).to(dtype).unsqueeze(0)
        vec = self.forward(
            sup,
            torch.ones(sup.shape[:2], dtype=dtype),
            load,
            torch.ones(load.shape[:2], dtype=dtype),
            scalars,
        )
        return ConditionEmbedding(
            vector=vec.squeeze(0).to(torch.float32).numpy(), blocks=dict(BLOCKS)
        )
