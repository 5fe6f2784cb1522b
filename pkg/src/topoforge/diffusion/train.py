"""Velocity-matching training loop with EMA weights.

Corpus items are (DensityField, ProblemSpec) pairs; fields are resampled to
the model resolution and encoded to latents once up front. Batches, timesteps,
and noise draws come from a counter-based generator keyed by the config seed,
so a rerun reproduces the run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from ..core import DensityField, ProblemSpec, encode_field, resample_field
from .conditioning import load_features, scalar_features, support_features
from .schedule import NoiseSchedule
from .unet import Denoiser

MIN_CORPUS = 500


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 6000
    batch_size: int = 16
    lr: float = 2e-4
    ema_decay: float = 0.999
    seed: int = 0
    log_every: int = 100
    min_corpus: int = MIN_CORPUS

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in [0, 1)")


def _pack_points(rows: list[np.ndarray]) -> tuple[torch.Tensor, torch.Tensor]:
    n = max(r.shape[0] for r in rows)
    feats = np.zeros((len(rows), n, 4), dtype=np.float32)
    mask = np.zeros((len(rows), n), dtype=np.float32)
    for i, r in enumerate(rows):
        feats[i, : r.shape[0]] = r
        mask[i, : r.shape[0]] = 1.0
    return torch.from_numpy(feats), torch.from_numpy(mask)


def train(
    corpus: Sequence[tuple[DensityField, ProblemSpec]],
    schedule: NoiseSchedule,
    config: TrainConfig = TrainConfig(),
    model: Denoiser | None = None,
    log_fn: Callable[[int, float, float], None] | None = None,
) -> Denoiser:
    """Train (or continue training) a Denoiser; returns a copy carrying the
    exponential-moving-average weights."""
    if len(corpus) < config.min_corpus:
        raise ValueError(
            f"corpus has {len(corpus)} designs; at least {config.min_corpus} required"
        )
    if model is None:
        model = Denoiser(seed=config.seed)
    res = model.resolution

    z0 = np.stack(
        [
            encode_field(f if f.shape == (res, res) else resample_field(f, res, res))
            for f, _ in corpus
        ]
    ).astype(np.float32)[:, None]
    sup, sup_mask = _pack_points([support_features(s) for _, s in corpus])
    load, load_mask = _pack_points([load_features(s) for _, s in corpus])
    scalars = torch.from_numpy(np.stack([scalar_features(s) for _, s in corpus]))

    sqrt_ab = np.sqrt(schedule.alpha_bar).astype(np.float32)
    sqrt_1mab = np.sqrt(1.0 - schedule.alpha_bar).astype(np.float32)

    rng = np.random.Generator(np.random.Philox(key=config.seed))
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    ema = {k: p.detach().clone() for k, p in model.state_dict().items()}

    model.train()
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, len(corpus), size=config.batch_size)
        t = rng.integers(1, schedule.total_steps + 1, size=config.batch_size)
        eps = rng.standard_normal((config.batch_size, 1, res, res)).astype(np.float32)
        sa = sqrt_ab[t][:, None, None, None]
        sb = sqrt_1mab[t][:, None, None, None]
        zt = torch.from_numpy(sa * z0[idx] + sb * eps)
        v_target = torch.from_numpy(sa * eps - sb * z0[idx])

        cond = model.cond_encoder(sup[idx], sup_mask[idx], load[idx], load_mask[idx], scalars[idx])
        v_pred = model(zt, torch.from_numpy(t), cond)
        loss = (v_pred - v_target).pow(2).mean()

        if not torch.isfinite(loss):
            raise RuntimeError(
                f"training diverged: non-finite loss at step {step} (lr={config.lr})"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()

        with torch.no_grad():
            d = config.ema_decay
            for k, p in model.state_dict().items():
                if p.dtype.is_floating_point:
                    ema[k].mul_(d).add_(p, alpha=1.0 - d)
                else:
                    ema[k] = p.detach().clone()

        if log_fn is not None and (step % config.log_every == 0 or step == config.steps):
            log_fn(step, float(loss.detach()), config.lr)

    out = Denoiser(widths=model.widths, resolution=model.resolution)
    out.load_state_dict(ema)
    out.eval()
    return out
