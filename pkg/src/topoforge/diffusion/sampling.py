"""Deterministic sampling and reference-guided correction.

All public functions take and return float64 numpy latents; the network runs
in its own parameter dtype. The reverse update is the deterministic (eta = 0)
rule; guidance nudges z_t down the gradient of a reference-match loss before
each step.
"""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
import torch

from .schedule import NoiseSchedule, ddim_step_values, predict_eps_from_v, predict_z0_from_v
from .unet import Denoiser

GUIDANCE_SCALE = 1000.0
WEIGHT_EPS = 1e-8


def _run_model(
    model: Denoiser, z: np.ndarray, t: int, cond: np.ndarray
) -> np.ndarray:
    dt = model.dtype
    with torch.no_grad():
        zt = torch.from_numpy(np.asarray(z, dtype=np.float64)).to(dt)[None, None]
        c = torch.from_numpy(np.asarray(cond, dtype=np.float64)).to(dt)[None]
        v = model(zt, torch.tensor([t]), c)
    return v[0, 0].to(torch.float64).numpy()


def predict_z0(
    model: Denoiser, schedule: NoiseSchedule, z_t: np.ndarray, t: int, cond: np.ndarray
) -> np.ndarray:
    v = _run_model(model, z_t, t, cond)
    return predict_z0_from_v(z_t, v, t, schedule)


def predict_eps(
    model: Denoiser, schedule: NoiseSchedule, z_t: np.ndarray, t: int, cond: np.ndarray
) -> np.ndarray:
    v = _run_model(model, z_t, t, cond)
    return predict_eps_from_v(z_t, v, t, schedule)


def ddim_step(
    model: Denoiser, schedule: NoiseSchedule, z_t: np.ndarray, t: int, cond: np.ndarray
) -> np.ndarray:
    """One deterministic reverse step t -> t-1."""
    v = _run_model(model, z_t, t, cond)
    z0_hat = predict_z0_from_v(z_t, v, t, schedule)
    eps_hat = predict_eps_from_v(z_t, v, t, schedule)
    return ddim_step_values(z0_hat, eps_hat, t, schedule)


def guidance_loss(
    model: Denoiser,
    z_t: torch.Tensor,
    t: int,
    cond: torch.Tensor,
    z_ref: torch.Tensor,
    schedule: NoiseSchedule,
    weight: torch.Tensor | None = None,
) -> torch.Tensor:
    """Reference-match loss on the clean prediction.

    Mean-square form; the masked variant normalizes by the mean mask weight so
    the loss scale does not depend on how much of the domain the mask covers.
    """
    v = model(z_t[None, None], torch.tensor([t]), cond[None])[0, 0]
    sa = float(schedule.sqrt_ab(t))
    sb = float(schedule.sqrt_1mab(t))
    z0_hat = sa * z_t - sb * v
    delta = z0_hat - z_ref
    if weight is None:
        return delta.pow(2).mean()
    return (delta * weight).pow(2).mean() / (weight.mean() + WEIGHT_EPS)


def guidance_step(
    model: Denoiser,
    schedule: NoiseSchedule,
    z_t: np.ndarray,
    t: int,
    cond: np.ndarray,
    z_ref: np.ndarray,
    weight: np.ndarray | None = None,
    scale: float = GUIDANCE_SCALE,
) -> np.ndarray:
    """Gradient correction z_t <- z_t - scale * d(loss)/d(z_t).

    A non-finite gradient is skipped with a warning rather than corrupting
    the trajectory.
    """
    dt = model.dtype
    zt = torch.from_numpy(np.asarray(z_t, dtype=np.float64)).to(dt).requires_grad_(True)
    c = torch.from_numpy(np.asarray(cond, dtype=np.float64)).to(dt)
    ref = torch.from_numpy(np.asarray(z_ref, dtype=np.float64)).to(dt)
    w = None
    if weight is not None:
        w = torch.from_numpy(np.asarray(weight, dtype=np.float64)).to(dt)
    loss = guidance_loss(model, zt, t, c, ref, schedule, w)
    (grad,) = torch.autograd.grad(loss, zt)
    g = grad.to(torch.float64).numpy()
    if not np.all(np.isfinite(g)):
        warnings.warn(f"guidance gradient non-finite at t={t}; step skipped")
        return np.asarray(z_t, dtype=np.float64)
    return np.asarray(z_t, dtype=np.float64) - scale * g


def denoise(
    model: Denoiser,
    schedule: NoiseSchedule,
    z_start: np.ndarray,
    t_start: int,
    cond: np.ndarray,
    z_ref: np.ndarray | None = None,
    weight: np.ndarray | None = None,
    scale: float = GUIDANCE_SCALE,
    stride: int = 1,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Run the reverse chain from t_start down to 0.

    With z_ref set, a guidance correction is applied before the reverse update
    on every `stride`-th step (counted from t_start, so the first step is
    always guided). Returns the clean latent.
    """
    if not 1 <= t_start <= schedule.total_steps:
        raise ValueError(f"t_start must be in [1, {schedule.total_steps}]")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    z = np.asarray(z_start, dtype=np.float64)
    for k, t in enumerate(range(t_start, 0, -1)):
        if z_ref is not None and k % stride == 0:
            z = guidance_step(model, schedule, z, t, cond, z_ref, weight, scale)
        z = ddim_step(model, schedule, z, t, cond)
        if on_step is not None:
            on_step(t - 1, z)
    return z
