"""Noise schedule and the exact algebra between latents, noise, and velocity.

The schedule stores cumulative signal retention abar[t] for t = 0..T with
abar[0] = 1 exactly, following the squared-cosine profile normalized by its
value at t = 0 and floored at 1e-5.

Forward noising:   z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps
Velocity target:   v_t = sqrt(abar_t) eps - sqrt(1 - abar_t) z_0
Inversions:        z0_hat  = sqrt(abar_t) z_t - sqrt(1 - abar_t) v
                   eps_hat = sqrt(1 - abar_t) z_t + sqrt(abar_t) v
Deterministic step: z_{t-1} = sqrt(abar_{t-1}) z0_hat + sqrt(1 - abar_{t-1}) eps_hat
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ABAR_FLOOR = 1e-5
_COSINE_OFFSET = 0.008


@dataclass(frozen=True)
class NoiseSchedule:
    total_steps: int
    alpha_bar: np.ndarray  # (T+1,), abar[0] == 1, strictly decreasing

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.total_steps + 1,):
            raise ValueError(
                f"alpha_bar must have {self.total_steps + 1} entries, got {ab.shape}"
            )
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1")
        if not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] < ABAR_FLOOR - 1e-18 or np.any(ab <= 0):
            raise ValueError(f"alpha_bar must stay in [{ABAR_FLOOR}, 1]")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    def sqrt_ab(self, t) -> np.ndarray | float:
        return np.sqrt(self.alpha_bar[t])

    def sqrt_1mab(self, t) -> np.ndarray | float:
        return np.sqrt(1.0 - self.alpha_bar[t])


def make_schedule(total_steps: int) -> NoiseSchedule:
    """Squared-cosine retention profile, normalized so abar[0] = 1 exactly."""
    if total_steps < 2:
        raise ValueError("schedule needs at least 2 steps")
    t = np.arange(total_steps + 1, dtype=np.float64)
    f = np.cos((t / total_steps + _COSINE_OFFSET) / (1.0 + _COSINE_OFFSET) * math.pi / 2.0) ** 2
    ab = np.clip(f / f[0], ABAR_FLOOR, 1.0)
    if np.any(ab[:-1] <= ABAR_FLOOR):
        # the floor may only absorb the final entry, otherwise the profile
        # would go flat and the reverse updates degenerate
        raise ValueError(
            f"total_steps={total_steps} is too large for the retention floor {ABAR_FLOOR}"
        )
    return NoiseSchedule(total_steps=total_steps, alpha_bar=ab)


def noise(z0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward noising to step t. t = 0 returns z0 exactly."""
    if not 0 <= t <= schedule.total_steps:
        raise ValueError(f"t must be in [0, {schedule.total_steps}], got {t}")
    return schedule.sqrt_ab(t) * z0 + schedule.sqrt_1mab(t) * eps


def velocity_target(z0: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    return schedule.sqrt_ab(t) * eps - schedule.sqrt_1mab(t) * z0


def predict_z0_from_v(z_t: np.ndarray, v: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    return schedule.sqrt_ab(t) * z_t - schedule.sqrt_1mab(t) * v


def predict_eps_from_v(z_t: np.ndarray, v: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    return schedule.sqrt_1mab(t) * z_t + schedule.sqrt_ab(t) * v


def ddim_step_values(
    z0_hat: np.ndarray, eps_hat: np.ndarray, t: int, schedule: NoiseSchedule
) -> np.ndarray:
    """Deterministic reverse step t -> t-1 from predicted components."""
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"t must be in [1, {schedule.total_steps}], got {t}")
    return schedule.sqrt_ab(t - 1) * z0_hat + schedule.sqrt_1mab(t - 1) * eps_hat
