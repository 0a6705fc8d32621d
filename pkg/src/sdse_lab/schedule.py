"""Forward-diffusion noise schedules.

The schedule is the cumulative signal-retention sequence alpha_bar_1..alpha_bar_T:
a point z diffused to step t is distributed as N(sqrt(alpha_bar_t) z, (1-alpha_bar_t) I).
Timesteps are 1-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing alpha_bar sequence over timesteps 1..T."""

    alphas_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alphas_bar, dtype=float)
        if ab.ndim != 1 or ab.size == 0:
            raise ValueError("alphas_bar must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(ab)):
            raise ValueError("alphas_bar must be finite")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alphas_bar values must lie in (0, 1]")
        if ab.size > 1 and not np.all(np.diff(ab) < 0.0):
            raise ValueError("alphas_bar must be strictly decreasing")
        ab = ab.copy()
        ab.flags.writeable = False
        object.__setattr__(self, "alphas_bar", ab)

    @property
    def num_steps(self) -> int:
        return int(self.alphas_bar.size)

    def _check(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.num_steps:
            raise ValueError(f"timestep {t} out of range [1, {self.num_steps}]")
        return t

    def alpha_bar(self, t: int) -> float:
        return float(self.alphas_bar[self._check(t) - 1])

    def sigma(self, t: int) -> float:
        """Noise scale sqrt(1 - alpha_bar_t)."""
        return float(np.sqrt(1.0 - self.alpha_bar(t)))


def linear_beta_schedule(num_steps: int = 1000, beta_start: float = 1e-4,
                         beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear-beta schedule; alpha_bar_t is the running product of (1 - beta_s).

    Defaults give the standard 1000-step schedule with beta in [1e-4, 2e-2].
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    betas = np.linspace(beta_start, beta_end, num_steps)
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ValueError("betas must lie in (0, 1)")
    return NoiseSchedule(np.cumprod(1.0 - betas))
