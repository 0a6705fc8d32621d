"""Timestep samplers for the optimization loop.

Uniform sampling draws independent integers from [t_min, t_max]. The
non-increasing sampler follows a linear envelope from t_max down to t_min,
optionally jittered by Gaussian noise, with a running minimum so the emitted
sequence never increases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class SamplerKind(enum.Enum):
    UNIFORM = "uniform"
    NON_INCREASING = "non_increasing"


@dataclass(frozen=True)
class TimestepSampler:
    kind: SamplerKind
    t_min: int
    t_max: int
    total_steps: int
    jitter: float = 0.0

    def __post_init__(self):
        if not 1 <= self.t_min <= self.t_max:
            raise ValueError("need 1 <= t_min <= t_max")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


def _envelope(sampler: TimestepSampler, steps: int) -> np.ndarray:
    if steps == 1:
        return np.array([float(sampler.t_max)])
    return np.linspace(sampler.t_max, sampler.t_min, steps)


def timestep_sequence(sampler: TimestepSampler, rng: np.random.Generator,
                      steps: int | None = None) -> np.ndarray:
    """Full emitted timestep sequence for a run, deterministic given the rng state."""
    n = sampler.total_steps if steps is None else int(steps)
    if n < 1:
        raise ValueError("steps must be >= 1")
    if sampler.kind is SamplerKind.UNIFORM:
        return rng.integers(sampler.t_min, sampler.t_max + 1, size=n).astype(int)
    env = _envelope(sampler, n)
    if sampler.jitter > 0.0:
        env = env + sampler.jitter * rng.standard_normal(n)
    ts = np.rint(env).astype(int)
    np.clip(ts, sampler.t_min, sampler.t_max, out=ts)
    return np.minimum.accumulate(ts)


def sample_timestep(sampler: TimestepSampler, step: int, rng: np.random.Generator) -> int:
    """Timestep emitted at a given step index (generates the sequence and indexes it)."""
    if not 0 <= step < sampler.total_steps:
        raise ValueError(f"step {step} out of range [0, {sampler.total_steps})")
    return int(timestep_sequence(sampler, rng)[step])
