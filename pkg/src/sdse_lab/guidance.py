"""Guidance assembly and its term decomposition.

The dual-conditioned guided prediction combines unconditional, image-only, and
fully conditioned noise predictions with scales (omega_i, omega_t). Its
residual against the ground-truth noise splits into four terms:

    m1 = eps_img  - eps_uncond          (baseline shift)
    m3 = eps_full - eps_img             (condition divergence)
    m4 = eps_full - epsilon             (full-condition pull)
    m2 = omega_t * m3 + eps_img - epsilon

with the exact identities  residual = (omega_i - 1) m1 + m2  and
m2 = (omega_t - 1) m3 + m4.  The staged editing estimator keeps m2 at middle
timesteps, optionally dropping m3 below the small-timestep threshold, and
refuses large timesteps outright.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mixtures import FULL_COND, IMAGE_COND, UNCONDITIONED
from .oracle import NoiseOracle


@dataclass(frozen=True)
class GuidanceWeights:
    """Image and text guidance scales (omega_i, omega_t)."""

    omega_t: float = 7.5
    omega_i: float = 1.5

    def __post_init__(self):
        if not (np.isfinite(self.omega_t) and np.isfinite(self.omega_i)):
            raise ValueError("guidance scales must be finite")
        if self.omega_t < 0 or self.omega_i < 0:
            raise ValueError("guidance scales must be >= 0")


@dataclass(frozen=True)
class StageThresholds:
    """Timestep staging: small is t <= small_max, middle is small_max < t <= middle_max."""

    small_max: int = 150
    middle_max: int = 800

    def __post_init__(self):
        if not 0 < self.small_max < self.middle_max:
            raise ValueError("thresholds must satisfy 0 < small_max < middle_max")


@dataclass(frozen=True)
class TermBundle:
    """The four decomposition terms plus the assembled guidance residual."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    cfg_residual: np.ndarray
    epsilon: np.ndarray


class EstimatorKind(enum.Enum):
    SDS = "sds"
    SSD = "ssd"
    M1_ONLY = "m1"
    M3_ONLY = "m3"
    M4_ONLY = "m4"
    SDSE = "sdse"
    SDSE_PRIME = "sdse_prime"


def cfg_combine(eps_uncond, eps_img, eps_full, w: GuidanceWeights) -> np.ndarray:
    """Guided noise prediction from the three oracle queries.

    The collapses at unit scales (omega_i = omega_t = 1 giving the full
    prediction, omega_t = 0 giving the image prediction) are exact.
    """
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_img = np.asarray(eps_img, dtype=float)
    eps_full = np.asarray(eps_full, dtype=float)
    if not eps_uncond.shape == eps_img.shape == eps_full.shape:
        raise ValueError("prediction vectors must share one dimension")
    if w.omega_i == 1.0:
        if w.omega_t == 1.0:
            return eps_full.copy()
        if w.omega_t == 0.0:
            return eps_img.copy()
        return eps_img + w.omega_t * (eps_full - eps_img)
    return (eps_uncond + w.omega_i * (eps_img - eps_uncond)
            + w.omega_t * (eps_full - eps_img))


def _integration_term(eps_img, eps_full, epsilon, omega_t: float) -> np.ndarray:
    # Single shared implementation so the staged estimator equals m2 bitwise.
    if omega_t == 1.0:
        return eps_full - epsilon
    return omega_t * (eps_full - eps_img) + eps_img - epsilon


def decompose_terms(eps_uncond, eps_img, eps_full, epsilon,
                    w: GuidanceWeights) -> TermBundle:
    """Split the guidance residual into the four analysis terms."""
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_img = np.asarray(eps_img, dtype=float)
    eps_full = np.asarray(eps_full, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    m1 = eps_img - eps_uncond
    m3 = eps_full - eps_img
    m4 = eps_full - epsilon
    m2 = _integration_term(eps_img, eps_full, epsilon, w.omega_t)
    cfg_residual = cfg_combine(eps_uncond, eps_img, eps_full, w) - epsilon
    return TermBundle(m1=m1, m2=m2, m3=m3, m4=m4, cfg_residual=cfg_residual,
                      epsilon=epsilon)


def sds_residual(oracle: NoiseOracle, z_t, t: int, epsilon, w: GuidanceWeights,
                 weight_fn=None) -> np.ndarray:
    """Plain guided residual w(t) * (guided prediction - epsilon)."""
    epsilon = np.asarray(epsilon, dtype=float)
    eps_u = oracle.predict(z_t, t, UNCONDITIONED)
    eps_i = oracle.predict(z_t, t, IMAGE_COND)
    eps_f = oracle.predict(z_t, t, FULL_COND)
    res = cfg_combine(eps_u, eps_i, eps_f, w) - epsilon
    if weight_fn is not None:
        res = weight_fn(t) * res
    return res


def ssd_residual(oracle: NoiseOracle, z_t, t: int, epsilon, omega: float,
                 th: StageThresholds = StageThresholds()) -> np.ndarray:
    """Single-condition split: mode-seeking pull plus a gated disengaging term.

    The joint (text, image) condition plays the single condition; the
    disengaging term against the unconditional prediction is dropped at small
    timesteps.
    """
    epsilon = np.asarray(epsilon, dtype=float)
    eps_f = oracle.predict(z_t, t, FULL_COND)
    res = eps_f - epsilon
    if t > th.small_max and omega != 0.0:
        eps_u = oracle.predict(z_t, t, UNCONDITIONED)
        res = res + omega * (eps_f - eps_u)
    return res


def sdse_residual(oracle: NoiseOracle, z_t, t: int, epsilon, w: GuidanceWeights,
                  th: StageThresholds = StageThresholds()) -> np.ndarray:
    """Staged editing residual: the condition-integration term m2, middle cap enforced."""
    if t > th.middle_max:
        raise ValueError(f"large timesteps excluded: t={t} > {th.middle_max}")
    epsilon = np.asarray(epsilon, dtype=float)
    eps_i = oracle.predict(z_t, t, IMAGE_COND)
    eps_f = oracle.predict(z_t, t, FULL_COND)
    return _integration_term(eps_i, eps_f, epsilon, w.omega_t)


def sdse_prime_residual(oracle: NoiseOracle, z_t, t: int, epsilon, w: GuidanceWeights,
                        th: StageThresholds = StageThresholds()) -> np.ndarray:
    """Variant dropping the divergence term at small timesteps (t <= small_max)."""
    if t > th.middle_max:
        raise ValueError(f"large timesteps excluded: t={t} > {th.middle_max}")
    epsilon = np.asarray(epsilon, dtype=float)
    if t <= th.small_max:
        return oracle.predict(z_t, t, FULL_COND) - epsilon
    return sdse_residual(oracle, z_t, t, epsilon, w, th)


def term_residual(kind: EstimatorKind, oracle: NoiseOracle, z_t, t: int, epsilon,
                  w: GuidanceWeights, th: StageThresholds = StageThresholds(),
                  weight_fn=None) -> np.ndarray:
    """Dispatch to a full estimator or a single decomposition term."""
    if kind is EstimatorKind.SDS:
        return sds_residual(oracle, z_t, t, epsilon, w, weight_fn)
    if kind is EstimatorKind.SSD:
        return ssd_residual(oracle, z_t, t, epsilon, w.omega_t, th)
    if kind is EstimatorKind.SDSE:
        return sdse_residual(oracle, z_t, t, epsilon, w, th)
    if kind is EstimatorKind.SDSE_PRIME:
        return sdse_prime_residual(oracle, z_t, t, epsilon, w, th)
    if kind is EstimatorKind.M1_ONLY:
        return oracle.predict(z_t, t, IMAGE_COND) - oracle.predict(z_t, t, UNCONDITIONED)
    if kind is EstimatorKind.M3_ONLY:
        return oracle.predict(z_t, t, FULL_COND) - oracle.predict(z_t, t, IMAGE_COND)
    if kind is EstimatorKind.M4_ONLY:
        return oracle.predict(z_t, t, FULL_COND) - np.asarray(epsilon, dtype=float)
    raise ValueError(f"unknown estimator kind: {kind!r}")
