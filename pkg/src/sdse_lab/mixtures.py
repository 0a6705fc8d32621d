"""Conditioned Gaussian mixtures with exact densities and scores.

A mixture's components carry condition labels describing which conditional
distributions they belong to: the unconditional density uses every component,
the image-conditional density uses components reachable with the image
condition, and so on. Sub-mixture selection, densities, scores, and the
forward-diffusion pushforward are all closed form. All density work happens
in log space so far-tail queries stay well behaved.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule


class ConditionLabel(enum.Enum):
    """Which conditional distributions a mixture component belongs to."""

    UNCONDITIONAL = "unconditional"
    IMAGE_ONLY = "image_only"
    TEXT_ONLY = "text_only"
    BOTH = "both"


@dataclass(frozen=True)
class Condition:
    """A (text?, image?) conditioning pair; both flags off means unconditioned."""

    text: bool = False
    image: bool = False

    def admits(self, label: ConditionLabel) -> bool:
        """Membership rule mapping a conditioning pair to admissible labels.

        No conditions -> every component. Image only -> image-only and
        dual-labeled components. Text only -> text-only and dual-labeled.
        Both -> dual-labeled components only.
        """
        if self.text and self.image:
            return label is ConditionLabel.BOTH
        if self.image:
            return label in (ConditionLabel.IMAGE_ONLY, ConditionLabel.BOTH)
        if self.text:
            return label in (ConditionLabel.TEXT_ONLY, ConditionLabel.BOTH)
        return True

    def __str__(self) -> str:
        return {(False, False): "(-,-)", (False, True): "(-,I)",
                (True, False): "(y,-)", (True, True): "(y,I)"}[(self.text, self.image)]


UNCONDITIONED = Condition(text=False, image=False)
IMAGE_COND = Condition(text=False, image=True)
TEXT_COND = Condition(text=True, image=False)
FULL_COND = Condition(text=True, image=True)

ALL_CONDITIONS = (UNCONDITIONED, IMAGE_COND, TEXT_COND, FULL_COND)


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian: weight >= 0, SPD covariance."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(mean.size)
        if not np.isfinite(self.weight) or self.weight < 0.0:
            raise ValueError("component weight must be finite and >= 0")
        if not np.all(np.isfinite(mean)):
            raise ValueError("component mean must be finite")
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape must match mean dimension")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariance must be positive definite") from err
        mean = mean.copy()
        cov = cov.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.size)


def isotropic_component(weight: float, mean, variance: float) -> GaussianComponent:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GaussianComponent(weight, mean, variance * np.eye(mean.size))


@dataclass(frozen=True)
class ConditionedMixture:
    """Gaussian mixture whose components carry condition labels."""

    components: tuple[tuple[GaussianComponent, ConditionLabel], ...]

    def __post_init__(self):
        comps = tuple((c, lab) for c, lab in self.components)
        if not comps:
            raise ValueError("mixture must have at least one component")
        dim = comps[0][0].dim
        for c, lab in comps:
            if not isinstance(lab, ConditionLabel):
                raise ValueError("each component needs exactly one condition label")
            if c.dim != dim:
                raise ValueError("all components must share the same dimension")
        if sum(c.weight for c, _ in comps) <= 0.0:
            raise ValueError("total mixture weight must be positive")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0][0].dim

    @property
    def size(self) -> int:
        return len(self.components)

    def weights(self) -> np.ndarray:
        return np.array([c.weight for c, _ in self.components])

    def means(self) -> np.ndarray:
        return np.stack([c.mean for c, _ in self.components])

    def covariances(self) -> np.ndarray:
        return np.stack([c.covariance for c, _ in self.components])

    def labels(self) -> tuple[ConditionLabel, ...]:
        return tuple(lab for _, lab in self.components)

    def mode_points(self, cond: Condition) -> np.ndarray:
        """Means of the components admitted by `cond` (the labeled modes)."""
        return sub_mixture(self, cond).means()


def sub_mixture(mix: ConditionedMixture, cond: Condition) -> ConditionedMixture:
    """Renormalized sub-mixture of components admitted by the conditioning pair."""
    selected = [(c, lab) for c, lab in mix.components if cond.admits(lab)]
    if not selected:
        raise ValueError(f"condition has no support: {cond}")
    total = sum(c.weight for c, _ in selected)
    if total <= 0.0:
        raise ValueError(f"condition has no support: {cond}")
    renormed = tuple(
        (GaussianComponent(c.weight / total, c.mean, c.covariance), lab)
        for c, lab in selected
    )
    return ConditionedMixture(renormed)


def noised_mixture(mix: ConditionedMixture, sched: NoiseSchedule, t: int) -> ConditionedMixture:
    """Pushforward of the mixture through forward diffusion at timestep t.

    Component (w, mu, S) maps to (w, sqrt(ab) mu, ab S + (1-ab) I); weights and
    labels are preserved.
    """
    ab = sched.alpha_bar(t)
    eye = np.eye(mix.dim)
    out = tuple(
        (GaussianComponent(c.weight, np.sqrt(ab) * c.mean,
                           ab * c.covariance + (1.0 - ab) * eye), lab)
        for c, lab in mix.components
    )
    return ConditionedMixture(out)


# ---------------------------------------------------------------------------
# Log-space density machinery shared by the pure functions and the cached
# oracle. Parameters are frozen into plain arrays once per mixture.
# ---------------------------------------------------------------------------

_LOG_2PI = float(np.log(2.0 * np.pi))


class FrozenMixture:
    """Precomputed arrays for fast repeated density/score evaluation."""

    __slots__ = ("means", "log_wts", "iso", "inv_vars", "inv_covs", "log_norms", "dim")

    def __init__(self, mix: ConditionedMixture):
        self.means = mix.means()
        self.dim = mix.dim
        wts = mix.weights()
        total = wts.sum()
        with np.errstate(divide="ignore"):
            self.log_wts = np.where(wts > 0, np.log(np.maximum(wts, 1e-300) / total), -np.inf)
        covs = mix.covariances()
        diag = covs[:, np.arange(self.dim), np.arange(self.dim)]
        off = covs - diag[:, :, None] * np.eye(self.dim)
        is_iso = np.all(np.abs(off) == 0.0) and np.all(diag == diag[:, :1])
        if is_iso:
            self.iso = True
            variances = diag[:, 0]
            self.inv_vars = 1.0 / variances
            self.inv_covs = None
            self.log_norms = -0.5 * self.dim * (_LOG_2PI + np.log(variances))
        else:
            self.iso = False
            self.inv_vars = None
            self.inv_covs = np.linalg.inv(covs)
            sign, logdet = np.linalg.slogdet(covs)
            if np.any(sign <= 0):
                raise ValueError("covariance must be positive definite")
            self.log_norms = -0.5 * (self.dim * _LOG_2PI + logdet)

    def component_log_densities(self, z: np.ndarray) -> np.ndarray:
        d = self.means - z
        if self.iso:
            maha = np.einsum("kd,kd->k", d, d) * self.inv_vars
        else:
            maha = np.einsum("kd,kde,ke->k", d, self.inv_covs, d)
        return self.log_norms - 0.5 * maha

    def log_density(self, z: np.ndarray) -> float:
        return float(logsumexp(self.log_wts + self.component_log_densities(z)))

    def score(self, z: np.ndarray) -> np.ndarray:
        """Gradient of log density: responsibility-weighted pull toward the means."""
        d = self.means - z
        logp = self.log_wts + self.component_log_densities(z)
        logp -= logp.max()
        resp = np.exp(logp)
        resp /= resp.sum()
        if self.iso:
            return (resp * self.inv_vars) @ d
        return np.einsum("k,kde,ke->d", resp, self.inv_covs, d)


def _as_point(mix: ConditionedMixture, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (mix.dim,):
        raise ValueError(f"point must have dimension {mix.dim}")
    if not np.all(np.isfinite(z)):
        raise ValueError("point must be finite")
    return z


def mixture_log_density(mix: ConditionedMixture, z) -> float:
    return FrozenMixture(mix).log_density(_as_point(mix, z))


def mixture_density(mix: ConditionedMixture, z) -> float:
    """Weight-normalized mixture density at z."""
    return float(np.exp(mixture_log_density(mix, z)))


def mixture_score(mix: ConditionedMixture, z) -> np.ndarray:
    """Gradient of the log mixture density at z."""
    return FrozenMixture(mix).score(_as_point(mix, z))


# ---------------------------------------------------------------------------
# Mixture definition files
# ---------------------------------------------------------------------------

_LABEL_BY_NAME = {lab.value: lab for lab in ConditionLabel}


def mixture_from_dict(spec: dict) -> ConditionedMixture:
    comps = spec.get("components")
    if not isinstance(comps, list) or not comps:
        raise ValueError("mixture file needs a non-empty 'components' list")
    out = []
    for i, entry in enumerate(comps):
        try:
            weight = float(entry["weight"])
            mean = np.asarray(entry["mean"], dtype=float)
            cov = entry["covariance"]
            label = _LABEL_BY_NAME[str(entry["label"])]
        except KeyError as err:
            raise ValueError(f"components[{i}]: missing or bad field {err}") from err
        if np.isscalar(cov):
            comp = isotropic_component(weight, mean, float(cov))
        else:
            comp = GaussianComponent(weight, mean, np.asarray(cov, dtype=float))
        out.append((comp, label))
    return ConditionedMixture(tuple(out))


def mixture_to_dict(mix: ConditionedMixture) -> dict:
    comps = []
    for c, lab in mix.components:
        cov = c.covariance
        diag = cov[np.arange(c.dim), np.arange(c.dim)]
        if np.all(cov == diag[0] * np.eye(c.dim)):
            cov_out = float(diag[0])
        else:
            cov_out = cov.tolist()
        comps.append({"weight": c.weight, "mean": c.mean.tolist(),
                      "covariance": cov_out, "label": lab.value})
    return {"components": comps}


def load_mixture(path) -> ConditionedMixture:
    with open(path, "r", encoding="utf-8") as fh:
        return mixture_from_dict(json.load(fh))


def save_mixture(mix: ConditionedMixture, path) -> None:
    Path(path).write_text(json.dumps(mixture_to_dict(mix), indent=2) + "\n", encoding="utf-8")


def toy_mixture() -> ConditionedMixture:
    """The five-mode planar benchmark mixture shipped with the package."""
    from importlib.resources import files

    return mixture_from_dict(json.loads(files("sdse_lab.data").joinpath("toy_gmm.json").read_text()))
