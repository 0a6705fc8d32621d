"""Run configuration files: schema validation, normalization, digests.

Configs are plain JSON; flags mirror keys one-to-one and the file is
authoritative until a flag overrides it. Every output artifact carries the
sha256 digest of the resolved config so reruns are attributable and
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .guidance import EstimatorKind, GuidanceWeights, StageThresholds
from .samplers import SamplerKind, TimestepSampler


class ConfigError(ValueError):
    """Schema violation carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.field_path = path
        super().__init__(f"{path}: {message}")


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _get_number(cfg: dict, key: str, path: str, default=None, integer=False,
                minimum=None, maximum=None):
    if key not in cfg:
        _expect(default is not None, f"{path}{key}", "missing required field")
        return default
    val = cfg[key]
    _expect(isinstance(val, (int, float)) and not isinstance(val, bool),
            f"{path}{key}", "expected a number")
    if integer:
        _expect(float(val).is_integer(), f"{path}{key}", "expected an integer")
        val = int(val)
    if minimum is not None:
        _expect(val >= minimum, f"{path}{key}", f"must be >= {minimum}")
    if maximum is not None:
        _expect(val <= maximum, f"{path}{key}", f"must be <= {maximum}")
    return val


ESTIMATOR_NAMES = {k.value: k for k in EstimatorKind}
SAMPLER_NAMES = {k.value: k for k in SamplerKind}


def config_digest(cfg: dict) -> str:
    """sha256 over the canonical JSON encoding of the resolved config."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def default_toy_config() -> dict:
    return json.loads(files("sdse_lab.data").joinpath("toy_default.json").read_text())


def default_mesh_config() -> dict:
    return json.loads(files("sdse_lab.data").joinpath("mesh_default.json").read_text())


@dataclass(frozen=True)
class ToyRunConfig:
    """Resolved toy-run configuration covering one or more (estimator, seed) runs."""

    mixture_path: str
    estimators: tuple[EstimatorKind, ...]
    weights: GuidanceWeights
    sampler_kind: SamplerKind
    t_min: int
    t_max: int
    jitter: float
    thresholds: StageThresholds
    lr: float
    steps: int
    seeds: tuple[int, ...]
    theta0: tuple[float, float]
    noising: bool
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def sampler(self) -> TimestepSampler:
        return TimestepSampler(kind=self.sampler_kind, t_min=self.t_min,
                               t_max=self.t_max, total_steps=self.steps,
                               jitter=self.jitter)


def parse_toy_config(cfg: dict) -> ToyRunConfig:
    _expect(isinstance(cfg, dict), "", "config must be a JSON object")
    path = str(cfg.get("mixture_path", ""))
    _expect(bool(path), "mixture_path", "missing required field")

    if "estimators" in cfg:
        raw_est = cfg["estimators"]
        _expect(isinstance(raw_est, list) and raw_est, "estimators",
                "expected a non-empty list")
    else:
        _expect("estimator" in cfg, "estimator", "missing required field")
        raw_est = [cfg["estimator"]]
    estimators = []
    for i, name in enumerate(raw_est):
        _expect(name in ESTIMATOR_NAMES, f"estimators[{i}]",
                f"unknown estimator {name!r}; choices: {sorted(ESTIMATOR_NAMES)}")
        estimators.append(ESTIMATOR_NAMES[name])

    omega_t = _get_number(cfg, "omega_t", "", default=7.5, minimum=0.0)
    omega_i = _get_number(cfg, "omega_i", "", default=1.5, minimum=0.0)

    sampler = cfg.get("sampler", {})
    _expect(isinstance(sampler, dict), "sampler", "expected an object")
    kind_name = sampler.get("kind", "non_increasing")
    _expect(kind_name in SAMPLER_NAMES, "sampler.kind",
            f"unknown kind {kind_name!r}; choices: {sorted(SAMPLER_NAMES)}")
    t_min = _get_number(sampler, "t_min", "sampler.", default=1, integer=True, minimum=1)
    t_max = _get_number(sampler, "t_max", "sampler.", default=800, integer=True, minimum=1)
    _expect(t_min <= t_max, "sampler.t_max", "must be >= sampler.t_min")
    jitter = _get_number(sampler, "jitter", "sampler.", default=0.0, minimum=0.0)

    th = cfg.get("thresholds", {})
    _expect(isinstance(th, dict), "thresholds", "expected an object")
    small = _get_number(th, "M", "thresholds.", default=150, integer=True, minimum=1)
    middle = _get_number(th, "L", "thresholds.", default=800, integer=True, minimum=2)
    _expect(small < middle, "thresholds.L", "must exceed thresholds.M")

    lr = _get_number(cfg, "lr", "", default=1e-2, minimum=0.0)
    steps = _get_number(cfg, "steps", "", default=2000, integer=True, minimum=1)

    if "seeds" in cfg:
        raw_seeds = cfg["seeds"]
        _expect(isinstance(raw_seeds, list) and raw_seeds, "seeds",
                "expected a non-empty list")
        seeds = tuple(int(s) for s in raw_seeds)
    else:
        seeds = (int(_get_number(cfg, "seed", "", default=0, integer=True)),)

    theta0 = cfg.get("theta0", [0.5, 1.0])
    _expect(isinstance(theta0, list) and len(theta0) == 2, "theta0",
            "expected a 2-element list")
    noising = bool(cfg.get("noising", True))

    return ToyRunConfig(mixture_path=path, estimators=tuple(estimators),
                        weights=GuidanceWeights(omega_t=omega_t, omega_i=omega_i),
                        sampler_kind=SAMPLER_NAMES[kind_name], t_min=t_min,
                        t_max=t_max, jitter=jitter,
                        thresholds=StageThresholds(small_max=small, middle_max=middle),
                        lr=lr, steps=steps, seeds=seeds,
                        theta0=(float(theta0[0]), float(theta0[1])),
                        noising=noising, raw=normalize_toy_dict(cfg))


def normalize_toy_dict(cfg: dict) -> dict:
    """Canonical dict for digesting: defaults resolved, single/plural unified."""
    sampler = cfg.get("sampler", {})
    th = cfg.get("thresholds", {})
    est = cfg.get("estimators", [cfg.get("estimator")] if "estimator" in cfg else None)
    seeds = cfg.get("seeds", [cfg.get("seed", 0)])
    return {
        "mixture_path": cfg.get("mixture_path", ""),
        "estimators": est,
        "omega_t": cfg.get("omega_t", 7.5),
        "omega_i": cfg.get("omega_i", 1.5),
        "sampler": {"kind": sampler.get("kind", "non_increasing"),
                    "t_min": sampler.get("t_min", 1),
                    "t_max": sampler.get("t_max", 800),
                    "jitter": sampler.get("jitter", 0.0)},
        "thresholds": {"M": th.get("M", 150), "L": th.get("L", 800)},
        "lr": cfg.get("lr", 1e-2),
        "steps": cfg.get("steps", 2000),
        "seeds": list(seeds),
        "theta0": cfg.get("theta0", [0.5, 1.0]),
        "noising": cfg.get("noising", True),
    }


@dataclass(frozen=True)
class MeshRunConfig:
    mesh_path: str
    mixture_path: str
    profile: str
    w1_values: tuple[float, ...]
    allocator: bool
    steps: int
    views_per_step: int
    first_batch: int
    lr: float
    t_min: int
    t_max: int
    support: int
    threshold_distance: float
    weights: GuidanceWeights
    thresholds: StageThresholds
    seeds: tuple[int, ...]
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def digest(self) -> str:
        return config_digest(self.raw)


def parse_mesh_config(cfg: dict) -> MeshRunConfig:
    _expect(isinstance(cfg, dict), "", "config must be a JSON object")
    mesh_path = str(cfg.get("mesh_path", ""))
    _expect(bool(mesh_path), "mesh_path", "missing required field")
    mixture_path = str(cfg.get("mixture_path", ""))
    _expect(bool(mixture_path), "mixture_path", "missing required field")
    profile = cfg.get("profile", "head_dominant")
    _expect(profile in ("head_dominant", "body_dominant"), "profile",
            "expected 'head_dominant' or 'body_dominant'")

    w1 = cfg.get("w1", 300.0)
    if isinstance(w1, list):
        _expect(bool(w1), "w1", "expected a number or non-empty list")
        w1_values = tuple(float(v) for v in w1)
    else:
        w1_values = (float(w1),)
    for i, v in enumerate(w1_values):
        _expect(v >= 0, f"w1[{i}]", "must be >= 0")

    steps = _get_number(cfg, "steps", "", default=400, integer=True, minimum=1)
    views = _get_number(cfg, "views_per_step", "", default=10, integer=True, minimum=1)
    first = _get_number(cfg, "first_batch", "", default=250, integer=True, minimum=1)
    lr = _get_number(cfg, "lr", "", default=0.02, minimum=0.0)
    t_min = _get_number(cfg, "t_min", "", default=1, integer=True, minimum=1)
    t_max = _get_number(cfg, "t_max", "", default=800, integer=True, minimum=1)
    _expect(t_min <= t_max, "t_max", "must be >= t_min")
    support = _get_number(cfg, "support", "", default=8, integer=True, minimum=1)
    thresh_dist = _get_number(cfg, "threshold_distance", "", default=0.5, minimum=0.0)
    omega_t = _get_number(cfg, "omega_t", "", default=7.5, minimum=0.0)
    omega_i = _get_number(cfg, "omega_i", "", default=1.5, minimum=0.0)
    th = cfg.get("thresholds", {})
    small = _get_number(th, "M", "thresholds.", default=150, integer=True, minimum=1)
    middle = _get_number(th, "L", "thresholds.", default=800, integer=True, minimum=2)
    _expect(small < middle, "thresholds.L", "must exceed thresholds.M")

    if "seeds" in cfg:
        raw_seeds = cfg["seeds"]
        _expect(isinstance(raw_seeds, list) and raw_seeds, "seeds",
                "expected a non-empty list")
        seeds = tuple(int(s) for s in raw_seeds)
    else:
        seeds = (int(_get_number(cfg, "seed", "", default=0, integer=True)),)

    raw = {
        "mesh_path": mesh_path, "mixture_path": mixture_path, "profile": profile,
        "w1": list(w1_values), "allocator": bool(cfg.get("allocator", True)),
        "steps": steps, "views_per_step": views, "first_batch": first, "lr": lr,
        "t_min": t_min, "t_max": t_max, "support": support,
        "threshold_distance": thresh_dist, "omega_t": omega_t, "omega_i": omega_i,
        "thresholds": {"M": small, "L": middle}, "seeds": list(seeds),
    }
    return MeshRunConfig(mesh_path=mesh_path, mixture_path=mixture_path,
                         profile=profile, w1_values=w1_values,
                         allocator=bool(cfg.get("allocator", True)), steps=steps,
                         views_per_step=views, first_batch=first, lr=lr,
                         t_min=t_min, t_max=t_max, support=support,
                         threshold_distance=thresh_dist,
                         weights=GuidanceWeights(omega_t=omega_t, omega_i=omega_i),
                         thresholds=StageThresholds(small_max=small, middle_max=middle),
                         seeds=seeds, raw=raw)


def load_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("", f"not valid JSON ({err})") from err


def resolve_data_path(path: str) -> str:
    """Resolve 'pkg:NAME' references to shipped data files, else pass through."""
    if path.startswith("pkg:"):
        return str(files("sdse_lab.data").joinpath(path[4:]))
    return path
