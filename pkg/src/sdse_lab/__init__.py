"""Score-distillation editing laboratory.

Exact conditioned Gaussian-mixture oracles, guidance term decomposition with
timestep staging, Laplacian-smoothed latent meshes with gradient-aware view
allocation, and the scripted experiments that exercise all of it.
"""

__version__ = "0.1.0"

from .guidance import (EstimatorKind, GuidanceWeights, StageThresholds, TermBundle,
                       cfg_combine, decompose_terms, sds_residual, sdse_prime_residual,
                       sdse_residual, ssd_residual, term_residual)
from .mixtures import (ALL_CONDITIONS, Condition, ConditionLabel, ConditionedMixture,
                       FULL_COND, GaussianComponent, IMAGE_COND, TEXT_COND,
                       UNCONDITIONED, isotropic_component, load_mixture,
                       mixture_density, mixture_log_density, mixture_score,
                       noised_mixture, save_mixture, sub_mixture, toy_mixture)
from .mesh import (LatentMesh, build_laplacian, grid_mesh, icosphere_mesh, load_mesh,
                   smoothness_gradient, smoothness_loss)
from .optimize import Trajectory, optimize_point, trajectory_from_csv
from .oracle import NoiseOracle, forward_diffuse, predict_noise
from .samplers import SamplerKind, TimestepSampler, sample_timestep, timestep_sequence
from .schedule import NoiseSchedule, linear_beta_schedule
from .views import (RegionAllocation, ViewSpec, allocate_views, backprop_view,
                    edit_step, make_view, region_weights, render_view)

__all__ = [name for name in dir() if not name.startswith("_")]
