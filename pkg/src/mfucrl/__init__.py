"""Mean-field control of swarms with model-based optimistic reinforcement learning.

The package provides, bottom to top: grid distributions on the unit torus
(:mod:`mfucrl.torus`), the deterministic mean-field flow and its particle
oracle (:mod:`mfucrl.flow`), the swarm-motion benchmark (:mod:`mfucrl.swarm`),
a calibrated Gaussian-process dynamics model (:mod:`mfucrl.gp`), a
cross-entropy planner over hallucinated dynamics (:mod:`mfucrl.planner`), the
episodic learning loop (:mod:`mfucrl.driver`) and a command-line front end
(:mod:`mfucrl.cli`).
"""

from .torus import (
    GridDistribution,
    density_at,
    empirical,
    from_density,
    sample,
    uniform,
    wasserstein1_circle,
    wrap,
    wrap_signed,
)
from .flow import DriftFn, ClampedPolicy, flow_step, flow_rollout, particle_rollout
from .swarm import (
    SwarmConfig,
    EnvTransition,
    analytic_policy,
    analytic_solution,
    dynamics,
    drift_fn,
    episode_objective,
    initial_distribution,
    integrated_reward,
    phi,
    reward,
)
from .gp import (
    BetaMode,
    FeatMode,
    GpPosterior,
    JointInput,
    KernelSpec,
    beta,
    fit,
    kernel_eval,
    make_joint_input,
    predict,
    prior,
)
from .planner import (
    EtaParams,
    OptimizerConfig,
    PlanResult,
    PolicyParams,
    cem_maximize,
    hallucinated_drift,
    hallucinated_objective,
    plan,
    plan_known_dynamics,
)
from .driver import EpisodeRecord, RunManifest, collect_transitions, regret_summary, run_episode, run_experiment

__version__ = "0.1.0"

__all__ = [
    "GridDistribution",
    "density_at",
    "empirical",
    "from_density",
    "sample",
    "uniform",
    "wasserstein1_circle",
    "wrap",
    "wrap_signed",
    "DriftFn",
    "ClampedPolicy",
    "flow_step",
    "flow_rollout",
    "particle_rollout",
    "SwarmConfig",
    "EnvTransition",
    "analytic_policy",
    "analytic_solution",
    "dynamics",
    "drift_fn",
    "episode_objective",
    "initial_distribution",
    "integrated_reward",
    "phi",
    "reward",
    "BetaMode",
    "FeatMode",
    "GpPosterior",
    "JointInput",
    "KernelSpec",
    "beta",
    "fit",
    "kernel_eval",
    "make_joint_input",
    "predict",
    "prior",
    "EtaParams",
    "OptimizerConfig",
    "PlanResult",
    "PolicyParams",
    "cem_maximize",
    "hallucinated_drift",
    "hallucinated_objective",
    "plan",
    "plan_known_dynamics",
    "EpisodeRecord",
    "RunManifest",
    "collect_transitions",
    "regret_summary",
    "run_episode",
    "run_experiment",
]
