"""The swarm-motion benchmark environment.

An infinite population of agents moves on the unit torus, collecting a
location-dependent reward while paying for control effort and for sitting in
crowded regions:

    r(s, a, mu) = phi(s) - |a|/2 - ln mu(s),
    phi(s) = -2 pi^2 [-sin(2 pi s) + cos^2(2 pi s)] + 2 sin(2 pi s).

Two drift variants are provided; the congestion variant slows movement in
dense regions.  The continuous-time limit of the basic problem has a known
ergodic solution (a cosine policy and a tilted-exponential density) used as a
reference benchmark throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError
from .flow import ClampedPolicy, DriftFn, flow_rollout
from .torus import (
    GridDistribution,
    density_at,
    from_density,
    log_density_at,
    uniform,
    wrap_signed,
)

DynamicsVariant = Literal["basic", "congestion"]


@dataclass(frozen=True)
class SwarmConfig:
    """Environment constants.

    ``dt`` is the step length (1/H when an episode spans unit time) and the
    transition noise defaults to ``sqrt(dt)``.
    """

    M: int = 100
    H: int = 50
    dt: float = 1.0 / 50
    a_min: float = -7.0
    a_max: float = 7.0
    dynamics_variant: DynamicsVariant = "basic"
    noise_std: float = field(default=0.0)
    initial: str = "ergodic"

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError("env.M", f"grid needs at least 2 bins, got {self.M}")
        if self.H < 1:
            raise ConfigError("env.H", f"horizon must be >= 1, got {self.H}")
        if not self.dt > 0:
            raise ConfigError("env.dt", f"step length must be positive, got {self.dt}")
        if self.noise_std == 0.0:
            object.__setattr__(self, "noise_std", math.sqrt(self.dt))
        if not self.a_min < self.a_max:
            raise ConfigError("env.a_min", f"a_min={self.a_min} must be below a_max={self.a_max}")
        if not self.noise_std > 0:
            raise ConfigError("env.noise_std", f"noise level must be positive, got {self.noise_std}")
        if self.dynamics_variant not in ("basic", "congestion"):
            raise ConfigError("env.dynamics", f"unknown variant {self.dynamics_variant!r}")


@dataclass(frozen=True)
class EnvTransition:
    """One observed transition ((s, a, mu), s')."""

    s: float
    a: float
    mu: GridDistribution
    s_next: float


def dynamics(cfg: SwarmConfig, s, a, mu: GridDistribution):
    """Pre-noise, pre-wrap next state under the configured drift variant."""
    if cfg.dynamics_variant == "basic":
        return np.asarray(s, dtype=float) + np.asarray(a, dtype=float) * cfg.dt
    factor = 4.0 - 4.0 * density_at(mu, s)
    return np.asarray(s, dtype=float) + np.asarray(a, dtype=float) * factor * cfg.dt


def drift_fn(cfg: SwarmConfig) -> DriftFn:
    """The environment drift packaged for the flow operator."""
    return DriftFn(lambda s, a, mu: dynamics(cfg, s, a, mu), cfg.noise_std)


def phi(s):
    """Location reward term."""
    s = np.asarray(s, dtype=float)
    two_pi_s = 2.0 * np.pi * s
    return -2.0 * np.pi**2 * (-np.sin(two_pi_s) + np.cos(two_pi_s) ** 2) + 2.0 * np.sin(two_pi_s)


def reward(s, a, mu: GridDistribution):
    """Per-agent reward; the crowd-aversion term uses the clamped log density."""
    return phi(s) - 0.5 * np.abs(np.asarray(a, dtype=float)) - log_density_at(mu, s)


def integrated_reward(mu: GridDistribution, policy) -> float:
    """Reward averaged over the population: (1/M) sum_i h_i r(m_i, pi(m_i), mu)."""
    grid = mu.grid
    a = np.asarray(policy(grid, mu), dtype=float)
    return float(np.sum(mu.heights * reward(grid, a, mu)) / mu.M)


def episode_objective(mu0: GridDistribution, policies, drift: DriftFn,
                      H: int | None = None) -> float:
    """Total integrated reward of the deterministic flow over one episode."""
    if callable(policies):
        if H is None:
            raise ValueError("H is required with a time-homogeneous policy")
        profile = [policies] * H
    else:
        profile = list(policies)
        H = len(profile)
    traj = flow_rollout(mu0, profile, drift, H)
    return float(sum(integrated_reward(traj[h], profile[h]) for h in range(H)))


def analytic_policy(s, mu=None):
    """Continuous-time ergodic policy 2 pi cos(2 pi s); ignores the distribution."""
    return 2.0 * np.pi * np.cos(2.0 * np.pi * np.asarray(s, dtype=float))


def analytic_solution(M: int = 200):
    """The continuous-time ergodic pair: cosine policy and its stationary density."""
    dist = from_density(M, lambda s: np.exp(2.0 * np.sin(2.0 * np.pi * s)))
    return analytic_policy, dist


def initial_distribution(cfg: SwarmConfig) -> GridDistribution:
    """Initial population distribution selected by ``cfg.initial``.

    One of ``"ergodic"``, ``"uniform"`` or ``"gaussian(mean,std)"`` (a wrapped
    normal evaluated on the grid).
    """
    spec = cfg.initial.strip().lower()
    if spec == "ergodic":
        return analytic_solution(cfg.M)[1]
    if spec == "uniform":
        return uniform(cfg.M)
    if spec.startswith("gaussian(") and spec.endswith(")"):
        try:
            mean_s, std_s = spec[len("gaussian("):-1].split(",")
            mean, std = float(mean_s), float(std_s)
        except ValueError as exc:
            raise ConfigError("env.initial", f"cannot parse {cfg.initial!r}") from exc
        if not std > 0:
            raise ConfigError("env.initial", "gaussian std must be positive")
        return from_density(
            cfg.M, lambda s: np.exp(-0.5 * (wrap_signed(s - mean) / std) ** 2)
        )
    raise ConfigError("env.initial", f"unknown initial distribution {cfg.initial!r}")


def clamped(policy_fn, cfg: SwarmConfig) -> ClampedPolicy:
    """Clamp a raw policy to the environment's action interval."""
    return ClampedPolicy(policy_fn, cfg.a_min, cfg.a_max)
