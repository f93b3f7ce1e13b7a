"""Mean-field transition operator and distribution roll-outs.

The population state distribution evolves deterministically: one step pushes
every bin of the current histogram through the drift and spreads it with the
Gaussian transition noise, evaluated on the grid extended by one period on
each side so that mass wrapping around the torus is accounted for.  A
Monte-Carlo particle simulation of the same system acts as an independent
oracle for validation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DynamicsError
from .seeding import STREAM_PARTICLES, derive_rng
from .torus import GridDistribution, empirical, sample, wrap

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Offsets of the periodic extension: the transition density is evaluated on
# [-1, 2) and folded back onto [0, 1).  For the tested noise levels
# (noise_std <= 0.2) the mass outside this window is negligible.
PERIODS = (-1, 0, 1)


@dataclass(frozen=True)
class DriftFn:
    """Deterministic part of the transition plus the noise scale.

    ``fn(s, a, mu)`` returns the pre-noise, pre-wrap next state for vectorized
    ``s`` and ``a``; ``noise_std`` is the standard deviation of the additive
    Gaussian transition noise.
    """

    fn: Callable[[np.ndarray, np.ndarray, GridDistribution], np.ndarray]
    noise_std: float

    def __post_init__(self):
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be positive, got {self.noise_std}")

    def __call__(self, s, a, mu):
        return self.fn(s, a, mu)


@dataclass(frozen=True)
class ClampedPolicy:
    """Policy adapter that clamps raw outputs to the compact action interval."""

    fn: Callable[[np.ndarray, GridDistribution], np.ndarray]
    a_min: float
    a_max: float

    def __call__(self, s, mu):
        return np.clip(self.fn(s, mu), self.a_min, self.a_max)


def _policy_profile(policies, H: int) -> list:
    if callable(policies):
        return [policies] * H
    policies = list(policies)
    if len(policies) != H:
        raise ValueError(f"policy profile has length {len(policies)}, expected {H}")
    return policies


def transition_matrix(drift_values: np.ndarray, noise_std: float, M: int,
                      periods: Sequence[int] = PERIODS) -> np.ndarray:
    """Column-stochastic transition kernel between grid bins.

    ``T[i, j]`` approximates the probability that a point at grid node ``j``
    with pre-noise target ``drift_values[j]`` lands in bin ``i``: the Gaussian
    density at ``m_i + k`` for each period offset ``k``, times the bin width.
    """
    grid = np.arange(M) / M
    z = (grid[:, None, None] + np.asarray(periods, dtype=float)[None, None, :]
         - drift_values[None, :, None]) / noise_std
    phi = np.exp(-0.5 * z * z).sum(axis=2) * _INV_SQRT_2PI
    return phi / (M * noise_std)


def flow_step(mu: GridDistribution, policy, drift: DriftFn, *,
              renormalize: bool = True,
              periods: Sequence[int] = PERIODS):
    """One step of the mean-field flow.

    Returns the next :class:`GridDistribution`.  With ``renormalize=False``
    the raw height vector is returned instead, exposing the (sub-1e-3) mass
    leakage of the truncated periodic extension.
    """
    grid = mu.grid
    a = np.asarray(policy(grid, mu), dtype=float)
    f = np.asarray(drift(grid, a, mu), dtype=float)
    if not np.all(np.isfinite(f)):
        raise DynamicsError("drift produced non-finite values on the grid")
    T = transition_matrix(wrap(f), drift.noise_std, mu.M, periods)
    heights = T @ mu.heights
    if not renormalize:
        return heights
    return GridDistribution(heights)


def flow_rollout(mu0: GridDistribution, policies, drift: DriftFn, H: int | None = None
                 ) -> list[GridDistribution]:
    """Deterministic distribution trajectory [mu_0, mu_1, ..., mu_H].

    ``policies`` is either a single time-homogeneous policy (then ``H`` must
    be given) or a sequence of per-step policies.
    """
    if callable(policies):
        if H is None:
            raise ValueError("H is required with a time-homogeneous policy")
    else:
        H = len(policies) if H is None else H
    profile = _policy_profile(policies, H)
    traj = [mu0]
    for h in range(H):
        traj.append(flow_step(traj[-1], profile[h], drift))
    return traj


def particle_rollout(mu0: GridDistribution, policies, drift: DriftFn, N: int,
                     seed: int, H: int | None = None) -> list[GridDistribution]:
    """Monte-Carlo realization of the flow with N independent particles.

    Each particle follows ``s' = wrap(f(s, pi(s, mu_hat), mu_hat) + noise)``
    where ``mu_hat`` is the empirical histogram of the particle cloud, so the
    simulation is a genuinely independent check of the deterministic flow.
    Returns the empirical histograms at steps 0..H.
    """
    if N < 1:
        raise ValueError(f"need N >= 1 particles, got {N}")
    if callable(policies) and H is None:
        raise ValueError("H is required with a time-homogeneous policy")
    H = len(policies) if H is None and not callable(policies) else H
    profile = _policy_profile(policies, H)
    rng = derive_rng(seed, STREAM_PARTICLES)
    s = sample(mu0, N, rng)
    hists = [empirical(s, mu0.M)]
    for h in range(H):
        mu_hat = hists[-1]
        a = np.asarray(profile[h](s, mu_hat), dtype=float)
        s = wrap(drift(s, a, mu_hat) + drift.noise_std * rng.standard_normal(N))
        hists.append(empirical(s, mu0.M))
    return hists


def write_trajectory_csv(path, trajectory: Sequence[GridDistribution]) -> None:
    """Dump a distribution trajectory as CSV rows ``h, m_1, ..., m_M``."""
    M = trajectory[0].M
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h"] + [f"m_{i}" for i in range(1, M + 1)])
        for h, dist in enumerate(trajectory):
            writer.writerow([h] + [repr(float(v)) for v in dist.heights])
