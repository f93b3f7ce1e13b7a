"""Swarm-motion benchmark: dynamics variants, reward, objectives, analytic pair."""

import numpy as np
import pytest

from mfucrl.errors import ConfigError
from mfucrl.swarm import (
    SwarmConfig,
    analytic_policy,
    analytic_solution,
    clamped,
    drift_fn,
    dynamics,
    episode_objective,
    initial_distribution,
    integrated_reward,
    phi,
    reward,
)
from mfucrl.torus import GridDistribution, density_at, from_density, uniform

from _oracles import monte_carlo_objective, random_lipschitz_policy

ZERO = lambda s, mu: np.zeros_like(np.asarray(s, dtype=float))  # noqa: E731

TWO_PI_SQ = 2.0 * np.pi**2


def test_basic_dynamics_formula():
    cfg = SwarmConfig(M=100, H=200, dt=1.0 / 200)
    assert dynamics(cfg, 0.5, 2.0, uniform(100)) == pytest.approx(0.51)


def test_congestion_vanishes_at_unit_density():
    cfg = SwarmConfig(M=100, H=200, dt=1.0 / 200, dynamics_variant="congestion")
    assert dynamics(cfg, 0.5, 2.0, uniform(100)) == pytest.approx(0.5)


def test_congestion_at_half_density():
    cfg = SwarmConfig(M=4, H=200, dt=1.0 / 200, dynamics_variant="congestion")
    mu = GridDistribution([0.5, 1.5, 1.5, 0.5])
    assert density_at(mu, 0.0) == pytest.approx(0.5)
    assert dynamics(cfg, 0.0, 1.0, mu) == pytest.approx(0.0 + 1.0 * 2.0 / 200)


def test_basic_dynamics_never_reads_distribution():
    cfg = SwarmConfig(M=16, H=50, dt=1.0 / 50)
    s = np.linspace(0, 1, 7, endpoint=False)
    a = np.linspace(-7, 7, 7)
    out1 = dynamics(cfg, s, a, uniform(16))
    out2 = dynamics(cfg, s, a, GridDistribution(np.arange(1, 17, dtype=float)))
    np.testing.assert_array_equal(out1, out2)


def test_reward_at_origin():
    assert reward(0.0, 0.0, uniform(100)) == pytest.approx(-TWO_PI_SQ)


def test_reward_at_quarter():
    assert reward(0.25, 0.0, uniform(100)) == pytest.approx(TWO_PI_SQ + 2.0)


def test_reward_action_penalty():
    assert reward(0.25, 4.0, uniform(100)) == pytest.approx(TWO_PI_SQ)


def test_reward_finite_on_empty_bins():
    h = np.zeros(64)
    h[0] = 64.0
    mu = GridDistribution(h)
    assert np.isfinite(reward(0.5, 0.0, mu))


def test_integrated_reward_uniform_zero_policy():
    assert integrated_reward(uniform(200), ZERO) == pytest.approx(-np.pi**2, abs=0.05)


def test_integrated_reward_action_additivity():
    two = lambda s, mu: np.full_like(np.asarray(s, float), 2.0)  # noqa: E731
    base = integrated_reward(uniform(200), ZERO)
    assert integrated_reward(uniform(200), two) == pytest.approx(base - 1.0)


def test_integrated_reward_matches_direct_summation():
    h = np.zeros(64)
    h[5] = 60.0
    h[6] = 4.0
    mu = GridDistribution(h)
    pol = random_lipschitz_policy(np.random.default_rng(0))
    direct = 0.0
    for i in range(64):
        s = i / 64
        direct += mu.heights[i] * float(reward(s, float(pol(np.array([s]), mu)[0]), mu)) / 64
    assert integrated_reward(mu, pol) == pytest.approx(direct, rel=1e-12)


def test_episode_objective_single_step():
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50)
    mu0 = analytic_solution(100)[1]
    pol = random_lipschitz_policy(np.random.default_rng(1))
    assert episode_objective(mu0, [pol], drift_fn(cfg)) == pytest.approx(
        integrated_reward(mu0, pol)
    )


def test_episode_objective_uniform_fixed_point_doubles():
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50)
    mu0 = uniform(100)
    assert episode_objective(mu0, [ZERO, ZERO], drift_fn(cfg)) == pytest.approx(
        2.0 * integrated_reward(mu0, ZERO), abs=1e-8
    )


def test_episode_objective_matches_particle_monte_carlo():
    cfg = SwarmConfig(M=200, H=50, dt=1.0 / 200)
    policy, mu_star = analytic_solution(200)
    d = drift_fn(cfg)
    j_flow = episode_objective(mu_star, policy, d, H=50)
    j_mc, stderr = monte_carlo_objective(mu_star, policy, d, H=50, n=10_000, seed=123)
    assert abs(j_flow - j_mc) <= 3.0 * stderr


def test_analytic_policy_values():
    assert analytic_policy(0.0) == pytest.approx(2.0 * np.pi)
    assert analytic_policy(0.25) == pytest.approx(0.0, abs=1e-12)


def test_analytic_density_ratio():
    _, mu_star = analytic_solution(200)
    ratio = density_at(mu_star, 0.25) / density_at(mu_star, 0.75)
    assert ratio == pytest.approx(np.exp(4.0), rel=1e-6)


def test_analytic_policy_within_action_bounds():
    s = np.linspace(0, 1, 1001)
    assert np.max(np.abs(analytic_policy(s))) <= 7.0


def test_reward_grid_lipschitz_bound():
    # |phi'| <= 4 pi^3 + 4 pi^3 + 4 pi and the tilted density adds a log-slope
    # of at most 4 pi, so C = 280 bounds the per-bin reward increments.
    M = 200
    mu = analytic_solution(M)[1]
    grid = mu.grid
    r = reward(grid, 1.0, mu)
    diffs = np.abs(np.diff(np.concatenate([r, r[:1]])))
    assert np.max(diffs) <= 280.0 / M


def test_clamped_policy_respects_bounds():
    cfg = SwarmConfig(M=16, H=50, dt=1.0 / 50, a_min=-2.0, a_max=2.0)
    wild = lambda s, mu: 100.0 * np.sin(2 * np.pi * np.asarray(s, float))  # noqa: E731
    a = clamped(wild, cfg)(np.linspace(0, 1, 33), uniform(16))
    assert np.all(a >= -2.0) and np.all(a <= 2.0)


def test_initial_distribution_variants():
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50, initial="uniform")
    assert initial_distribution(cfg) == uniform(100)
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50, initial="ergodic")
    assert initial_distribution(cfg) == analytic_solution(100)[1]
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50, initial="gaussian(0.5, 0.04)")
    g = initial_distribution(cfg)
    assert density_at(g, 0.5) > density_at(g, 0.3)


def test_initial_distribution_rejects_unknown():
    with pytest.raises(ConfigError):
        initial_distribution(SwarmConfig(M=16, H=10, dt=0.1, initial="delta"))
    with pytest.raises(ConfigError):
        initial_distribution(SwarmConfig(M=16, H=10, dt=0.1, initial="gaussian(0.5)"))


def test_config_validation():
    with pytest.raises(ConfigError):
        SwarmConfig(M=100, H=50, dt=1.0 / 50, a_min=3.0, a_max=-3.0)
    with pytest.raises(ConfigError):
        SwarmConfig(M=100, H=50, dt=-0.1)
    with pytest.raises(ConfigError):
        SwarmConfig(M=100, H=50, dt=1.0 / 50, dynamics_variant="weird")


def test_phi_integral_is_minus_pi_squared():
    s = np.linspace(0.0, 1.0, 200, endpoint=False)
    assert np.mean(phi(s)) == pytest.approx(-np.pi**2, abs=1e-9)
