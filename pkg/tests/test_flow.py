"""Mean-field flow operator versus its particle oracle."""

import numpy as np
import pytest

from mfucrl.errors import DynamicsError
from mfucrl.flow import DriftFn, flow_rollout, flow_step, particle_rollout
from mfucrl.swarm import SwarmConfig, analytic_solution, drift_fn
from mfucrl.torus import GridDistribution, uniform, wasserstein1_circle, wrap, wrap_signed

from _oracles import circular_mean, random_lipschitz_policy

ZERO_POLICY = lambda s, mu: np.zeros_like(np.asarray(s, dtype=float))  # noqa: E731


def basic_drift(dt, noise_std):
    return DriftFn(lambda s, a, mu: np.asarray(s, float) + np.asarray(a, float) * dt, noise_std)


def point_mass(M, i=0):
    h = np.zeros(M)
    h[i] = M
    return GridDistribution(h)


def test_uniform_is_fixed_point_under_zero_drift():
    d = basic_drift(dt=0.01, noise_std=0.1)
    for M in (100, 200):
        u = uniform(M)
        assert wasserstein1_circle(flow_step(u, ZERO_POLICY, d), u) <= 1e-10


def test_point_mass_shifts_by_action_times_dt():
    d = basic_drift(dt=0.01, noise_std=0.1)
    one = lambda s, mu: np.ones_like(np.asarray(s, float))  # noqa: E731
    out = flow_step(point_mass(200), one, d)
    # Particle oracle: a million draws of wrap(0.01 + 0.1 * xi).
    rng = np.random.default_rng(0)
    draws = wrap(0.01 + 0.1 * rng.standard_normal(1_000_000))
    mc_mean = np.mod(np.angle(np.mean(np.exp(2j * np.pi * draws))) / (2 * np.pi), 1.0)
    got = circular_mean(out)
    assert abs(wrap_signed(got - 0.01)) <= 1e-3
    assert abs(wrap_signed(got - mc_mean)) <= 1e-3


def test_ergodic_pair_is_near_fixed_point():
    cfg = SwarmConfig(M=200, H=200, dt=1.0 / 200)
    policy, mu_star = analytic_solution(200)
    out = flow_step(mu_star, policy, drift_fn(cfg))
    assert wasserstein1_circle(out, mu_star) <= 0.02


def test_raw_mass_leakage_bound():
    policy, mu_star = analytic_solution(200)
    for M in (100, 200):
        for noise_std in (np.sqrt(1.0 / 200), 0.2):
            cfg = SwarmConfig(M=M, H=50, dt=1.0 / 50, noise_std=noise_std)
            mu0 = analytic_solution(M)[1]
            raw = flow_step(mu0, policy, drift_fn(cfg), renormalize=False)
            assert abs(raw.mean() - 1.0) <= 1e-3
            assert np.all(raw >= 0.0)
            renorm = flow_step(mu0, policy, drift_fn(cfg))
            assert renorm.heights.mean() == pytest.approx(1.0, abs=1e-15)


def test_nonfinite_drift_raises():
    bad = DriftFn(lambda s, a, mu: np.where(np.asarray(s) > 0.5, np.nan, s), 0.1)
    with pytest.raises(DynamicsError):
        flow_step(uniform(16), ZERO_POLICY, bad)


def test_rollout_uniform_stays_uniform():
    d = basic_drift(dt=0.01, noise_std=0.1)
    traj = flow_rollout(uniform(100), ZERO_POLICY, d, H=3)
    assert len(traj) == 4
    for mu in traj:
        assert wasserstein1_circle(mu, uniform(100)) <= 1e-9


def test_rollout_single_step_consistency():
    d = basic_drift(dt=0.02, noise_std=0.12)
    mu0 = GridDistribution(1.0 + 0.5 * np.sin(2 * np.pi * np.arange(64) / 64))
    pol = random_lipschitz_policy(np.random.default_rng(3))
    traj = flow_rollout(mu0, [pol], d)
    assert traj[0] == mu0
    assert traj[1] == flow_step(mu0, pol, d)


def test_rollout_is_bitwise_deterministic():
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50)
    pol = random_lipschitz_policy(np.random.default_rng(11), mu_weight=0.5)
    mu0 = analytic_solution(100)[1]
    t1 = flow_rollout(mu0, pol, drift_fn(cfg), H=10)
    t2 = flow_rollout(mu0, pol, drift_fn(cfg), H=10)
    for a, b in zip(t1, t2):
        np.testing.assert_array_equal(a.heights, b.heights)


@pytest.mark.parametrize("variant", ["basic", "congestion"])
def test_particle_oracle_agreement(variant):
    cfg = SwarmConfig(M=100, H=20, dt=1.0 / 50, dynamics_variant=variant)
    pol = random_lipschitz_policy(np.random.default_rng(5))
    mu0 = uniform(100)
    flow_traj = flow_rollout(mu0, pol, drift_fn(cfg), H=20)
    part_traj = particle_rollout(mu0, pol, drift_fn(cfg), N=50_000, seed=17, H=20)
    gaps = [wasserstein1_circle(f, p) for f, p in zip(flow_traj, part_traj)]
    assert max(gaps) <= 0.02


def test_particle_rollout_deterministic():
    cfg = SwarmConfig(M=64, H=5, dt=1.0 / 50)
    pol = random_lipschitz_policy(np.random.default_rng(2))
    a = particle_rollout(uniform(64), pol, drift_fn(cfg), N=500, seed=9, H=5)
    b = particle_rollout(uniform(64), pol, drift_fn(cfg), N=500, seed=9, H=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.heights, y.heights)


def test_particle_rollout_single_particle_point_masses():
    d = basic_drift(dt=0.01, noise_std=0.1)
    hists = particle_rollout(uniform(32), ZERO_POLICY, d, N=1, seed=4, H=3)
    for h in hists:
        assert np.count_nonzero(h.heights) == 1


def test_particle_rollout_zero_noise_identity_drift():
    M = 64
    d = basic_drift(dt=0.01, noise_std=1e-9)
    mu0 = GridDistribution(1.0 + 0.8 * np.cos(2 * np.pi * np.arange(M) / M))
    hists = particle_rollout(mu0, ZERO_POLICY, d, N=20_000, seed=8, H=4)
    assert wasserstein1_circle(hists[0], hists[-1]) <= 1.0 / M


def test_translation_equivariance():
    cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50)
    const = lambda s, mu: np.full_like(np.asarray(s, float), 1.5)  # noqa: E731
    mu0 = analytic_solution(100)[1]
    bins = 13
    traj = flow_rollout(mu0, const, drift_fn(cfg), H=8)
    traj_rot = flow_rollout(mu0.rotated(bins), const, drift_fn(cfg), H=8)
    for a, b in zip(traj, traj_rot):
        assert wasserstein1_circle(a.rotated(bins), b) <= 1e-6
