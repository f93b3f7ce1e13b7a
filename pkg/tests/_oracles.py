"""Independent reference computations used by the test suite.

These deliberately avoid the code paths they are checking: the transport LP
solves the discrete optimal-transport problem directly, and the Monte-Carlo
objective estimates the episode reward from simulated agents instead of the
grid quadrature.
"""

import numpy as np
from scipy.optimize import linprog

from mfucrl.flow import flow_rollout
from mfucrl.seeding import derive_rng
from mfucrl.swarm import reward
from mfucrl.torus import circular_distance, sample, wrap


def lp_wasserstein1_circle(a, b) -> float:
    """Brute-force optimal transport between two grid histograms on the circle."""
    M = a.M
    grid = np.arange(M) / M
    cost = circular_distance(grid[:, None], grid[None, :]).ravel()
    # Transport plan gamma >= 0 with row marginals a and column marginals b.
    A_eq = np.zeros((2 * M, M * M))
    for i in range(M):
        A_eq[i, i * M:(i + 1) * M] = 1.0
        A_eq[M + i, i::M] = 1.0
    b_eq = np.concatenate([a.masses, b.masses])
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success, res.message
    return float(res.fun)


def monte_carlo_objective(mu0, policies, drift, H, n, seed):
    """Particle estimate of the expected cumulative reward and its stderr.

    States are simulated with the true noisy dynamics while the distribution
    argument of the policy and reward is the deterministic flow trajectory.
    """
    profile = [policies] * H if callable(policies) else list(policies)
    traj = flow_rollout(mu0, profile, drift, H)
    rng = derive_rng(seed, 900)
    s = sample(mu0, n, rng)
    total = np.zeros(n)
    for h in range(H):
        a = np.asarray(profile[h](s, traj[h]), dtype=float)
        total += reward(s, a, traj[h])
        s = wrap(drift(s, a, traj[h]) + drift.noise_std * rng.standard_normal(n))
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n))


def random_lipschitz_policy(rng, a_max=7.0, mu_weight=0.0):
    """Smooth band-limited random policy, optionally reading the local density."""
    amp = rng.uniform(0.5, 0.45 * a_max)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    offset = rng.uniform(-0.3 * a_max, 0.3 * a_max)

    def policy(s, mu):
        from mfucrl.torus import density_at

        a = amp * np.sin(2.0 * np.pi * np.asarray(s, dtype=float) + phase) + offset
        if mu_weight:
            a = a + mu_weight * density_at(mu, s)
        return np.clip(a, -a_max, a_max)

    return policy


def circular_mean(dist) -> float:
    """Mean direction of a grid distribution, as a torus position."""
    angles = 2.0 * np.pi * dist.grid
    z = np.sum(dist.masses * np.exp(1j * angles))
    return float(np.mod(np.angle(z) / (2.0 * np.pi), 1.0))
