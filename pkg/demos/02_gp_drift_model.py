#!/usr/bin/env python3
"""Learning the drift from noisy transitions with a Gaussian process.

Collects transitions from the true system, fits the GP (with the greedy
max-variance subset), and inspects calibration: how often the truth lies
inside the two-sigma band, and how the band contracts with more data.
"""

import numpy as np

from mfucrl import SwarmConfig, uniform
from mfucrl.gp import FeatMode, KernelSpec, encode_inputs, fit, predict, to_checkpoint, from_checkpoint
from mfucrl.torus import wrap_signed

cfg = SwarmConfig(M=100, H=50, dt=1.0 / 50)
kernel = KernelSpec("squared_exponential", (4.0, 4.0, 10.0, 8.0), 0.015)
rng = np.random.default_rng(0)
mu = uniform(cfg.M)

def collect(n):
    s = rng.random(n)
    a = rng.uniform(cfg.a_min, cfg.a_max, n)
    s_next = s + a * cfg.dt + cfg.noise_std * rng.standard_normal(n)
    return encode_inputs(s, a, mu, FeatMode("local")), wrap_signed(s_next - s)

qs = np.repeat(np.linspace(0, 1, 25, endpoint=False), 20)
qa = np.tile(np.linspace(-7, 7, 20), 25)
Q = encode_inputs(qs, qa, mu, FeatMode("local"))
truth = qa * cfg.dt

print("data size -> rmse of the posterior mean, median sigma, 2-sigma coverage")
for n in (50, 200, 800, 3200):
    X, y = collect(n)
    gp = fit(kernel, (X, y), noise_var=cfg.dt, subset_cap=160)
    mean, std = predict(gp, Q)
    rmse = float(np.sqrt(np.mean((mean - truth) ** 2)))
    cover = float(np.mean(np.abs(truth - mean) <= 2.0 * std))
    print(f"  n={n:5d}  rmse={rmse:.4f}  med sigma={np.median(std):.4f}  "
          f"coverage={cover:.3f}  info gain={gp.info_gain:.1f}")

print("\ncheckpoint round trip reproduces predictions:")
X, y = collect(500)
gp = fit(kernel, (X, y), noise_var=cfg.dt, subset_cap=160)
restored = from_checkpoint(to_checkpoint(gp))
m1, s1 = predict(gp, Q)
m2, s2 = predict(restored, Q)
print(f"  max |mean diff| = {np.max(np.abs(m1 - m2)):.2e}, "
      f"max |std diff| = {np.max(np.abs(s1 - s2)):.2e}")
