"""Command-line front end: run, benchmark, validate, export.

Exit codes: 0 success, 1 runtime failure (a partial manifest is left in the
run directory), 2 configuration error (the message names the offending key).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .driver import load_manifest, run_experiment
from .errors import ConfigError, MfucrlError
from .flow import flow_rollout, particle_rollout
from .gp import load_checkpoint
from .planner import PolicyParams, plan_known_dynamics
from .seeding import STREAM_BENCHMARK, STREAM_PARTICLES
from .swarm import (
    analytic_policy,
    analytic_solution,
    clamped,
    drift_fn,
    episode_objective,
    initial_distribution,
    integrated_reward,
)
from .torus import sample, wasserstein1_circle, wrap


def _load_config(args) -> config_mod.RunConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        user = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    user = config_mod.apply_overrides(user, args.override or [])
    if args.seed is not None:
        user["seed"] = args.seed
    if args.out is not None:
        user["out_dir"] = str(args.out)
    elif "out_dir" not in user and os.environ.get("MFUCRL_OUT"):
        user["out_dir"] = os.environ["MFUCRL_OUT"]
    return config_mod.from_dict(user)


def _seed_list(args, base_seed: int) -> list[int]:
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise ConfigError("seeds", f"expected a..b, got {args.seeds!r}") from exc
    return [base_seed]


def cmd_run(args) -> int:
    cfg = _load_config(args)
    for seed in _seed_list(args, cfg.seed):
        run_cfg = cfg if seed == cfg.seed else config_mod.from_dict(
            dict(cfg.to_dict(), seed=seed))
        out_dir = run_cfg.out_dir
        if out_dir and len(_seed_list(args, cfg.seed)) > 1:
            out_dir = str(Path(out_dir) / f"seed{seed}")
        try:
            manifest = run_experiment(run_cfg, out_dir=out_dir)
        except MfucrlError as exc:
            print(f"run failed after a partial manifest was written: {exc}", file=sys.stderr)
            return 1
        print(f"seed {seed}: J_star={manifest.J_star:.4f}, "
              f"episodes={len(manifest.records)}, out={out_dir or '-'}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    env = cfg.env
    mu0 = initial_distribution(env)
    f_true = drift_fn(env)
    result = plan_known_dynamics(f_true, mu0, env.H, env, cfg.planner,
                                 seed=(cfg.seed, STREAM_BENCHMARK))
    policy = clamped(result.policy.as_policy(), env)
    j_star = episode_objective(mu0, policy, f_true, env.H)
    payload = {"J_star": j_star, "predicted_J": result.predicted_J,
               "policy": result.policy.to_json(), "seed": cfg.seed}
    out_dir = Path(cfg.out_dir) if cfg.out_dir else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "benchmark.json", "w") as fh:
        json.dump(payload, fh)
    print(f"J_star={j_star:.6f} -> {out_dir / 'benchmark.json'}")
    return 0


def cmd_validate(args) -> int:
    """Check the flow against its particle oracle and the reward quadrature
    against a Monte-Carlo estimate; exit 1 when either threshold is violated."""
    cfg = _load_config(args)
    env = cfg.env
    raw = cfg.raw["validate"]
    n_particles = int(raw["particles"])
    horizon = min(int(raw["horizon"]), env.H)
    mc_n = int(raw["mc_particles"])
    f_true = drift_fn(env)
    mu0 = initial_distribution(env)
    policy = clamped(lambda s, mu: analytic_policy(s), env)

    periods = (0,) if raw["corrupt_flow"] else (-1, 0, 1)
    from .flow import flow_step
    flow_traj = [mu0]
    for _ in range(horizon):
        flow_traj.append(flow_step(flow_traj[-1], policy, f_true, periods=periods))
    part_traj = particle_rollout(mu0, policy, f_true, n_particles,
                                 seed=(cfg.seed, STREAM_PARTICLES), H=horizon)
    gaps = [wasserstein1_circle(a, b) for a, b in zip(flow_traj, part_traj)]
    max_w1 = max(gaps)

    j_flow = sum(integrated_reward(flow_traj[h], policy) for h in range(horizon))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(97,)))
    s = sample(mu0, mc_n, rng)
    total = np.zeros(mc_n)
    for h in range(horizon):
        a = np.asarray(policy(s, flow_traj[h]), dtype=float)
        from .swarm import reward
        total += reward(s, a, flow_traj[h])
        s = wrap(f_true(s, a, flow_traj[h]) + f_true.noise_std * rng.standard_normal(mc_n))
    j_mc = float(total.mean())
    stderr = float(total.std(ddof=1) / np.sqrt(mc_n))

    ok_flow = max_w1 <= 0.02
    ok_reward = abs(j_flow - j_mc) <= 3.0 * stderr
    print(f"flow vs particles: max W1 = {max_w1:.5f} (threshold 0.02) "
          f"{'ok' if ok_flow else 'FAIL'}")
    print(f"reward quadrature vs Monte Carlo: |{j_flow:.4f} - {j_mc:.4f}| "
          f"= {abs(j_flow - j_mc):.4f} vs 3*stderr = {3*stderr:.4f} "
          f"{'ok' if ok_reward else 'FAIL'}")
    if not ok_flow:
        print("worst steps (h, W1):", file=sys.stderr)
        for h, g in enumerate(gaps):
            if g > 0.02:
                print(f"  {h}\t{g:.5f}", file=sys.stderr)
    return 0 if (ok_flow and ok_reward) else 1


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "manifest.json").is_file():
        print(f"no manifest in {run_dir}", file=sys.stderr)
        return 2
    manifest = load_manifest(run_dir)
    cfg = config_mod.from_dict(manifest.config)
    env = cfg.env
    out = run_dir / f"export_{args.what}.csv"

    if args.what == "rewards":
        mu0 = initial_distribution(env)
        f_true = drift_fn(env)
        policy_star = clamped(lambda s, mu: analytic_policy(s), env)
        j_analytic = episode_objective(mu0, policy_star, f_true, env.H)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "J_real", "J_predicted", "J_star", "J_analytic"])
            for r in manifest.records:
                writer.writerow([r["t"], repr(r["J_real"]), repr(r["J_predicted"]),
                                 repr(r["J_star"]), repr(j_analytic)])
    elif args.what == "policy":
        if not (run_dir / "policy_final.json").is_file():
            print(f"no final policy in {run_dir}", file=sys.stderr)
            return 2
        with open(run_dir / "policy_final.json") as fh:
            policy = PolicyParams.from_json(json.load(fh))
        gp = load_checkpoint(run_dir / "model_final.json")
        del gp  # reserved for feature modes that read the model
        mu_final = _final_distribution(run_dir, env)
        pol = clamped(policy.as_policy(), env)
        grid = mu_final.grid
        actions = np.asarray(pol(grid, mu_final), dtype=float)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "pi", "pi_star_C"])
            for s_val, a_val in zip(grid, actions):
                writer.writerow([repr(float(s_val)), repr(float(a_val)),
                                 repr(float(analytic_policy(s_val)))])
    elif args.what == "flow":
        if not (run_dir / "flow_final.csv").is_file():
            print(f"no final flow in {run_dir}", file=sys.stderr)
            return 2
        with open(run_dir / "flow_final.csv") as fh:
            rows = list(csv.reader(fh))
        snapshots = sorted({0, min(16, env.H), env.H})
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(rows[0])
            for h in snapshots:
                writer.writerow(rows[1 + h])
    print(f"wrote {out}")
    return 0


def _final_distribution(run_dir: Path, env):
    from .torus import GridDistribution

    with open(run_dir / "flow_final.csv") as fh:
        rows = list(csv.reader(fh))
    return GridDistribution(np.array([float(v) for v in rows[-1][1:]]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfucrl",
        description="Mean-field swarm control with model-based optimistic RL",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (or $MFUCRL_OUT)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--seeds", default=None, help="seed sweep a..b (inclusive)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="config override, repeatable (e.g. env.dynamics=congestion)")

    add_common(sub.add_parser("run", help="run the episodic learning experiment"))
    add_common(sub.add_parser("benchmark", help="known-dynamics planning only"))
    add_common(sub.add_parser("validate", help="flow and reward oracle checks"))
    exp = sub.add_parser("export", help="emit plot-ready CSV from a run directory")
    exp.add_argument("run_dir", help="directory containing manifest.json")
    exp.add_argument("what", choices=["rewards", "flow", "policy"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "benchmark": cmd_benchmark,
        "validate": cmd_validate,
        "export": cmd_export,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MfucrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
