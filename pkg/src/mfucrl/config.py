"""Run configuration: schema, validation, defaults, overrides.

The config file is JSON with one section per subsystem (``env``, ``model``,
``planner``, ``loop``, ``validate``) plus ``seed`` and ``out_dir``.  Unknown
keys are rejected and every validation error names the offending key, so a
typo cannot silently fall back to a default.  Defaults reproduce the
full-scale experiment (M=200, H=200, dt=1/200, actions in [-7, 7], T=20);
the desk-scale preset used by the test suite is exposed as
:func:`desk_config`.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .gp import BetaMode, FeatMode, KernelSpec
from .planner import OptimizerConfig
from .swarm import SwarmConfig

DEFAULTS: dict = {
    "env": {
        "dynamics": "basic",
        "M": 200,
        "H": 200,
        "dt": 1.0 / 200,
        "a_min": -7.0,
        "a_max": 7.0,
        "initial": "ergodic",
        "noise_std": None,  # null -> sqrt(dt)
    },
    "model": {
        # Hyperparameters from a one-time marginal-likelihood grid search on
        # desk-scale transition data; the prior std (0.1) matches the scale of
        # the one-step displacements (|a| dt <= 0.14).
        "kernel": {
            "kind": "squared_exponential",
            "lengthscales": [4.0, 4.0, 10.0, 8.0],
            "variance": 0.01,
            "alpha": 1.0,
        },
        "noise_var": None,  # null -> dt (the true transition variance)
        "subset_cap": 256,
        "beta_mode": {"kind": "fixed", "value": 2.0, "B_f": 1.0, "sigma_sub": 1.0, "delta": 0.1},
        "feat_mode": {"kind": "local", "F": 1},
    },
    "planner": {
        "population": 128,
        "elite_frac": 0.125,
        "generations": 40,
        "init_std": 0.5,
        "var_floor": 1e-4,
        "hidden_width": 16,
    },
    "loop": {"T": 20, "K": 4},
    "validate": {"particles": 50000, "horizon": 20, "mc_particles": 10000, "corrupt_flow": False},
    "seed": 0,
    "out_dir": None,
}


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        full = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(full, "unknown key")
        if isinstance(defaults[key], dict) and not isinstance(value, dict):
            raise ConfigError(full, f"expected a section, got {type(value).__name__}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, full)
        else:
            out[key] = value
    return out


def _expect(raw: dict, section: str, key: str, kinds, allow_none=False):
    value = raw[section][key] if section else raw[key]
    full = f"{section}.{key}" if section else key
    if value is None and allow_none:
        return None
    if not isinstance(value, kinds) or isinstance(value, bool) and kinds is not bool:
        kind_name = kinds[0].__name__ if isinstance(kinds, tuple) else kinds.__name__
        raise ConfigError(full, f"expected {kind_name}, got {value!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``raw`` round-trips to JSON unchanged."""

    raw: dict
    env: SwarmConfig
    kernel: KernelSpec
    noise_var: float
    subset_cap: int
    beta_mode: BetaMode
    feat_mode: FeatMode
    planner: OptimizerConfig
    T: int
    K: int
    seed: int
    out_dir: str | None

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def from_dict(user: dict) -> RunConfig:
    """Validate a raw dict (missing keys filled with defaults)."""
    if not isinstance(user, dict):
        raise ConfigError("config", "top level must be an object")
    raw = _merge(DEFAULTS, user, "")

    env_noise = _expect(raw, "env", "noise_std", (int, float), allow_none=True)
    env = SwarmConfig(
        M=_expect(raw, "env", "M", int),
        H=_expect(raw, "env", "H", int),
        dt=float(_expect(raw, "env", "dt", (int, float))),
        a_min=float(_expect(raw, "env", "a_min", (int, float))),
        a_max=float(_expect(raw, "env", "a_max", (int, float))),
        dynamics_variant=_expect(raw, "env", "dynamics", str),
        noise_std=float(env_noise) if env_noise is not None else 0.0,
        initial=_expect(raw, "env", "initial", str),
    )

    kraw = raw["model"]["kernel"]
    if set(kraw) - {"kind", "lengthscales", "variance", "alpha"}:
        extra = sorted(set(kraw) - {"kind", "lengthscales", "variance", "alpha"})[0]
        raise ConfigError(f"model.kernel.{extra}", "unknown key")
    kernel = KernelSpec(
        kind=kraw["kind"],
        lengthscales=tuple(kraw["lengthscales"]),
        variance=float(kraw["variance"]),
        alpha=float(kraw.get("alpha", 1.0)),
    )

    noise_var = _expect(raw, "model", "noise_var", (int, float), allow_none=True)
    noise_var = float(noise_var) if noise_var is not None else env.dt
    if not noise_var > 0:
        raise ConfigError("model.noise_var", "must be positive")

    subset_cap = _expect(raw, "model", "subset_cap", int)
    if subset_cap < 1:
        raise ConfigError("model.subset_cap", "must be at least 1")

    braw = raw["model"]["beta_mode"]
    beta_mode = BetaMode(
        kind=braw["kind"],
        value=float(braw["value"]),
        B_f=float(braw["B_f"]),
        sigma_sub=float(braw["sigma_sub"]),
        delta=float(braw["delta"]),
    )
    fraw = raw["model"]["feat_mode"]
    feat_mode = FeatMode(kind=fraw["kind"], F=int(fraw["F"]))

    planner = OptimizerConfig(
        population=_expect(raw, "planner", "population", int),
        elite_frac=float(_expect(raw, "planner", "elite_frac", (int, float))),
        generations=_expect(raw, "planner", "generations", int),
        init_std=float(_expect(raw, "planner", "init_std", (int, float))),
        var_floor=float(_expect(raw, "planner", "var_floor", (int, float))),
        hidden_width=_expect(raw, "planner", "hidden_width", int),
        feat_mode=feat_mode,
    )

    T = _expect(raw, "loop", "T", int)
    if T < 0:
        raise ConfigError("loop.T", "must be non-negative")
    K = _expect(raw, "loop", "K", int)
    if K < 1:
        raise ConfigError("loop.K", "must be at least 1")

    # Kernel lengthscales must cover the joint-input dimension.
    dim = 3 + feat_mode.n_features
    kernel.scales_for(dim)
    if feat_mode.kind == "global" and env.M % feat_mode.F != 0:
        raise ConfigError("model.feat_mode.F", f"must divide env.M={env.M}")

    return RunConfig(
        raw=raw,
        env=env,
        kernel=kernel,
        noise_var=noise_var,
        subset_cap=subset_cap,
        beta_mode=beta_mode,
        feat_mode=feat_mode,
        planner=planner,
        T=T,
        K=K,
        seed=_expect(raw, "", "seed", int),
        out_dir=_expect(raw, "", "out_dir", str, allow_none=True),
    )


def load(path) -> RunConfig:
    """Parse and validate a JSON config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        user = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return from_dict(user)


def apply_overrides(user: dict, overrides) -> dict:
    """Apply repeated ``key.path=value`` overrides to a raw config dict."""
    out = copy.deepcopy(user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override", f"expected key=value, got {item!r}")
        key, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "path passes through a non-section value")
        node[parts[-1]] = value
    return out


def desk_config(**updates) -> dict:
    """Raw dict for the desk-scale preset (fast enough for CPU test runs)."""
    base = {
        "env": {"M": 100, "H": 50, "dt": 1.0 / 50},
        "model": {"subset_cap": 160},
        "loop": {"T": 15, "K": 4},
    }
    out = copy.deepcopy(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out
