"""Calibrated Gaussian-process regression of the unknown drift.

The model regresses wrapped one-step displacements ``d = wrap_signed(s' - s)``
on joint inputs ``z = (cos 2 pi s, sin 2 pi s, a, mu features)``; the modeled
next state is then ``s + d(z)``.  Up to ``subset_cap`` data points the
posterior is the standard exact GP with likelihood noise ``noise_var``.
Beyond the cap, a greedy maximum-posterior-variance sweep picks ``subset_cap``
inducing points and the posterior is the deterministic projected-process
(Nystrom) approximation on them: predictions cost only cap-sized algebra, but
every collected target still enters the estimate, so the posterior mean keeps
averaging observation noise as data accumulates.  (Pure subset-of-data was
tried first and discards that averaging: with noise-dominated targets its
mean error plateaus at the per-subset-point noise level, which stalls the
learning loop.)

Both paths share one predictive form, ``mean = k alpha`` and ``var = k(z,z) -
k B k``, with cached ``alpha`` and ``B``.

Confidence scaling ``beta`` is either a fixed constant or the standard
high-probability radius ``B_f + (sigma/sqrt(lambda)) * sqrt(2 (log(1/delta) +
gain))`` with the realized information gain ``0.5 * logdet(I + K/lambda)`` of
the retained points standing in for the intractable worst-case quantity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, FitError
from .torus import GridDistribution, density_at, wrap

KERNEL_KINDS = ("squared_exponential", "matern52", "rational_quadratic", "linear")

_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    ``lengthscales`` holds one positive scale per input coordinate; distances
    are computed on the rescaled coordinates ``z / lengthscales``.  For the
    stationary kinds ``k(z, z) == variance``.
    """

    kind: str = "squared_exponential"
    lengthscales: tuple = (1.0,)
    variance: float = 1.0
    alpha: float = 1.0  # rational-quadratic shape parameter

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError("model.kernel.kind", f"unknown kernel {self.kind!r}")
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if any(v <= 0 for v in ls):
            raise ConfigError("model.kernel.lengthscales", "lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)
        if not self.variance > 0:
            raise ConfigError("model.kernel.variance", "variance must be positive")
        if not self.alpha > 0:
            raise ConfigError("model.kernel.alpha", "alpha must be positive")

    def scales_for(self, dim: int) -> np.ndarray:
        if len(self.lengthscales) == dim:
            return np.asarray(self.lengthscales)
        if len(self.lengthscales) == 1:
            return np.full(dim, self.lengthscales[0])
        raise ConfigError(
            "model.kernel.lengthscales",
            f"expected 1 or {dim} lengthscales, got {len(self.lengthscales)}",
        )


@dataclass(frozen=True)
class JointInput:
    """Model input: state on the unit circle, action, distribution features."""

    s_feat: tuple
    a: float
    mu_feat: tuple = ()

    def vector(self) -> np.ndarray:
        return np.array([*self.s_feat, self.a, *self.mu_feat], dtype=float)


@dataclass(frozen=True)
class FeatMode:
    """How the distribution enters the joint input.

    ``local``: the interpolated density at the agent's own position (1
    feature); ``global``: an ``F``-bin average-pooled histogram; ``none``: no
    distribution features.
    """

    kind: str = "local"
    F: int = 1

    def __post_init__(self):
        if self.kind not in ("local", "global", "none"):
            raise ConfigError("model.feat_mode", f"unknown feature mode {self.kind!r}")

    @property
    def n_features(self) -> int:
        return {"local": 1, "global": self.F, "none": 0}[self.kind]

    def mu_features(self, mu: GridDistribution, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.kind == "none":
            return np.zeros((s.size, 0))
        if self.kind == "local":
            return np.atleast_1d(density_at(mu, s))[:, None]
        if mu.M % self.F != 0:
            raise ConfigError("model.feat_mode", f"F={self.F} does not divide M={mu.M}")
        pooled = mu.heights.reshape(self.F, mu.M // self.F).mean(axis=1)
        return np.broadcast_to(pooled, (s.size, self.F))


def make_joint_input(s: float, a: float, mu: GridDistribution,
                     feat_mode: FeatMode = FeatMode()) -> JointInput:
    """Encode a single (state, action, distribution) triple."""
    s = float(wrap(s))
    feats = feat_mode.mu_features(mu, s)[0]
    return JointInput(
        s_feat=(float(np.cos(2 * np.pi * s)), float(np.sin(2 * np.pi * s))),
        a=float(a),
        mu_feat=tuple(float(v) for v in feats),
    )


def encode_inputs(s, a, mu: GridDistribution, feat_mode: FeatMode) -> np.ndarray:
    """Vectorized joint-input encoding; rows are [cos, sin, a, mu features]."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    a = np.broadcast_to(np.asarray(a, dtype=float), s.shape)
    feats = feat_mode.mu_features(mu, s)
    two_pi_s = 2 * np.pi * s
    return np.column_stack([np.cos(two_pi_s), np.sin(two_pi_s), a, feats])


def _as_matrix(z) -> np.ndarray:
    if isinstance(z, JointInput):
        return z.vector()[None, :]
    arr = np.asarray(z, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def _sq_dists(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    scales = kernel.scales_for(A.shape[1])
    As, Bs = A / scales, B / scales
    d2 = (
        np.sum(As * As, axis=1)[:, None]
        + np.sum(Bs * Bs, axis=1)[None, :]
        - 2.0 * As @ Bs.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between two sets of encoded inputs."""
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature dimensions differ: {A.shape[1]} != {B.shape[1]}")
    if kernel.kind == "linear":
        scales = kernel.scales_for(A.shape[1])
        return kernel.variance * ((A / scales) @ (B / scales).T)
    d2 = _sq_dists(kernel, A, B)
    if kernel.kind == "squared_exponential":
        return kernel.variance * np.exp(-d2)
    if kernel.kind == "matern52":
        r = np.sqrt(5.0 * d2)
        return kernel.variance * (1.0 + r + r * r / 3.0) * np.exp(-r)
    # rational quadratic
    return kernel.variance * (1.0 + d2 / (2.0 * kernel.alpha)) ** (-kernel.alpha)


def kernel_diag(kernel: KernelSpec, A: np.ndarray) -> np.ndarray:
    """k(z, z) for each row of A."""
    if kernel.kind == "linear":
        scales = kernel.scales_for(A.shape[1])
        As = A / scales
        return kernel.variance * np.sum(As * As, axis=1)
    return np.full(A.shape[0], kernel.variance)


def kernel_eval(kernel: KernelSpec, z1, z2) -> float:
    """Kernel value between two joint inputs."""
    return float(kernel_matrix(kernel, _as_matrix(z1), _as_matrix(z2))[0, 0])


@dataclass(frozen=True)
class BetaMode:
    """Confidence-scale rule: a fixed value, or the concentration formula."""

    kind: str = "fixed"
    value: float = 2.0
    B_f: float = 1.0
    sigma_sub: float = 1.0
    delta: float = 0.1

    @classmethod
    def fixed(cls, value: float) -> "BetaMode":
        return cls(kind="fixed", value=float(value))

    @classmethod
    def theory(cls, B_f: float, sigma_sub: float, delta: float) -> "BetaMode":
        return cls(kind="theory", B_f=float(B_f), sigma_sub=float(sigma_sub), delta=float(delta))

    def __post_init__(self):
        if self.kind not in ("fixed", "theory"):
            raise ConfigError("model.beta_mode", f"unknown beta mode {self.kind!r}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError("model.beta_mode.delta", f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class GpPosterior:
    """Trained dynamics model; immutable and safe to share across threads.

    ``X`` holds the retained (all or inducing) inputs; predictions use the
    cached ``alpha_vec`` and ``B_mat`` uniformly: ``mean = k alpha``,
    ``var = k(z,z) - k B k``.
    """

    kernel: KernelSpec
    X: np.ndarray          # retained inputs, shape (n, d)
    y: np.ndarray          # targets of the retained inputs, shape (n,)
    noise_var: float
    beta_mode: BetaMode = field(default_factory=BetaMode)
    mode: str = "exact"    # "exact" (n <= cap) or "projected" (inducing points)
    chol: np.ndarray | None = None      # exact path: chol(K + noise_var I)
    alpha_vec: np.ndarray | None = None
    B_mat: np.ndarray | None = None
    info_gain: float = 0.0
    n_total: int = 0       # data size including points beyond the cap

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def predict(self, z):
        return predict(self, z)


def prior(kernel: KernelSpec, noise_var: float, dim: int,
          beta_mode: BetaMode = BetaMode()) -> GpPosterior:
    """Data-free posterior: mean 0 and standard deviation sqrt(k(z, z))."""
    if not noise_var > 0:
        raise ConfigError("model.noise_var", "likelihood noise must be positive")
    return GpPosterior(
        kernel=kernel,
        X=np.zeros((0, dim)),
        y=np.zeros(0),
        noise_var=float(noise_var),
    )


def _cholesky_with_jitter(A: np.ndarray) -> np.ndarray:
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise FitError("covariance factorization failed even with jitter up to 1e-6")


def greedy_max_variance_subset(kernel: KernelSpec, X: np.ndarray, noise_var: float,
                               cap: int) -> np.ndarray:
    """Indices of the greedy maximum-posterior-variance subset of size ``cap``.

    Each point is chosen to maximize the posterior variance of the GP
    conditioned (with likelihood noise) on the points chosen so far; this is
    the noise-aware pivoted Cholesky sweep.  Deterministic: ties break to the
    lowest index.
    """
    n = X.shape[0]
    d = kernel_diag(kernel, X).astype(float).copy()
    V = np.zeros((cap, n))
    chosen = np.empty(cap, dtype=int)
    mask = np.zeros(n, dtype=bool)
    for m in range(cap):
        j = int(np.argmax(np.where(mask, -np.inf, d)))
        chosen[m] = j
        mask[j] = True
        kj = kernel_matrix(kernel, X, X[j:j + 1])[:, 0]
        c = (kj - V[:m].T @ V[:m, j]) / np.sqrt(d[j] + noise_var)
        V[m] = c
        d = np.maximum(d - c * c, 0.0)
    return np.sort(chosen)


def fit(kernel: KernelSpec, data, noise_var: float, subset_cap: int | None = None,
        beta_mode: BetaMode = BetaMode()) -> GpPosterior:
    """Condition the GP on ``data`` (pairs of JointInput and displacement).

    ``data`` may also be a pre-encoded ``(X, y)`` tuple of arrays.  With
    ``subset_cap >= len(data)`` (or ``None``) the fit is exact.  Beyond the
    cap, the greedy max-variance sweep picks the inducing set and the
    projected-process posterior is built from all targets.
    """
    if isinstance(data, tuple) and len(data) == 2:
        X = np.asarray(data[0], dtype=float)
        y = np.asarray(data[1], dtype=float)
    else:
        pairs = list(data)
        if not pairs:
            raise FitError("cannot fit on empty data; use prior() instead")
        X = np.stack([z.vector() if isinstance(z, JointInput) else np.asarray(z, float)
                      for z, _ in pairs])
        y = np.array([t for _, t in pairs], dtype=float)
    if X.shape[0] == 0:
        raise FitError("cannot fit on empty data; use prior() instead")
    if not noise_var > 0:
        raise ConfigError("model.noise_var", "likelihood noise must be positive")
    n_total = X.shape[0]

    if subset_cap is None or n_total <= subset_cap:
        K = kernel_matrix(kernel, X, X)
        L = _cholesky_with_jitter(K + noise_var * np.eye(X.shape[0]))
        alpha_vec = _cho_solve(L, y)
        B_mat = _cho_solve(L, np.eye(X.shape[0]))
        gain_L = _cholesky_with_jitter(np.eye(X.shape[0]) + K / noise_var)
        info_gain = float(np.sum(np.log(np.diag(gain_L))))
        return GpPosterior(
            kernel=kernel, X=X, y=y, noise_var=float(noise_var), beta_mode=beta_mode,
            mode="exact", chol=L, alpha_vec=alpha_vec, B_mat=B_mat,
            info_gain=info_gain, n_total=n_total,
        )

    idx = greedy_max_variance_subset(kernel, X, noise_var, subset_cap)
    Z = X[idx]
    K_mm = kernel_matrix(kernel, Z, Z)
    K_mn = kernel_matrix(kernel, Z, X)
    sigma = K_mm + (K_mn @ K_mn.T) / noise_var
    L_mm = _cholesky_with_jitter(K_mm)
    L_sig = _cholesky_with_jitter(sigma)
    eye = np.eye(subset_cap)
    alpha_vec = _cho_solve(L_sig, K_mn @ y) / noise_var
    B_mat = _cho_solve(L_mm, eye) - _cho_solve(L_sig, eye)
    B_mat = 0.5 * (B_mat + B_mat.T)
    gain_L = _cholesky_with_jitter(eye + K_mm / noise_var)
    info_gain = float(np.sum(np.log(np.diag(gain_L))))
    return GpPosterior(
        kernel=kernel, X=Z, y=y[idx], noise_var=float(noise_var), beta_mode=beta_mode,
        mode="projected", chol=None, alpha_vec=alpha_vec, B_mat=B_mat,
        info_gain=info_gain, n_total=n_total,
    )


def _cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


def predict(gp: GpPosterior, z):
    """Posterior mean and standard deviation at one input or a batch.

    Accepts a :class:`JointInput`, a single encoded vector, or a matrix of
    encoded rows; returns floats for a single input, arrays for a batch.
    """
    Z = _as_matrix(z)
    single = isinstance(z, JointInput) or np.asarray(z).ndim == 1
    kzz = kernel_diag(gp.kernel, Z)
    if gp.n == 0:
        mean = np.zeros(Z.shape[0])
        std = np.sqrt(kzz)
    else:
        Kq = kernel_matrix(gp.kernel, Z, gp.X)
        mean = Kq @ gp.alpha_vec
        var = kzz - np.sum((Kq @ gp.B_mat) * Kq, axis=1)
        std = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mean[0]), float(std[0])
    return mean, std


def beta(gp: GpPosterior, mode: BetaMode | None = None) -> float:
    """Confidence scale for the calibrated-model envelope |f - mean| <= beta std."""
    mode = gp.beta_mode if mode is None else mode
    if mode.kind == "fixed":
        return mode.value
    radius = np.sqrt(2.0 * (np.log(1.0 / mode.delta) + gp.info_gain))
    return float(mode.B_f + mode.sigma_sub / np.sqrt(gp.noise_var) * radius)


def log_marginal_likelihood(gp: GpPosterior) -> float:
    """Log evidence of the retained data under the posterior's hyperparameters."""
    if gp.n == 0:
        return 0.0
    return float(
        -0.5 * gp.y @ gp.alpha_vec
        - np.sum(np.log(np.diag(gp.chol)))
        - 0.5 * gp.n * np.log(2.0 * np.pi)
    )


def tune_lengthscales(kernel: KernelSpec, data, noise_var: float,
                      factors: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
                      subset_cap: int | None = None) -> KernelSpec:
    """Grid search over global lengthscale multipliers by marginal likelihood.

    Deterministic alternative to gradient-based hyperparameter optimization;
    ties resolve to the first (smallest) factor.
    """
    best, best_lml = kernel, -np.inf
    for f in factors:
        cand = replace(kernel, lengthscales=tuple(v * f for v in kernel.lengthscales))
        lml = log_marginal_likelihood(fit(cand, data, noise_var, subset_cap))
        if lml > best_lml:
            best, best_lml = cand, lml
    return best


# -- checkpointing -----------------------------------------------------------

def to_checkpoint(gp: GpPosterior) -> dict:
    """Binary-free JSON payload; reloading reproduces predictions to 1e-12.

    The exact posterior is stored as its data and refit on load; the
    projected posterior stores its cached factors directly (its sufficient
    statistics involve all observed targets, not just the retained inputs).
    """
    payload = {
        "kernel": {
            "kind": gp.kernel.kind,
            "lengthscales": list(gp.kernel.lengthscales),
            "variance": gp.kernel.variance,
            "alpha": gp.kernel.alpha,
        },
        "mode": gp.mode,
        "inputs": gp.X.tolist(),
        "targets": gp.y.tolist(),
        "noise_var": gp.noise_var,
        "beta_mode": {
            "kind": gp.beta_mode.kind,
            "value": gp.beta_mode.value,
            "B_f": gp.beta_mode.B_f,
            "sigma_sub": gp.beta_mode.sigma_sub,
            "delta": gp.beta_mode.delta,
        },
        "n_total": gp.n_total,
        "dim": int(gp.X.shape[1]),
    }
    if gp.mode == "projected":
        payload["alpha_vec"] = gp.alpha_vec.tolist()
        payload["B_mat"] = gp.B_mat.tolist()
        payload["info_gain"] = gp.info_gain
    return payload


def from_checkpoint(payload: dict) -> GpPosterior:
    kernel = KernelSpec(
        kind=payload["kernel"]["kind"],
        lengthscales=tuple(payload["kernel"]["lengthscales"]),
        variance=payload["kernel"]["variance"],
        alpha=payload["kernel"].get("alpha", 1.0),
    )
    beta_mode = BetaMode(**payload["beta_mode"])
    X = np.asarray(payload["inputs"], dtype=float).reshape(-1, payload["dim"])
    y = np.asarray(payload["targets"], dtype=float)
    if X.shape[0] == 0:
        return prior(kernel, payload["noise_var"], payload["dim"], beta_mode)
    if payload.get("mode", "exact") == "projected":
        return GpPosterior(
            kernel=kernel, X=X, y=y, noise_var=float(payload["noise_var"]),
            beta_mode=beta_mode, mode="projected",
            alpha_vec=np.asarray(payload["alpha_vec"], dtype=float),
            B_mat=np.asarray(payload["B_mat"], dtype=float),
            info_gain=float(payload["info_gain"]),
            n_total=payload.get("n_total", X.shape[0]),
        )
    gp = fit(kernel, (X, y), payload["noise_var"], subset_cap=None, beta_mode=beta_mode)
    return replace(gp, n_total=payload.get("n_total", X.shape[0]), beta_mode=beta_mode)


def save_checkpoint(gp: GpPosterior, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_checkpoint(gp), fh)


def load_checkpoint(path) -> GpPosterior:
    with open(path) as fh:
        return from_checkpoint(json.load(fh))


# -- batched evaluation for the planner's inner loop -------------------------

class BatchPredictor:
    """Batched mean/std evaluator with a precomputed inverse covariance.

    Large query batches cost one small matrix product each; used inside the
    planner's population loop, in single precision for candidate screening and
    in double precision for final objective values.  The float32 variant
    agrees with :func:`predict` to single-precision accuracy.
    """

    def __init__(self, gp: GpPosterior, dtype=np.float32):
        self.kernel = gp.kernel
        self.n = gp.n
        self.dtype = dtype
        dim = gp.X.shape[1]
        self.scales = gp.kernel.scales_for(dim).astype(dtype)
        self.variance = dtype(gp.kernel.variance)
        self._buf = {}
        if self.n:
            self.Xs = np.ascontiguousarray((gp.X / gp.kernel.scales_for(dim)).T.astype(dtype))
            self.x_norms = np.sum(self.Xs * self.Xs, axis=0)
            # Fold the kernel variance into the cached factors so the cross
            # matrix can stay unscaled: mean = E a', var = v - (E B') . E.
            self.alpha = (gp.kernel.variance * gp.alpha_vec).astype(dtype)
            self.B = (gp.kernel.variance**2 * gp.B_mat).astype(dtype)

    def _workspace(self, key):
        buf = self._buf.get(key)
        if buf is None:
            buf = self._buf[key] = np.empty(key[1:], dtype=self.dtype)
        return buf

    def _cross(self, Zs: np.ndarray) -> np.ndarray:
        """Unscaled cross matrix (kernel values divided by the variance)."""
        E = self._workspace(("E", Zs.shape[0], self.n))
        np.matmul(Zs, self.Xs, out=E)
        if self.kernel.kind == "linear":
            return E
        # E <- exp(-(|z|^2 + |x|^2 - 2 z.x)) built in place
        E *= self.dtype(-2.0)
        E += np.sum(Zs * Zs, axis=1)[:, None]
        E += self.x_norms[None, :]
        np.maximum(E, self.dtype(0.0), out=E)
        if self.kernel.kind == "squared_exponential":
            np.negative(E, out=E)
            np.exp(E, out=E)
            return E
        if self.kernel.kind == "matern52":
            E *= self.dtype(5.0)
            np.sqrt(E, out=E)
            poly = 1.0 + E + E * E / self.dtype(3.0)
            np.negative(E, out=E)
            np.exp(E, out=E)
            E *= poly
            return E
        a = self.dtype(self.kernel.alpha)
        E /= 2.0 * a
        E += self.dtype(1.0)
        np.power(E, -a, out=E)
        return E

    def mean_std(self, Z: np.ndarray, need_std: bool = True):
        """Mean and std at query rows Z, in the predictor's dtype."""
        Zs = np.asarray(Z, dtype=self.dtype) / self.scales
        if self.kernel.kind == "linear":
            kzz = self.variance * np.sum(Zs * Zs, axis=1)
        else:
            kzz = np.full(Z.shape[0], self.variance, dtype=self.dtype)
        if self.n == 0:
            zeros = np.zeros(Z.shape[0], dtype=self.dtype)
            return zeros, np.sqrt(kzz) if need_std else None
        E = self._cross(Zs)
        mean = E @ self.alpha
        if not need_std:
            return mean, None
        G = self._workspace(("G", E.shape[0], self.n))
        np.matmul(E, self.B, out=G)
        G *= E
        var = kzz - np.sum(G, axis=1)
        return mean, np.sqrt(np.maximum(var, self.dtype(0.0)))
