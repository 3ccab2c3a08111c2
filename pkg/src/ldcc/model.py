"""Shared model state: Gaussian image-themes and Dirichlet task-themes.

A ThemeModel holds K Gaussian components (mu_k, Sigma_k) describing feature
clusters, L Dirichlet rows alpha_l describing how task themes use those
clusters, and the task-level prior delta.  Covariance Cholesky factors and
log-determinants are cached at construction; the model is treated as
immutable afterwards so concurrent E-steps can share it without locking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import solve_triangular

from .errors import CheckpointError, DomainError, ModelError
from .streams import init_stream

if TYPE_CHECKING:
    from .data import TaskCollection

_LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_JITTER = 1e-6


class ThemeModel:
    """Immutable container for (mu, sigma, alpha, delta) with cached factors."""

    def __init__(self, mu, sigma, alpha, delta):
        mu = np.array(mu, dtype=np.float64)
        sigma = np.array(sigma, dtype=np.float64)
        alpha = np.array(alpha, dtype=np.float64)
        delta = np.array(delta, dtype=np.float64)
        if mu.ndim != 2:
            raise ModelError(f"mu must be (K, D), got shape {mu.shape}")
        K, D = mu.shape
        if sigma.shape != (K, D, D):
            raise ModelError(f"sigma must be {(K, D, D)}, got {sigma.shape}")
        if alpha.ndim != 2 or alpha.shape[1] != K:
            raise ModelError(f"alpha must be (L, {K}), got {alpha.shape}")
        L = alpha.shape[0]
        if delta.shape != (L,):
            raise ModelError(f"delta must be ({L},), got {delta.shape}")
        for name, arr in (("mu", mu), ("sigma", sigma), ("alpha", alpha), ("delta", delta)):
            if not np.isfinite(arr).all():
                raise ModelError(f"{name} contains non-finite values")
        if (alpha <= 0).any():
            raise ModelError("alpha entries must be strictly positive")
        if (delta <= 0).any():
            raise ModelError("delta entries must be strictly positive")

        chol = np.empty_like(sigma)
        log_dets = np.empty(K)
        for k in range(K):
            if not np.allclose(sigma[k], sigma[k].T, atol=1e-8):
                raise ModelError(f"sigma[{k}] is not symmetric")
            try:
                chol[k] = np.linalg.cholesky(sigma[k])
            except np.linalg.LinAlgError as exc:
                raise ModelError(f"sigma[{k}] is not positive definite") from exc
            log_dets[k] = 2.0 * np.log(np.diag(chol[k])).sum()

        for arr in (mu, sigma, alpha, delta, chol, log_dets):
            arr.flags.writeable = False
        self.mu = mu
        self.sigma = sigma
        self.alpha = alpha
        self.delta = delta
        self.chol_factors = chol
        self.log_dets = log_dets

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def D(self) -> int:
        return self.mu.shape[1]

    @property
    def L(self) -> int:
        return self.alpha.shape[0]

    def with_updates(self, mu=None, sigma=None, alpha=None) -> "ThemeModel":
        """A new model sharing this one's values except where overridden."""
        return ThemeModel(
            self.mu if mu is None else mu,
            self.sigma if sigma is None else sigma,
            self.alpha if alpha is None else alpha,
            self.delta,
        )

    def log_pdfs(self, x: np.ndarray) -> np.ndarray:
        """Gaussian log-densities of rows of x under every theme, (n, K).

        Mahalanobis terms come from triangular solves against the cached
        factors; no covariance is ever inverted explicitly.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.D:
            raise ModelError(f"expected samples of shape (n, {self.D}), got {x.shape}")
        n = x.shape[0]
        out = np.empty((n, self.K))
        for k in range(self.K):
            diff = (x - self.mu[k]).T
            solved = solve_triangular(self.chol_factors[k], diff, lower=True)
            maha = np.einsum("ij,ij->j", solved, solved)
            out[:, k] = -0.5 * (self.D * _LOG_2PI + self.log_dets[k] + maha)
        return out

    def __eq__(self, other):
        return (
            isinstance(other, ThemeModel)
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma, other.sigma)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.delta, other.delta)
        )

    def __repr__(self):
        return f"ThemeModel(L={self.L}, K={self.K}, D={self.D})"


def gaussian_log_pdf(model: ThemeModel, x, k: int) -> float:
    """Log-density of one sample under image-theme k."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.D,):
        raise ModelError(f"expected a ({model.D},) sample, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DomainError("gaussian_log_pdf requires finite samples")
    if not 0 <= k < model.K:
        raise ValueError(f"theme index {k} out of range [0, {model.K})")
    diff = x - model.mu[k]
    solved = solve_triangular(model.chol_factors[k], diff, lower=True)
    return float(-0.5 * (model.D * _LOG_2PI + model.log_dets[k] + solved @ solved))


def init_model(
    sample: "TaskCollection",
    num_task_themes: int,
    num_image_themes: int,
    delta_value: float,
    seed: int,
    jitter: float = DEFAULT_JITTER,
) -> ThemeModel:
    """Data-driven starting point for training.

    Theme means are distinct randomly chosen data rows; every covariance
    starts at the pooled sample covariance (plus jitter on the diagonal), so
    initial responsibilities are soft across the whole spread of the data.
    alpha starts at all-ones and delta at the symmetric delta_value.
    """
    if num_task_themes < 1 or num_image_themes < 1:
        raise ValueError("theme counts must be >= 1")
    if delta_value <= 0:
        raise ValueError("delta_value must be positive")
    pooled = np.concatenate([t.stacked()[0] for t in sample])
    n = pooled.shape[0]
    if num_image_themes > n:
        raise ValueError(
            f"cannot seed {num_image_themes} image themes from {n} samples"
        )
    rng = init_stream(seed)
    rows = rng.choice(n, size=num_image_themes, replace=False)
    mu = pooled[rows]
    centered = pooled - pooled.mean(axis=0)
    cov = centered.T @ centered / n + jitter * np.eye(pooled.shape[1])
    sigma = np.broadcast_to(cov, (num_image_themes, *cov.shape)).copy()
    alpha = np.ones((num_task_themes, num_image_themes))
    delta = np.full(num_task_themes, float(delta_value))
    return ThemeModel(mu, sigma, alpha, delta)


def save_model(model: ThemeModel, path) -> None:
    """Write a JSON checkpoint; floats keep full round-trip precision."""
    payload = {
        "version": 1,
        "L": model.L,
        "K": model.K,
        "D": model.D,
        "delta": model.delta.tolist(),
        "alpha": model.alpha.tolist(),
        "mu": model.mu.tolist(),
        "sigma": model.sigma.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_model(path) -> ThemeModel:
    """Read a JSON checkpoint, re-deriving factorizations and re-validating."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    if payload.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
    for key in ("L", "K", "D", "delta", "alpha", "mu", "sigma"):
        if key not in payload:
            raise CheckpointError(f"checkpoint missing field {key!r}")
    L, K, D = payload["L"], payload["K"], payload["D"]
    try:
        model = ThemeModel(payload["mu"], payload["sigma"], payload["alpha"], payload["delta"])
    except (ModelError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint parameters: {exc}") from exc
    if (model.L, model.K, model.D) != (L, K, D):
        raise CheckpointError(
            f"checkpoint dims (L={L}, K={K}, D={D}) disagree with arrays "
            f"(L={model.L}, K={model.K}, D={model.D})"
        )
    return model


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for online training; validated on construction.

    tau0/tau1 set the step-size schedule rho_b = (tau0 + b)^(-tau1); tau1
    must lie in (0.5, 1] so the schedule's steps are square-summable but not
    summable, which is what lets the stochastic updates settle.
    """

    tau0: float = 100.0
    tau1: float = 0.51
    batch_size: int = 500
    e_tol: float = 1e-3
    max_e_iters: int = 100
    jitter: float = DEFAULT_JITTER
    seed: int = 0
    max_batches: int = 100

    def __post_init__(self):
        if self.tau0 < 0:
            raise ValueError(f"tau0 must be >= 0, got {self.tau0}")
        if not 0.5 < self.tau1 <= 1.0:
            raise ValueError(f"tau1 must lie in (0.5, 1], got {self.tau1}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.e_tol <= 0:
            raise ValueError(f"e_tol must be positive, got {self.e_tol}")
        if self.max_e_iters < 1:
            raise ValueError(f"max_e_iters must be >= 1, got {self.max_e_iters}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        if self.max_batches < 1:
            raise ValueError(f"max_batches must be >= 1, got {self.max_batches}")
