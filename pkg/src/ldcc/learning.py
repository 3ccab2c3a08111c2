"""Online learning of the shared themes.

Each batch runs independent E-steps, pools responsibility-weighted moments
into one M-step estimate of the Gaussian themes, builds a Newton step for
the Dirichlet rows alpha from the batch posteriors, and blends everything
into the running model with step size rho_b = (tau0 + b)^(-tau1).

Sufficient statistics are raw moments (count, weighted sum, weighted second
moment), so pooling tasks is an associative sum and a full batch reproduces
the exact M-step.  The alpha step solves H dx = g per row through the
rank-one structure H = diag(q) + u 11^T, never forming H.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NumericError
from .inference import dirichlet_expected_log, elbo, run_estep
from .model import ThemeModel, TrainConfig, init_model
from .special import digamma, trigamma
from .streams import shuffle_stream

logger = logging.getLogger(__name__)

_ALPHA_FLOOR = 1e-6
_MAX_HALVINGS = 20
_EMPTY_THEME_MASS = 1e-8
_SINGULAR_REL_TOL = 1e-12


@dataclass
class LocalThemeStats:
    """Pooled responsibility-weighted Gaussian moments.

    count[k] is the responsibility mass on theme k; weighted_sum is (K, D);
    scatter holds raw second moments (K, D, D).  Sums of these across
    disjoint task sets are the stats of the union.
    """

    count: np.ndarray
    weighted_sum: np.ndarray
    scatter: np.ndarray


def accumulate_stats(tasks, states) -> LocalThemeStats:
    """Sum per-task moments over a batch, in task order."""
    if len(tasks) != len(states):
        raise ValueError(f"{len(tasks)} tasks but {len(states)} states")
    if not tasks:
        raise ValueError("cannot accumulate statistics over an empty batch")
    dim = tasks[0].dimension
    num_themes = states[0].gamma.shape[1]
    count = np.zeros(num_themes)
    weighted_sum = np.zeros((num_themes, dim))
    scatter = np.zeros((num_themes, dim, dim))
    for task, state in zip(tasks, states):
        if task.dimension != dim:
            raise ValueError(f"task {task.id!r} dimension {task.dimension} != {dim}")
        x, _ = task.stacked()
        r_all = np.concatenate(state.r)
        if r_all.shape != (x.shape[0], num_themes):
            raise ValueError(
                f"state for task {task.id!r} has responsibility shape "
                f"{r_all.shape}, expected {(x.shape[0], num_themes)}"
            )
        count += r_all.sum(axis=0)
        weighted_sum += r_all.T @ x
        scatter += np.einsum("nk,ni,nj->kij", r_all, x, x)
    return LocalThemeStats(count, weighted_sum, scatter)


def local_mstep(stats: LocalThemeStats, jitter: float):
    """Maximum-likelihood Gaussian themes from pooled moments.

    Returns (means, covariances, active): themes whose responsibility mass
    is below 1e-8 are marked inactive and get placeholder values; callers
    keep the previous model values for those themes.
    """
    active = stats.count > _EMPTY_THEME_MASS
    safe = np.where(active, stats.count, 1.0)
    means = stats.weighted_sum / safe[:, None]
    covs = stats.scatter / safe[:, None, None] - np.einsum("ki,kj->kij", means, means)
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    dim = means.shape[1]
    covs = covs + jitter * np.eye(dim)
    if not active.all():
        means = np.where(active[:, None], means, 0.0)
        covs = np.where(active[:, None, None], covs, np.eye(dim))
    return means, covs, active


def _eta_moments(states, alpha):
    """Batch sums S_l = sum eta_dcl and T_lk = sum eta_dcl E[ln theta_dck]."""
    num_rows, num_themes = alpha.shape
    mass = np.zeros(num_rows)
    weighted_log_theta = np.zeros((num_rows, num_themes))
    for state in states:
        mass += state.eta.sum(axis=0)
        weighted_log_theta += state.eta.T @ dirichlet_expected_log(state.gamma)
    return mass, weighted_log_theta


def alpha_gradient(states, alpha) -> np.ndarray:
    """Gradient of the eta-weighted Dirichlet log-likelihood in alpha.

    g_lk = sum_{d,c} eta_dcl [psi(sum_k' alpha_lk') - psi(alpha_lk)
                              + E ln theta_dck]
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    mass, weighted_log_theta = _eta_moments(states, alpha)
    centered = digamma(alpha.sum(axis=1))[:, None] - digamma(alpha)
    return mass[:, None] * centered + weighted_log_theta


@dataclass
class AlphaNewtonWork:
    """Per-row pieces of the Newton system H = diag(q) + u 11^T.

    q_diag entries are negative wherever the row carries mass; u is the
    positive rank-one coefficient; b is the Sherman-Morrison offset (zero
    for rows where the rank-one correction is singular or massless, which
    degrades those rows to the diagonal-only direction g/q).
    """

    gradient: np.ndarray
    q_diag: np.ndarray
    u: np.ndarray
    b: np.ndarray
    active_rows: np.ndarray


def alpha_newton_work(states, alpha) -> AlphaNewtonWork:
    """Assemble gradient, Hessian diagonal, and rank-one terms per row."""
    alpha = np.asarray(alpha, dtype=np.float64)
    mass, weighted_log_theta = _eta_moments(states, alpha)
    active = mass > 0.0
    centered = digamma(alpha.sum(axis=1))[:, None] - digamma(alpha)
    gradient = mass[:, None] * centered + weighted_log_theta
    gradient = np.where(active[:, None], gradient, 0.0)
    q_diag = np.where(active[:, None], -mass[:, None] * trigamma(alpha), -1.0)
    u = np.where(active, mass * trigamma(alpha.sum(axis=1)), 0.0)

    inv_u = np.where(u > 0.0, 1.0 / np.where(u > 0.0, u, 1.0), 0.0)
    inv_q = 1.0 / q_diag
    sum_inv_q = inv_q.sum(axis=1)
    denom = inv_u + sum_inv_q
    # inv_u > 0 and sum_inv_q < 0 can cancel; a (near-)singular rank-one
    # correction degrades to the diagonal-only direction via b = 0.
    singular = np.abs(denom) <= _SINGULAR_REL_TOL * (inv_u + np.abs(sum_inv_q))
    numer = (gradient * inv_q).sum(axis=1)
    b = np.where(active & ~singular, numer / np.where(singular, 1.0, denom), 0.0)
    return AlphaNewtonWork(gradient, q_diag, u, b, active)


def alpha_newton_direction(work: AlphaNewtonWork) -> np.ndarray:
    """Solve H dx = g per row: dx_k = (g_k - b) / q_kk."""
    direction = (work.gradient - work.b[:, None]) / work.q_diag
    return np.where(work.active_rows[:, None], direction, 0.0)


def learning_rate(tau0: float, tau1: float, batch_index: int) -> float:
    """Step size (tau0 + b)^(-tau1) for 1-indexed batch b."""
    if batch_index < 1:
        raise ValueError(f"batch_index is 1-based, got {batch_index}")
    if tau0 < 0:
        raise ValueError(f"tau0 must be >= 0, got {tau0}")
    if not 0.5 < tau1 <= 1.0:
        raise ValueError(f"tau1 must lie in (0.5, 1], got {tau1}")
    return float((tau0 + batch_index) ** -tau1)


def _damped_alpha_step(alpha_row, step_row):
    """Halve a row's Newton step until the row stays positive, then floor."""
    step = step_row.copy()
    for _ in range(_MAX_HALVINGS):
        if (alpha_row - step > 0).all():
            break
        step *= 0.5
    return np.maximum(alpha_row - step, _ALPHA_FLOOR)


def online_update(model, means, covs, newton_direction, rho, active=None) -> ThemeModel:
    """Blend batch estimates into the model with step size rho.

    Gaussian themes move along the convex combination (1 - rho) old +
    rho new; inactive themes (no batch mass) keep their previous values.
    alpha takes a damped Newton step alpha - rho * direction, floored
    entrywise.  The result is re-validated and re-factorized.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    newton_direction = np.asarray(newton_direction, dtype=np.float64)
    if active is None:
        active = np.ones(model.K, dtype=bool)
    if not active.all():
        logger.warning(
            "themes %s received no responsibility mass; keeping previous values",
            np.flatnonzero(~active).tolist(),
        )
        means = np.where(active[:, None], means, model.mu)
        covs = np.where(active[:, None, None], covs, model.sigma)
    new_mu = (1.0 - rho) * model.mu + rho * means
    new_sigma = (1.0 - rho) * model.sigma + rho * covs
    new_alpha = np.vstack(
        [
            _damped_alpha_step(model.alpha[l], rho * newton_direction[l])
            for l in range(model.L)
        ]
    )
    try:
        return model.with_updates(mu=new_mu, sigma=new_sigma, alpha=new_alpha)
    except ModelError as exc:
        raise NumericError(f"online update produced an invalid model: {exc}") from exc


@dataclass
class TrainLogRow:
    """One batch's diagnostics."""

    batch: int
    rho: float
    mean_elbo: float
    alpha_min: float
    alpha_max: float
    estep_iters_mean: float


def write_training_log(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["batch", "rho", "mean_elbo", "alpha_min", "alpha_max", "estep_iters_mean"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.batch,
                    repr(row.rho),
                    repr(row.mean_elbo),
                    repr(row.alpha_min),
                    repr(row.alpha_max),
                    repr(row.estep_iters_mean),
                ]
            )


def _batch_estep(tasks, model, config, threads):
    """E-steps for a batch; results gathered in task order regardless of threads."""

    def work(task):
        state = run_estep(task, model, config)
        return state, elbo(task, state, model)

    if threads is not None and threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(task) for task in tasks]
    states = [s for s, _ in results]
    elbos = [e for _, e in results]
    return states, elbos


def train(tasks, num_task_themes, num_image_themes, config: TrainConfig,
          delta: float = 0.5, threads: int | None = 1):
    """Online variational training over a task collection.

    Tasks are visited in a seed-shuffled order, in consecutive mini-batches
    of config.batch_size cycling through the collection, for
    config.max_batches batches.  Returns the final model and the per-batch
    diagnostic rows.
    """
    model = init_model(
        tasks, num_task_themes, num_image_themes, delta, config.seed,
        jitter=config.jitter,
    )
    order = shuffle_stream(config.seed).permutation(len(tasks))
    log_rows = []
    cursor = 0
    for batch_index in range(1, config.max_batches + 1):
        if config.batch_size >= len(tasks):
            batch_ids = order
        else:
            take = []
            while len(take) < config.batch_size:
                take.append(order[cursor])
                cursor = (cursor + 1) % len(order)
            batch_ids = np.asarray(take)
        batch = [tasks[int(i)] for i in batch_ids]

        states, elbos = _batch_estep(batch, model, config, threads)
        stats = accumulate_stats(batch, states)
        means, covs, active = local_mstep(stats, config.jitter)
        work = alpha_newton_work(states, model.alpha)
        direction = alpha_newton_direction(work)
        rho = learning_rate(config.tau0, config.tau1, batch_index)
        model = online_update(model, means, covs, direction, rho, active=active)

        clamps = sum(s.gamma_clamps for s in states)
        if clamps:
            logger.debug("batch %d: %d gamma entries clamped", batch_index, clamps)
        log_rows.append(
            TrainLogRow(
                batch=batch_index,
                rho=rho,
                mean_elbo=float(np.mean(elbos)),
                alpha_min=float(model.alpha.min()),
                alpha_max=float(model.alpha.max()),
                estep_iters_mean=float(np.mean([s.iterations for s in states])),
            )
        )
        logger.debug(
            "batch %d rho=%.4g mean_elbo=%.6g", batch_index, rho, log_rows[-1].mean_elbo
        )
    return model, log_rows
