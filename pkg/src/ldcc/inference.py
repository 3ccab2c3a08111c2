"""Per-task variational inference.

The mean-field posterior for one task factorizes into per-sample image-theme
responsibilities r, per-class Dirichlet parameters gamma and theme weights
eta, and a task-level Dirichlet parameter lambda.  One sweep updates the
blocks in the order r -> gamma -> eta -> lambda, each update being the exact
coordinate maximizer of the evidence lower bound given the others, so the
bound never decreases across sweeps.

`run_estep` iterates sweeps through a class-vectorized path equivalent to
composing the per-class update functions (the test suite asserts the
equivalence); sweeps stop when the mean absolute change of lambda drops
below the configured tolerance.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, NumericError
from .special import (
    digamma,
    log_beta_dirichlet,
    log_beta_rows,
    xlogy,
)
from .streams import estep_stream

_GAMMA_FLOOR = 1e-8
_INIT_NOISE_CONCENTRATION = 100.0


def dirichlet_expected_log(u):
    """E[ln x] under Dirichlet(u): psi(u_k) - psi(sum u).

    Accepts a single parameter vector or a stack of rows.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        return digamma(u) - digamma(u.sum())
    if u.ndim == 2:
        return digamma(u) - digamma(u.sum(axis=1))[:, None]
    raise ValueError(f"expected a vector or matrix, got ndim={u.ndim}")


class VariationalState:
    """Posterior parameters for one task.

    r: per class, an (N_c, K) row-normalized responsibility matrix.
    gamma: (C, K) per-class Dirichlet parameters over image themes.
    eta: (C, L) per-class task-theme weights, row-normalized.
    lam: (L,) task-level Dirichlet parameter; the task's embedding.
    """

    def __init__(self, r, gamma, eta, lam, iterations=0, converged=False, gamma_clamps=0):
        self.r = list(r)
        self.gamma = np.asarray(gamma, dtype=np.float64)
        self.eta = np.asarray(eta, dtype=np.float64)
        self.lam = np.asarray(lam, dtype=np.float64)
        self.iterations = iterations
        self.converged = converged
        self.gamma_clamps = gamma_clamps

    @property
    def num_classes(self) -> int:
        return self.gamma.shape[0]


def _softmax_rows(logits):
    """Row-normalize exp(logits) via a max shift; rejects degenerate rows."""
    if np.isnan(logits).any():
        raise NumericError("NaN logits in a normalization step")
    m = logits.max(axis=1)
    if (m == -np.inf).any():
        raise NumericError("a normalization row had all -inf logits")
    shifted = np.exp(logits - m[:, None])
    return shifted / shifted.sum(axis=1)[:, None]


def update_r(task, c, state, model, log_pdfs=None):
    """Responsibilities for class c: softmax of E[ln theta] + Gaussian log-pdf."""
    if log_pdfs is None:
        log_pdfs = model.log_pdfs(task.classes[c].astype(np.float64))
    expected_log_theta = dirichlet_expected_log(state.gamma[c])
    return _softmax_rows(expected_log_theta[None, :] + log_pdfs)


def update_gamma(state, c, alpha):
    """Dirichlet parameter for class c: 1 + sum_n r + eta-mixed (alpha - 1).

    Rows of alpha below one can push entries nonpositive; those are clamped
    to a small floor and counted on the state.
    """
    gamma = 1.0 + state.r[c].sum(axis=0) + state.eta[c] @ (alpha - 1.0)
    bad = gamma <= 0.0
    if bad.any():
        state.gamma_clamps += int(bad.sum())
        gamma = np.where(bad, _GAMMA_FLOOR, gamma)
    return gamma


def update_eta(state, c, model):
    """Task-theme weights for class c.

    Logits combine E[ln phi], each theme row's Dirichlet log-normalizer, and
    that row's affinity for the class's expected log image-theme profile.
    """
    expected_log_theta = dirichlet_expected_log(state.gamma[c])
    expected_log_phi = dirichlet_expected_log(state.lam)
    log_norm = log_beta_rows(model.alpha)
    logits = expected_log_phi - log_norm + (model.alpha - 1.0) @ expected_log_theta
    return _softmax_rows(logits[None, :])[0]


def update_lambda(state, delta):
    """Task-level Dirichlet parameter: delta + per-theme eta mass."""
    return np.asarray(delta, dtype=np.float64) + state.eta.sum(axis=0)


def _task_geometry(task):
    x, offsets = task.stacked()
    counts = np.asarray(task.counts)
    class_index = np.repeat(np.arange(task.num_classes), counts)
    return x, offsets, class_index


def _class_sums(r_all, offsets):
    return np.add.reduceat(r_all, offsets[:-1], axis=0)


def _split_rows(r_all, offsets):
    return [r_all[offsets[c] : offsets[c + 1]] for c in range(len(offsets) - 1)]


def _clamp_gamma(gamma, state):
    bad = gamma <= 0.0
    if bad.any():
        state.gamma_clamps += int(bad.sum())
        gamma = np.where(bad, _GAMMA_FLOOR, gamma)
    return gamma


def run_estep(task, model, config, rng=None):
    """Fit the per-task posterior; returns the final VariationalState.

    Responsibilities and theme weights start uniform plus symmetric
    Dirichlet(100) noise (the noise breaks theme symmetry), gamma and lambda
    from one application of their update rules.  Sweeps run until the
    mean absolute lambda change falls below config.e_tol or
    config.max_e_iters is reached; `state.converged` records which.

    The noise stream is keyed by (config.seed, digest of task.id), so the
    same seed and task give the same state regardless of batch order.
    """
    if task.dimension != model.D:
        raise DataError(
            f"task {task.id!r} has dimension {task.dimension}, model expects {model.D}"
        )
    if rng is None:
        rng = estep_stream(config.seed, task.id)
    x, offsets, class_index = _task_geometry(task)
    log_pdfs = model.log_pdfs(x)
    alpha_m1 = model.alpha - 1.0
    log_norm = log_beta_rows(model.alpha)
    delta = model.delta

    r_all = rng.standard_gamma(_INIT_NOISE_CONCENTRATION, (x.shape[0], model.K))
    r_all /= r_all.sum(axis=1)[:, None]
    eta = rng.standard_gamma(_INIT_NOISE_CONCENTRATION, (task.num_classes, model.L))
    eta /= eta.sum(axis=1)[:, None]

    state = VariationalState(
        _split_rows(r_all, offsets),
        np.empty((task.num_classes, model.K)),
        eta,
        np.empty(model.L),
    )
    state.gamma = _clamp_gamma(1.0 + _class_sums(r_all, offsets) + eta @ alpha_m1, state)
    state.lam = delta + eta.sum(axis=0)

    for it in range(1, config.max_e_iters + 1):
        expected_log_theta = dirichlet_expected_log(state.gamma)
        r_all = _softmax_rows(expected_log_theta[class_index] + log_pdfs)
        gamma = _clamp_gamma(
            1.0 + _class_sums(r_all, offsets) + state.eta @ alpha_m1, state
        )
        expected_log_theta = dirichlet_expected_log(gamma)
        expected_log_phi = dirichlet_expected_log(state.lam)
        eta = _softmax_rows(
            expected_log_phi[None, :] - log_norm[None, :] + expected_log_theta @ alpha_m1.T
        )
        lam = delta + eta.sum(axis=0)

        change = np.abs(lam - state.lam).mean()
        state.r = _split_rows(r_all, offsets)
        state.gamma = gamma
        state.eta = eta
        state.lam = lam
        state.iterations = it
        if change < config.e_tol:
            state.converged = True
            break
    return state


def elbo_terms(task, state, model, log_pdfs=None):
    """The nine evidence-lower-bound expectations for one task.

    Keys log_px, log_pz, log_ptheta, log_py, log_pphi are added and
    log_qz, log_qtheta, log_qy, log_qphi subtracted to form the bound.
    Entropy sums use the 0 ln 0 = 0 convention.
    """
    x, offsets, _ = _task_geometry(task)
    if log_pdfs is None:
        log_pdfs = model.log_pdfs(x)
    r_all = np.concatenate(state.r)
    counts = _class_sums(r_all, offsets)
    expected_log_theta = dirichlet_expected_log(state.gamma)
    expected_log_phi = dirichlet_expected_log(state.lam)
    alpha_m1 = model.alpha - 1.0
    log_norm = log_beta_rows(model.alpha)

    theta_affinity = expected_log_theta @ alpha_m1.T - log_norm[None, :]
    terms = {
        "log_px": float((r_all * log_pdfs).sum()),
        "log_pz": float((counts * expected_log_theta).sum()),
        "log_ptheta": float((state.eta * theta_affinity).sum()),
        "log_py": float((state.eta * expected_log_phi[None, :]).sum()),
        "log_pphi": float(
            -log_beta_dirichlet(model.delta)
            + ((model.delta - 1.0) * expected_log_phi).sum()
        ),
        "log_qz": float(xlogy(r_all, r_all).sum()),
        "log_qtheta": float(
            (-log_beta_rows(state.gamma)).sum()
            + ((state.gamma - 1.0) * expected_log_theta).sum()
        ),
        "log_qy": float(xlogy(state.eta, state.eta).sum()),
        "log_qphi": float(
            -log_beta_dirichlet(state.lam) + ((state.lam - 1.0) * expected_log_phi).sum()
        ),
    }
    return terms


def elbo(task, state, model, log_pdfs=None) -> float:
    """Evidence lower bound for one task under its variational state."""
    t = elbo_terms(task, state, model, log_pdfs=log_pdfs)
    return (
        t["log_px"]
        + t["log_pz"]
        + t["log_ptheta"]
        + t["log_py"]
        + t["log_pphi"]
        - t["log_qz"]
        - t["log_qtheta"]
        - t["log_qy"]
        - t["log_qphi"]
    )


def write_lambda_csv(path, ids, lambdas) -> None:
    """Task embeddings as CSV: task_id, lambda_1..lambda_L (full precision)."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 2 or lambdas.shape[0] != len(ids):
        raise DataError("lambda matrix must be (num tasks, L) matching ids")
    header = ["task_id"] + [f"lambda_{j + 1}" for j in range(lambdas.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for task_id, row in zip(ids, lambdas):
            writer.writerow([task_id] + [repr(float(v)) for v in row])


def read_lambda_csv(path):
    """Read a task-embedding CSV back as (ids, (n, L) array)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty lambda CSV") from None
        if len(header) < 2 or header[0] != "task_id":
            raise FormatError(f"{path}: expected header task_id,lambda_1,...")
        width = len(header) - 1
        ids, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise FormatError(f"{path}:{line_no}: expected {width + 1} fields")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
            ids.append(row[0])
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=np.float64)
    if (matrix <= 0).any() or not np.isfinite(matrix).all():
        raise FormatError(f"{path}: lambda entries must be positive and finite")
    return ids, matrix
