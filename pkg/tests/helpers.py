"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (explicit
loops, scipy.special, explicit matrix inverses) so that agreement with the
library is evidence of correctness rather than shared code.
"""

import numpy as np
from scipy import special as sp

from ldcc.data import Task
from ldcc.inference import VariationalState


def naive_elbo_terms(task, state, model):
    """Nine bound terms via quadruple loops, scipy digamma, explicit inverses."""
    C = task.num_classes
    K, D, L = model.K, model.D, model.L

    def dir_elog(u):
        return sp.psi(u) - sp.psi(np.sum(u))

    log_px = 0.0
    for c in range(C):
        block = task.classes[c].astype(np.float64)
        for n in range(block.shape[0]):
            for k in range(K):
                inv = np.linalg.inv(model.sigma[k])
                _, logdet = np.linalg.slogdet(model.sigma[k])
                diff = block[n] - model.mu[k]
                quad = float(diff @ inv @ diff)
                log_px += state.r[c][n, k] * (
                    -0.5 * (D * np.log(2 * np.pi) + logdet + quad)
                )

    log_pz = 0.0
    for c in range(C):
        elog_theta = dir_elog(state.gamma[c])
        for n in range(state.r[c].shape[0]):
            for k in range(K):
                log_pz += state.r[c][n, k] * elog_theta[k]

    log_ptheta = 0.0
    for c in range(C):
        elog_theta = dir_elog(state.gamma[c])
        for l in range(L):
            ln_beta = float(np.sum(sp.gammaln(model.alpha[l])) - sp.gammaln(np.sum(model.alpha[l])))
            inner = -ln_beta
            for k in range(K):
                inner += (model.alpha[l, k] - 1.0) * elog_theta[k]
            log_ptheta += state.eta[c, l] * inner

    elog_phi = dir_elog(state.lam)
    log_py = 0.0
    for c in range(C):
        for l in range(L):
            log_py += state.eta[c, l] * elog_phi[l]

    ln_beta_delta = float(np.sum(sp.gammaln(model.delta)) - sp.gammaln(np.sum(model.delta)))
    log_pphi = -ln_beta_delta
    for l in range(L):
        log_pphi += (model.delta[l] - 1.0) * elog_phi[l]

    log_qz = 0.0
    for c in range(C):
        for n in range(state.r[c].shape[0]):
            for k in range(K):
                v = state.r[c][n, k]
                if v > 0:
                    log_qz += v * np.log(v)

    log_qtheta = 0.0
    for c in range(C):
        elog_theta = dir_elog(state.gamma[c])
        ln_beta = float(np.sum(sp.gammaln(state.gamma[c])) - sp.gammaln(np.sum(state.gamma[c])))
        log_qtheta += -ln_beta
        for k in range(K):
            log_qtheta += (state.gamma[c, k] - 1.0) * elog_theta[k]

    log_qy = 0.0
    for c in range(C):
        for l in range(L):
            v = state.eta[c, l]
            if v > 0:
                log_qy += v * np.log(v)

    ln_beta_lam = float(np.sum(sp.gammaln(state.lam)) - sp.gammaln(np.sum(state.lam)))
    log_qphi = -ln_beta_lam
    for l in range(L):
        log_qphi += (state.lam[l] - 1.0) * elog_phi[l]

    return {
        "log_px": log_px,
        "log_pz": log_pz,
        "log_ptheta": log_ptheta,
        "log_py": log_py,
        "log_pphi": log_pphi,
        "log_qz": log_qz,
        "log_qtheta": log_qtheta,
        "log_qy": log_qy,
        "log_qphi": log_qphi,
    }


def alpha_objective(states, alpha):
    """Eta-weighted Dirichlet log-likelihood whose gradient the library claims."""
    alpha = np.asarray(alpha, dtype=np.float64)
    total = 0.0
    for state in states:
        for c in range(state.gamma.shape[0]):
            elog_theta = sp.psi(state.gamma[c]) - sp.psi(np.sum(state.gamma[c]))
            for l in range(alpha.shape[0]):
                inner = sp.gammaln(np.sum(alpha[l])) - np.sum(sp.gammaln(alpha[l]))
                inner += np.sum((alpha[l] - 1.0) * elog_theta)
                total += state.eta[c, l] * inner
    return float(total)


def fd_alpha_gradient(states, alpha, step=1e-5):
    """Central finite differences of alpha_objective."""
    alpha = np.asarray(alpha, dtype=np.float64)
    grad = np.zeros_like(alpha)
    for l in range(alpha.shape[0]):
        for k in range(alpha.shape[1]):
            hi = alpha.copy()
            lo = alpha.copy()
            hi[l, k] += step
            lo[l, k] -= step
            grad[l, k] = (alpha_objective(states, hi) - alpha_objective(states, lo)) / (
                2 * step
            )
    return grad


def dense_newton_solve(work):
    """Solve (diag(q) + u 11^T) x = g per row with a dense linear solver."""
    L, K = work.gradient.shape
    out = np.zeros((L, K))
    for l in range(L):
        H = np.diag(work.q_diag[l]) + work.u[l] * np.ones((K, K))
        out[l] = np.linalg.solve(H, work.gradient[l])
    return out


def random_posterior_instance(rng, C=3, N=4, K=3, L=2, D=2):
    """A random but valid (task, state, model-ish arrays) tuple for oracles."""
    blocks = [rng.normal(size=(N, D)).astype(np.float32) for _ in range(C)]
    task = Task(f"oracle_{rng.integers(1 << 30)}", blocks)
    r = [rng.dirichlet(np.ones(K), size=N) for _ in range(C)]
    gamma = rng.uniform(0.2, 8.0, size=(C, K))
    eta = rng.dirichlet(np.ones(L), size=C)
    lam = rng.uniform(0.2, 6.0, size=L)
    state = VariationalState(r, gamma, eta, lam)
    return task, state


def mc_dirichlet_kl(a, b, num_samples, rng):
    """Monte Carlo KL estimate and its standard error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = rng.dirichlet(a, size=num_samples)
    x = np.clip(x, 1e-12, None)

    def logpdf(theta, conc):
        ln_beta = np.sum(sp.gammaln(conc)) - sp.gammaln(np.sum(conc))
        return -ln_beta + (np.log(theta) * (conc - 1.0)).sum(axis=1)

    values = logpdf(x, a) - logpdf(x, b)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(num_samples))


def reference_gmm_em(x, num_components, means_init, iters=500, jitter=1e-6, tol=1e-12):
    """Plain EM for a Gaussian mixture with mixing weights.

    Standard alternation: responsibilities from weighted densities, then
    weight/mean/covariance updates with a jitter ridge, exactly the
    textbook recipe.
    """
    x = np.asarray(x, dtype=np.float64)
    n, dim = x.shape
    means = np.asarray(means_init, dtype=np.float64).copy()
    covs = np.stack([np.cov(x.T, bias=True) + jitter * np.eye(dim)] * num_components)
    weights = np.full(num_components, 1.0 / num_components)
    prev = None
    for _ in range(iters):
        log_resp = np.empty((n, num_components))
        for k in range(num_components):
            inv = np.linalg.inv(covs[k])
            _, logdet = np.linalg.slogdet(covs[k])
            diff = x - means[k]
            quad = np.einsum("ni,ij,nj->n", diff, inv, diff)
            log_resp[:, k] = np.log(weights[k]) - 0.5 * (
                dim * np.log(2 * np.pi) + logdet + quad
            )
        shift = log_resp.max(axis=1, keepdims=True)
        resp = np.exp(log_resp - shift)
        resp /= resp.sum(axis=1, keepdims=True)
        mass = resp.sum(axis=0)
        weights = mass / n
        means = (resp.T @ x) / mass[:, None]
        for k in range(num_components):
            diff = x - means[k]
            covs[k] = (resp[:, k, None] * diff).T @ diff / mass[k] + jitter * np.eye(dim)
        if prev is not None and np.abs(means - prev).max() < tol:
            break
        prev = means.copy()
    return weights, means, covs, resp


def best_permutation(reference, candidate):
    """Permutation of candidate rows minimizing total distance to reference."""
    from itertools import permutations

    K = reference.shape[0]
    best, best_cost = None, np.inf
    for perm in permutations(range(K)):
        cost = sum(
            np.linalg.norm(reference[k] - candidate[perm[k]]) for k in range(K)
        )
        if cost < best_cost:
            best, best_cost = perm, cost
    return list(best)
