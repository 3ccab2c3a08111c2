"""
=============================================
Online training of shared themes
=============================================

Samples tasks from a known model, then trains a fresh model on minibatches
and checks how well the planted Gaussian themes are recovered.  Prints the
step-size schedule and the bound as training proceeds.
"""

from itertools import permutations
from time import time

import numpy as np

from ldcc.data import generate_synthetic
from ldcc.learning import train
from ldcc.model import ThemeModel, TrainConfig

planted = ThemeModel(
    mu=np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]]),
    sigma=np.stack([np.eye(2)] * 3),
    alpha=np.array([[6.0, 1.0, 1.0], [1.0, 1.0, 6.0]]),
    delta=np.array([0.01, 0.01]),
)

print("Generating 80 tasks...")
collection, latents = generate_synthetic(planted, 80, 5, 16, seed=3)

# A short tau0 lets the step size start near 0.3 instead of 0.01, which is
# plenty for a collection this small.
config = TrainConfig(batch_size=20, max_batches=60, seed=0, tau0=10.0)
print("Training (batch %d, %d batches)..." % (config.batch_size, config.max_batches))
t0 = time()
model, log = train(collection, planted.L, planted.K, config)
print("done in %.1fs" % (time() - t0))

print("\n batch   rho      mean bound   e-step iters")
for row in log[:: len(log) // 8]:
    print(" %5d   %.4f   %10.1f   %.1f" % (
        row.batch, row.rho, row.mean_elbo, row.estep_iters_mean))

# Theme labels are arbitrary, so align by the best permutation before
# measuring recovery error.
best = min(
    permutations(range(planted.K)),
    key=lambda p: sum(
        np.linalg.norm(planted.mu[k] - model.mu[p[k]]) for k in range(planted.K)
    ),
)
print("\nRecovered means (aligned to the planted themes):")
worst = 0.0
for k in range(planted.K):
    err = np.linalg.norm(planted.mu[k] - model.mu[best[k]])
    worst = max(worst, err)
    print("  planted %s   recovered %s   err %.3f" % (
        planted.mu[k], np.round(model.mu[best[k]], 3), err))
print("worst mean error: %.3f" % worst)

print("\nTask-theme concentrations (rows should favor different image themes):")
print(np.round(model.alpha[:, best], 2))
