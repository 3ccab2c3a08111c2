"""
=============================================
Distance vs transfer-accuracy diagram
=============================================

Bins tasks by their embedding distance to a reference set and reports mean
accuracy per bin.  Accuracies here are simulated with a known downward
trend, so the diagram should reproduce it: nearby tasks transfer better.
"""

import numpy as np

from ldcc.similarity import correlation_diagram

rng = np.random.default_rng(5)
num_tasks = 400

distances = rng.gamma(2.0, 1.5, size=num_tasks)
accuracies = np.clip(
    0.92 - 0.06 * distances + rng.normal(0.0, 0.02, size=num_tasks), 0.0, 1.0
)

bins = correlation_diagram(distances, accuracies, num_bins=8)

print("bin   distance range    mean dist   mean acc   n")
for b in bins:
    print("%3d   (%5.2f, %5.2f]   %9.2f   %8.3f   %3d" % (
        b.index, b.low, b.high, b.mean_distance, b.mean_accuracy, b.count))

drop = bins[0].mean_accuracy - bins[-1].mean_accuracy
print("\naccuracy falls by %.3f from the closest bin to the farthest" % drop)
