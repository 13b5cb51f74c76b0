"""Verify the analytic gradients of every loss term against finite differences.

Every term of the objective ships with hand-derived reverse-mode gradients;
this demo probes random parameter subsets of random small models and prints
the worst relative error per term (the full 50-config suite runs in the
acceptance tests and from the CLI via `vidatlas check-grad`).
"""

import numpy as np

from vidatlas import gradcheck, losses

print("finite-difference spot check (3 random configs per term)")
print("-" * 58)
results = gradcheck.gradient_suite(
    seed=0, n_configs=3, params_per_config=10,
    progress=lambda term, err: print(f"  {term:20s} max rel err = {err:.2e}"),
)
print("-" * 58)
worst = max(results.values())
print(f"worst over all terms: {worst:.2e}  ({'OK' if worst < 1e-6 else 'BROKEN'})")

print()
print("rigidity energy sanity:")
eye = losses.rigidity_energy(np.eye(2))
print(f"  E(I)  = {eye:.6f}   (minimum, 2*sqrt(2) = {2 * np.sqrt(2):.6f})")
print(f"  E(2I) = {losses.rigidity_energy(2 * np.eye(2)):.6f}")
rng = np.random.default_rng(0)
j = rng.normal(size=(20000, 2, 2))
e = losses.rigidity_energy(j)
print(f"  min over 20k random Jacobians = {e.min():.6f} (never below the bound)")
