"""Choose k for k-NN regression by leave-one-out on a noisy sine.

Draws n points on [0, 1], computes the LOOCV curve for every k at once,
and compares the selected k with the oracle k* that minimizes the true
fixed-design error.
"""

import numpy as np

from knn_loocv import SyntheticSpec, build_table, exact_mse_curve, generate_synthetic, loocv_curve

spec = SyntheticSpec(n=800, d=1, function_id="lipschitz-sine", noise_sd=0.5, seed=7)
labeled = generate_synthetic(spec)
data = labeled.base

# one neighbor table serves every k up to k_max
table = build_table(data, k_max=200)
curve = loocv_curve(data, table)
mse = exact_mse_curve(labeled, table)
k_star = int(np.argmin(mse)) + 1

print(f"n={data.n}, k_max={curve.k_max}")
print(f"LOOCV picks k={curve.k_tilde}, f(k)={curve(curve.k_tilde):.4f}")
print(f"oracle k*={k_star}, MSE(k*)={mse[k_star - 1]:.5f}")
print(f"MSE at the LOOCV choice: {mse[curve.k_tilde - 1]:.5f}")

print("\n  k     f(k)    MSE(k)")
for k in (1, 2, 5, 10, 20, 50, 100, 200):
    print(f"{k:4d}  {curve(k):.4f}  {mse[k - 1]:.5f}")
