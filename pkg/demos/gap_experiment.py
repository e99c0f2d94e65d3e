"""How far does the LOOCV choice fall from the oracle as n grows?

Runs the optimality-gap experiment: a fixed design per n, 50 noise
redraws, and the excess error MSE(k_tilde) - MSE(k*) for each. The median
gap should shrink with n and the median ratio should approach 1.
"""

from knn_loocv import ExperimentSpec, SyntheticSpec, gap_experiment

spec = ExperimentSpec(
    data_spec=SyntheticSpec(n=100, d=1, function_id="lipschitz-sine", noise_sd=1.0),
    n_grid=(100, 400, 1600),
    replicates=50,
    master_seed=0,
)
report = gap_experiment(spec)

print("    n  k*  median k~  median gap  median ratio")
for s in report.summaries:
    print(f"{s['n']:5d} {s['k_star']:3d}  {s['median_k_tilde']:9.1f}  {s['median_gap']:.3e}"
          f"  {s['median_ratio']:.4f}")
