"""Norms of the Gram matrix A behind the LOOCV score.

The LOOCV score is y^T A y with A = B^T B / n. For fixed k, n * |A|_F^2
and n * |A|_2 stay bounded as n grows; this script prints both across n.
"""

from knn_loocv import SyntheticSpec, build_a, build_b, build_table, frobenius_sq, generate_synthetic
from knn_loocv import two_norm

k = 5
print(f"k={k}")
print("    n   n|A|_F^2   n|A|_2")
for n in (100, 400, 1600, 6400):
    data = generate_synthetic(SyntheticSpec(n=n, d=2, seed=1)).base
    gram = build_a(build_b(build_table(data, k_max=k), k))
    print(f"{n:5d}   {n * frobenius_sq(gram):8.4f}   {n * two_norm(gram, tol=1e-6):6.4f}")
