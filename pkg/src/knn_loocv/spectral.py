"""The selector matrix B and Gram matrix A = B^T B / n behind the LOOCV score.

Row i of B has 1 on the diagonal and -1/k at each of the k neighbors of
point i. That makes ``B @ y`` the vector of leave-one-out residuals, so the
LOOCV score is ``y^T A y``. Everything here stays sparse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset
from .errors import ConvergenceError, ValidationError
from .neighbors import NeighborTable, _check_k, in_degree

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SelectorMatrix:
    k: int
    b: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def residuals(self, y) -> np.ndarray:
        return self.b @ np.asarray(y, dtype=np.float64)


class GramMatrix:
    """Symmetric PSD ``A = B^T B / n``.

    Built from its factor B, or wrapped around a ready matrix. The explicit
    sparse A is formed on first access to ``a``; products and quadratic
    forms go through B and never need it.
    """

    def __init__(self, selector: SelectorMatrix | None = None, a=None):
        if selector is None and a is None:
            raise ValidationError("GramMatrix needs a selector matrix or an explicit matrix")
        self.selector = selector
        if a is not None:
            self.__dict__["a"] = sp.csr_matrix(a)

    @cached_property
    def a(self) -> sp.csr_matrix:
        b = self.selector.b
        m = (b.T @ b).tocsr() / self.n
        # averaging with the transpose makes a_ij == a_ji bit for bit
        a = ((m + m.T) * 0.5).tocsr()
        a.sort_indices()
        return a

    @property
    def n(self) -> int:
        if self.selector is not None:
            return self.selector.n
        return self.a.shape[0]

    def diagonal(self) -> np.ndarray:
        if "a" not in self.__dict__ and self.selector is not None:
            b = self.selector.b
            return np.asarray(b.multiply(b).sum(axis=0)).ravel() / self.n
        return self.a.diagonal()

    def matvec(self, x):
        if self.selector is not None:
            b = self.selector.b
            return b.T @ (b @ x) / self.n
        return self.a @ x


def build_b(table: NeighborTable, k: int) -> SelectorMatrix:
    _check_k(k, table.k_max)
    n = table.n
    cols = np.empty((n, k + 1), dtype=np.int64)
    cols[:, 0] = np.arange(n)
    cols[:, 1:] = table.order[:, :k]
    vals = np.empty((n, k + 1))
    vals[:, 0] = 1.0
    vals[:, 1:] = -1.0 / k
    indptr = np.arange(0, n * (k + 1) + 1, k + 1)
    b = sp.csr_matrix((vals.ravel(), cols.ravel(), indptr), shape=(n, n))
    b.sort_indices()
    return SelectorMatrix(k, b)


def build_a(selector: SelectorMatrix) -> GramMatrix:
    return GramMatrix(selector)


def gram_from_table(table: NeighborTable, k: int) -> GramMatrix:
    return build_a(build_b(table, k))


def _as_sparse(a):
    if isinstance(a, GramMatrix):
        return a.a
    if sp.issparse(a):
        return a
    return sp.csr_matrix(np.asarray(a, dtype=np.float64))


def frobenius_sq(a) -> float:
    """Sum of squared entries of ``a``."""
    m = _as_sparse(a)
    data = m.tocsr().data
    return float(np.dot(data, data))


def trace(a) -> float:
    diag = a.diagonal() if isinstance(a, GramMatrix) else _as_sparse(a).diagonal()
    return float(diag.sum())


def two_norm(a, tol: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops once the remaining change in the Rayleigh quotient, extrapolated
    from its geometric convergence rate, is below ``tol`` relative.
    The start vector is a fixed seeded Gaussian: the all-ones vector lies in
    the kernel of A (rows of B sum to zero) and cannot be used. A result
    below the largest diagonal entry, which is a lower bound, triggers a
    restart from a fresh seed.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be > 0, got {tol}")
    if isinstance(a, GramMatrix):
        matvec, n, diag = a.matvec, a.n, a.diagonal()
    else:
        m = _as_sparse(a)
        matvec, n, diag = (lambda x: m @ x), m.shape[0], m.diagonal()
    floor = float(diag.max()) if n else 0.0
    if floor <= 0.0 and frobenius_sq(a) == 0.0:
        return 0.0

    residual = np.inf
    for attempt in range(4):
        rng = np.random.default_rng([seed, attempt])
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        lam = 0.0
        prev_step = None
        for _ in range(max_iter):
            ax = matvec(x)
            lam_new = float(x @ ax)
            norm = np.linalg.norm(ax)
            if norm == 0.0:
                break
            step = abs(lam_new - lam)
            # steps shrink geometrically at rate rho, so the distance still to
            # go is about step * rho / (1 - rho)
            if prev_step is not None and step <= 16 * np.finfo(float).eps * abs(lam_new):
                # at the rounding floor the rate estimate is noise
                converged = True
            elif prev_step:
                rho = step / prev_step
                converged = rho < 1.0 and step * rho <= tol * abs(lam_new) * (1.0 - rho)
            else:
                converged = False
            if converged:
                lam = lam_new
                residual = float(np.linalg.norm(ax - lam * x))
                break
            lam, prev_step = lam_new, step
            x = ax / norm
        else:
            residual = float(np.linalg.norm(matvec(x) - lam * x))
            raise ConvergenceError(
                f"power iteration did not converge in {max_iter} iterations "
                f"(residual {residual:.3e})", residual)
        if lam >= floor * (1.0 - tol):
            return lam
    raise ConvergenceError(
        f"power iteration stalled below the largest diagonal entry {floor:.6g}", residual)


def quadratic_form(a: GramMatrix, y) -> float:
    """``y^T A y``, evaluated as ``|B y|^2 / n`` when B is available."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.n,):
        raise ValidationError(f"vector length {y.shape} does not match n={a.n}")
    if a.selector is not None:
        r = a.selector.b @ y
        return float(r @ r) / a.n
    return float(y @ (a.a @ y))


def expected_quadratic_noise(k: int, sigma_sq: float) -> float:
    """Mean of ``eps^T A eps`` for i.i.d. noise of variance ``sigma_sq``: ``(1 + 1/k) sigma_sq``."""
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k}")
    if sigma_sq < 0:
        raise ValidationError(f"sigma_sq must be >= 0, got {sigma_sq}")
    return (1.0 + 1.0 / k) * sigma_sq


def row_inner_products(selector: SelectorMatrix) -> sp.csr_matrix:
    """Sparse matrix of row inner products <b_i, b_j>."""
    b = selector.b
    return (b @ b.T).tocsr()


def overlap_counts(selector: SelectorMatrix, atol: float = 1e-12) -> np.ndarray:
    """Per row i, the number of j != i with <b_i, b_j> != 0."""
    g = row_inner_products(selector).tocoo()
    hit = (g.row != g.col) & (np.abs(g.data) > atol)
    return np.bincount(g.row[hit], minlength=selector.n)


def overlap_bound(table: NeighborTable, k: int) -> np.ndarray:
    """Upper bound on :func:`overlap_counts` from in-degrees.

    A row j overlaps row i only if ``{j} + N_k(j)`` meets ``{i} + N_k(i)``,
    and each shared index l can be reached from at most ``1 + indeg(l)`` rows.
    """
    deg = in_degree(table, k)
    support = np.concatenate([np.arange(table.n)[:, None], table.order[:, :k]], axis=1)
    return (1 + deg[support]).sum(axis=1) - 1


def diagnostic_report(data: Dataset, table: NeighborTable, k: int, tol: float = 1e-8) -> dict:
    gram = gram_from_table(table, k)
    n = data.n
    fro = frobenius_sq(gram)
    two = two_norm(gram, tol)
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "n": n,
        "d": data.d,
        "k": int(k),
        "frobenius_sq": fro,
        "two_norm": two,
        "trace": trace(gram),
        "max_in_degree": int(in_degree(table, k).max()),
        "n_frobenius_sq": n * fro,
        "n_two_norm": n * two,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
