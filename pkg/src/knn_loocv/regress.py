"""Leave-one-out k-NN regression: the LOOCV curve over all k, selection of k, prediction.

The curve is computed in one pass per point. Walking down a point's neighbor
list keeps a running sum of neighbor responses, so the self-excluded k-NN mean
for every k comes out of a single cumulative sum. Squared residuals are then
added into the curve one point at a time in ascending index order, which keeps
the result reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, load_csv, write_csv
from .errors import ValidationError
from .neighbors import (NeighborTable, TieRule, _check_k, build_table, iter_chunks,
                        query_table, resolve_k_max)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LoocvCurve:
    """``f[k - 1]`` is the mean squared leave-one-out residual with ``k`` neighbors."""

    f: np.ndarray
    k_tilde: int
    k_max: int

    def __call__(self, k: int) -> float:
        _check_k(k, self.k_max)
        return float(self.f[k - 1])

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.k_max + 1)


def _squared_residuals(y_rows, y, order):
    """Squared residuals ``(y_i - S_k(i) / k)**2`` for k = 1..width, rows of ``order``."""
    sums = np.cumsum(y[order], axis=1)
    ks = np.arange(1, order.shape[1] + 1, dtype=np.float64)
    r = y_rows[:, None] - sums / ks
    return r * r


def _accumulate(total, sq):
    for row in sq:
        total += row


def _curve(total, n):
    f = total / n
    f.setflags(write=False)
    return LoocvCurve(f, select_k(f), f.shape[0])


def loo_estimates(data: Dataset, table: NeighborTable, k: int) -> np.ndarray:
    """Self-excluded k-NN mean of the responses at every training point."""
    _check_k(k, table.k_max)
    y = data.responses
    return np.cumsum(y[table.order[:, :k]], axis=1)[:, -1] / np.float64(k)


def loocv_curve(data: Dataset, table: NeighborTable) -> LoocvCurve:
    """LOOCV score f(k) for every k up to ``table.k_max``."""
    if table.k_max < 1 or table.order.shape[0] == 0:
        raise ValidationError("neighbor table is empty")
    if table.n != data.n:
        raise ValidationError(f"table has {table.n} rows but data has n={data.n}")
    y = data.responses
    total = np.zeros(table.k_max)
    step = max(1, (1 << 20) // table.k_max)
    for s in range(0, data.n, step):
        rows = slice(s, min(s + step, data.n))
        _accumulate(total, _squared_residuals(y[rows], y, table.order[rows]))
    return _curve(total, data.n)


def loocv_curve_streaming(data: Dataset, k_max: int | None = None, tie: TieRule = TieRule(),
                          backend: str = "auto", threads: int | None = None) -> LoocvCurve:
    """Same curve as :func:`loocv_curve` without materializing the neighbor table.

    Neighbor rows are produced in blocks and discarded once their residuals
    are added, so memory stays at one block regardless of ``n``.
    """
    k_max = resolve_k_max(data.n, k_max)
    y = data.responses
    total = np.zeros(k_max)
    for rows, order, _ in iter_chunks(data, k_max, tie, backend, threads):
        _accumulate(total, _squared_residuals(y[rows], y, order))
    return _curve(total, data.n)


def select_k(curve) -> int:
    """Smallest k attaining the minimum of the curve."""
    f = curve.f if isinstance(curve, LoocvCurve) else np.asarray(curve, dtype=np.float64)
    if f.size == 0:
        raise ValidationError("curve is empty")
    return int(np.argmin(f)) + 1


@dataclass(frozen=True, eq=False)
class FittedModel:
    data: Dataset
    k: int
    curve: LoocvCurve
    tie: TieRule
    k_override: int | None = None

    @property
    def k_max(self) -> int:
        return self.curve.k_max

    @property
    def k_tilde(self) -> int:
        return self.curve.k_tilde

    def table(self, threads: int | None = None) -> NeighborTable:
        """Rebuild the training neighbor table (not kept after fitting)."""
        return build_table(self.data, self.k_max, self.tie, threads=threads)


def fit(data: Dataset, k_max: int | None = None, tie: TieRule = TieRule(),
        k_override: int | None = None, backend: str = "auto",
        threads: int | None = None) -> FittedModel:
    """Compute the LOOCV curve and keep the minimizing k (or ``k_override``)."""
    curve = loocv_curve_streaming(data, k_max, tie, backend, threads)
    k = curve.k_tilde
    if k_override is not None:
        _check_k(k_override, data.n, "k_override")
        k = int(k_override)
    return FittedModel(data, k, curve, tie, k_override)


def predict(model: FittedModel, queries) -> np.ndarray:
    """Average response of the ``model.k`` training points nearest each query."""
    order, _ = query_table(model.data, queries, model.k, model.tie)
    if order.shape[0] == 0:
        return np.empty(0)
    return np.cumsum(model.data.responses[order], axis=1)[:, -1] / np.float64(model.k)


def model_manifest(model: FittedModel, train_csv=None) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "k_tilde": model.k_tilde,
        "k_max": model.k_max,
        "k_override": model.k_override,
        "tie_seed": int(model.tie.seed),
        "tie_mode": model.tie.mode,
        "n": model.data.n,
        "d": model.data.d,
        "data_checksum": model.data.checksum(),
        "train_csv": None if train_csv is None else str(train_csv),
        "curve": [float(v) for v in model.curve.f],
    }


def save_model(model: FittedModel, path, train_csv=None):
    """Write the JSON manifest; the training data itself stays in its CSV."""
    text = json.dumps(model_manifest(model, train_csv), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path, data: Dataset | None = None, has_header: bool = False,
               response_column="last") -> FittedModel:
    """Load a manifest and re-attach its training data.

    Without ``data`` the CSV named in the manifest is read (relative paths are
    resolved against the manifest's directory). A checksum mismatch means the
    data changed after fitting and raises :class:`ValidationError`.
    """
    path = Path(path)
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed model manifest ({exc})") from None
    for key in ("format_version", "k", "k_max", "tie_seed", "tie_mode", "data_checksum", "curve"):
        if key not in m:
            raise ValidationError(f"{path}: model manifest missing field {key!r}")
    if m["format_version"] != MODEL_FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported model format_version {m['format_version']}")
    if data is None:
        if not m.get("train_csv"):
            raise ValidationError(f"{path}: manifest names no training CSV; pass the data")
        csv_path = Path(m["train_csv"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        data = load_csv(csv_path, has_header, response_column)
    if data.checksum() != m["data_checksum"]:
        raise ValidationError(f"{path}: training data checksum mismatch (stale model)")
    f = np.array(m["curve"], dtype=np.float64)
    f.setflags(write=False)
    curve = LoocvCurve(f, select_k(f), int(m["k_max"]))
    return FittedModel(data, int(m["k"]), curve, TieRule(int(m["tie_seed"]), m["tie_mode"]),
                       m.get("k_override"))


def save_predictions(path, predictions):
    write_csv(path, [np.asarray(predictions)], ["prediction"])
