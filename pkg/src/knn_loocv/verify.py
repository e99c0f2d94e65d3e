"""Monte Carlo checks of LOOCV selection against the oracle-optimal k.

With a fixed design and known regression values, the leave-one-out MSE has
a closed form:

    MSE(k) = mean_i (mu_i - mean_{j in N_k(i)} mu_j)**2 + sigma**2 / k

The first term is the LOOCV curve evaluated on the noiseless values ``mu``.
The second is the variance of an average of k independent noise terms.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledDataset, SyntheticSpec, draw_noise, generate_synthetic
from .errors import ValidationError
from .neighbors import NeighborTable, TieRule, _check_k, build_table, default_threads
from .regress import loocv_curve

REPORT_FORMAT_VERSION = 1
FULL_RULE_LIMIT = 1600


def exact_mse_curve(labeled: LabeledDataset, table: NeighborTable) -> np.ndarray:
    """MSE(k) for k = 1..table.k_max."""
    bias_sq = loocv_curve(labeled.base.with_responses(labeled.mu), table).f
    ks = np.arange(1, table.k_max + 1, dtype=np.float64)
    return bias_sq + labeled.noise_sd ** 2 / ks


def exact_mse(labeled: LabeledDataset, table: NeighborTable, k: int) -> float:
    _check_k(k, table.k_max)
    return float(exact_mse_curve(labeled, table)[k - 1])


def k_star(labeled: LabeledDataset, table: NeighborTable) -> int:
    """Smallest k minimizing the exact MSE."""
    return int(np.argmin(exact_mse_curve(labeled, table))) + 1


def _noise_family(labeled):
    return labeled.spec.noise_family if labeled.spec is not None else "gaussian"


def decomposition_check(labeled: LabeledDataset, table: NeighborTable, k: int,
                        redraws: int = 10_000, seed: int = 0, batch: int = 2048) -> dict:
    """Compare the Monte Carlo mean of f(k) with ``sigma**2 + MSE(k)``.

    Noise is redrawn ``redraws`` times on the frozen design; ``z_score`` is
    the discrepancy in units of the Monte Carlo standard error.
    """
    _check_k(k, table.k_max)
    if redraws < 100:
        raise ValidationError(f"redraws must be >= 100, got {redraws}")
    n = labeled.n
    nbrs = table.order[:, :k]
    mu = labeled.mu
    sd = labeled.noise_sd
    family = _noise_family(labeled)
    rng = np.random.default_rng(seed)
    values = np.empty(redraws)
    for s in range(0, redraws, batch):
        m = min(batch, redraws - s)
        eps = draw_noise(family, sd, m * n, rng).reshape(m, n)
        y = mu + eps
        resid = y - y[:, nbrs].sum(axis=2) / k
        values[s:s + m] = (resid * resid).mean(axis=1)
    target = sd ** 2 + exact_mse(labeled, table, k)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(redraws))
    if se > 0:
        z = (mean - target) / se
    else:
        z = 0.0 if abs(mean - target) <= 1e-12 * max(1.0, abs(target)) else math.inf
    return {"mc_mean_f": mean, "target": target, "z_score": z, "std_error": se, "redraws": redraws}


def resolve_k_max_rule(rule, n: int) -> int:
    """``full``: n - 1 up to n = 1600, then ceil(n**(2/3)); ``sqrt``: ceil(sqrt(n)); int: capped at n - 1."""
    if rule == "full":
        return n - 1 if n <= FULL_RULE_LIMIT else min(n - 1, math.ceil(n ** (2.0 / 3.0)))
    if rule == "sqrt":
        return min(n - 1, math.ceil(math.sqrt(n)))
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool) and rule >= 1:
        return min(n - 1, int(rule))
    raise ValidationError(f"k_max_rule must be 'full', 'sqrt' or a positive integer, got {rule!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    data_spec: SyntheticSpec
    n_grid: tuple = (100, 400, 1600)
    replicates: int = 50
    k_max_rule: object = "full"
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValidationError(f"replicates must be an integer >= 1, got {self.replicates}")
        if not self.n_grid or any(v < 2 for v in self.n_grid):
            raise ValidationError(f"n_grid entries must be >= 2, got {self.n_grid}")
        for n in self.n_grid:
            resolve_k_max_rule(self.k_max_rule, n)

    def to_dict(self) -> dict:
        return {
            "data_spec": self.data_spec.manifest(),
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "k_max_rule": self.k_max_rule,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentSpec":
        if not isinstance(values, dict):
            raise ValidationError("experiment spec must be a JSON object")
        known = {"data_spec", "n_grid", "replicates", "k_max_rule", "master_seed"}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown experiment spec field(s): {sorted(unknown)}")
        if "data_spec" not in values or not isinstance(values["data_spec"], dict):
            raise ValidationError("experiment spec field 'data_spec' must be an object")
        ds = dict(values["data_spec"])
        ds.setdefault("n", 2)
        try:
            data_spec = SyntheticSpec.from_dict(ds)
        except TypeError as exc:
            raise ValidationError(f"experiment spec field 'data_spec': {exc}") from None
        kwargs = {k: values[k] for k in known - {"data_spec"} if k in values}
        if "n_grid" in kwargs and not isinstance(kwargs["n_grid"], list):
            raise ValidationError("experiment spec field 'n_grid' must be a list of integers")
        try:
            return cls(data_spec=data_spec, **kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"experiment spec: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            try:
                values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: malformed JSON ({exc})") from None
        return cls.from_dict(values)


def _derive_seed(*words) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1, np.uint64)[0])


def design_for(spec: ExperimentSpec, n: int) -> LabeledDataset:
    """The frozen design (and its noiseless values) used for sample size ``n``."""
    seed = _derive_seed(spec.master_seed, n, 0)
    return generate_synthetic(spec.data_spec.replace(n=n, seed=seed, noise_sd=0.0))


def _median(values):
    return float(np.median(values)) if len(values) else math.nan


@dataclass
class GapReport:
    spec: dict
    records: list = field(default_factory=list)
    summaries: list = field(default_factory=list)
    partial: bool = False

    def gaps(self, n: int) -> np.ndarray:
        return np.array([r["gap"] for r in self.records if r["n"] == n])

    def summary(self, n: int) -> dict:
        for s in self.summaries:
            if s["n"] == n:
                return s
        raise KeyError(n)

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "partial": self.partial,
            "spec": self.spec,
            "summaries": self.summaries,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        cols = ["n", "replicate", "k_max", "k_star", "k_tilde", "mse_star", "mse_tilde", "gap", "ratio"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()


def _replicate(spec, labeled, table, mse, k_star_, n, r):
    rng = np.random.default_rng(np.random.SeedSequence([spec.master_seed, n, 1, r]))
    ds = spec.data_spec
    eps = draw_noise(ds.noise_family, ds.noise_sd, n, rng)
    curve = loocv_curve(labeled.base.with_responses(labeled.mu + eps), table)
    kt = curve.k_tilde
    ms, mt = float(mse[k_star_ - 1]), float(mse[kt - 1])
    return {
        "n": n, "replicate": r, "k_max": table.k_max,
        "k_star": k_star_, "k_tilde": kt,
        "mse_star": ms, "mse_tilde": mt,
        "gap": mt - ms, "ratio": mt / ms if ms > 0 else (1.0 if mt == 0 else math.inf),
    }


def gap_experiment(spec: ExperimentSpec, threads: int | None = None,
                   max_seconds: float | None = None) -> GapReport:
    """Optimality gap MSE(k_tilde) - MSE(k*) across replicates for each n.

    The design is drawn once per ``n``; each replicate redraws only the
    noise, from a seed fixed by ``(master_seed, n, replicate)``. If
    ``max_seconds`` runs out, the report is returned with ``partial=True``.
    """
    threads = default_threads() if threads is None else int(threads)
    started = time.monotonic()
    report = GapReport(spec.to_dict())
    sd = spec.data_spec.noise_sd
    for n in spec.n_grid:
        if max_seconds is not None and time.monotonic() - started > max_seconds:
            report.partial = True
            break
        design = design_for(spec, n)
        labeled = LabeledDataset(design.base, design.mu, sd, spec.data_spec)
        k_max = resolve_k_max_rule(spec.k_max_rule, n)
        table = build_table(labeled.base, k_max, TieRule(_derive_seed(spec.master_seed, n, 2)),
                            threads=threads)
        mse = exact_mse_curve(labeled, table)
        ks = int(np.argmin(mse)) + 1
        job = lambda r: _replicate(spec, labeled, table, mse, ks, n, r)
        if threads == 1:
            records = [job(r) for r in range(spec.replicates)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                records = list(pool.map(job, range(spec.replicates)))
        report.records.extend(records)
        gaps = [r["gap"] for r in records]
        report.summaries.append({
            "n": n,
            "k_max": k_max,
            "k_star": ks,
            "mse_star": float(mse[ks - 1]),
            "replicates": len(records),
            "median_gap": _median(gaps),
            "mean_gap": float(np.mean(gaps)),
            "median_ratio": _median([r["ratio"] for r in records]),
            "median_k_tilde": _median([r["k_tilde"] for r in records]),
            "median_scaled_gap": _median(gaps) * math.sqrt(n / math.log(n)),
        })
    return report


def adaptivity_probe(spec_a: ExperimentSpec, spec_b: ExperimentSpec,
                     threads: int | None = None) -> dict:
    """Run two experiments that differ only in the regression function.

    Reports the median gap of each per ``n`` side by side, with their ratio.
    """
    ds_a, ds_b = spec_a.data_spec, spec_b.data_spec
    mismatched = [name for name in ("n_grid", "replicates", "k_max_rule", "master_seed")
                  if getattr(spec_a, name) != getattr(spec_b, name)]
    mismatched += [name for name in ("d", "noise_sd", "noise_family", "domain", "design")
                   if getattr(ds_a, name) != getattr(ds_b, name)]
    if mismatched:
        raise ValidationError(f"experiment specs differ beyond the regression function: {mismatched}")
    rep_a = gap_experiment(spec_a, threads)
    rep_b = gap_experiment(spec_b, threads)
    rows = []
    for sa, sb in zip(rep_a.summaries, rep_b.summaries):
        ga, gb = sa["median_gap"], sb["median_gap"]
        rows.append({
            "n": sa["n"],
            "median_gap_a": ga,
            "median_gap_b": gb,
            "gap_ratio_a_over_b": ga / gb if gb > 0 else (1.0 if ga == 0 else math.inf),
            "median_ratio_a": sa["median_ratio"],
            "median_ratio_b": sb["median_ratio"],
        })
    return {
        "function_a": ds_a.function_id,
        "function_b": ds_b.function_id,
        "rows": rows,
        "report_a": rep_a,
        "report_b": rep_b,
    }
