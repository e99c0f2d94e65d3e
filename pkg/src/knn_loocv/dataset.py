"""Datasets, CSV ingestion and synthetic fixed-design generation.

Points are treated as a fixed design: the synthetic generator draws the design
once from its seed and everything downstream redraws only the noise.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

NOISE_FAMILIES = ("gaussian", "uniform", "rademacher-scaled")
DESIGNS = ("grid", "uniform-random")


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` points in ``d`` dimensions with one scalar response each."""

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        responses = np.array(self.responses, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[1] < 1:
            raise ValidationError(f"points must be an n x d array, got shape {points.shape}")
        if responses.ndim != 1 or responses.shape[0] != points.shape[0]:
            raise ValidationError(
                f"responses must have length n={points.shape[0]}, got shape {responses.shape}")
        if points.shape[0] < 2:
            raise ValidationError(f"need at least 2 points, got {points.shape[0]}")
        if not np.all(np.isfinite(points)):
            raise ValidationError("points contain non-finite values")
        if not np.all(np.isfinite(responses)):
            raise ValidationError("responses contain non-finite values")
        points.setflags(write=False)
        responses.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "responses", responses)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def with_responses(self, responses) -> "Dataset":
        return Dataset(self.points, responses)

    def checksum(self) -> str:
        """SHA-256 over the shape and little-endian float64 bytes."""
        h = hashlib.sha256()
        h.update(np.array(self.points.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.points, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.responses, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """A dataset whose true regression values and noise level are known."""

    base: Dataset
    mu: np.ndarray
    noise_sd: float
    spec: "SyntheticSpec | None" = None

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        if mu.shape != (self.base.n,):
            raise ValidationError(f"mu must have length {self.base.n}, got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mu contains non-finite values")
        sd = float(self.noise_sd)
        if not math.isfinite(sd) or sd < 0:
            raise ValidationError(f"noise_sd must be finite and >= 0, got {self.noise_sd}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "noise_sd", sd)

    @property
    def noise(self) -> np.ndarray:
        """Realized noise draw, ``responses - mu``."""
        return self.base.responses - self.mu

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def d(self) -> int:
        return self.base.d

    def with_noise(self, eps) -> "LabeledDataset":
        return LabeledDataset(self.base.with_responses(self.mu + eps), self.mu,
                              self.noise_sd, self.spec)


# Built-in regression functions. Each maps an (n, d) array to an n-vector.

def _linear(x, c):
    return x.sum(axis=1)


def _lipschitz_sine(x, c):
    return np.sin(np.pi * x).sum(axis=1)


def _constant(x, c):
    return np.full(x.shape[0], float(c))


FUNCTIONS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "linear": _linear,
    "lipschitz-sine": _lipschitz_sine,
    "constant": _constant,
}


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int = 1
    function_id: str = "lipschitz-sine"
    noise_sd: float = 1.0
    noise_family: str = "gaussian"
    domain: tuple = (0.0, 1.0)
    design: str = "uniform-random"
    seed: int = 0
    constant_value: float = 0.0

    def __post_init__(self):
        if isinstance(self.domain, list):
            object.__setattr__(self, "domain", tuple(self.domain))
        self.validate()

    def validate(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n}")
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError(f"d must be an integer >= 1, got {self.d}")
        if self.function_id not in FUNCTIONS:
            raise ValidationError(
                f"unknown function_id {self.function_id!r}; choose from {sorted(FUNCTIONS)}")
        if not math.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ValidationError(f"noise_sd must be finite and >= 0, got {self.noise_sd}")
        if self.noise_family not in NOISE_FAMILIES:
            raise ValidationError(
                f"noise_family {self.noise_family!r} is not one of the sub-Gaussian "
                f"families {NOISE_FAMILIES}")
        if self.design not in DESIGNS:
            raise ValidationError(f"design must be one of {DESIGNS}, got {self.design!r}")
        lo, hi = self._bounds()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi >= lo)):
            raise ValidationError(f"invalid domain {self.domain!r}")
        if self.design == "grid":
            _grid_side(self.n, self.d)

    def _bounds(self):
        """Domain as per-axis (lo, hi) arrays.

        Accepts ``(lo, hi)`` scalars applied to every axis or
        ``((lo_1, hi_1), ..., (lo_d, hi_d))``.
        """
        dom = np.asarray(self.domain, dtype=np.float64)
        if dom.shape == (2,):
            return np.full(self.d, dom[0]), np.full(self.d, dom[1])
        if dom.shape == (self.d, 2):
            return dom[:, 0].copy(), dom[:, 1].copy()
        raise ValidationError(f"domain must be (lo, hi) or a ({self.d}, 2) box, got {self.domain!r}")

    def replace(self, **changes) -> "SyntheticSpec":
        values = asdict(self)
        values.update(changes)
        return SyntheticSpec(**values)

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "function_id": self.function_id,
            "noise_sd": self.noise_sd,
            "noise_family": self.noise_family,
            "domain": list(np.asarray(self.domain).tolist()),
            "design": self.design,
            "seed": self.seed,
            "constant_value": self.constant_value,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown SyntheticSpec field(s): {sorted(unknown)}")
        if "n" not in values:
            raise ValidationError("SyntheticSpec field 'n' is required")
        return cls(**values)


def _grid_side(n, d):
    m = int(round(n ** (1.0 / d)))
    for cand in (m - 1, m, m + 1):
        if cand >= 1 and cand ** d == n:
            return cand
    lower = int(math.floor(n ** (1.0 / d)))
    while (lower + 1) ** d <= n:
        lower += 1
    raise ValidationError(
        f"grid design needs n to be a perfect {d}-th power; n={n} lies between "
        f"{lower ** d} and {(lower + 1) ** d} (use side {lower} or {lower + 1})")


def draw_noise(family: str, sd: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. mean-zero noise values with standard deviation ``sd``."""
    if family == "gaussian":
        eps = rng.standard_normal(n)
    elif family == "uniform":
        eps = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), n)
    elif family == "rademacher-scaled":
        eps = 2.0 * rng.integers(0, 2, n).astype(np.float64) - 1.0
    else:
        raise ValidationError(f"unknown noise family {family!r}")
    return sd * eps


def design_points(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    lo, hi = spec._bounds()
    if spec.design == "grid":
        side = _grid_side(spec.n, spec.d)
        axes = [np.linspace(lo[j], hi[j], side) for j in range(spec.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    return lo + (hi - lo) * rng.random((spec.n, spec.d))


def regression_values(spec: SyntheticSpec, points: np.ndarray) -> np.ndarray:
    return FUNCTIONS[spec.function_id](points, spec.constant_value)


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Draw a labeled dataset; a pure function of ``spec``.

    The seed is split into independent design and noise streams, so changing
    ``noise_sd`` or ``noise_family`` leaves the design untouched.
    """
    spec.validate()
    design_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(2)
    points = design_points(spec, np.random.default_rng(design_seq))
    mu = regression_values(spec, points)
    eps = draw_noise(spec.noise_family, spec.noise_sd, spec.n, np.random.default_rng(noise_seq))
    return LabeledDataset(Dataset(points, mu + eps), mu, spec.noise_sd, spec)


def _resolve_column(selector, ncols, header):
    if selector is None or selector == "last":
        return ncols - 1
    if isinstance(selector, str):
        if header is not None and selector in header:
            return header.index(selector)
        try:
            selector = int(selector)
        except ValueError:
            raise ValidationError(f"response column {selector!r} not found in header") from None
    idx = int(selector)
    if idx < 0:
        idx += ncols
    if not 0 <= idx < ncols:
        raise ValidationError(f"response column {selector} out of range for {ncols} columns")
    return idx


def read_numeric_csv(path, has_header=False):
    """Parse a numeric CSV into a float64 matrix plus the optional header."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    rows = []
    header = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=",", quoting=csv.QUOTE_NONE)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if has_header and header is None:
                header = [cell.strip() for cell in row]
                continue
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {cell.strip()!r} at row {lineno}, column {col}"
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: non-finite value {cell.strip()!r} at row {lineno}, column {col}")
                values.append(v)
            if rows and len(values) != len(rows[0][1]):
                raise ParseError(
                    f"{path}: row {lineno} has {len(values)} columns, expected {len(rows[0][1])}")
            rows.append((lineno, values))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array([v for _, v in rows], dtype=np.float64), header


def load_csv(path, has_header: bool = False, response_column="last") -> Dataset:
    """Load a dataset whose response sits in one column and features in the rest.

    ``response_column`` is ``"last"`` (default), a 0-based integer index
    (negative counts from the end) or a header name.
    """
    table, header = read_numeric_csv(path, has_header)
    if table.shape[0] < 2:
        raise ParseError(f"{path}: need at least 2 data rows, got {table.shape[0]}")
    if table.shape[1] < 2:
        raise ParseError(f"{path}: need at least 2 columns, got {table.shape[1]}")
    col = _resolve_column(response_column, table.shape[1], header)
    keep = [j for j in range(table.shape[1]) if j != col]
    return Dataset(table[:, keep], table[:, col])


def load_points_csv(path, has_header: bool = False, d: int | None = None) -> np.ndarray:
    """Load query points: every column is a coordinate."""
    table, _ = read_numeric_csv(path, has_header)
    if d is not None and table.shape[1] != d:
        raise ValidationError(f"{path}: query points have {table.shape[1]} columns, model expects d={d}")
    return table


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns: Sequence[np.ndarray], header: Sequence[str] | None = None):
    """Write columns of numbers with round-trip float formatting."""
    cols = [np.asarray(c) for c in columns]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def save_dataset(data: Dataset, path, header: bool = False):
    columns = [data.points[:, j] for j in range(data.d)] + [data.responses]
    names = [f"x{j + 1}" for j in range(data.d)] + ["y"] if header else None
    write_csv(path, columns, names)


def save_labeled(labeled: LabeledDataset, path) -> Path:
    """Write the dataset as CSV plus a ``.json`` sidecar manifest.

    Returns the manifest path. The true regression values are not stored;
    they are recoverable from the manifest's function id and the points.
    """
    path = Path(path)
    save_dataset(labeled.base, path)
    spec = labeled.spec
    manifest = {
        "format_version": 1,
        "n": labeled.n,
        "d": labeled.d,
        "function_id": spec.function_id if spec else None,
        "noise_sd": labeled.noise_sd,
        "noise_family": spec.noise_family if spec else None,
        "seed": spec.seed if spec else None,
        # sub-Gaussian scale K: recorded only, no algorithm uses it
        "subgaussian_K": None,
        "spec": spec.manifest() if spec else None,
        "checksum": labeled.base.checksum(),
    }
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def load_labeled(path) -> LabeledDataset:
    """Inverse of :func:`save_labeled`; recomputes mu from the manifest spec."""
    path = Path(path)
    data = load_csv(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("spec") is None:
        raise ValidationError(f"{path}: manifest has no generating spec; mu is unknown")
    spec = SyntheticSpec.from_dict(manifest["spec"])
    mu = regression_values(spec, data.points)
    return LabeledDataset(data, mu, manifest["noise_sd"], spec)
