"""Synthetic grouped-indicator benchmark with a shared nonlinear confounder.

``K`` independent standard-normal constructs each drive ``J`` indicators:

    x_kj = a*z_k + b*tanh(z_k)
           + [c*z_k'          if the item carries a cross-loading]
           + [d*z_k*z_k''     if the item carries an interaction]
           + s*scale*(sin(u) + u**2 / 2)
           + eps,   eps ~ N(0, noise_sd**2)

with loadings drawn once per item and recorded in :class:`ItemLoadings`.
Columns are standardized afterwards.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from sevae.errors import ConfigError


@dataclass(frozen=True)
class GenSpec:
    K: int = 4
    J: int = 6
    N: int = 20000
    cross_loading_rate: float = 0.15
    interaction_rate: float = 0.15
    noise_sd: float = 0.3
    confounder_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.J < 2:
            raise ConfigError(f"J must be >= 2, got {self.J}")
        if self.N < 1:
            raise ConfigError(f"N must be positive, got {self.N}")
        for name in ("cross_loading_rate", "interaction_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {rate}")
        if not self.noise_sd > 0:
            raise ConfigError(f"noise_sd must be positive, got {self.noise_sd}")
        if self.confounder_scale < 0:
            raise ConfigError(f"confounder_scale must be >= 0, got {self.confounder_scale}")

    @property
    def n_items(self) -> int:
        return self.K * self.J

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ItemLoadings:
    """Per-item coefficients; arrays are indexed by item column."""
    primary: np.ndarray  # a
    saturation: np.ndarray  # b, weight on tanh(z_k)
    cross: np.ndarray  # c, zero where the item has no cross-loading
    cross_target: np.ndarray  # k', -1 where absent
    interaction: np.ndarray  # d, zero where absent
    interaction_target: np.ndarray  # k'', -1 where absent
    confounding: np.ndarray  # s

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in asdict(self).items()}


@dataclass
class Dataset:
    X: np.ndarray  # (N, K*J)
    factors: np.ndarray  # (N, K)
    confounder: np.ndarray  # (N, 1)
    spec: GenSpec
    loadings: ItemLoadings | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def group_of(self, column: int) -> int:
        return column // self.spec.J

    def take(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.factors[rows], self.confounder[rows],
                       self.spec, self.loadings, dict(self.meta))


def _other_group(rng: np.random.Generator, k: int, K: int) -> int:
    j = int(rng.integers(K - 1))
    return j if j < k else j + 1


def draw_loadings(spec: GenSpec, rng: np.random.Generator) -> ItemLoadings:
    n = spec.n_items
    a = rng.uniform(0.7, 1.3, n)
    b = rng.uniform(0.3, 0.8, n)
    s = rng.uniform(0.3, 0.9, n)
    cross = np.zeros(n)
    cross_target = np.full(n, -1)
    inter = np.zeros(n)
    inter_target = np.full(n, -1)
    for col in range(n):
        k = col // spec.J
        # draws are unconditional so one rate does not shift the other's stream
        has_cross = rng.random() < spec.cross_loading_rate
        c_target, c_val = _other_group(rng, k, spec.K), rng.uniform(0.2, 0.5)
        has_inter = rng.random() < spec.interaction_rate
        i_target, i_val = _other_group(rng, k, spec.K), rng.uniform(0.1, 0.3)
        if has_cross:
            cross[col], cross_target[col] = c_val, c_target
        if has_inter:
            inter[col], inter_target[col] = i_val, i_target
    return ItemLoadings(a, b, cross, cross_target, inter, inter_target, s)


def _standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def generate(spec: GenSpec) -> Dataset:
    """Draw a dataset; a pure function of ``spec`` (the seed included)."""
    rng = np.random.default_rng(spec.seed)
    loadings = draw_loadings(spec, rng)
    z = rng.standard_normal((spec.N, spec.K))
    u = rng.standard_normal((spec.N, 1))
    eps = rng.normal(0.0, spec.noise_sd, (spec.N, spec.n_items))

    groups = np.arange(spec.n_items) // spec.J
    zk = z[:, groups]
    X = loadings.primary * zk + loadings.saturation * np.tanh(zk)
    has_cross = loadings.cross_target >= 0
    if has_cross.any():
        X[:, has_cross] += loadings.cross[has_cross] * z[:, loadings.cross_target[has_cross]]
    has_inter = loadings.interaction_target >= 0
    if has_inter.any():
        X[:, has_inter] += (loadings.interaction[has_inter] * zk[:, has_inter]
                            * z[:, loadings.interaction_target[has_inter]])
    X += loadings.confounding * spec.confounder_scale * (np.sin(u) + 0.5 * u ** 2)
    X += eps
    return Dataset(_standardize(X), z, u, spec, loadings)


@dataclass
class CrossLoadingAudit:
    expected: float
    realized: int
    low: int
    high: int

    @property
    def passed(self) -> bool:
        return self.low <= self.realized <= self.high


def expected_cross_loading_count(spec: GenSpec) -> float:
    return spec.cross_loading_rate * spec.n_items


def audit_cross_loadings(ds: Dataset, level: float = 0.99) -> CrossLoadingAudit:
    """Check the realized cross-loaded item count against central binomial bounds."""
    spec = ds.spec
    realized = int(np.count_nonzero(ds.loadings.cross_target >= 0))
    tail = (1.0 - level) / 2.0
    dist = stats.binom(spec.n_items, spec.cross_loading_rate)
    low, high = int(dist.ppf(tail)), int(dist.ppf(1.0 - tail))
    return CrossLoadingAudit(expected_cross_loading_count(spec), realized, low, high)


def split(ds: Dataset, train_frac: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = int(round(train_frac * ds.n))
    if n_train == 0 or n_train == ds.n:
        raise ConfigError(f"train_frac={train_frac} on {ds.n} rows leaves an empty side")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


# ---------------------------------------------------------------------------
# CSV export

def column_names(spec: GenSpec) -> list[str]:
    items = [f"x_{k}_{j}" for k in range(spec.K) for j in range(spec.J)]
    return items + [f"factor_{k}" for k in range(spec.K)] + ["confounder"]


def save_csv(ds: Dataset, path) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and its ``<name>.spec.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.hstack([ds.X, ds.factors, ds.confounder])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_names(ds.spec))
        writer.writerows([repr(float(v)) for v in row] for row in table)
    sidecar = path.with_name(path.stem + ".spec.json")
    payload = {"spec": ds.spec.to_dict()}
    if ds.loadings is not None:
        payload["loadings"] = ds.loadings.to_dict()
    sidecar.write_text(json.dumps(payload, indent=2))
    return path, sidecar


def load_csv(path) -> Dataset:
    path = Path(path)
    sidecar = path.with_name(path.stem + ".spec.json")
    if not sidecar.exists():
        raise ConfigError(f"missing spec sidecar {sidecar}")
    payload = json.loads(sidecar.read_text())
    spec = GenSpec.from_dict(payload["spec"])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        table = np.array([[float(v) for v in row] for row in reader])
    if header != column_names(spec):
        raise ConfigError(f"{path} header does not match its spec (K={spec.K}, J={spec.J})")
    p = spec.n_items
    table = table.reshape(-1, p + spec.K + 1)
    spec = replace(spec, N=table.shape[0])
    loadings = None
    if "loadings" in payload:
        loadings = ItemLoadings(**{k: np.asarray(v) for k, v in payload["loadings"].items()})
    return Dataset(table[:, :p], table[:, p:p + spec.K], table[:, p + spec.K:], spec, loadings)
