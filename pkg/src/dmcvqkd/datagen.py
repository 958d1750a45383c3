"""Grid-sampling campaigns: solver-labeled feature vectors over (xi, L) grids.

A campaign walks a two-dimensional grid of excess noise and distance.  Each
grid point is sampled ``samplings_per_point`` times; one sampling draws a
jittered noise value, sweeps the intensity grid, solves every point, and
keeps the ``instances_per_sampling`` highest positive rates (a sampling
with too few positive rates is discarded and redrawn).  Everything is a
pure function of the spec including its master seed: per-sampling seeds are
derived by hashing (master_seed, xi, L, sampling index), so results do not
depend on scheduling order and campaigns can run on a process pool.

Datasets persist as CSV with 17-significant-digit floats, which reload
bit-exactly.
"""

import hashlib
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import ProtocolParams, assemble_features
from .solver import SolveOptions, key_rate

WORKERS_ENV = "DMCVQKD_WORKERS"

_FEATURE_COLUMNS = tuple(f"f{i:02d}" for i in range(29))
_COLUMNS = _FEATURE_COLUMNS + ("key_rate", "xi_grid", "L", "xi", "mu", "status", "nc")


class GridPointError(RuntimeError):
    """A grid point exhausted its sampling restart budget."""

    def __init__(self, message, xi, L):
        super().__init__(message)
        self.xi = xi
        self.L = L


class DatasetFormatError(ValueError):
    """Dataset file failed to parse; carries the 1-based line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _frange(start, stop, step):
    out = []
    k = 0
    while True:
        v = round(start + k * step, 12)
        if v > stop + 1e-12:
            break
        out.append(v)
        k += 1
    return tuple(out)


@dataclass(frozen=True)
class GridSpec:
    """Campaign layout; defaults reproduce the full-scale grid shape."""

    xi_values: tuple = _frange(0.002, 0.014, 0.001)
    L_values: tuple = _frange(5.0, 100.0, 5.0)
    extra_bands: tuple = ((0.015, _frange(5.0, 80.0, 5.0)),)
    samplings_per_point: int = 80
    instances_per_sampling: int = 25
    xi_jitter: float = 0.0005
    mu_sweep: tuple = _frange(0.35, 0.60, 0.01)
    probs: tuple = (0.25, 0.25, 0.25, 0.25)
    beta: float = 0.95
    delta_c: float = 0.0
    nc: int = 4
    master_seed: int = 0
    restart_budget: int = 20

    def __post_init__(self):
        if self.instances_per_sampling > len(self.mu_sweep):
            raise ValueError(
                f"cannot keep {self.instances_per_sampling} instances from a "
                f"{len(self.mu_sweep)}-value intensity sweep"
            )

    def grid_points(self):
        """(xi, L) pairs of the main grid plus the extra bands."""
        pts = [(xi, L) for xi in self.xi_values for L in self.L_values]
        for xi, ls in self.extra_bands:
            pts.extend((xi, L) for L in ls)
        return pts

    def expected_samples(self):
        return len(self.grid_points()) * self.samplings_per_point * self.instances_per_sampling


def desk_scale_spec(nc=3, master_seed=0):
    """Small preset for tests and demos: 2 x 4 grid, 4 samplings of 5 -> 160 samples."""
    return GridSpec(
        xi_values=(0.002, 0.01),
        L_values=(5.0, 20.0, 35.0, 50.0),
        extra_bands=(),
        samplings_per_point=4,
        instances_per_sampling=5,
        mu_sweep=_frange(0.35, 0.60, 0.05),
        nc=nc,
        master_seed=master_seed,
    )


@dataclass(frozen=True)
class Sample:
    """One labeled instance with its provenance."""

    features: tuple
    label: float
    xi_grid: float
    L: float
    xi: float
    mu: float
    status: str
    nc: int


@dataclass
class Dataset:
    """Columnar store of samples; equality is exact (used by determinism tests)."""

    features: np.ndarray                     # (n, 29)
    labels: np.ndarray                       # (n,)
    xi_grid: np.ndarray
    L: np.ndarray
    xi: np.ndarray
    mu: np.ndarray
    status: tuple
    nc: np.ndarray

    @classmethod
    def empty(cls):
        return cls(
            features=np.zeros((0, 29)), labels=np.zeros(0), xi_grid=np.zeros(0),
            L=np.zeros(0), xi=np.zeros(0), mu=np.zeros(0), status=(),
            nc=np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def from_samples(cls, samples):
        if not samples:
            return cls.empty()
        return cls(
            features=np.array([s.features for s in samples], dtype=np.float64),
            labels=np.array([s.label for s in samples], dtype=np.float64),
            xi_grid=np.array([s.xi_grid for s in samples], dtype=np.float64),
            L=np.array([s.L for s in samples], dtype=np.float64),
            xi=np.array([s.xi for s in samples], dtype=np.float64),
            mu=np.array([s.mu for s in samples], dtype=np.float64),
            status=tuple(s.status for s in samples),
            nc=np.array([s.nc for s in samples], dtype=np.int64),
        )

    def __len__(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.xi_grid, other.xi_grid)
            and np.array_equal(self.L, other.L)
            and np.array_equal(self.xi, other.xi)
            and np.array_equal(self.mu, other.mu)
            and self.status == other.status
            and np.array_equal(self.nc, other.nc)
        )

    def sample(self, i):
        return Sample(
            features=tuple(self.features[i]), label=float(self.labels[i]),
            xi_grid=float(self.xi_grid[i]), L=float(self.L[i]), xi=float(self.xi[i]),
            mu=float(self.mu[i]), status=self.status[i], nc=int(self.nc[i]),
        )

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            features=self.features[idx], labels=self.labels[idx],
            xi_grid=self.xi_grid[idx], L=self.L[idx], xi=self.xi[idx],
            mu=self.mu[idx], status=tuple(self.status[i] for i in idx),
            nc=self.nc[idx],
        )

    @classmethod
    def concatenate(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            features=np.concatenate([p.features for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            xi_grid=np.concatenate([p.xi_grid for p in parts]),
            L=np.concatenate([p.L for p in parts]),
            xi=np.concatenate([p.xi for p in parts]),
            mu=np.concatenate([p.mu for p in parts]),
            status=tuple(s for p in parts for s in p.status),
            nc=np.concatenate([p.nc for p in parts]),
        )


def point_seed(master_seed, xi, L, sampling_index):
    """Stable 64-bit seed for one sampling of one grid point."""
    key = f"{master_seed}|{xi!r}|{L!r}|{sampling_index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def _solve_one(xi, L, mu, spec, options):
    params = ProtocolParams(
        L=L, mu=mu, xi=xi, probs=spec.probs, beta=spec.beta,
        delta_c=spec.delta_c, nc=spec.nc,
    )
    report = key_rate(params, options)
    return assemble_features(params), report


def sample_grid_point(xi_grid, L, spec, options=None):
    """All samples for one grid point: samplings_per_point x instances each.

    One sampling draws the jittered noise, sweeps the intensity grid and
    keeps the ``instances_per_sampling`` largest positive rates; with fewer
    positive rates the sampling is discarded and redrawn from the same
    stream.  Raises :class:`GridPointError` when a sampling exhausts the
    restart budget.
    """
    options = options or SolveOptions()
    out = []
    for sampling in range(spec.samplings_per_point):
        rng = np.random.Generator(np.random.PCG64(
            point_seed(spec.master_seed, xi_grid, L, sampling)))
        for _ in range(spec.restart_budget):
            xi_j = xi_grid + rng.uniform(-spec.xi_jitter, spec.xi_jitter)
            hits = []
            for mu in spec.mu_sweep:
                features, report = _solve_one(xi_j, L, mu, spec, options)
                if report.key_rate > 0.0:
                    hits.append(Sample(
                        features=tuple(features), label=report.key_rate,
                        xi_grid=xi_grid, L=L, xi=xi_j, mu=mu,
                        status=report.status, nc=spec.nc,
                    ))
            if len(hits) >= spec.instances_per_sampling:
                hits.sort(key=lambda s: (-s.label, s.mu))
                out.extend(hits[:spec.instances_per_sampling])
                break
        else:
            raise GridPointError(
                f"grid point (xi={xi_grid}, L={L}) produced fewer than "
                f"{spec.instances_per_sampling} positive rates in "
                f"{spec.restart_budget} samplings",
                xi=xi_grid, L=L,
            )
    return out


def default_workers():
    env = os.environ.get(WORKERS_ENV, "").strip()
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _point_tag(xi, L):
    return f"xi{xi!r}_L{L!r}".replace(".", "p")


def _worker(args):
    xi, L, spec, options = args
    return xi, L, sample_grid_point(xi, L, spec, options)


def generate_dataset(spec, options=None, workers=None, part_dir=None, progress=None):
    """Run the whole campaign; deterministic for a fixed spec.

    Grid points are independent work items on a process pool (size from
    ``DMCVQKD_WORKERS`` unless given).  With ``part_dir`` set, per-point
    chunks are persisted and finished points are skipped on re-runs, which
    makes interrupted campaigns resumable.  Assembly order is the spec's
    grid order regardless of scheduling.
    """
    options = options or SolveOptions()
    workers = default_workers() if workers is None else max(1, workers)
    points = spec.grid_points()
    results = {}
    todo = []
    if part_dir:
        os.makedirs(part_dir, exist_ok=True)
    for xi, L in points:
        if part_dir:
            part = os.path.join(part_dir, _point_tag(xi, L) + ".csv")
            if os.path.exists(part + ".done"):
                results[(xi, L)] = load_dataset(part)
                continue
        todo.append((xi, L))

    def record(xi, L, samples):
        ds = Dataset.from_samples(samples)
        if part_dir:
            part = os.path.join(part_dir, _point_tag(xi, L) + ".csv")
            save_dataset(ds, part)
            with open(part + ".done", "w") as fh:
                fh.write("ok\n")
        results[(xi, L)] = ds
        if progress:
            progress(xi, L, len(ds))

    if workers == 1 or len(todo) <= 1:
        for xi, L in todo:
            record(xi, L, sample_grid_point(xi, L, spec, options))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for xi, L, samples in pool.map(
                    _worker, [(xi, L, spec, options) for xi, L in todo]):
                record(xi, L, samples)
    return Dataset.concatenate([results[pt] for pt in points])


def split_dataset(dataset, test_fraction=0.05, seed=0):
    """Stratified train/test split covering every (xi_grid, L) combination.

    Each stratum contributes ``round(test_fraction * n)`` samples (at least
    one; a warning is emitted when a stratum is smaller than
    ``1/test_fraction``).  Returns (train, test).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.Generator(np.random.PCG64(seed)) if isinstance(seed, int) else seed
    keys = list(zip(dataset.xi_grid, dataset.L))
    strata = {}
    for i, key in enumerate(keys):
        strata.setdefault(key, []).append(i)
    test_idx = []
    for key in sorted(strata):
        idx = np.asarray(strata[key])
        n = idx.size
        if n < 1.0 / test_fraction:
            warnings.warn(
                f"stratum {key} has only {n} samples for test fraction {test_fraction}",
                stacklevel=2,
            )
        n_test = max(1, int(round(test_fraction * n)))
        pick = rng.permutation(n)[:n_test]
        test_idx.extend(idx[pick])
    mask = np.zeros(len(dataset), dtype=bool)
    mask[test_idx] = True
    return dataset.subset(np.nonzero(~mask)[0]), dataset.subset(np.nonzero(mask)[0])


# ---------------------------------------------------------------------------
# persistence


def _fmt(v):
    return f"{v:.17g}"


def save_dataset(dataset, path):
    """CSV with header; floats rendered with 17 significant digits."""
    tmp = path + ".tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(",".join(_COLUMNS) + "\n")
        for i in range(len(dataset)):
            row = [_fmt(v) for v in dataset.features[i]]
            row.append(_fmt(dataset.labels[i]))
            row.append(_fmt(dataset.xi_grid[i]))
            row.append(_fmt(dataset.L[i]))
            row.append(_fmt(dataset.xi[i]))
            row.append(_fmt(dataset.mu[i]))
            row.append(dataset.status[i])
            row.append(str(int(dataset.nc[i])))
            fh.write(",".join(row) + "\n")
    os.replace(tmp, path)


def load_dataset(path):
    """Parse a dataset CSV; empty file -> empty dataset; bad rows raise."""
    samples = []
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return Dataset.empty()
    if lines[0] != ",".join(_COLUMNS):
        raise DatasetFormatError(f"unexpected header {lines[0]!r}", line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(_COLUMNS):
            raise DatasetFormatError(
                f"expected {len(_COLUMNS)} columns, found {len(parts)}", line=lineno
            )
        try:
            features = tuple(float(v) for v in parts[:29])
            label = float(parts[29])
            xi_grid = float(parts[30])
            ell = float(parts[31])
            xi = float(parts[32])
            mu = float(parts[33])
            status = parts[34]
            nc = int(parts[35])
        except ValueError as exc:
            raise DatasetFormatError(str(exc), line=lineno) from exc
        samples.append(Sample(
            features=features, label=label, xi_grid=xi_grid, L=ell,
            xi=xi, mu=mu, status=status, nc=nc,
        ))
    return Dataset.from_samples(samples)
