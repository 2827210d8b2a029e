"""Sample-size sweep and ablation grid with crash-safe, resumable CSV output.

Runs are independent: each one derives its random stream from its own key,
so the worker count never changes a result, and rows are sorted before the
final write.
"""
from __future__ import annotations

import csv
import itertools
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from sevae.datagen import Dataset, generate, split
from sevae.errors import ConfigError
from sevae.harness.config import FLAG_NAMES, ExperimentConfig, MetricSpec, check_flags
from sevae.metrics import METRIC_NAMES, MetricsReport, evaluate
from sevae.models.sevae import SevaeConfig
from sevae.models.train import train

log = logging.getLogger(__name__)

RESULT_FIELDS = ["run_id", "model", "kind", "K", "J", "N", "seed", "status",
                 *METRIC_NAMES, "config_hash", "error"]
ABLATION_RUN_FIELDS = ["run_id", "N", "seed", *FLAG_NAMES, "status", *METRIC_NAMES,
                       "config_hash", "error"]
DELTA_FIELDS = ["component", "N", "metric", "mean", "sd", "n_pairs"]
THREADS_ENV = "SEVAE_THREADS"
_FLAG_CODES = {"beta": "b", "gamma": "g", "alpha": "a", "anneal": "k"}


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """First ``n`` rows of a seeded shuffle, returned in original order.

    Because every size takes a prefix of the same shuffle, smaller samples
    are nested inside larger ones.
    """
    if not 1 <= n <= dataset.n:
        raise ConfigError(f"cannot subsample {n} rows from a dataset of {dataset.n}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    return dataset.take(np.sort(perm[:n]))


def run_seed(key: str, seed: int) -> int:
    """Seed owned by one run, derived from its key and the replicate seed."""
    seq = np.random.SeedSequence([int(seed), zlib.crc32(key.encode())])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def prepare_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Generate the dataset once and split it into a training pool and eval set."""
    return split(generate(config.generator), config.train_frac, config.split_seed)


def score_model(model, eval_set: Dataset, metrics: MetricSpec, seed: int = 0) -> MetricsReport:
    latents = model.posterior_means(eval_set.X, include_nuisance=metrics.include_nuisance)
    return evaluate(latents, eval_set.factors, latents[:, :model.construct_dims()],
                    bins=metrics.bins, lasso_lambda=metrics.lasso_lambda, seed=seed)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ---------------------------------------------------------------------------
# CSV plumbing

def read_rows(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows(path, fields: Sequence[str], rows: Sequence[dict]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in fields})
    tmp.replace(path)


def _drop_partial_tail(path: Path) -> None:
    """Cut a row left half-written by a crash; complete rows end in a newline."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        keep = data[:data.rfind(b"\n") + 1]
        log.warning("dropping a partial trailing row from %s", path)
        path.write_bytes(keep)


class _Appender:
    """Appends rows and flushes after each, so a crash loses at most one run."""

    def __init__(self, path: Path, fields: Sequence[str]):
        fresh = not path.exists() or path.stat().st_size == 0
        self.fh = path.open("a", newline="")
        self.writer = csv.DictWriter(self.fh, fieldnames=list(fields), lineterminator="\n")
        self.fields = list(fields)
        if fresh:
            self.writer.writeheader()
            self.fh.flush()

    def write(self, row: dict) -> None:
        self.writer.writerow({k: _fmt(row.get(k, "")) for k in self.fields})
        self.fh.flush()
        os.fsync(self.fh.fileno())

    def close(self) -> None:
        self.fh.close()


@dataclass
class RunTask:
    run_id: str
    row: dict  # identifying columns copied into the output row
    model_config: object
    n: int
    seed: int
    train_seed: int
    sort_key: tuple


def _execute(tasks: list[RunTask], pool_set: Dataset, eval_set: Dataset,
             config: ExperimentConfig, path: Path, fields: Sequence[str],
             threads: int, on_row: Callable[[dict], None] | None = None) -> list[dict]:
    """Run ``tasks`` not yet in ``path``; return every row sorted by task order."""
    digest = config.hash()
    _drop_partial_tail(path)
    existing = read_rows(path)
    stale = {r.get("config_hash") for r in existing} - {digest}
    if stale:
        raise ConfigError(
            f"{path} was produced by a different config ({sorted(stale)[0]}); "
            "use a fresh output directory")
    done = {r["run_id"]: r for r in existing}
    todo = [t for t in tasks if t.run_id not in done]
    log.info("%d runs, %d already done", len(tasks), len(tasks) - len(todo))

    def work(task: RunTask) -> dict:
        row = dict(task.row, run_id=task.run_id, config_hash=digest, status="ok", error="")
        try:
            data = subsample(pool_set, task.n, task.seed)
            tc = replace(config.train, seed=task.train_seed)
            result = train(task.model_config, data, tc)
            report = score_model(result.model, eval_set, config.metrics, task.seed)
            row.update(report.scores())
        except Exception as exc:  # one failed run must not end the sweep
            log.warning("run %s failed: %s", task.run_id, exc)
            row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return row

    path.parent.mkdir(parents=True, exist_ok=True)
    out = _Appender(path, fields)
    try:
        with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(work, t) for t in todo]
            for fut in as_completed(futures):
                row = fut.result()
                out.write(row)
                done[row["run_id"]] = row
                if on_row is not None:
                    on_row(row)
    finally:
        out.close()
    order = {t.run_id: t.sort_key for t in tasks}
    rows = sorted(done.values(), key=lambda r: order.get(r["run_id"], (float("inf"),)))
    write_rows(path, fields, rows)
    return rows


# ---------------------------------------------------------------------------
# sweep

def sweep_tasks(config: ExperimentConfig) -> list[RunTask]:
    g = config.generator
    tasks = []
    for mi, spec in enumerate(config.models):
        cfg = spec.build_config(g.K, g.J)
        for n in config.sample_sizes:
            for seed in config.seeds:
                run_id = f"{spec.name}-N{n}-s{seed}"
                tasks.append(RunTask(
                    run_id, {"model": spec.name, "kind": spec.kind, "K": g.K, "J": g.J,
                             "N": n, "seed": seed},
                    cfg, n, seed, run_seed(run_id, seed), (mi, n, seed)))
    return tasks


def run_sweep(config: ExperimentConfig, threads: int | None = None, out_dir=None,
              data: tuple[Dataset, Dataset] | None = None) -> list[dict]:
    """Train and score every (model, sample size, seed) combination.

    Rows go to ``<out_dir>/results.csv``; run ids already in that file are
    skipped, so an interrupted sweep resumes where it stopped.
    """
    out_dir = Path(out_dir or config.output_dir)
    pool_set, eval_set = data or prepare_data(config)
    return _execute(sweep_tasks(config), pool_set, eval_set, config,
                    out_dir / "results.csv", RESULT_FIELDS, resolve_threads(threads))


# ---------------------------------------------------------------------------
# ablation

@dataclass(frozen=True)
class AblationCell:
    flags: tuple  # (beta, gamma, alpha, anneal) active states

    @property
    def active(self) -> dict:
        return dict(zip(FLAG_NAMES, self.flags))

    @property
    def label(self) -> str:
        return "".join(f"{_FLAG_CODES[name]}{int(on)}" for name, on in zip(FLAG_NAMES, self.flags))

    def sevae_params(self, values: dict, base: dict) -> dict:
        params = dict(base)
        for name, on in zip(FLAG_NAMES, self.flags):
            params[name] = values[name][int(on)]
        return params


def ablation_cells() -> list[AblationCell]:
    return [AblationCell(flags) for flags in itertools.product((False, True), repeat=len(FLAG_NAMES))]


@dataclass
class AblationDelta:
    component: str
    N: int
    metric: str
    mean: float
    sd: float
    n_pairs: int
    values: list = field(default_factory=list, repr=False)

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in DELTA_FIELDS}


def ablation_tasks(config: ExperimentConfig) -> list[RunTask]:
    g = config.generator
    flags = config.ablation.flags
    tasks = []
    for n in config.ablation.sample_sizes:
        for seed in config.ablation_seeds:
            # every cell of an (N, seed) block shares one random stream, so a
            # pairwise delta reflects the flag rather than initialization luck
            train_seed = run_seed(f"ablation-N{n}", seed)
            for ci, cell in enumerate(ablation_cells()):
                cfg = SevaeConfig(K=g.K, J=g.J, **cell.sevae_params(flags, config.ablation.base))
                row = {"N": n, "seed": seed, **{k: int(v) for k, v in cell.active.items()}}
                tasks.append(RunTask(f"ablation-N{n}-s{seed}-{cell.label}", row, cfg, n, seed,
                                     train_seed, (n, seed, ci)))
    return tasks


def ablation_deltas(rows: Sequence[dict], components: Sequence[str] = FLAG_NAMES
                    ) -> list[AblationDelta]:
    """Mean and SD (ddof=1) of metric changes from switching one flag on.

    Within each (N, seed) block a cell with the flag off is paired with the
    cell that differs only in that flag, giving 8 pairs per block.
    """
    components = list(components)
    if len(set(components)) != len(components):
        raise ConfigError(f"ablation components repeat: {components}")
    unknown = set(components) - set(FLAG_NAMES)
    if unknown:
        raise ConfigError(f"unknown ablation components {sorted(unknown)}")
    blocks: dict = {}
    for r in rows:
        if r.get("status") != "ok":
            continue
        key = tuple(int(r[name]) for name in FLAG_NAMES)
        blocks.setdefault((int(r["N"]), int(r["seed"])), {})[key] = r
    out = []
    sizes = sorted({n for n, _ in blocks})
    for comp in components:
        fi = FLAG_NAMES.index(comp)
        for n in sizes:
            for metric in METRIC_NAMES:
                values = []
                for (bn, _), cells in sorted(blocks.items()):
                    if bn != n:
                        continue
                    for key, off in sorted(cells.items()):
                        if key[fi]:
                            continue
                        on = cells.get(key[:fi] + (1,) + key[fi + 1:])
                        if on is not None:
                            values.append(float(on[metric]) - float(off[metric]))
                if not values:
                    continue
                sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                out.append(AblationDelta(comp, n, metric, float(np.mean(values)), sd,
                                         len(values), values))
    return out


def run_ablation(config: ExperimentConfig, threads: int | None = None, out_dir=None,
                 components: Sequence[str] = FLAG_NAMES,
                 data: tuple[Dataset, Dataset] | None = None) -> list[AblationDelta]:
    """Train all 16 SE-VAE cells per (N, seed) and tabulate per-flag deltas.

    Per-run rows go to ``ablation_runs.csv`` (resumable like the sweep) and
    the deltas to ``ablation.csv``.
    """
    check_flags(config.ablation.flags)
    # validate the request before spending any compute
    ablation_deltas([], components)
    out_dir = Path(out_dir or config.output_dir)
    pool_set, eval_set = data or prepare_data(config)
    rows = _execute(ablation_tasks(config), pool_set, eval_set, config,
                    out_dir / "ablation_runs.csv", ABLATION_RUN_FIELDS, resolve_threads(threads))
    deltas = ablation_deltas(rows, components)
    write_rows(out_dir / "ablation.csv", DELTA_FIELDS, [d.as_row() for d in deltas])
    return deltas


def write_loss_curves(history, path) -> None:
    rows = [{"epoch": i, **b.as_row()} for i, b in enumerate(history)]
    fields = ["epoch"] + (list(rows[0])[1:] if rows else [])
    write_rows(path, fields, rows)
