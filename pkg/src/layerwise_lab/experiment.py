"""Paired layer-wise / global runs, CSV metrics, summary tables and audits."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .architecture import HierarchySpec, NetworkPlan, build_network
from .config import RunConfig
from .data import BatchPlan, ImageDataset, iterate_batches, load_cifar, make_desk_subset, synth_pair
from .global_learning import compare_runs, train_global
from .local_learning import block_optimizers, local_step, train_layerwise_concurrent, train_layerwise_greedy
from .model import Network, plain_forward
from .training import MetricsRecord, TrainConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["run_id", "mode", "seed", "epoch", "lr", "train_loss", "train_acc", "test_acc",
              "active_block", "probe_acc"]
TIMING_HEADER = ["run_id", "epoch", "wall_time"]
THREADS_ENV = "LAYERWISE_LAB_THREADS"
TRAINERS = {
    "layerwise_concurrent": train_layerwise_concurrent,
    "layerwise_greedy": train_layerwise_greedy,
    "global": train_global,
}
COLUMN = {"layerwise_concurrent": "Layer-wise", "layerwise_greedy": "Layer-wise (greedy)", "global": "Global"}


# ------------------------------------------------------------------ setup


def build_plan(cfg: RunConfig) -> NetworkPlan:
    spec = HierarchySpec(tuple(cfg.stage_convs), tuple(cfg.stage_channels), cfg.block_kind,
                         cfg.shallow_depth, cfg.resolution)
    return build_network(spec, cfg.num_classes, aux_pool=cfg.aux_pool, aux_hidden=cfg.aux_hidden,
                         pool_position=cfg.pool_position)


def load_data(cfg: RunConfig) -> tuple[ImageDataset, ImageDataset]:
    if cfg.dataset_kind == "synth":
        per_train = cfg.n_train // cfg.synth_classes
        per_test = cfg.n_test // cfg.synth_classes
        return synth_pair(cfg.synth_classes, per_train, cfg.resolution, cfg.synth_spread, cfg.data_seed,
                          test_per_class=per_test)
    train, test = load_cifar(cfg.dataset_path, cfg.dataset_kind)
    return make_desk_subset(train, test, cfg.n_train, cfg.n_test, cfg.resolution, cfg.data_seed)


def train_config(cfg: RunConfig, seed: int, mode: str) -> TrainConfig:
    return TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size, mode=mode,
                       local_loss=cfg.local_loss, seed=seed, greedy_epochs=cfg.greedy_epochs,
                       predsim_alpha=cfg.predsim_alpha, eval_train=cfg.eval_train)


def run_id(cfg: RunConfig, seed: int, mode: str) -> str:
    return f"{cfg.model}_{mode}_s{seed}"


# -------------------------------------------------------------------- CSV


def _fmt(v: float) -> str:
    return repr(float(v))


def record_row(r: MetricsRecord) -> list[str]:
    return [r.run_id, r.mode, str(r.seed), str(r.epoch), _fmt(r.lr), _fmt(r.train_loss), _fmt(r.train_acc),
            _fmt(r.test_acc), str(r.active_block), ";".join(_fmt(p) for p in r.probe_acc)]


class CsvSink:
    """Writes each record as it arrives so an interrupted run leaves a readable prefix."""

    def __init__(self, path: Path, timing_path: Path):
        self.path, self.timing_path = path, timing_path
        for p, header in ((path, CSV_HEADER), (timing_path, TIMING_HEADER)):
            with open(p, "w", newline="") as f:
                csv.writer(f).writerow(header)

    def __call__(self, r: MetricsRecord):
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow(record_row(r))
        with open(self.timing_path, "a", newline="") as f:
            csv.writer(f).writerow([r.run_id, r.epoch, f"{r.wall_time:.3f}"])


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f, strict=True)
        missing = [c for c in CSV_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column {missing[0]!r}")
        out = []
        for row in reader:
            probes = [float(p) for p in row["probe_acc"].split(";")] if row["probe_acc"] else []
            out.append(MetricsRecord(row["run_id"], row["mode"], int(row["seed"]), int(row["epoch"]),
                                     float(row["lr"]), float(row["train_loss"]), float(row["train_acc"]),
                                     float(row["test_acc"]), probes, int(row["active_block"])))
    return out


# ------------------------------------------------------------------- runs


@dataclass
class RunResult:
    seed: int
    mode: str
    csv_path: Path
    records: list[MetricsRecord]


def _run_one(cfg: RunConfig, seed: int, mode: str, data, out_dir: Path) -> RunResult:
    train, test = data
    rid = run_id(cfg, seed, mode)
    path = out_dir / "runs" / f"{rid}.csv"
    sink = CsvSink(path, out_dir / "runs" / f"{rid}.timing.csv")
    # identical initialisation across modes for a given seed
    net = Network(build_plan(cfg), seed=seed, dropout=cfg.dr)
    records = TRAINERS[mode](net, train, test, train_config(cfg, seed, mode), run_id=rid, on_record=sink)
    return RunResult(seed, mode, path, records)


def thread_cap(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError as e:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from e


@dataclass
class ExperimentResult:
    out_dir: Path
    runs: list[RunResult]
    summary: str


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None,
                   threads: int | None = None) -> ExperimentResult:
    out = Path(out_dir or cfg.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "provenance.txt").write_text(cfg.provenance())
    for key in cfg.defaulted:
        log.info("default %s = %r", key, getattr(cfg, key))
    data = load_data(cfg)
    jobs = [(seed, mode) for seed in cfg.seeds for mode in cfg.modes]
    workers = min(threads or thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, cfg, s, m, data, out) for s, m in jobs]
            runs = [f.result() for f in futures]
    else:
        runs = [_run_one(cfg, s, m, data, out) for s, m in jobs]
    # the summary is a reduce over what was written, so it is recomputable from the cited files
    runs = [RunResult(r.seed, r.mode, r.csv_path, read_metrics(r.csv_path)) for r in runs]
    summary = render_summary(cfg, runs, out)
    (out / "summary.txt").write_text(summary)
    return ExperimentResult(out, runs, summary)


# ---------------------------------------------------------------- summary


def best_acc(records: Sequence[MetricsRecord]) -> float:
    return max(r.test_acc for r in records)


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(xs, dtype=np.float64)
    return float(a.mean()), float(a.std())


def render_summary(cfg: RunConfig, runs: Sequence[RunResult], out: Path | None = None) -> str:
    """Best-epoch test accuracy (percent), mean +- population std over seeds."""
    by_mode: dict[str, list[RunResult]] = {}
    for r in runs:
        by_mode.setdefault(r.mode, []).append(r)
    counts = {len(r.records) for r in runs if r.mode != "layerwise_greedy"}
    if len(counts) > 1:
        raise ValueError(f"runs disagree on epoch count: {sorted(counts)}")

    header = ["Model", "LR", "DR", "Hierarchy"]
    cells = [cfg.model, f"{cfg.lr:g}", f"{cfg.dr:g}", cfg.hierarchy]
    means = {}
    for mode in cfg.modes:
        accs = [100.0 * best_acc(r.records) for r in by_mode.get(mode, [])]
        mu, sd = _mean_std(accs)
        means[mode] = mu
        header.append(COLUMN[mode])
        cells.append(f"{mu:.2f} ± {sd:.2f}")
    if "global" in means and "layerwise_concurrent" in means:
        header.append("Gap")
        cells.append(f"{means['global'] - means['layerwise_concurrent']:.2f}")
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]

    def line(row):
        return " | ".join(v.ljust(w) for v, w in zip(row, widths))

    lines = [
        "# accuracy: best-epoch test accuracy (%), mean ± std (ddof=0) over seeds " + ",".join(map(str, cfg.seeds)),
        "# gap: Global - Layer-wise (concurrent) mean",
        line(header),
        "-+-".join("-" * w for w in widths),
        line(cells),
        "",
        "# per-run sources",
    ]
    for r in runs:
        src = r.csv_path.relative_to(out).as_posix() if out is not None else r.csv_path.as_posix()
        lines.append(f"{r.mode} seed {r.seed}: best {100.0 * best_acc(r.records):.2f} "
                     f"final {100.0 * r.records[-1].test_acc:.2f}  <- {src}")
    return "\n".join(lines) + "\n"


def compare_csv(lw_csv: str | Path, gl_csv: str | Path):
    return compare_runs(read_metrics(lw_csv), read_metrics(gl_csv))


# ----------------------------------------------------------------- curves


def emit_curves(csv_paths: Iterable[str | Path], out_dir: str | Path | None = None) -> list[Path]:
    """One ``epoch test_error`` text file per run CSV."""
    written = []
    for p in map(Path, csv_paths):
        records = read_metrics(p)
        dest_dir = Path(out_dir) if out_dir is not None else p.parent
        dest_dir.mkdir(parents=True, exist_ok=True)
        dest = dest_dir / (p.stem + ".curve.txt")
        rows = [f"{r.epoch} {_fmt(1.0 - r.test_acc)}" for r in records]
        dest.write_text("# epoch test_error\n" + "\n".join(rows) + "\n")
        written.append(dest)
    return written


# ------------------------------------------------------------------ audit


@dataclass
class AuditReport:
    max_cross_grad: float
    worst_pair: tuple[int, int] | None  # (loss block, parameter block)
    inference_equal: bool
    batches: int

    @property
    def passed(self) -> bool:
        return self.max_cross_grad == 0.0 and self.inference_equal

    def describe(self) -> str:
        lines = [f"batches audited: {self.batches}",
                 f"max cross-block |grad|: {self.max_cross_grad!r}",
                 f"inference equivalence: {'bitwise equal' if self.inference_equal else 'MISMATCH'}"]
        if self.worst_pair is not None:
            j, i = self.worst_pair
            lines.append(f"leak: loss of block {j} reaches block {i} parameters "
                         f"(boundary after block {i}), magnitude {self.max_cross_grad:g}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def audit_gradient_isolation(cfg: RunConfig, n_batches: int = 3, skip_detach: Iterable[int] = (),
                             data=None, n_inference: int = 100) -> AuditReport:
    """Instrumented layer-wise training on a few batches plus the inference-equivalence check."""
    if not any(m.startswith("layerwise") for m in cfg.modes):
        raise ValueError("gradient-isolation audit needs a layer-wise mode; got only " + ",".join(cfg.modes))
    train, test = data if data is not None else load_data(cfg)
    seed = cfg.seeds[0]
    net = Network(build_plan(cfg), seed=seed, dropout=cfg.dr)
    tcfg = train_config(cfg, seed, "layerwise_concurrent")
    opts = block_optimizers(net, cfg.lr)
    worst, pair = 0.0, None
    batches = iterate_batches(train, BatchPlan(seed, min(cfg.batch_size, len(train))), 0)
    done = 0
    net.train()
    for x, y, _ in batches:
        if done == n_batches:
            break
        res = local_step(net, opts, x, y, tcfg, audit=True, skip_detach=skip_detach)
        off = res.cross_block.copy()
        np.fill_diagonal(off, 0.0)
        if off.max() > worst:
            worst = float(off.max())
            pair = tuple(int(v) for v in np.unravel_index(off.argmax(), off.shape))
        done += 1
    net.eval()
    k = min(n_inference, len(test))
    x = test.normalized(np.arange(k))
    trained = net.forward(x).data
    fresh = plain_forward(net.plan, net.export_base_weights(), x)
    return AuditReport(worst, pair, bool(np.array_equal(trained, fresh)), done)
