"""Acceptance criteria 1-10, one test each, at their stated tolerances.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.  Criteria 7 and 10 need the CIFAR-10 binary
release, located through ``LAYERWISE_LAB_CIFAR10`` or ``data/`` in the repo.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from layerwise_lab import nn_ops as F
from layerwise_lab.architecture import HierarchySpec, build_network, check_acceleration, truncate_plan
from layerwise_lab.autodiff import Tensor
from layerwise_lab.config import parse_config
from layerwise_lab.data import BatchPlan, channel_stats, find_cifar_dir, iterate_batches, synth_blobs, synth_pair
from layerwise_lab.experiment import read_metrics, run_experiment
from layerwise_lab.global_learning import global_step, train_global
from layerwise_lab.local_learning import (block_optimizers, local_step, train_layerwise_concurrent,
                                          train_layerwise_greedy)
from layerwise_lab.model import Network, plain_forward
from layerwise_lab.optimize import Adam, DecaySchedule, lr_at_epoch
from layerwise_lab.tables import distinct_hierarchies
from layerwise_lab.training import TrainConfig

from oracles import check_grads
from test_architecture import EXPECTED_ACCELERATION

f64 = np.float64
REPO = Path(__file__).resolve().parents[1]


# ----------------------------------------------------------------------- 1


def random_hierarchy(r, n):
    m = int(r.integers(2, min(3, n) + 1))
    cuts = np.sort(r.choice(np.arange(1, n), size=m - 1, replace=False))
    return [int(d) for d in np.diff(np.concatenate([[0], cuts, [n]]))]


@pytest.mark.criterion(1)
def test_gradient_isolation_suite(detail):
    t0 = time.perf_counter()
    r = np.random.default_rng(2024)
    worst, blocks_seen, kinds = 0.0, set(), set()
    cfg = TrainConfig(lr=1e-3)
    for i in range(20):
        n = 2 + i % 5  # 2..6 blocks
        kind = ("plain", "residual")[i % 2]
        d = random_hierarchy(r, n)
        chans = tuple(int(c) for c in r.choice([4, 8], size=len(d)))
        spec = HierarchySpec(tuple(d), chans, kind, input_resolution=8)
        net = Network(build_network(spec, 4, aux_pool=int(r.choice([1, 2, 4]))), seed=i, dropout=0.2)
        opts = block_optimizers(net, 1e-3)
        for _ in range(3):
            x = r.normal(size=(8, 3, 8, 8)).astype(np.float32)
            y = np.eye(4, dtype=np.float32)[r.integers(0, 4, 8)]
            res = local_step(net, opts, x, y, cfg, audit=True)
            off = res.cross_block.copy()
            np.fill_diagonal(off, 0.0)
            worst = max(worst, float(off.max()))
            assert np.all(np.diag(res.cross_block) > 0), "a block received no gradient from its own loss"
        blocks_seen.add(net.plan.n_blocks)
        kinds.add(kind)
    elapsed = time.perf_counter() - t0
    detail(f"max cross-block |grad| = {worst!r} over 20 nets x 3 batches, blocks {sorted(blocks_seen)}, "
           f"{elapsed:.1f}s")
    assert blocks_seen == {2, 3, 4, 5, 6} and kinds == {"plain", "residual"}
    assert worst == 0.0
    assert elapsed < 60


# ----------------------------------------------------------------------- 2


def _fd_conv(r):
    k = int(r.choice([1, 2, 3]))
    s = int(r.choice([1, 2]))
    p = int(r.integers(0, k))
    n, c, o = int(r.integers(1, 3)), int(r.integers(1, 3)), int(r.integers(1, 3))
    h = int(r.integers(max(k, 3), 6))
    x, w, b = r.normal(size=(n, c, h, h)), r.normal(size=(o, c, k, k)), r.normal(size=o)
    ho = (h + 2 * p - k) // s + 1
    proj = Tensor(r.normal(size=(n, o, ho, ho)), dtype=f64)
    return lambda x, w, b: (F.conv2d(x, F.ConvParams(w, b, s, p)) * proj).sum(), [x, w, b]


def _fd_linear(r):
    n, i, o = (int(v) for v in r.integers(1, 6, size=3))
    x, w, b = r.normal(size=(n, i)), r.normal(size=(o, i)), r.normal(size=o)
    proj = Tensor(r.normal(size=(n, o)), dtype=f64)
    return lambda x, w, b: (F.linear(x, w, b) * proj).sum(), [x, w, b]


def _fd_batch_norm(r):
    n, c, h = int(r.integers(2, 4)), int(r.integers(1, 4)), int(r.integers(1, 4))
    x = r.normal(size=(n, c, h, h)) * r.uniform(0.5, 3) + r.normal()
    g, b = r.normal(size=c), r.normal(size=c)
    proj = Tensor(r.normal(size=x.shape), dtype=f64)

    def build(x, g, b):
        st = F.BatchNormState(g, b, np.zeros(c), np.ones(c))
        return (F.batch_norm(x, st) * proj).sum()

    return build, [x, g, b]


def _fd_leaky(r):
    shape = tuple(int(v) for v in r.integers(1, 5, size=3))
    x = r.normal(size=shape)
    x = np.where(np.abs(x) < 1e-2, 0.5, x)  # stay off the kink
    proj = Tensor(r.normal(size=shape), dtype=f64)
    return lambda x: (F.leaky_relu(x) * proj).sum(), [x]


def _fd_maxpool(r):
    n, c, h = int(r.integers(1, 3)), int(r.integers(1, 3)), 2 * int(r.integers(1, 4))
    size = n * c * h * h
    # distinct values at least 0.04 apart, so no window is tied within the step
    x = (r.permutation(size) * 0.05 + r.uniform(0, 0.01, size)).reshape(n, c, h, h)
    proj = Tensor(r.normal(size=(n, c, h // 2, h // 2)), dtype=f64)
    return lambda x: (F.max_pool2d(x) * proj).sum(), [x]


def _fd_loss(loss):
    def make(r):
        n, k = int(r.integers(1, 6)), int(r.integers(2, 6))
        z = r.normal(size=(n, k)) * r.uniform(0.5, 3)
        y = np.eye(k)[r.integers(0, k, n)]
        return lambda z: loss(z, y), [z]
    return make


FD_OPS = {
    "conv2d": _fd_conv, "linear": _fd_linear, "batch_norm": _fd_batch_norm, "leaky_relu": _fd_leaky,
    "max_pool": _fd_maxpool, "cross_entropy": _fd_loss(F.cross_entropy),
    "frobenius_onehot": _fd_loss(F.frobenius_onehot),
}


@pytest.mark.criterion(2)
def test_finite_difference_suite(detail):
    t0 = time.perf_counter()
    r = np.random.default_rng(7)
    worst = {}
    for name, make in FD_OPS.items():
        errs = []
        for _ in range(50):
            build, arrays = make(r)
            errs.append(check_grads(build, arrays))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - t0
    detail("worst rel err over 50 instances: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f"; {elapsed:.1f}s")
    assert all(v < 1e-3 for v in worst.values()), worst
    assert elapsed < 120


# ----------------------------------------------------------------------- 3


def _reduction_gap(kind, steps=10):
    spec = HierarchySpec((1, 1), (8, 8), kind, input_resolution=8)
    plan = truncate_plan(build_network(spec, 4), 1)
    lw, gl = Network(plan, seed=3, dropout=0.3).train(), Network(plan, seed=3, dropout=0.3).train()
    opts = block_optimizers(lw, 1e-2)
    gopt = Adam(gl.global_parameters(), lr=1e-2)
    assert len(lw.blocks[0].parameters()) == len(gl.global_parameters())
    train, _ = synth_pair(4, 20, 8, 0.1, seed=0)
    plan_b = BatchPlan(0, 16)
    batches = (b for epoch in range(steps) for b in iterate_batches(train, plan_b, epoch))
    worst = 0.0
    for _ in range(steps):
        x, y, _ = next(batches)
        local_step(lw, opts, x, y, TrainConfig())
        global_step(gl, gopt, x, y)
        for a, b in zip(lw.blocks[0].parameters(), gl.global_parameters()):
            worst = max(worst, float(np.abs(a.data.astype(f64) - b.data.astype(f64)).max()))
    assert opts[0].state.t == gopt.state.t == steps
    return worst


@pytest.mark.criterion(3)
def test_single_block_reduction(detail):
    gaps = {kind: _reduction_gap(kind) for kind in ("plain", "residual")}
    detail("max |theta_lw - theta_gl| over 10 steps: " + ", ".join(f"{k} {v:.1e}" for k, v in gaps.items()))
    assert all(v <= 1e-6 for v in gaps.values())


# ----------------------------------------------------------------------- 4


@pytest.mark.criterion(4)
def test_inference_equivalence(detail):
    train, test = synth_pair(4, 30, 8, 0.2, seed=1, test_per_class=25)
    spec = HierarchySpec((1, 1, 2), (8, 8, 16), "residual", input_resolution=8)
    plan = build_network(spec, 4)
    net = Network(plan, seed=0, dropout=0.2)
    train_layerwise_concurrent(net, train, test, TrainConfig(lr=3e-3, epochs=3, batch_size=32))
    weights = net.export_base_weights()
    x = test.normalized(np.arange(100))
    net.eval()
    trained = net.forward(Tensor(x)).data
    fresh = Network(plan, seed=99).load_base_weights(weights).eval()
    reloaded = fresh.forward(Tensor(x)).data
    functional = plain_forward(plan, weights, x)
    detail(f"100 images: reloaded net bitwise equal {np.array_equal(trained, reloaded)}, "
           f"functional forward bitwise equal {np.array_equal(trained, functional)}")
    assert np.array_equal(trained, reloaded)
    assert np.array_equal(trained, functional)


# ----------------------------------------------------------------------- 5


@pytest.mark.criterion(5)
def test_hierarchy_oracle(detail):
    rows = distinct_hierarchies()
    got = {h: check_acceleration(HierarchySpec.from_string(h)) for h in rows}
    mismatches = {h: v for h, v in got.items() if v != EXPECTED_ACCELERATION[h]}
    detail(f"{len(rows)} distinct published hierarchies, {sum(got.values())} accelerated, "
           f"{len(mismatches)} mismatches")
    assert got["[1,1,2,2]"] is True and got["[2,2,1,1]"] is False
    assert got["[1,2,6,3]"] is True and got["[3,4,6,3]"] is False
    assert not mismatches


# ----------------------------------------------------------------------- 6


@pytest.mark.criterion(6)
def test_schedule_exactness(detail):
    s = DecaySchedule(400)
    lrs = [lr_at_epoch(s, 3e-4, e) for e in range(400)]
    jumps = [e for e in range(1, 400) if lrs[e] != lrs[e - 1]]
    detail(f"decay boundaries {jumps}, lr from 376 = {lrs[376]!r}")
    assert jumps == [200, 300, 356, 376]
    assert all(v == 3e-4 * 0.25 ** 4 for v in lrs[376:])
    assert lrs[376] == pytest.approx(1.171875e-6, rel=1e-12)


# ----------------------------------------------------------------- 7 and 10


def cifar_root():
    candidates = [os.environ.get("LAYERWISE_LAB_CIFAR10"), REPO / "data"]
    for c in candidates:
        if not c:
            continue
        try:
            return find_cifar_dir(c)
        except FileNotFoundError:
            continue
    return None


DESK = """\
model = desk_{name}
hierarchy = {hier}
block_kind = residual
dataset = cifar10:{root}
lr = 3e-4
dr = 0.3
width = 16
epochs = 30
batch_size = 128
seeds = [0,1,2,3,4]
modes = [layerwise_concurrent]
n_train = 2000
n_test = 1000
resolution = 8
"""


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    root = cifar_root()
    if root is None:
        pytest.fail("CIFAR-10 binaries not found (set LAYERWISE_LAB_CIFAR10 or place cifar-10-batches-bin "
                    "under data/); this criterion needs the real dataset", pytrace=False)
    out = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    runs = {}
    for name, hier in (("r4", "[1,1,2,2]"), ("r2", "[2,2,1,1]")):
        cfg = parse_config(DESK.format(name=name, hier=hier, root=root))
        res = run_experiment(cfg, out / name)
        runs[hier] = [read_metrics(r.csv_path) for r in sorted(res.runs, key=lambda r: r.seed)]
    return runs, time.perf_counter() - t0


@pytest.mark.criterion(7)
def test_desk_scale_trend(desk_runs, detail):
    runs, elapsed = desk_runs
    best = {h: [max(r.test_acc for r in recs) for recs in seeds] for h, seeds in runs.items()}
    fast, slow = np.mean(best["[1,1,2,2]"]), np.mean(best["[2,2,1,1]"])
    detail(f"best-epoch test acc mean [1,1,2,2] {100 * fast:.2f} vs [2,2,1,1] {100 * slow:.2f}; "
           f"{elapsed / 60:.1f} min")
    assert fast - slow >= 0.0
    assert len(best["[1,1,2,2]"]) == 5 and all(len(recs) == 30 for recs in runs["[1,1,2,2]"])


@pytest.mark.criterion(10)
def test_separability_profile(desk_runs, detail):
    runs, _ = desk_runs
    finals = [recs[-1].probe_acc for recs in runs["[1,1,2,2]"]]
    wins = sum(p[-1] > p[0] for p in finals)
    detail(f"final block beats first block in {wins}/5 seeds: "
           + "; ".join(f"{p[0]:.3f}->{p[-1]:.3f}" for p in finals))
    assert wins >= 4


# ----------------------------------------------------------------------- 8


@pytest.mark.criterion(8)
def test_trainability(detail):
    train = synth_blobs(4, 50, 8, 0.05, seed=0)
    train = train.with_stats(*channel_stats(train.images))
    spec = HierarchySpec((1, 1), (8, 16), "plain", input_resolution=8)
    plan = build_network(spec, 4)
    cfg = dict(lr=3e-3, epochs=20, batch_size=32, eval_train=True)
    trainers = {"layerwise_concurrent": train_layerwise_concurrent, "layerwise_greedy": train_layerwise_greedy,
                "global": train_global}
    reached = {}
    for mode, fn in trainers.items():
        recs = fn(Network(plan, seed=0), train, train, TrainConfig(mode=mode, **cfg))
        assert len(recs) <= 20
        final_block = [r for r in recs if r.active_block in (-1, plan.n_blocks - 1)]
        hit = [r.epoch for r in final_block if r.train_acc == 1.0]
        reached[mode] = hit[0] if hit else None
    detail("first epoch at 100% train acc: " + ", ".join(f"{m} {e}" for m, e in reached.items()))
    assert all(e is not None for e in reached.values()), reached


# ----------------------------------------------------------------------- 9


DETERMINISM = """\
hierarchy = [1,2]
block_kind = residual
dataset = synth
lr = 1e-3
dr = 0.3
width = 4
epochs = 3
batch_size = 16
seeds = [0,1]
modes = [layerwise_concurrent, layerwise_greedy, global]
n_train = 60
n_test = 20
synth_classes = 4
"""


@pytest.mark.criterion(9)
def test_determinism(tmp_path, detail):
    cfg = parse_config(DETERMINISM)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b", threads=2)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                   if p.is_file() and not p.name.endswith(".timing.csv"))
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    detail(f"{sum(same)}/{len(files)} output files bitwise identical across reruns (serial vs 2 workers)")
    assert len(a.runs) == len(b.runs) == 6
    assert all(same)
