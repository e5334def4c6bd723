#!/usr/bin/env python3
"""Desk-scale trend run: residual [1,1,2,2] against [2,2,1,1] on downscaled CIFAR-10.

Trains both hierarchies in concurrent layer-wise mode over five seeds, then
prints the mean best-epoch accuracies and the per-seed probe profile of the
accelerated hierarchy.  Needs the CIFAR-10 binary release.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from layerwise_lab.config import parse_config
from layerwise_lab.data import find_cifar_dir
from layerwise_lab.experiment import best_acc, run_experiment

log = logging.getLogger("desk_trend")

BASE = """\
model = {model}
hierarchy = {hierarchy}
block_kind = residual
dataset = cifar10:{path}
lr = 3e-4
dr = 0.3
width = 16
epochs = {epochs}
batch_size = 128
seeds = [0,1,2,3,4]
modes = [layerwise_concurrent]
n_train = 2000
n_test = 1000
resolution = 8
"""


def locate(explicit):
    for c in (explicit, os.environ.get("LAYERWISE_LAB_CIFAR10"), Path(__file__).resolve().parents[1] / "data"):
        if not c:
            continue
        try:
            return find_cifar_dir(c)
        except FileNotFoundError:
            continue
    return None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cifar", help="cifar-10-batches-bin directory (default: env or data/)")
    ap.add_argument("--out", type=Path, default=Path("desk_trend"))
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")

    path = locate(args.cifar)
    if path is None:
        log.error("CIFAR-10 binaries not found; pass --cifar or set LAYERWISE_LAB_CIFAR10")
        return 2

    means, probes = {}, None
    for model, hier in (("r4", "[1,1,2,2]"), ("r2", "[2,2,1,1]")):
        cfg = parse_config(BASE.format(model=model, hierarchy=hier, path=path, epochs=args.epochs))
        res = run_experiment(cfg, args.out / model, threads=args.threads)
        accs = [best_acc(r.records) for r in res.runs]
        means[hier] = float(np.mean(accs))
        print(f"{hier}: best-epoch acc {100 * means[hier]:.2f} ± {100 * np.std(accs):.2f}")
        if probes is None:
            probes = [r.records[-1].probe_acc for r in res.runs]

    wins = sum(p[-1] > p[0] for p in probes)
    print(f"[1,1,2,2] final probe beats first block in {wins}/5 seeds")
    ok = means["[1,1,2,2]"] >= means["[2,2,1,1]"] and wins >= 4
    print("trend", "holds" if ok else "does not hold")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
