#!/usr/bin/env python3
"""Write one run config per published table row into configs/golden/.

These are full-scale settings (full CIFAR split at 32x32, 400 epochs).  They
are far beyond desk budgets; use them as templates and shrink epochs, n_train
and resolution for local runs.
"""

import argparse
import logging
from pathlib import Path

from layerwise_lab.config import parse_config
from layerwise_lab.tables import ROWS

log = logging.getLogger("golden")

FULL = {"cifar10": (50000, 10000), "cifar100": (50000, 10000)}

TEMPLATE = """\
# table {table} row {model}: reported layer-wise {layerwise}, global {glob}
model = {model}
hierarchy = {hierarchy}
block_kind = {block_kind}
dataset = {dataset}:{data_root}/{folder}
lr = {lr!r}
dr = {dr!r}
width = {width}
epochs = 400
batch_size = 128
resolution = 32
n_train = {n_train}
n_test = {n_test}
"""


def render(row, data_root: str, width: int) -> str:
    folder = "cifar-10-batches-bin" if row.dataset == "cifar10" else "cifar-100-binary"
    n_train, n_test = FULL[row.dataset]
    return TEMPLATE.format(table=row.table, model=row.model, layerwise=row.layerwise, glob=row.global_,
                           hierarchy=row.hierarchy, block_kind=row.block_kind, dataset=row.dataset,
                           data_root=data_root, folder=folder, lr=row.lr, dr=row.dr, width=width,
                           n_train=n_train, n_test=n_test)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "configs" / "golden")
    ap.add_argument("--data-root", default="data", help="directory holding the CIFAR binary folders")
    ap.add_argument("--width", type=int, default=64, help="first-stage channels, doubled per stage")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    args.out.mkdir(parents=True, exist_ok=True)
    for row in ROWS:
        text = render(row, args.data_root, args.width)
        parse_config(text)  # refuse to write anything the runner would reject
        path = args.out / f"table{row.table}_{row.dataset}_{row.model}.cfg"
        path.write_text(text)
    log.info("wrote %d configs to %s", len(ROWS), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
