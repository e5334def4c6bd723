import importlib.util
from pathlib import Path

import pytest

from layerwise_lab.config import parse_config
from layerwise_lab.experiment import build_plan
from layerwise_lab.tables import ROWS

REPO = Path(__file__).resolve().parents[1]


def load_script(name):
    spec = importlib.util.spec_from_file_location(name, REPO / "scripts" / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_golden_configs_cover_every_row(tmp_path):
    gen = load_script("make_golden_configs")
    assert gen.main(["--out", str(tmp_path)]) == 0
    paths = sorted(tmp_path.glob("*.cfg"))
    assert len(paths) == len(ROWS)
    by_model = {(r.table, r.model): r for r in ROWS}
    for p in paths:
        cfg = parse_config(p.read_text())
        row = by_model[(p.stem.split("_")[0][len("table"):], cfg.model)]
        assert (cfg.lr, cfg.dr, cfg.stage_convs, cfg.block_kind) == \
            (row.lr, row.dr, [int(c) for c in row.hierarchy.strip("[]").split(",")], row.block_kind)
        assert cfg.epochs == 400 and cfg.batch_size == 128
        build_plan(cfg)


def test_shipped_configs_parse():
    for p in (REPO / "configs").rglob("*.cfg"):
        build_plan(parse_config(p.read_text()))


def test_desk_trend_refuses_without_data(tmp_path, monkeypatch):
    monkeypatch.delenv("LAYERWISE_LAB_CIFAR10", raising=False)
    mod = load_script("desk_trend")
    if mod.locate(None) is not None:
        pytest.skip("CIFAR-10 present")
    assert mod.main(["--out", str(tmp_path)]) == 2
