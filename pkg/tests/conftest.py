from types import SimpleNamespace

import numpy as np
import pytest

from seqseg import harness, policies, synthgen
from seqseg.mdp import ActionCatalog, presence_frequencies
from seqseg.scene import BinaryMask, ClassCatalog, Dataset, LabelMap, SuperpixelPartition


@pytest.fixture(scope="session")
def small_corpus() -> Dataset:
    """Nine categories x 12 scenes at 32x32; shared by corpus-level tests."""
    return synthgen.generate_corpus(
        synthgen.default_templates(), per_category=12, resolution=(32, 32), seed=2024, train_frac=0.5
    )


@pytest.fixture(scope="session")
def livingroom_pipeline():
    """One-category corpus with trained models and ready environments."""
    templates = [t for t in synthgen.default_templates() if t.category == "livingroom"]
    ds = synthgen.generate_corpus(templates, per_category=26, resolution=(32, 32), seed=99, train_frac=0.5)
    config = harness.resolve_config({"unary_rounds": 24, "presence_rounds": 16})
    models = harness.train_models(ds, config)
    pool = ds.split_scenes("test")
    assets = {s.scene_id: harness.infer_scene_assets(s, models, config) for s in pool}
    order = policies.fixed_order(pool, ds.catalog, 9)
    actions = ActionCatalog.for_catalog(order, ds.catalog)
    beliefs0 = presence_frequencies(pool, actions.belief_ids)
    envs = [
        harness.build_environment(s, ds.catalog, actions, assets[s.scene_id], models, beliefs0, config)
        for s in pool
    ]
    return SimpleNamespace(
        dataset=ds, models=models, assets=assets, envs=envs, order=order, actions=actions, config=config
    )


@pytest.fixture(scope="session")
def tiny_catalog() -> ClassCatalog:
    return ClassCatalog(names=("void", "wall", "floor", "ceiling", "bed", "pillow", "lamp"))


def make_mask(rows, height=8, width=8) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    for r, c in rows:
        bits[r, c] = True
    return BinaryMask(bits)


def rect_mask(r0, c0, r1, c1, height=8, width=8) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return BinaryMask(bits)


def uniform_labelmap(value, height=8, width=8) -> LabelMap:
    return LabelMap(np.full((height, width), value, dtype=np.uint16))


def grid_partition(cell, height=8, width=8) -> SuperpixelPartition:
    rows = np.arange(height) // cell
    cols = np.arange(width) // cell
    n_cols = (width + cell - 1) // cell
    return SuperpixelPartition((rows[:, None] * n_cols + cols[None, :]).astype(np.int32))
