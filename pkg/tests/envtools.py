"""Hand-built tiny environments for MDP/policy tests."""

from __future__ import annotations

import numpy as np

from seqseg.mdp import ActionCatalog, SceneEnvironment
from seqseg.scene import BinaryMask, ClassCatalog, LabelMap, Scene, SuperpixelPartition

CATALOG = ClassCatalog(names=("void", "wall", "floor", "ceiling", "bed", "pillow", "lamp"))


class AreaTableScorer:
    """Stub presence scorer: maps component area fraction to a fixed score."""

    def __init__(self, table, default=0.5):
        self.table = dict(table)
        self.default = default

    def predict_prob(self, X):
        X = np.atleast_2d(X)
        return np.array([self.table.get(round(f * 64), self.default) for f in X[:, 0]])


def tiny_scene(labels) -> Scene:
    labels = np.asarray(labels, dtype=np.uint16)
    h, w = labels.shape
    part = SuperpixelPartition(np.arange(h * w, dtype=np.int32).reshape(h, w))
    feats = np.zeros((h * w, 4))
    feats[:, -1] = 1.0 / (h * w)
    return Scene(scene_id="t", category="t", partition=part, labelmap=LabelMap(labels), features=feats)


def perfect_background_labels(height=8, width=8):
    labels = np.full((height, width), 1, dtype=np.uint16)  # wall
    labels[:2] = 3  # ceiling
    labels[-2:] = 2  # floor
    return labels


def full_masks(gt_labels):
    """Ground-truth masks for every class present plus empties elsewhere."""
    gt_labels = np.asarray(gt_labels)
    return {cid: BinaryMask(gt_labels == cid) for cid in range(1, len(CATALOG))}


def build_env(gt_labels, masks, actions=("bed", "pillow", "lamp"), beliefs=None, scorers=None, **kwargs):
    scene = tiny_scene(gt_labels)
    action_ids = [CATALOG.id_of(n) for n in actions]
    catalog_actions = ActionCatalog.for_catalog(action_ids, CATALOG)
    beliefs = np.full(len(action_ids), 0.5) if beliefs is None else np.asarray(beliefs, float)
    scorers = scorers or {c: AreaTableScorer({}) for c in action_ids}
    priors = kwargs.pop("priors", np.zeros(len(action_ids)))
    return SceneEnvironment(
        scene=scene,
        catalog=CATALOG,
        actions=catalog_actions,
        masks=masks,
        priors=priors,
        initial_beliefs=beliefs,
        scorers=scorers,
        **kwargs,
    )
