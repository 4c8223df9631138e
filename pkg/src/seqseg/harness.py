"""Experiment orchestration: model training, 3-fold CV per category,
control sets, and CSV/JSON emission.

The split discipline is two-tier: the dataset's "train" split feeds the
supervised models (unaries, CRF weights, presence scorers) and nothing else;
policies are learned and evaluated by cross-validating the "test" pool, so no
scene ever plays both roles inside one fold evaluation.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import classifiers, crf, lspi, policies
from .dataio import atomic_write_text
from .mdp import ActionCatalog, SceneEnvironment, presence_frequencies, presence_prior
from .scene import BinaryMask, ClassCatalog, Dataset, Scene, mask_for_class
from .validation import as_rng

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "n_actions": 9,
    "optimal_k": 5,
    "folds": 3,
    "policy_seeds": 5,
    "policies": ["lspi", "fixed", "random", "oracle", "optimal"],
    "categories": None,
    "unary_rounds": 64,
    "presence_rounds": 32,
    "undersample_ratio": 1.0,
    "calibrate_unary": False,
    "connectivity": 4,
    "reward_mode": "cumulative",
    "prior_mode": "mean_posterior",
    "weight_grid": None,  # list of [w1, w2, w3]; None selects the default grid
    "jobs": 1,
    "deterministic": True,
    "lspi": {
        "gamma": 0.9,
        "iterations": 10,
        "eps_base": 0.7,
        "eps_floor": 0.1,
        "test_epsilon": 0.005,
        "ridge": 1e-6,
        "reuse_samples": False,
    },
}

CURVES_HEADER = "scene_id,category,policy,seed,k,reward"


def resolve_config(config: dict | None) -> dict:
    out = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, value in (config or {}).items():
        if key == "lspi":
            out["lspi"].update(value)
        elif key not in DEFAULT_CONFIG:
            raise ValueError(f"unknown experiment config key {key!r}")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class FoldPlan:
    category: str
    assignment: dict[str, int]  # scene_id -> fold index
    k: int
    seed: int

    def fold_of(self, scene_id: str) -> int:
        return self.assignment[scene_id]

    def scenes_in(self, fold: int) -> list[str]:
        return [sid for sid, f in self.assignment.items() if f == fold]


def make_folds(dataset: Dataset, category: str, k: int = 3, seed: int = 0) -> FoldPlan:
    """Seeded balanced partition of the category's policy pool into k folds."""
    pool = [s for s in dataset.split_scenes("test") if s.category == category]
    if len(pool) < k:
        raise ValueError(f"category {category!r} has {len(pool)} pool scenes, fewer than k={k}")
    order = as_rng(np.random.SeedSequence((seed, zlib.crc32(category.encode())))).permutation(len(pool))
    assignment = {pool[int(idx)].scene_id: int(pos % k) for pos, idx in enumerate(order)}
    return FoldPlan(category=category, assignment=assignment, k=k, seed=seed)


def build_control_set(
    dataset: Dataset,
    category: str,
    pair: tuple[int, int],
    seed: int = 0,
    train_frac: float = 2.0 / 3.0,
) -> tuple[list[Scene], list[Scene]]:
    """Train/test scene lists over the maximal subset where neither pair
    member appears in every selected image.

    The qualifying subset is the whole category pool, provided each pair
    member is absent from at least one scene (otherwise the predicate is
    infeasible). The seeded split prefers, best-effort, arrangements where
    both folds contain an absence of each member.
    """
    for c in pair:
        if c not in dataset.catalog.object_ids:
            raise ValueError(f"pair member {c} is not an object class")
    pool = [s for s in dataset.split_scenes("test") if s.category == category]
    if not pool:
        raise ValueError(f"category {category!r} has no pool scenes")
    absent = {c: [i for i, s in enumerate(pool) if c not in np.unique(s.labelmap.labels)] for c in pair}
    for c, idx in absent.items():
        if not idx:
            raise ValueError(
                f"class {dataset.catalog.name_of(c)!r} appears in every {category!r} scene; "
                "the control predicate is infeasible"
            )
    rng = as_rng(np.random.SeedSequence((seed, 0xC0)))
    n_train = int(round(train_frac * len(pool)))
    n_train = min(max(n_train, 1), len(pool) - 1)
    chosen = None
    for _ in range(100):
        order = rng.permutation(len(pool))
        train_ids = set(order[:n_train].tolist())
        if chosen is None:
            chosen = train_ids
        balanced = all(
            any(i in train_ids for i in absent[c]) and any(i not in train_ids for i in absent[c])
            for c in pair
        )
        if balanced:
            chosen = train_ids
            break
    train = [pool[i] for i in sorted(chosen)]
    test = [pool[i] for i in sorted(set(range(len(pool))) - chosen)]
    return train, test


@dataclass
class TrainedModels:
    unaries: dict[int, classifiers.StumpBoost]
    crf_weights: dict[int, crf.CrfWeights]
    scorers: dict[int, classifiers.PresenceBoost]
    cooc: classifiers.CooccurrenceMatrix


def train_models(dataset: Dataset, config: dict) -> TrainedModels:
    """Fit unaries, CRF weights, and presence scorers on the model split."""
    catalog = dataset.catalog
    train_scenes = dataset.split_scenes("train")
    cooc = classifiers.CooccurrenceMatrix.from_scenes(train_scenes, catalog)
    grid = None
    if config["weight_grid"] is not None:
        grid = [crf.CrfWeights(*w) for w in config["weight_grid"]]
    unaries: dict[int, classifiers.StumpBoost] = {}
    weights: dict[int, crf.CrfWeights] = {}
    scorers: dict[int, classifiers.PresenceBoost] = {}
    for class_id in range(1, len(catalog)):
        unaries[class_id] = classifiers.train_unary(
            dataset,
            class_id,
            rounds=config["unary_rounds"],
            seed=config["seed"],
            cooc=cooc,
            calibrate=config["calibrate_unary"],
        )
        weights[class_id] = crf.fit_weights(train_scenes, class_id, unaries[class_id], grid=grid)
    for class_id in catalog.object_ids:
        scorers[class_id] = classifiers.train_presence(
            dataset,
            class_id,
            rounds=config["presence_rounds"],
            undersample_ratio=config["undersample_ratio"],
            seed=config["seed"],
            connectivity=config["connectivity"],
        )
    return TrainedModels(unaries=unaries, crf_weights=weights, scorers=scorers, cooc=cooc)


def models_to_dict(models: TrainedModels, catalog: ClassCatalog) -> dict:
    return {
        "classes": {
            catalog.name_of(c): {
                "unary": models.unaries[c].to_dict(),
                "weights": models.crf_weights[c].to_dict(),
            }
            for c in sorted(models.unaries)
        },
        "scorers": {catalog.name_of(c): models.scorers[c].to_dict() for c in sorted(models.scorers)},
        "cooccurrence": {
            "class_ids": list(models.cooc.class_ids),
            "counts": models.cooc.counts.tolist(),
        },
    }


def models_from_dict(d: dict, catalog: ClassCatalog) -> TrainedModels:
    unaries = {
        catalog.id_of(name): classifiers.StumpBoost.from_dict(entry["unary"])
        for name, entry in d["classes"].items()
    }
    weights = {
        catalog.id_of(name): crf.CrfWeights.from_dict(entry["weights"])
        for name, entry in d["classes"].items()
    }
    scorers = {
        catalog.id_of(name): classifiers.PresenceBoost.from_dict(entry)
        for name, entry in d["scorers"].items()
    }
    cooc = classifiers.CooccurrenceMatrix(
        class_ids=tuple(d["cooccurrence"]["class_ids"]),
        counts=np.asarray(d["cooccurrence"]["counts"], dtype=np.int64),
    )
    return TrainedModels(unaries=unaries, crf_weights=weights, scorers=scorers, cooc=cooc)


@dataclass
class SceneAssets:
    masks: dict[int, BinaryMask]
    priors: dict[int, float]


def infer_scene_assets(scene: Scene, models: TrainedModels, config: dict) -> SceneAssets:
    """MAP masks for every non-void class plus per-object-class priors."""
    masks: dict[int, BinaryMask] = {}
    priors: dict[int, float] = {}
    n_classes = len(models.unaries) + 1
    for class_id in range(1, n_classes):
        graph = crf.build_graph(scene, class_id, models.unaries[class_id])
        labeling = crf.map_inference(graph, models.crf_weights[class_id])
        masks[class_id] = crf.mask_from_labeling(scene, labeling)
    for class_id in models.scorers:
        priors[class_id] = presence_prior(
            scene, masks[class_id], models.unaries[class_id], mode=config["prior_mode"]
        )
    return SceneAssets(masks=masks, priors=priors)


def build_environment(
    scene: Scene,
    catalog: ClassCatalog,
    actions: ActionCatalog,
    assets: SceneAssets,
    models: TrainedModels,
    initial_beliefs: np.ndarray,
    config: dict,
) -> SceneEnvironment:
    priors = np.array([assets.priors[c] for c in actions.class_ids])
    return SceneEnvironment(
        scene=scene,
        catalog=catalog,
        actions=actions,
        masks=assets.masks,
        priors=priors,
        initial_beliefs=initial_beliefs,
        scorers={c: models.scorers[c] for c in actions.class_ids},
        connectivity=config["connectivity"],
        reward_mode=config["reward_mode"],
    )


def _rollout_rng(config_seed: int, *tags: int):
    return as_rng(np.random.SeedSequence((config_seed, *tags)))


def evaluate_category(
    dataset: Dataset,
    category: str,
    cat_index: int,
    models: TrainedModels,
    assets_by_id: dict[str, SceneAssets],
    config: dict,
) -> list[tuple]:
    """All fold evaluations for one category; returns curves.csv rows."""
    catalog = dataset.catalog
    plan = make_folds(dataset, category, k=config["folds"], seed=config["seed"])
    pool = {s.scene_id: s for s in dataset.split_scenes("test") if s.category == category}
    rows: list[tuple] = []
    for fold in range(plan.k):
        test_ids = sorted(plan.scenes_in(fold))
        train_ids = sorted(sid for sid in pool if plan.fold_of(sid) != fold)
        train_scenes = [pool[sid] for sid in train_ids]
        order = policies.fixed_order(train_scenes, catalog, config["n_actions"])
        actions = ActionCatalog.for_catalog(order, catalog)
        beliefs0 = presence_frequencies(train_scenes, actions.belief_ids)

        def env_for(sid: str) -> SceneEnvironment:
            return build_environment(
                pool[sid], catalog, actions, assets_by_id[sid], models, beliefs0, config
            )

        kinds = list(config["policies"])
        policy_objs: dict[str, policies.OrderingPolicy] = {}
        for kind in kinds:
            if kind == "optimal":
                continue
            if kind == "lspi":
                cfg = lspi.LspiConfig(seed=int(np.random.SeedSequence(
                    (config["seed"], cat_index, fold)).generate_state(1)[0]), **config["lspi"])
                weights, _ = lspi.train([env_for(sid) for sid in train_ids], cfg)
                policy_objs[kind] = policies.LearnedPolicy(weights, epsilon=config["lspi"]["test_epsilon"])
            else:
                policy_objs[kind] = policies.make_policy(kind, order=order)

        for sid_index, sid in enumerate(test_ids):
            env = env_for(sid)
            for kind_index, kind in enumerate(kinds):
                if kind == "optimal":
                    curve = policies.optimal_curve(env, order[: config["optimal_k"]])
                    for k, value in enumerate(curve, start=1):
                        rows.append((sid, category, kind, 0, k, float(value)))
                    continue
                for s in range(config["policy_seeds"]):
                    rng = _rollout_rng(config["seed"], cat_index, fold, kind_index, s, sid_index)
                    curve = policies.rollout(policy_objs[kind], env, config["n_actions"], rng)
                    for k, value in enumerate(curve, start=1):
                        rows.append((sid, category, kind, s, k, float(value)))
    return rows


def _category_worker(args) -> list[tuple]:
    return evaluate_category(*args)


def compute_assets(dataset: Dataset, config: dict, models: TrainedModels) -> dict[str, SceneAssets]:
    """MAP masks and priors for every policy-pool scene in scope."""
    pool_scenes = dataset.split_scenes("test")
    categories = config["categories"] or sorted({s.category for s in pool_scenes})
    wanted = [s for s in pool_scenes if s.category in categories]
    if config["jobs"] > 1 and len(wanted) > 1:
        with ProcessPoolExecutor(max_workers=config["jobs"]) as pool:
            assets_list = list(pool.map(_assets_worker, [(s, models, config) for s in wanted], chunksize=8))
    else:
        assets_list = [infer_scene_assets(s, models, config) for s in wanted]
    return {s.scene_id: a for s, a in zip(wanted, assets_list)}


def evaluate_categories(
    dataset: Dataset,
    config: dict,
    models: TrainedModels,
    assets_by_id: dict[str, SceneAssets],
) -> list[tuple]:
    pool_scenes = dataset.split_scenes("test")
    categories = config["categories"] or sorted({s.category for s in pool_scenes})
    tasks = [
        (dataset, category, cat_index, models, assets_by_id, config)
        for cat_index, category in enumerate(categories)
    ]
    if config["jobs"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config["jobs"]) as pool:
            results = list(pool.map(_category_worker, tasks))
    else:
        results = [evaluate_category(*t) for t in tasks]
    return [row for chunk in results for row in chunk]


def write_artifacts(out_dir: str | Path, rows: list[tuple], config: dict) -> list[dict]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [CURVES_HEADER]
    for row in rows:
        sid, category, kind, seed, k, value = row
        lines.append(f"{sid},{category},{kind},{seed},{k},{repr(value)}")
    atomic_write_text(out_dir / "curves.csv", "\n".join(lines) + "\n")
    summary = summarize_rows(rows)
    atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2) + "\n")
    atomic_write_text(out_dir / "config.json", json.dumps(config, indent=2) + "\n")
    return summary


def run_experiment(dataset: Dataset, config: dict | None, out_dir: str | Path) -> dict:
    """Full pipeline: train models, cross-validate policies, write artifacts.

    Emits curves.csv (one row per scene/policy/seed/k), summary.json (per
    category x policy x k means), and config.json (every resolved default).
    """
    config = resolve_config(config)
    models = train_models(dataset, config)
    assets_by_id = compute_assets(dataset, config, models)
    rows = evaluate_categories(dataset, config, models, assets_by_id)
    summary = write_artifacts(out_dir, rows, config)
    return {"rows": rows, "summary": summary, "config": config, "out_dir": str(out_dir)}


def _assets_worker(args):
    return infer_scene_assets(*args)


def summarize_rows(rows: Sequence[tuple]) -> list[dict]:
    """Mean reward per (category, policy, k), averaged over scenes and seeds."""
    groups: dict[tuple, list[float]] = {}
    for sid, category, kind, seed, k, value in rows:
        groups.setdefault((category, kind, k), []).append(value)
    out = []
    for (category, kind, k) in sorted(groups):
        values = groups[(category, kind, k)]
        out.append(
            {
                "category": category,
                "policy": kind,
                "k": k,
                "mean_reward": float(np.mean(values)),
                "n": len(values),
            }
        )
    return out


def load_curves(path: str | Path) -> list[tuple]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CURVES_HEADER:
            raise ValueError(f"unexpected curves header {header!r}")
        for line in fh:
            sid, category, kind, seed, k, value = line.strip().split(",")
            rows.append((sid, category, kind, int(seed), int(k), float(value)))
    return rows
