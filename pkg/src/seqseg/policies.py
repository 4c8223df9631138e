"""Ordering policies and their rollout / enumeration harness.

Five kinds share one rollout interface: a fixed frequency order, uniform
random order, a ground-truth oracle that only picks objects actually present
(then no-ops), the LSPI-learned policy at its test exploration rate, and the
brute-force best-permutation oracle. The oracle and optimal kinds consume
ground truth and are evaluation baselines, never deployable policies.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .combiner import place_mask
from .lspi import greedy_action
from .mdp import MdpState, SceneEnvironment
from .metrics import reward
from .scene import ClassCatalog, Scene
from .validation import as_rng

MAX_OPTIMAL_CLASSES = 7  # factorial guard


class OrderingPolicy:
    kind: str = "abstract"
    uses_ground_truth: bool = False

    def select(self, env: SceneEnvironment, state: MdpState, remaining: list[int], rng) -> int | None:
        """Return an action index from ``remaining``, or None to no-op."""
        raise NotImplementedError


class FixedOrderPolicy(OrderingPolicy):
    kind = "fixed"

    def __init__(self, order: Sequence[int]):
        self.order = [int(c) for c in order]

    def select(self, env, state, remaining, rng):
        remaining_ids = {env.actions.class_ids[i]: i for i in remaining}
        for class_id in self.order:
            if class_id in remaining_ids:
                return remaining_ids[class_id]
        return None


class RandomOrderPolicy(OrderingPolicy):
    kind = "random"

    def select(self, env, state, remaining, rng):
        return remaining[int(as_rng(rng).integers(len(remaining)))]


class OraclePolicy(OrderingPolicy):
    """Frequency order restricted to objects present in the ground truth."""

    kind = "oracle"
    uses_ground_truth = True

    def __init__(self, order: Sequence[int]):
        self.order = [int(c) for c in order]

    def select(self, env, state, remaining, rng):
        present = env.gt_present_classes()
        remaining_ids = {env.actions.class_ids[i]: i for i in remaining}
        for class_id in self.order:
            if class_id in remaining_ids and class_id in present:
                return remaining_ids[class_id]
        return None


class LearnedPolicy(OrderingPolicy):
    kind = "lspi"

    def __init__(self, weights: np.ndarray, epsilon: float = 0.005):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.epsilon = epsilon

    def select(self, env, state, remaining, rng):
        phis = np.vstack([env.features(state, a) for a in remaining])
        return greedy_action(self.weights, phis, remaining, self.epsilon, rng)


def fixed_order(scenes: Sequence[Scene], catalog: ClassCatalog, n: int, category: str | None = None) -> list[int]:
    """Top-n object classes by scene-presence count, descending; presence ties
    break toward the lower catalog index."""
    if category is not None:
        scenes = [s for s in scenes if s.category == category]
        if not scenes:
            raise ValueError(f"category {category!r} absent from the given scenes")
    counts = {c: 0 for c in catalog.object_ids}
    for scene in scenes:
        present = set(np.unique(scene.labelmap.labels).tolist())
        for c in catalog.object_ids:
            if c in present:
                counts[c] += 1
    ranked = sorted((c for c in counts if counts[c] > 0), key=lambda c: (-counts[c], c))
    if n > len(ranked):
        raise ValueError(f"requested top {n} objects but only {len(ranked)} are present")
    return ranked[:n]


def rollout(policy: OrderingPolicy, env: SceneEnvironment, max_actions: int, rng) -> np.ndarray:
    """Reward curve r_1..r_n; a no-op repeats the previous value."""
    if max_actions > env.n_actions:
        raise ValueError(f"max_actions {max_actions} exceeds the action set size {env.n_actions}")
    rng = as_rng(rng)
    state = env.reset()
    prev = state.cum_reward
    curve = np.empty(max_actions)
    for k in range(max_actions):
        remaining = env.remaining_actions(state)
        action = policy.select(env, state, remaining, rng) if remaining else None
        if action is not None:
            state, _ = env.step(state, action)
            prev = state.cum_reward
        curve[k] = prev
    return curve


def _check_optimal_classes(classes: Sequence[int]) -> list[int]:
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise ValueError(f"duplicate classes in {classes}")
    if len(classes) > MAX_OPTIMAL_CLASSES:
        raise ValueError(f"{len(classes)} classes exceed the factorial guard of {MAX_OPTIMAL_CLASSES}")
    return sorted(classes)


def optimal_combination(
    env: SceneEnvironment,
    classes: Sequence[int],
    length: int | None = None,
) -> tuple[tuple[int, ...], float]:
    """Best permutation of the given classes by full-sequence reward.

    Every ordered arrangement of ``length`` classes (default: all of them) is
    evaluated; reward ties return the lexicographically smallest permutation.
    Placements are shared along common prefixes, the reward of each complete
    permutation is still evaluated individually.
    """
    ordered = _check_optimal_classes(classes)
    depth = len(ordered) if length is None else int(length)
    if not (0 < depth <= len(ordered)):
        raise ValueError(f"length {depth} outside 1..{len(ordered)}")
    gt = env.scene.labelmap
    catalog = env.catalog
    best_perm: tuple[int, ...] | None = None
    best_value = -np.inf

    def walk(canvas, prefix: tuple[int, ...]):
        nonlocal best_perm, best_value
        if len(prefix) == depth:
            value = reward(canvas, gt, prefix, catalog).total
            if value > best_value:
                best_value = value
                best_perm = prefix
            return
        for class_id in ordered:
            if class_id in prefix:
                continue
            walk(place_mask(canvas, env.masks[class_id], class_id), prefix + (class_id,))

    walk(env.initial_canvas(), ())
    return best_perm, float(best_value)


def optimal_curve(env: SceneEnvironment, classes: Sequence[int]) -> np.ndarray:
    """Per-prefix-length maxima: entry k-1 is the best reward over all ordered
    arrangements of k of the given classes."""
    ordered = _check_optimal_classes(classes)
    gt = env.scene.labelmap
    catalog = env.catalog
    best = np.full(len(ordered), -np.inf)

    def walk(canvas, prefix: tuple[int, ...]):
        if prefix:
            value = reward(canvas, gt, prefix, catalog).total
            k = len(prefix) - 1
            if value > best[k]:
                best[k] = value
        if len(prefix) == len(ordered):
            return
        for class_id in ordered:
            if class_id in prefix:
                continue
            walk(place_mask(canvas, env.masks[class_id], class_id), prefix + (class_id,))

    walk(env.initial_canvas(), ())
    return best


def make_policy(kind: str, *, order: Sequence[int] | None = None,
                weights: np.ndarray | None = None, test_epsilon: float = 0.005) -> OrderingPolicy:
    if kind == "fixed":
        return FixedOrderPolicy(order)
    if kind == "random":
        return RandomOrderPolicy()
    if kind == "oracle":
        return OraclePolicy(order)
    if kind == "lspi":
        return LearnedPolicy(weights, epsilon=test_epsilon)
    raise ValueError(f"unknown policy kind {kind!r}")
