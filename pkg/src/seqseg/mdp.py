"""Augmented-MDP environment over one scene.

State carries per-class presence beliefs, their Shannon-entropy
uncertainties, the taken-action set, and the evolving label canvas. The
block featurization gives each action a (1 + 2K) slot: its prior followed by
all K beliefs and all K uncertainties; the vector length is |A|(1 + 2K) and
only the chosen action's block is nonzero.

Executing an action updates only that action's belief: the new value is the
maximum presence score over the connected components of the placed mask (zero
for an empty mask); every other belief is retained bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .classifiers import component_features
from .combiner import LabelCanvas, compose_backgrounds, place_mask
from .metrics import reward
from .scene import BinaryMask, ClassCatalog, Scene, connected_components
from .validation import check_probability


def entropy(p) -> float | np.ndarray:
    """Binary Shannon entropy in bits, with 0*log(0) = 0."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"probability outside [0, 1]: {p}")
    out = np.zeros_like(arr)
    interior = (arr > 0) & (arr < 1)
    q = arr[interior]
    out[interior] = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ActionCatalog:
    """Ordered object classes eligible as actions; beliefs may track a
    different class list (K) than the action list (|A|), though experiments
    use the same one."""

    class_ids: tuple[int, ...]
    belief_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))
        object.__setattr__(self, "belief_ids", tuple(int(c) for c in self.belief_ids))
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("action list contains duplicates")
        if len(set(self.belief_ids)) != len(self.belief_ids):
            raise ValueError("belief list contains duplicates")

    @classmethod
    def for_catalog(
        cls,
        class_ids: Sequence[int],
        catalog: ClassCatalog,
        belief_ids: Sequence[int] | None = None,
    ) -> "ActionCatalog":
        bad = [c for c in class_ids if c in catalog.background_ids or c == 0]
        if bad:
            raise ValueError(f"actions must be object classes, got background/void ids {bad}")
        return cls(
            class_ids=tuple(class_ids),
            belief_ids=tuple(belief_ids if belief_ids is not None else class_ids),
        )

    @property
    def n_actions(self) -> int:
        return len(self.class_ids)

    @property
    def n_beliefs(self) -> int:
        return len(self.belief_ids)

    @property
    def block_size(self) -> int:
        return 1 + 2 * self.n_beliefs

    @property
    def feature_dim(self) -> int:
        return self.n_actions * self.block_size


@dataclass(frozen=True)
class MdpState:
    beliefs: np.ndarray  # (K,)
    uncertainties: np.ndarray  # (K,)
    taken: tuple[int, ...]  # class ids in execution order
    canvas: LabelCanvas
    priors: np.ndarray  # (|A|,)
    cum_reward: float


@dataclass(frozen=True)
class TransitionSample:
    """One (s, a, s', r) draw; the successor is represented by the feature
    vectors of its remaining actions (empty at episode end)."""

    phi: np.ndarray
    action: int
    reward: float
    successor_phis: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError(f"non-finite reward {self.reward}")


def featurize(state: MdpState, action_index: int, actions: ActionCatalog) -> np.ndarray:
    """Block featurization: zero everywhere except the chosen action's block."""
    if not (0 <= action_index < actions.n_actions):
        raise ValueError(f"action index {action_index} outside the catalog of {actions.n_actions}")
    k = actions.n_beliefs
    vec = np.zeros(actions.feature_dim)
    base = action_index * actions.block_size
    vec[base] = state.priors[action_index]
    vec[base + 1 : base + 1 + k] = state.beliefs
    vec[base + 1 + k : base + 1 + 2 * k] = state.uncertainties
    return vec


def belief_update(
    beliefs: np.ndarray,
    uncertainties: np.ndarray,
    belief_ids: Sequence[int],
    class_id: int,
    mask: BinaryMask,
    scorer,
    scene: Scene,
    connectivity: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """Max-over-components presence score for the executed class; all other
    entries are returned untouched (same bits)."""
    new_beliefs = beliefs.copy()
    new_unc = uncertainties.copy()
    if class_id in belief_ids:
        i = list(belief_ids).index(class_id)
        comps = connected_components(mask, connectivity)
        if len(comps) == 0:
            p = 0.0
        else:
            feats = np.vstack([component_features(scene, c) for c in comps])
            p = float(scorer.predict_prob(feats).max())
        new_beliefs[i] = p
        new_unc[i] = entropy(check_probability(p, "presence score"))
    return new_beliefs, new_unc


def presence_prior(scene: Scene, mask: BinaryMask, unary_model, mode: str = "mean_posterior") -> float:
    """Prior for one action from its MAP segmentation.

    "mean_posterior" averages the unary foreground probability over the
    superpixels the MAP labeled object (0 if none); "area_fraction" uses the
    mask's share of the image instead.
    """
    if mode == "area_fraction":
        return mask.area / mask.bits.size
    if mode != "mean_posterior":
        raise ValueError(f"unknown prior mode {mode!r}")
    assignment = scene.partition.assignment
    counts = np.bincount(assignment.ravel(), minlength=scene.partition.count).astype(np.float64)
    fg = np.bincount(assignment.ravel(), weights=mask.bits.ravel().astype(np.float64), minlength=scene.partition.count)
    fg_sp = (fg / counts) > 0.5
    if not fg_sp.any():
        return 0.0
    p = unary_model.predict_prob(scene.features[fg_sp])
    return float(p.mean())


def presence_frequencies(scenes: Sequence[Scene], belief_ids: Sequence[int]) -> np.ndarray:
    """Fraction of scenes whose ground truth contains each belief class."""
    if not scenes:
        raise ValueError("no scenes to compute presence frequencies from")
    freqs = np.zeros(len(belief_ids))
    for scene in scenes:
        present = set(np.unique(scene.labelmap.labels).tolist())
        for i, c in enumerate(belief_ids):
            if c in present:
                freqs[i] += 1
    return freqs / len(scenes)


class SceneEnvironment:
    """Episode environment: one scene, fixed MAP masks, belief machinery.

    Rewards are the cumulative frequency-weighted Jaccard of the canvas after
    each placement (including the fixed background prelude); the "marginal"
    mode reports per-step gains instead.
    """

    def __init__(
        self,
        scene: Scene,
        catalog: ClassCatalog,
        actions: ActionCatalog,
        masks: Mapping[int, BinaryMask],
        priors: np.ndarray,
        initial_beliefs: np.ndarray,
        scorers: Mapping[int, object],
        connectivity: int = 4,
        reward_mode: str = "cumulative",
    ):
        if reward_mode not in ("cumulative", "marginal"):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        missing = [c for c in (*actions.class_ids, *catalog.background_ids) if c not in masks]
        if missing:
            names = [catalog.name_of(c) for c in missing]
            raise ValueError(f"missing MAP masks for classes {names}")
        self.scene = scene
        self.catalog = catalog
        self.actions = actions
        self.masks = dict(masks)
        self.priors = np.asarray(priors, dtype=np.float64)
        if self.priors.shape != (actions.n_actions,):
            raise ValueError(f"priors must have shape ({actions.n_actions},), got {self.priors.shape}")
        self.initial_beliefs = np.asarray(initial_beliefs, dtype=np.float64)
        if self.initial_beliefs.shape != (actions.n_beliefs,):
            raise ValueError(
                f"initial beliefs must have shape ({actions.n_beliefs},), got {self.initial_beliefs.shape}"
            )
        self.scorers = dict(scorers)
        self.connectivity = connectivity
        self.reward_mode = reward_mode
        self._canvas0 = compose_backgrounds(self.masks, catalog, scene.height, scene.width)
        self._reward0 = reward(self._canvas0, scene.labelmap, (), catalog).total

    @property
    def n_actions(self) -> int:
        return self.actions.n_actions

    @property
    def feature_dim(self) -> int:
        return self.actions.feature_dim

    def reset(self) -> MdpState:
        return MdpState(
            beliefs=self.initial_beliefs.copy(),
            uncertainties=np.asarray(entropy(self.initial_beliefs)),
            taken=(),
            canvas=self._canvas0,
            priors=self.priors.copy(),
            cum_reward=self._reward0,
        )

    def remaining_actions(self, state: MdpState) -> list[int]:
        return [i for i, c in enumerate(self.actions.class_ids) if c not in state.taken]

    def features(self, state: MdpState, action_index: int) -> np.ndarray:
        return featurize(state, action_index, self.actions)

    def step(self, state: MdpState, action_index: int) -> tuple[MdpState, TransitionSample]:
        class_id = self.actions.class_ids[action_index]
        if class_id in state.taken:
            raise ValueError(f"action {self.catalog.name_of(class_id)!r} already taken")
        if len(state.taken) >= self.n_actions:
            raise ValueError("episode already complete")
        phi = self.features(state, action_index)
        mask = self.masks[class_id]
        canvas = place_mask(state.canvas, mask, class_id)
        beliefs, uncertainties = belief_update(
            state.beliefs,
            state.uncertainties,
            self.actions.belief_ids,
            class_id,
            mask,
            self.scorers[class_id],
            self.scene,
            self.connectivity,
        )
        taken = state.taken + (class_id,)
        total = reward(canvas, self.scene.labelmap, taken, self.catalog).total
        step_reward = total if self.reward_mode == "cumulative" else total - state.cum_reward
        new_state = MdpState(
            beliefs=beliefs,
            uncertainties=uncertainties,
            taken=taken,
            canvas=canvas,
            priors=state.priors,
            cum_reward=total,
        )
        remaining = self.remaining_actions(new_state)
        if remaining:
            successor_phis = np.vstack([self.features(new_state, i) for i in remaining])
        else:
            successor_phis = np.zeros((0, self.feature_dim))
        return new_state, TransitionSample(
            phi=phi, action=action_index, reward=step_reward, successor_phis=successor_phis
        )

    def gt_present_classes(self) -> set[int]:
        return set(np.unique(self.scene.labelmap.labels).tolist())

    def initial_canvas(self) -> LabelCanvas:
        """Background-prelude canvas; placements copy, so sharing is safe."""
        return self._canvas0

    def evaluate_sequence(self, class_ids: Sequence[int]) -> float:
        """Final cumulative reward of placing the given classes in order.

        Matches the step path exactly (same placement and reward code); the
        belief machinery is skipped because it cannot affect the canvas.
        """
        canvas = self._canvas0
        for class_id in class_ids:
            canvas = place_mask(canvas, self.masks[class_id], class_id)
        return reward(canvas, self.scene.labelmap, tuple(class_ids), self.catalog).total
