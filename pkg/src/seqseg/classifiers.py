"""Boosted decision-stump classifiers.

Two estimators share the stump machinery:

- :class:`StumpBoost` — binary logistic AdaBoost over decision stumps; the
  sigmoid of the boosting margin is the per-superpixel unary probability.
- :class:`PresenceBoost` — the same booster with per-round random
  undersampling of the majority class, used to score connected components
  during belief updates.

Training-set assembly for the unary lives in :func:`train_unary`, which keeps
positives and negatives balanced and mines negatives class-proportionally to
the target's co-occurrence row, so frequent co-occurrers (books -> bookshelf)
dominate the negative sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from .scene import ClassCatalog, Component, Dataset, Scene, connected_components, mask_for_class
from .validation import as_rng, check_features_2d

EPS_MINE = 0.02  # probability mass reserved for never-co-occurring classes
_ERR_CLIP = 1e-10
_P_EPS = 1e-12  # keeps sigmoid outputs strictly inside (0, 1)


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: float  # +1 or -1
    alpha: float

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return self.polarity * np.where(X[:, self.feature] > self.threshold, 1.0, -1.0)


def _best_stump(X: np.ndarray, sort_idx: np.ndarray, y_pm: np.ndarray, w: np.ndarray) -> tuple[int, float, float, float]:
    """Minimum-weighted-error stump; ties keep the lowest feature then lowest split."""
    total = w.sum()
    best = (np.inf, 0, 0.0, 1.0)  # (error, feature, threshold, polarity)
    for j in range(X.shape[1]):
        order = sort_idx[:, j]
        xs = X[order, j]
        wp = np.concatenate([[0.0], np.cumsum(w[order] * (y_pm[order] > 0))])
        wn = np.concatenate([[0.0], np.cumsum(w[order] * (y_pm[order] < 0))])
        # stump h(x) = +1 for x > threshold: error(k) = pos weight below split + neg weight above
        err_plus = wp[:-1] + (wn[-1] - wn[:-1])
        valid = np.concatenate([[True], xs[1:] > xs[:-1]])
        thresholds = np.concatenate([[xs[0] - 1.0], (xs[:-1] + xs[1:]) / 2.0])
        err_minus = total - err_plus
        for err_arr, pol in ((err_plus, 1.0), (err_minus, -1.0)):
            masked = np.where(valid, err_arr, np.inf)
            k = int(np.argmin(masked))
            if masked[k] < best[0]:
                best = (float(masked[k]), j, float(thresholds[k]), pol)
    err, feature, threshold, polarity = best
    return feature, threshold, polarity, err


def _fit_logistic_calibration(margins: np.ndarray, y01: np.ndarray) -> tuple[float, float]:
    """Platt-style sigmoid refit on the boosting margin."""
    from sklearn.linear_model import LogisticRegression

    lr = LogisticRegression(C=1e6, solver="lbfgs", max_iter=1000)
    lr.fit(margins.reshape(-1, 1), y01)
    return float(lr.coef_[0, 0]), float(lr.intercept_[0])


class _BoostBase(BaseEstimator, ClassifierMixin):
    """Shared prediction surface; margins feed a sigmoid with optional refit."""

    def decision_function(self, X) -> np.ndarray:
        X = self._check_X(X)
        margin = np.zeros(X.shape[0])
        for stump in self.rounds_:
            margin += stump.alpha * stump.evaluate(X)
        return margin

    def predict_prob(self, X) -> np.ndarray:
        """Probability of the positive class, shape (n,), values in (0, 1)."""
        scale, offset = self.calibration_
        p = expit(scale * self.decision_function(X) + offset)
        return np.clip(p, _P_EPS, 1.0 - _P_EPS)

    def predict_proba(self, X) -> np.ndarray:
        p = self.predict_prob(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_prob(X) >= 0.5).astype(np.int64)

    def _check_X(self, X) -> np.ndarray:
        X = check_features_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was trained with {self.n_features_in_}")
        return X

    def _prepare_fit(self, X, y):
        X = check_features_2d(X)
        y = np.asarray(y)
        uniq = set(np.unique(y).tolist())
        if uniq <= {0, 1}:
            y_pm = np.where(y > 0, 1.0, -1.0)
        elif uniq <= {-1, 1}:
            y_pm = y.astype(np.float64)
        else:
            raise ValueError(f"labels must be binary (0/1 or -1/+1), got {sorted(uniq)}")
        if len(np.unique(y_pm)) < 2:
            raise ValueError("training data must contain both classes")
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return X, y_pm

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features_in_,
            "calibration": {"scale": self.calibration_[0], "offset": self.calibration_[1]},
            "rounds": [
                {"feature": s.feature, "threshold": s.threshold, "polarity": s.polarity, "alpha": s.alpha}
                for s in self.rounds_
            ],
        }

    def _load_dict(self, d: dict):
        self.n_features_in_ = int(d["n_features"])
        self.classes_ = np.array([0, 1])
        self.calibration_ = (float(d["calibration"]["scale"]), float(d["calibration"]["offset"]))
        self.rounds_ = [
            Stump(int(r["feature"]), float(r["threshold"]), float(r["polarity"]), float(r["alpha"]))
            for r in d["rounds"]
        ]
        return self


class StumpBoost(_BoostBase):
    """Binary logistic AdaBoost with decision stumps.

    Per round the stump minimizing the weighted error is added with weight
    alpha = 0.5*log((1-err)/err); example weights follow the logistic loss
    w_i = 1/(1+exp(y_i * margin_i)). The predicted probability is the sigmoid
    of the margin (identity calibration unless ``calibrate`` refits it).
    """

    def __init__(self, n_rounds: int = 64, calibrate: bool = False):
        self.n_rounds = n_rounds
        self.calibrate = calibrate

    def fit(self, X, y):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        X, y_pm = self._prepare_fit(X, y)
        n = X.shape[0]
        sort_idx = np.argsort(X, axis=0, kind="stable")
        w = np.full(n, 1.0 / n)
        margin = np.zeros(n)
        self.rounds_ = []
        for _ in range(self.n_rounds):
            feature, threshold, polarity, err = _best_stump(X, sort_idx, y_pm, w)
            err = float(np.clip(err, _ERR_CLIP, 1.0 - _ERR_CLIP))
            alpha = 0.5 * np.log((1.0 - err) / err)
            stump = Stump(feature, threshold, polarity, alpha)
            self.rounds_.append(stump)
            margin += alpha * stump.evaluate(X)
            if err <= _ERR_CLIP:
                break
            w = 1.0 / (1.0 + np.exp(y_pm * margin))
            total = w.sum()
            if total <= 0 or not np.isfinite(total):
                break
            w /= total
        self.calibration_ = (1.0, 0.0)
        if self.calibrate:
            self.calibration_ = _fit_logistic_calibration(margin, (y_pm > 0).astype(int))
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "StumpBoost":
        model = cls(n_rounds=max(1, len(d["rounds"])))
        return model._load_dict(d)


class PresenceBoost(_BoostBase):
    """RUSBoost-style booster: each round trains its stump on the minority
    class plus a random undersample of the majority class, then reweights on
    the full set.

    ``undersample_ratio`` is the majority:minority count ratio inside a
    round's training subset (1.0 means equal counts). ``round_class_counts_``
    records the per-round (positive, negative) subset sizes.
    """

    def __init__(self, n_rounds: int = 32, undersample_ratio: float = 1.0, random_state: int = 0):
        self.n_rounds = n_rounds
        self.undersample_ratio = undersample_ratio
        self.random_state = random_state

    def fit(self, X, y):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.undersample_ratio <= 0:
            raise ValueError("undersample_ratio must be positive")
        X, y_pm = self._prepare_fit(X, y)
        rng = as_rng(self.random_state)
        n = X.shape[0]
        pos_idx = np.nonzero(y_pm > 0)[0]
        neg_idx = np.nonzero(y_pm < 0)[0]
        minority, majority = (pos_idx, neg_idx) if len(pos_idx) <= len(neg_idx) else (neg_idx, pos_idx)

        w = np.full(n, 1.0 / n)
        margin = np.zeros(n)
        self.rounds_ = []
        self.round_class_counts_ = []
        for _ in range(self.n_rounds):
            n_keep = min(len(majority), max(1, int(round(self.undersample_ratio * len(minority)))))
            sampled = rng.choice(majority, size=n_keep, replace=False)
            subset = np.concatenate([minority, np.sort(sampled)])
            n_pos_round = int((y_pm[subset] > 0).sum())
            self.round_class_counts_.append((n_pos_round, len(subset) - n_pos_round))

            Xs = X[subset]
            ws = w[subset]
            ws = ws / ws.sum()
            sort_idx = np.argsort(Xs, axis=0, kind="stable")
            feature, threshold, polarity, _ = _best_stump(Xs, sort_idx, y_pm[subset], ws)

            stump = Stump(feature, threshold, polarity, 0.0)
            h_full = stump.evaluate(X)
            err = float(np.clip(w[h_full != y_pm].sum(), _ERR_CLIP, 1.0 - _ERR_CLIP))
            alpha = 0.5 * np.log((1.0 - err) / err)
            stump = Stump(feature, threshold, polarity, alpha)
            self.rounds_.append(stump)
            margin += alpha * h_full
            w = 1.0 / (1.0 + np.exp(y_pm * margin))
            total = w.sum()
            if total <= 0 or not np.isfinite(total):
                break
            w /= total
        self.calibration_ = (1.0, 0.0)
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "PresenceBoost":
        model = cls(n_rounds=max(1, len(d["rounds"])))
        return model._load_dict(d)


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Scene-level co-presence counts over the non-void classes.

    counts[i, j] is the number of training scenes containing both class i and
    class j; the diagonal holds per-class scene counts.
    """

    class_ids: tuple[int, ...]
    counts: np.ndarray  # (K, K) int64, symmetric

    @classmethod
    def from_scenes(cls, scenes: Sequence[Scene], catalog: ClassCatalog) -> "CooccurrenceMatrix":
        class_ids = tuple(range(1, len(catalog)))
        index = {c: i for i, c in enumerate(class_ids)}
        counts = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)
        for scene in scenes:
            present = [index[c] for c in np.unique(scene.labelmap.labels).tolist() if c in index]
            for a in present:
                for b in present:
                    counts[a, b] += 1
        return cls(class_ids=class_ids, counts=counts)

    def row_distribution(self, target: int, eps_floor: float = EPS_MINE) -> np.ndarray:
        """Negative-mining distribution over class_ids for the given target.

        The target itself gets zero mass; classes that never co-occur share a
        small floor so the sampling support is never empty.
        """
        if target not in self.class_ids:
            raise KeyError(f"class {target} not covered by the co-occurrence matrix")
        ti = self.class_ids.index(target)
        row = self.counts[ti].astype(np.float64)
        row[ti] = 0.0
        p = np.zeros_like(row)
        others = np.ones(len(row), dtype=bool)
        others[ti] = False
        nz = (row > 0) & others
        z = (row == 0) & others
        if nz.any() and z.any():
            p[nz] = row[nz] / row[nz].sum() * (1.0 - eps_floor)
            p[z] = eps_floor / z.sum()
        elif nz.any():
            p[nz] = row[nz] / row[nz].sum()
        else:
            p[z] = 1.0 / z.sum()
        return p


def mine_negatives(
    pool_classes: np.ndarray,
    cooc: CooccurrenceMatrix,
    target: int,
    n: int,
    seed,
) -> np.ndarray:
    """Sample n negative indices from the pool, class-proportionally to the
    target's co-occurrence distribution. Returns sorted pool indices.
    """
    pool_classes = np.asarray(pool_classes)
    if pool_classes.size == 0:
        raise ValueError("negative pool is empty")
    if n > pool_classes.size:
        raise ValueError(f"requested {n} negatives from a pool of {pool_classes.size}")
    rng = as_rng(seed)
    p = cooc.row_distribution(target)
    remaining: dict[int, np.ndarray] = {}
    for i, c in enumerate(cooc.class_ids):
        if c == target:
            continue
        idx = np.nonzero(pool_classes == c)[0]
        if len(idx):
            remaining[c] = idx
    selected: list[np.ndarray] = []
    need = n
    while need > 0:
        active = [c for c in remaining if p[cooc.class_ids.index(c)] > 0]
        if not active:
            active = sorted(remaining)  # distribution exhausted: fall back to uniform
            if not active:
                raise ValueError("not enough non-target examples in the pool")
            probs = np.full(len(active), 1.0 / len(active))
        else:
            probs = np.array([p[cooc.class_ids.index(c)] for c in active])
            probs = probs / probs.sum()
        draw = rng.multinomial(need, probs)
        for c, want in zip(active, draw):
            if want == 0:
                continue
            idx = remaining[c]
            take = min(int(want), len(idx))
            chosen = rng.choice(idx, size=take, replace=False)
            selected.append(chosen)
            need -= take
            left = np.setdiff1d(idx, chosen, assume_unique=True)
            if len(left):
                remaining[c] = left
            else:
                del remaining[c]
    return np.sort(np.concatenate(selected))[:n]


def stack_superpixels(scenes: Sequence[Scene]) -> tuple[np.ndarray, np.ndarray]:
    """All superpixel features and their majority labels across scenes."""
    feats = [s.features for s in scenes]
    labels = [s.superpixel_labels() for s in scenes]
    return np.vstack(feats), np.concatenate(labels)


def train_unary(
    dataset: Dataset,
    class_id: int,
    rounds: int = 64,
    seed: int = 0,
    cooc: CooccurrenceMatrix | None = None,
    calibrate: bool = False,
    split: str = "train",
) -> StumpBoost:
    """Train the per-superpixel unary classifier for one class.

    The training set holds equal numbers of positives and mined negatives
    (subsampling positives when the negative pool is the binding constraint),
    and is deterministic for a fixed seed.
    """
    scenes = dataset.split_scenes(split)
    X_all, y_all = stack_superpixels(scenes)
    pos_idx = np.nonzero(y_all == class_id)[0]
    if len(pos_idx) == 0:
        raise ValueError(f"class {dataset.catalog.name_of(class_id)!r} absent from training split")
    pool_idx = np.nonzero(y_all != class_id)[0]
    if len(pool_idx) == 0:
        raise ValueError("no negative superpixels available")
    if cooc is None:
        cooc = CooccurrenceMatrix.from_scenes(scenes, dataset.catalog)
    ss = np.random.SeedSequence((int(seed), int(class_id)))
    pos_rng_seed, mine_seed = ss.spawn(2)
    n = min(len(pos_idx), len(pool_idx))
    if n < len(pos_idx):
        pos_idx = np.sort(as_rng(pos_rng_seed).choice(pos_idx, size=n, replace=False))
    mined = mine_negatives(y_all[pool_idx], cooc, class_id, n, mine_seed)
    neg_idx = pool_idx[mined]
    X = np.vstack([X_all[pos_idx], X_all[neg_idx]])
    y = np.concatenate([np.ones(len(pos_idx), dtype=int), np.zeros(len(neg_idx), dtype=int)])
    return StumpBoost(n_rounds=rounds, calibrate=calibrate).fit(X, y)


def component_features(scene: Scene, component: Component) -> np.ndarray:
    """Feature vector for one connected component.

    Layout: [area fraction, centroid x, centroid y, bbox aspect,
    mean of every superpixel feature channel over the component's pixels].
    """
    height, width = scene.labelmap.labels.shape
    r0, c0, r1, c1 = component.bbox
    aspect = (c1 - c0) / (r1 - r0)
    sp_ids = scene.partition.assignment[component.pixels[:, 0], component.pixels[:, 1]]
    mean_channels = scene.features[sp_ids].mean(axis=0)
    head = np.array(
        [
            component.area / (height * width),
            component.centroid[1] / width,
            component.centroid[0] / height,
            aspect,
        ]
    )
    return np.concatenate([head, mean_channels])


def component_training_set(
    scenes: Sequence[Scene],
    catalog: ClassCatalog,
    class_id: int,
    connectivity: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth components of the target class vs components of every other class."""
    rows = []
    labels = []
    for scene in scenes:
        present = np.unique(scene.labelmap.labels)
        for c in present.tolist():
            if c == 0:
                continue
            comps = connected_components(mask_for_class(scene.labelmap, c), connectivity)
            for comp in comps:
                rows.append(component_features(scene, comp))
                labels.append(1 if c == class_id else 0)
    if not rows:
        raise ValueError("no components found in the training scenes")
    return np.vstack(rows), np.asarray(labels, dtype=int)


def train_presence(
    dataset: Dataset,
    class_id: int,
    rounds: int = 32,
    undersample_ratio: float = 1.0,
    seed: int = 0,
    connectivity: int = 4,
    split: str = "train",
) -> PresenceBoost:
    """Train the component-level presence scorer for one class."""
    scenes = dataset.split_scenes(split)
    X, y = component_training_set(scenes, dataset.catalog, class_id, connectivity)
    if y.sum() == 0:
        raise ValueError(f"class {dataset.catalog.name_of(class_id)!r} absent from training split")
    return PresenceBoost(
        n_rounds=rounds, undersample_ratio=undersample_ratio, random_state=int(seed)
    ).fit(X, y)
