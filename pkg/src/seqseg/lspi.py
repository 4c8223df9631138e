"""Least-squares policy iteration over block-featurized episodes.

Each transition (s, a, s', r) contributes

    C += psi(s,a) (psi(s,a) - gamma * psi(s', pi(s')))^T
    b += psi(s,a) * r

where pi(s') is the greedy action among the successor's remaining actions
under the current weights (terminal successors contribute nothing). Solving
(C + ridge*I) w = b yields the next policy. Sample generation is
epsilon-greedy with the exploration rate decaying across iterations; by
default every iteration rolls out fresh episodes, while ``reuse_samples``
re-solves against the first iteration's sample set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import json
import numpy as np
from sklearn.base import BaseEstimator

from .dataio import atomic_write_text
from .validation import as_rng


@dataclass
class LspiConfig:
    gamma: float = 0.9
    iterations: int = 10
    eps_base: float = 0.7
    eps_floor: float = 0.1
    test_epsilon: float = 0.005
    ridge: float = 1e-6
    seed: int = 0
    reuse_samples: bool = False

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("eps_base", "eps_floor", "test_epsilon"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def epsilon_at(self, iteration: int) -> float:
        return max(self.eps_floor, self.eps_base**iteration)


class LspiAccumulator:
    def __init__(self, dim: int):
        self.C = np.zeros((dim, dim))
        self.b = np.zeros(dim)
        self.count = 0

    @property
    def dim(self) -> int:
        return self.b.shape[0]


def accumulate(acc: LspiAccumulator, sample, weights: np.ndarray, gamma: float) -> LspiAccumulator:
    """Fold one transition into (C, b) under the current greedy policy."""
    phi = sample.phi
    if phi.shape[0] != acc.dim:
        raise ValueError(f"sample feature dim {phi.shape[0]} does not match accumulator dim {acc.dim}")
    if sample.successor_phis.shape[0]:
        q = sample.successor_phis @ weights
        nxt = sample.successor_phis[int(np.argmax(q))]
        acc.C += np.outer(phi, phi - gamma * nxt)
    else:
        acc.C += np.outer(phi, phi)
    acc.b += phi * sample.reward
    acc.count += 1
    return acc


def solve(acc: LspiAccumulator, ridge: float = 0.0) -> np.ndarray:
    """Dense solve of (C + ridge*I) w = b."""
    if acc.count == 0:
        raise ValueError("accumulator holds no samples")
    A = acc.C + ridge * np.eye(acc.dim)
    try:
        w = np.linalg.solve(A, acc.b)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"singular LSPI system ({e}); retry with ridge > 0") from e
    if not np.all(np.isfinite(w)):
        raise ValueError("LSPI solve produced non-finite weights; retry with ridge > 0")
    return w


def greedy_action(
    weights: np.ndarray,
    phis: np.ndarray,
    remaining: Sequence[int],
    epsilon: float,
    rng,
) -> int:
    """Epsilon-greedy pick among the remaining actions.

    ``phis[k]`` must be the feature vector of ``remaining[k]``. Q ties go to
    the earliest entry, i.e. the lowest catalog index when the remaining list
    is in catalog order.
    """
    remaining = list(remaining)
    if not remaining:
        raise ValueError("no remaining actions to choose from")
    rng = as_rng(rng)
    if epsilon > 0 and rng.random() < epsilon:
        return remaining[int(rng.integers(len(remaining)))]
    q = np.asarray(phis) @ weights
    return remaining[int(np.argmax(q))]


def run_episode(env, weights: np.ndarray, epsilon: float, rng) -> list:
    """Roll one episode to completion; returns the emitted samples."""
    rng = as_rng(rng)
    samples = []
    state = env.reset()
    while True:
        remaining = env.remaining_actions(state)
        if not remaining:
            break
        phis = np.vstack([env.features(state, a) for a in remaining])
        action = greedy_action(weights, phis, remaining, epsilon, rng)
        state, sample = env.step(state, action)
        samples.append(sample)
    return samples


@dataclass(frozen=True)
class IterationDiagnostics:
    iteration: int
    epsilon: float
    mean_reward: float  # mean per-step reward over the iteration's samples


def train(envs: Sequence, config: LspiConfig) -> tuple[np.ndarray, list[IterationDiagnostics]]:
    """Run LSPI over the given episode environments.

    Iteration t rolls out every environment once under epsilon-greedy
    selection with the current weights (all-zero at t=0), rebuilds (C, b)
    from those samples, and solves for the next weights.
    """
    if not envs:
        raise ValueError("need at least one training environment")
    dim = envs[0].feature_dim
    weights = np.zeros(dim)
    history: list[IterationDiagnostics] = []
    stored: list[list] = []
    for t in range(config.iterations):
        epsilon = config.epsilon_at(t)
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, t)))
        acc = LspiAccumulator(dim)
        rewards: list[float] = []
        if config.reuse_samples and t > 0:
            episodes = stored
        else:
            episodes = [run_episode(env, weights, epsilon, rng) for env in envs]
            if config.reuse_samples:
                stored = episodes
        for samples in episodes:
            for sample in samples:
                accumulate(acc, sample, weights, config.gamma)
                rewards.append(sample.reward)
        weights = solve(acc, config.ridge)
        history.append(
            IterationDiagnostics(
                iteration=t,
                epsilon=epsilon,
                mean_reward=float(np.mean(rewards)) if rewards else float("nan"),
            )
        )
    return weights, history


class LspiPolicy(BaseEstimator):
    """Estimator facade over :func:`train`; fit learns the weight vector."""

    def __init__(
        self,
        gamma: float = 0.9,
        iterations: int = 10,
        eps_base: float = 0.7,
        eps_floor: float = 0.1,
        test_epsilon: float = 0.005,
        ridge: float = 1e-6,
        seed: int = 0,
        reuse_samples: bool = False,
    ):
        self.gamma = gamma
        self.iterations = iterations
        self.eps_base = eps_base
        self.eps_floor = eps_floor
        self.test_epsilon = test_epsilon
        self.ridge = ridge
        self.seed = seed
        self.reuse_samples = reuse_samples

    def _config(self) -> LspiConfig:
        return LspiConfig(
            gamma=self.gamma,
            iterations=self.iterations,
            eps_base=self.eps_base,
            eps_floor=self.eps_floor,
            test_epsilon=self.test_epsilon,
            ridge=self.ridge,
            seed=self.seed,
            reuse_samples=self.reuse_samples,
        )

    def fit(self, envs: Sequence, y=None):
        self.weights_, self.history_ = train(envs, self._config())
        return self

    def select_action(self, env, state, rng, epsilon: float | None = None) -> int:
        remaining = env.remaining_actions(state)
        phis = np.vstack([env.features(state, a) for a in remaining])
        eps = self.test_epsilon if epsilon is None else epsilon
        return greedy_action(self.weights_, phis, remaining, eps, rng)


def save_policy(path, weights: np.ndarray, class_ids: Sequence[int], class_names: Sequence[str],
                belief_ids: Sequence[int], gamma: float) -> None:
    payload = {
        "class_ids": [int(c) for c in class_ids],
        "class_names": list(class_names),
        "belief_ids": [int(c) for c in belief_ids],
        "K": len(belief_ids),
        "gamma": gamma,
        "weights": [float(w) for w in weights],
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_policy(path) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    return np.asarray(payload["weights"], dtype=np.float64), payload
