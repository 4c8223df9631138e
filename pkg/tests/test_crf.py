import numpy as np
import pytest

from seqseg import crf
from seqseg.crf import BinaryCrf, CrfGraph, CrfWeights, build_graph, energy, fit_weights, map_inference
from seqseg.scene import LabelMap, Scene, SuperpixelPartition, mask_for_class
from seqseg.metrics import jaccard
from seqseg.classifiers import train_unary


class ConstantUnary:
    """predict_prob stub returning a fixed probability per superpixel."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=np.float64)

    def predict_prob(self, X):
        return self.probs[: X.shape[0]]


class FeatureUnary:
    """predict_prob stub reading the probability off the first feature column."""

    def predict_prob(self, X):
        return np.asarray(X)[:, 0]


def tiny_scene(labels, cell=1, prob_col=None):
    labels = np.asarray(labels, dtype=np.uint16)
    h, w = labels.shape
    rows = np.arange(h) // cell
    cols = np.arange(w) // cell
    n_cols = (w + cell - 1) // cell
    assignment = (rows[:, None] * n_cols + cols[None, :]).astype(np.int32)
    part = SuperpixelPartition(assignment)
    n = part.count
    feats = np.zeros((n, 5))
    if prob_col is not None:
        feats[:, 0] = prob_col
    feats[:, -3] = np.arange(n) / n
    feats[:, -2] = np.arange(n) % 3 / 3
    feats[:, -1] = 1.0 / n
    return Scene(scene_id="t", category="t", partition=part, labelmap=LabelMap(labels), features=feats)


def random_graph(rng, max_nodes=16) -> tuple[CrfGraph, CrfWeights]:
    n = int(rng.integers(2, max_nodes + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.35]
    edges = np.array(pairs, dtype=np.int32).reshape(len(pairs), 2)
    p = rng.uniform(0.02, 0.98, size=n)
    unary = np.column_stack([-np.log(1 - p), -np.log(p)])
    graph = CrfGraph(
        n_nodes=n,
        edges=edges,
        unary=unary,
        color_diff=rng.uniform(0, 3, size=len(pairs)),
        spatial_diff=rng.uniform(0, 3, size=len(pairs)),
    )
    weights = CrfWeights(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0, 2.0)), float(rng.uniform(0, 2.0)))
    return graph, weights


def exhaustive_min_energy(graph: CrfGraph, weights: CrfWeights):
    """Independent oracle: enumerate all 2^n labelings and sum energies directly."""
    n = graph.n_nodes
    labelings = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    u_obj = weights.w1 * graph.unary[:, 1]
    u_bg = weights.w1 * graph.unary[:, 0]
    energies = labelings @ u_obj + (~labelings) @ u_bg
    for (i, j), cd, sd in zip(graph.edges, graph.color_diff, graph.spatial_diff):
        cost = weights.w2 * np.exp(-cd) + weights.w3 * np.exp(-sd)
        energies += cost * (labelings[:, i] != labelings[:, j])
    best = int(np.argmin(energies))
    return energies, labelings[best], float(energies[best])


def oracle_energy_of(graph, weights, labeling) -> float:
    energies, _, _ = exhaustive_min_energy(graph, weights)
    idx = sum(int(b) << k for k, b in enumerate(labeling))
    return float(energies[idx])


class TestWeights:
    @pytest.mark.parametrize("bad", [(0.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (1.0, -0.1, 0.0), (1.0, 0.0, -2.0)])
    def test_non_submodular_weights_rejected(self, bad):
        with pytest.raises(ValueError, match="non-submodular"):
            CrfWeights(*bad)


class TestBuildGraph:
    def test_half_probability_gives_equal_unaries(self):
        scene = tiny_scene(np.ones((3, 3)), prob_col=0.5)
        graph = build_graph(scene, 1, FeatureUnary())
        assert np.allclose(graph.unary[:, 0], graph.unary[:, 1])

    def test_identical_features_give_zero_difference(self):
        scene = tiny_scene(np.ones((2, 2)))
        scene.features.flags.writeable = False
        graph = build_graph(scene, 1, ConstantUnary(np.full(4, 0.7)))
        same = scene.features[graph.edges[:, 0]] == scene.features[graph.edges[:, 1]]
        for e in range(len(graph.edges)):
            if same[e].all():
                assert graph.color_diff[e] == 0.0 and graph.spatial_diff[e] == 0.0

    def test_grid_has_rook_adjacency(self):
        scene = tiny_scene(np.ones((3, 3)))
        graph = build_graph(scene, 1, ConstantUnary(np.full(9, 0.5)))
        assert len(graph.edges) == 12

    def test_probability_clamp_keeps_energies_finite(self):
        scene = tiny_scene(np.ones((2, 2)), prob_col=[0.0, 1.0, 0.5, 0.5])
        graph = build_graph(scene, 1, FeatureUnary())
        assert np.isfinite(graph.unary).all()


class TestMapInference:
    def test_no_smoothing_equals_thresholding(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0.01, 0.99, size=16)
        scene = tiny_scene(np.ones((4, 4)), prob_col=p)
        graph = build_graph(scene, 1, FeatureUnary())
        labeling = map_inference(graph, CrfWeights(1.0, 0.0, 0.0))
        assert np.array_equal(labeling, p > 0.5)

    def test_strong_object_unaries_win_everywhere(self):
        scene = tiny_scene(np.ones((4, 4)), prob_col=0.99)
        graph = build_graph(scene, 1, FeatureUnary())
        labeling = map_inference(graph, CrfWeights(1.0, 2.0, 2.0))
        assert labeling.all()

    def test_matches_exhaustive_oracle_on_random_graphs(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            graph, weights = random_graph(rng)
            labeling = map_inference(graph, weights)
            _, best_labeling, best_energy = exhaustive_min_energy(graph, weights)
            got = oracle_energy_of(graph, weights, labeling)
            assert got == pytest.approx(best_energy, abs=1e-9)

    def test_scaling_weights_preserves_labeling(self):
        rng = np.random.default_rng(5)
        graph, weights = random_graph(rng)
        base = map_inference(graph, weights)
        scaled = map_inference(graph, CrfWeights(3.7 * weights.w1, 3.7 * weights.w2, 3.7 * weights.w3))
        assert np.array_equal(base, scaled)

    def test_map_energy_bounded_by_constant_labelings(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            graph, weights = random_graph(rng, max_nodes=12)
            labeling = map_inference(graph, weights)
            e = energy(graph, weights, labeling)
            assert e <= energy(graph, weights, np.ones(graph.n_nodes, bool)) + 1e-9
            assert e <= energy(graph, weights, np.zeros(graph.n_nodes, bool)) + 1e-9

    def test_tie_break_prefers_background(self):
        scene = tiny_scene(np.ones((2, 2)), prob_col=0.5)
        graph = build_graph(scene, 1, FeatureUnary())
        labeling = map_inference(graph, CrfWeights(1.0, 0.0, 0.0))
        assert not labeling.any()


class TestFitWeights:
    def test_single_grid_point_returned(self):
        scene = tiny_scene(np.ones((4, 4)), prob_col=0.9)
        only = CrfWeights(1.0, 0.5, 0.5)
        assert fit_weights([scene] * 3, 1, FeatureUnary(), grid=[only]) == only

    def test_empty_grid_rejected(self):
        scene = tiny_scene(np.ones((4, 4)), prob_col=0.9)
        with pytest.raises(ValueError, match="grid"):
            fit_weights([scene], 1, FeatureUnary(), grid=[])

    def test_perfect_unary_ties_resolve_to_least_smoothing(self):
        labels = np.ones((4, 4), dtype=np.uint16)
        labels[:2] = 2
        prob = np.where(labels.ravel()[:: 1] == 1, 0.999, 0.001)
        scene = tiny_scene(labels, prob_col=prob)
        grid = [CrfWeights(1.0, 0.2, 0.1), CrfWeights(1.0, 0.0, 0.0), CrfWeights(1.0, 0.0, 0.2)]
        assert fit_weights([scene] * 3, 1, FeatureUnary(), grid=grid) == CrfWeights(1.0, 0.0, 0.0)

    def test_fitted_weights_beat_or_match_unary_only(self, small_corpus):
        bed = small_corpus.catalog.id_of("bed")
        unary = train_unary(small_corpus, bed, rounds=32, seed=0)
        train_scenes = small_corpus.split_scenes("train")
        fitted = fit_weights(train_scenes, bed, unary)
        n_val = max(1, len(train_scenes) // 3)
        val = train_scenes[-n_val:]

        def mean_ji(weights):
            scores = []
            for s in val:
                graph = build_graph(s, bed, unary)
                mask = crf.mask_from_labeling(s, map_inference(graph, weights))
                scores.append(jaccard(mask, mask_for_class(s.labelmap, bed)))
            return np.mean(scores)

        assert mean_ji(fitted) >= mean_ji(CrfWeights(1.0, 0.0, 0.0)) - 1e-12


class TestEstimator:
    def test_fit_predict_round_trip(self, small_corpus):
        bed = small_corpus.catalog.id_of("bed")
        unary = train_unary(small_corpus, bed, rounds=16, seed=0)
        model = BinaryCrf(class_id=bed, unary_model=unary).fit(small_corpus.split_scenes("train")[:6])
        mask = model.predict(small_corpus.scenes[0])
        assert mask.bits.shape == small_corpus.scenes[0].labelmap.labels.shape
        params = model.get_params()
        assert params["class_id"] == bed

    def test_unfitted_predict_raises(self, small_corpus):
        model = BinaryCrf(class_id=4, unary_model=None)
        with pytest.raises(RuntimeError, match="not fitted"):
            model.predict(small_corpus.scenes[0])
