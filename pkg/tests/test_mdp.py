import numpy as np
import pytest

from seqseg.mdp import (
    ActionCatalog,
    MdpState,
    belief_update,
    entropy,
    featurize,
    presence_frequencies,
    presence_prior,
)
from seqseg.scene import BinaryMask

from conftest import rect_mask
from envtools import AreaTableScorer, build_env, full_masks, perfect_background_labels, tiny_scene


class TestEntropy:
    def test_half_is_one(self):
        assert entropy(0.5) == 1.0

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_endpoints_are_zero(self, p):
        assert entropy(p) == 0.0

    def test_quarter_closed_form(self):
        expected = -(0.25 * np.log2(0.25) + 0.75 * np.log2(0.75))
        assert entropy(0.25) == pytest.approx(expected)
        assert entropy(0.25) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            entropy(1.2)

    def test_symmetric_and_bounded(self):
        ps = np.linspace(0, 1, 21)
        h = entropy(ps)
        assert np.allclose(h, h[::-1])
        assert (h >= 0).all() and (h <= 1).all()


class TestFeaturize:
    def make_state(self, n_actions, k):
        rng = np.random.default_rng(0)
        return MdpState(
            beliefs=rng.uniform(size=k),
            uncertainties=rng.uniform(size=k),
            taken=(),
            canvas=None,
            priors=rng.uniform(size=n_actions),
            cum_reward=0.0,
        )

    def test_nine_by_nine_gives_171(self):
        actions = ActionCatalog(class_ids=tuple(range(4, 13)), belief_ids=tuple(range(4, 13)))
        state = self.make_state(9, 9)
        assert featurize(state, 0, actions).shape == (171,)
        assert actions.feature_dim == 171

    def test_blocks_have_disjoint_support(self):
        actions = ActionCatalog(class_ids=(4, 5, 6), belief_ids=(4, 5, 6))
        state = self.make_state(3, 3)
        for a in range(3):
            for b in range(a + 1, 3):
                va, vb = featurize(state, a, actions), featurize(state, b, actions)
                assert not ((va != 0) & (vb != 0)).any()

    def test_block_layout_prior_beliefs_uncertainties(self):
        actions = ActionCatalog(class_ids=(4, 5), belief_ids=(4, 5))
        state = self.make_state(2, 2)
        vec = featurize(state, 1, actions)
        block = vec[5:]  # second block of size 1 + 2*2
        assert block[0] == state.priors[1]
        assert np.array_equal(block[1:3], state.beliefs)
        assert np.array_equal(block[3:5], state.uncertainties)

    def test_sum_over_actions_stacks_blocks(self):
        actions = ActionCatalog(class_ids=(4, 5, 6), belief_ids=(4, 5, 6))
        state = self.make_state(3, 3)
        total = sum(featurize(state, a, actions) for a in range(3))
        for a in range(3):
            vec = featurize(state, a, actions)
            block = slice(a * actions.block_size, (a + 1) * actions.block_size)
            assert np.array_equal(total[block], vec[block])

    def test_unknown_action_rejected(self):
        actions = ActionCatalog(class_ids=(4, 5), belief_ids=(4, 5))
        with pytest.raises(ValueError, match="action index"):
            featurize(self.make_state(2, 2), 7, actions)


class TestBeliefUpdate:
    def test_empty_mask_drops_belief_and_uncertainty_to_zero(self):
        scene = tiny_scene(perfect_background_labels())
        beliefs, unc = belief_update(
            np.array([0.5, 0.5]),
            np.array([1.0, 1.0]),
            (4, 5),
            4,
            BinaryMask.empty(8, 8),
            AreaTableScorer({}),
            scene,
        )
        assert beliefs[0] == 0.0 and unc[0] == 0.0

    def test_single_component_scored_point_nine(self):
        scene = tiny_scene(perfect_background_labels())
        mask = rect_mask(2, 2, 5, 6)  # area 12
        beliefs, unc = belief_update(
            np.array([0.5, 0.5]),
            np.array([1.0, 1.0]),
            (4, 5),
            4,
            mask,
            AreaTableScorer({12: 0.9}),
            scene,
        )
        assert beliefs[0] == 0.9
        assert unc[0] == pytest.approx(0.4689955935892812, abs=1e-12)

    def test_max_over_components(self):
        scene = tiny_scene(perfect_background_labels())
        bits = np.zeros((8, 8), dtype=bool)
        bits[0:3, 0:4] = True  # area 12
        bits[6:8, 6:8] = True  # area 4
        beliefs, _ = belief_update(
            np.array([0.5, 0.5]),
            np.array([1.0, 1.0]),
            (4, 5),
            4,
            BinaryMask(bits),
            AreaTableScorer({12: 0.3, 4: 0.8}),
            scene,
        )
        assert beliefs[0] == 0.8

    def test_other_beliefs_retained_bit_for_bit(self):
        scene = tiny_scene(perfect_background_labels())
        before = np.array([0.123456789, 0.987654321, 1 / 3])
        unc_before = np.array([0.3, 0.4, 0.5])
        beliefs, unc = belief_update(
            before, unc_before, (4, 5, 6), 5, rect_mask(0, 0, 2, 2), AreaTableScorer({4: 0.6}), scene
        )
        assert beliefs[0].tobytes() == before[0].tobytes()
        assert beliefs[2].tobytes() == before[2].tobytes()
        assert unc[0].tobytes() == unc_before[0].tobytes()
        assert unc[2].tobytes() == unc_before[2].tobytes()


class TestPriors:
    def test_presence_frequency_counts(self, small_corpus):
        bedrooms = [s for s in small_corpus.scenes if s.category == "bedroom"]
        catalog = small_corpus.catalog
        freqs = presence_frequencies(bedrooms, (catalog.id_of("bed"), catalog.id_of("lamp")))
        expected = [
            sum(1 for s in bedrooms if catalog.id_of(name) in np.unique(s.labelmap.labels)) / len(bedrooms)
            for name in ("bed", "lamp")
        ]
        assert np.allclose(freqs, expected)

    def test_class_in_every_scene_gives_belief_one(self):
        labels = perfect_background_labels()
        labels[3, 3] = 4
        scenes = [tiny_scene(labels) for _ in range(5)]
        assert presence_frequencies(scenes, (4,))[0] == 1.0

    def test_empty_map_mask_gives_prior_zero(self):
        scene = tiny_scene(perfect_background_labels())

        class AnyUnary:
            def predict_prob(self, X):
                return np.full(X.shape[0], 0.7)

        assert presence_prior(scene, BinaryMask.empty(8, 8), AnyUnary()) == 0.0

    def test_mean_posterior_prior(self):
        scene = tiny_scene(perfect_background_labels())

        class AnyUnary:
            def predict_prob(self, X):
                return np.full(X.shape[0], 0.7)

        assert presence_prior(scene, rect_mask(0, 0, 4, 4), AnyUnary()) == pytest.approx(0.7)

    def test_area_fraction_prior(self):
        scene = tiny_scene(perfect_background_labels())
        assert presence_prior(scene, rect_mask(0, 0, 4, 4), None, mode="area_fraction") == 16 / 64


class TestStep:
    def test_empty_mask_keeps_cumulative_reward(self):
        gt = perfect_background_labels()
        masks = full_masks(gt)  # bed/pillow/lamp masks are empty
        env = build_env(gt, masks)
        state = env.reset()
        r0 = state.cum_reward
        state2, sample = env.step(state, 0)
        assert sample.reward == pytest.approx(r0)
        assert state2.cum_reward == pytest.approx(r0)

    def test_perfect_first_action_scores_one(self):
        gt = perfect_background_labels()
        gt[3:5, 3:6] = 4  # one bed
        env = build_env(gt, full_masks(gt))
        state, sample = env.step(env.reset(), 0)
        assert sample.reward == pytest.approx(1.0)

    def test_full_episode_emits_one_sample_per_action(self):
        gt = perfect_background_labels()
        gt[3:5, 3:6] = 4
        env = build_env(gt, full_masks(gt))
        state = env.reset()
        samples = []
        while env.remaining_actions(state):
            state, sample = env.step(state, env.remaining_actions(state)[0])
            samples.append(sample)
        assert len(samples) == env.n_actions
        assert samples[-1].successor_phis.shape == (0, env.feature_dim)

    def test_repeated_action_rejected(self):
        gt = perfect_background_labels()
        env = build_env(gt, full_masks(gt))
        state, _ = env.step(env.reset(), 0)
        with pytest.raises(ValueError, match="already taken"):
            env.step(state, 0)

    def test_marginal_reward_mode(self):
        gt = perfect_background_labels()
        gt[3:5, 3:6] = 4
        masks = full_masks(gt)
        env_c = build_env(gt, masks)
        env_m = build_env(gt, masks, reward_mode="marginal")
        s_c, sample_c = env_c.step(env_c.reset(), 0)
        s_m, sample_m = env_m.step(env_m.reset(), 0)
        assert sample_m.reward == pytest.approx(sample_c.reward - env_m.reset().cum_reward)
        assert s_m.cum_reward == s_c.cum_reward

    def test_missing_mask_rejected_at_construction(self):
        gt = perfect_background_labels()
        masks = full_masks(gt)
        del masks[4]
        with pytest.raises(ValueError, match="missing MAP masks"):
            build_env(gt, masks)
