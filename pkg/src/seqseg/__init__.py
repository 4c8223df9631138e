"""Sequential semantic segmentation via learned mask-combination order.

Independent binary object/background CRF segmentations are composed onto one
canvas in a sequence chosen by a policy; the policy is learned with
least-squares policy iteration against a frequency-weighted Jaccard reward
and compared to fixed / random / oracle / brute-force-optimal orderings.
"""

from .classifiers import CooccurrenceMatrix, PresenceBoost, StumpBoost, mine_negatives, train_presence, train_unary
from .combiner import LabelCanvas, PlacedSegment, combine_sequence, place_mask
from .crf import BinaryCrf, CrfGraph, CrfWeights, build_graph, fit_weights, map_inference
from .dataio import load_dataset, read_pgm, write_dataset, write_pgm
from .harness import build_control_set, make_folds, run_experiment
from .lspi import LspiConfig, LspiPolicy, greedy_action, solve, train
from .mdp import ActionCatalog, MdpState, SceneEnvironment, belief_update, entropy, featurize
from .metrics import RewardBreakdown, jaccard, reward
from .policies import (
    FixedOrderPolicy,
    LearnedPolicy,
    OraclePolicy,
    RandomOrderPolicy,
    fixed_order,
    optimal_combination,
    optimal_curve,
    rollout,
)
from .scene import (
    BinaryMask,
    ClassCatalog,
    ComponentSet,
    Dataset,
    LabelMap,
    Scene,
    SuperpixelPartition,
    connected_components,
    mask_for_class,
)
from .synthgen import SceneTemplate, default_templates, generate_corpus, generate_scene

__version__ = "0.1.0"
