"""Private vector aggregation in the shuffle model."""

from .accounting import advanced_composition, amplification_gamma_bound
from .attacks import (
    attack_summation,
    attack_unbiased,
    greedy_packing,
    poison_messages,
    poisoning_experiment,
    project_to_packing,
    reconstruction_experiment,
)
from .baselines import additive_shares_protocol, identity_protocol
from .multi_message import (
    aggregate_multi,
    make_multi_params,
    multi_message_protocol,
    multi_vector_protocol,
    randomize_multi,
    split_budget,
)
from .protocol import Messages, ProtocolPair, SharedRandomness
from .runtime import ShufflerTopology, estimate_err, run_protocol, shuffle, simulate
from .scalar_engine import ScalarEngineParams, aggregate_scalar, randomize_scalar
from .single_message import aggregate_single, randomize_single, select_params, single_message_protocol
from .transforms import binary_round, coord_symmetrize, lift_dimension, rotate_symmetrize
from .vecspace import kashin_forward, kashin_inverse, make_frame, random_rotation

__version__ = "0.1.0"
