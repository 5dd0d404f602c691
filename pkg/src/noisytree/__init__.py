"""Learn tree graphical models from corrupted data.

The corrupted observations follow a latent tree model on the augmented tree
(every node with a noisy copy attached), so distance-based phylogenetic
reconstruction recovers the true tree up to a small, explicit equivalence
class.
"""
from .errors import *  # noqa: F401,F403
from .metrics import (
    DistanceMatrix,
    SimilarityMatrix,
    distance_matrix_empirical,
    distance_matrix_exact,
    four_point_violation,
    mutual_information,
    path_metric,
    tau_from_joint,
    tau_linear,
)
from .models import (
    BetaChannel,
    CorruptionSpec,
    DiscreteTreeModel,
    GaussianChannel,
    IsingParams,
    LinearTreeModel,
    SampleBatch,
    StochasticChannel,
    UniformFlip,
    corrupt,
    edge_length_of_channel,
    exact_joint,
    flip_for_length,
    from_symmetric,
    ising_to_discrete,
    pair_marginal,
    sample,
)
from .recovery import (
    RecoveryConfig,
    RecoveryResult,
    check_chow_liu_consistency,
    chow_liu,
    extract_tstar,
    neighbor_joining,
    recover,
    shrink_edges,
    shrink_to_binary_prior,
)
from .tree import (
    LabeledTree,
    SemiLabeledTree,
    TreeSplit,
    augment,
    equivalence_class,
    mothers,
    robinson_foulds_normalized,
    suppress_degree_two,
    suppressed_augmented,
    validate_tree,
)

__version__ = "0.1.0"
