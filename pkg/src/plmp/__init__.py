"""Online p-norm selection for robust LMP adaptive filtering."""

from .lmp import FilterState, NonFiniteInputError, lmp_step, prior_error
from .features import (
    DataWindow,
    FeatureConfig,
    StateVector,
    compute_state,
    initial_s4,
    one_step_loss,
)
from .rff import (
    RffMap,
    StateAction,
    draw_map,
    features,
    features_batch,
    gaussian_kernel,
    load_map,
    median_heuristic_bandwidth,
    save_map,
)
from .envs import (
    Environment,
    ExperimentConfig,
    StreamSample,
    dump_stream,
    sample_alpha_stable,
    sample_sparse_noise,
)

__version__ = "0.1.0"
