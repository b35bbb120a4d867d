"""Sparse multi-target radar detection with LASSO under a false-alarm budget."""

__version__ = "0.1.0"

from .dictionary import (  # noqa: E402
    ChirpSpec,
    Dictionary,
    build_chirp_dictionary,
    column_subset,
    gram,
    linf_matrix_norm,
    load_dictionary,
    save_dictionary,
)
from .scene import (  # noqa: E402
    NoiseSpec,
    TargetScene,
    matched_filter,
    sample_noise,
    snr_db_to_sigma,
    synthesize_measurement,
)
from .lasso import SolverConfig, LassoSolution, kkt_residual, lasso_solve, oracle_solve, truncate_small  # noqa: E402
from .detect import (  # noqa: E402
    DetectionReport,
    Thm1Inputs,
    count_false_alarms,
    gamma_rip_bound,
    incoherence_gamma,
    min_h,
    rip_delta_bruteforce,
    threshold_detect,
    traditional_threshold,
)
