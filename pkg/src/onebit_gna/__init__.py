"""Decoding sparse signals from noisy, sign-flipped 1-bit measurements."""
from .baselines import BihtOptions, biht, exhaustive_l0, lp_estimate, project_l1_ball
from .estimators import BIHTDecoder, LinearProjectionDecoder, OneBitGNA
from .model import (
    BinaryObservation,
    EffectiveScale,
    ProblemConfig,
    SensingEnsemble,
    SparseSignal,
    effective_scale,
    haar_forward,
    haar_inverse,
    haar_synthesis,
    make_signal,
    observe,
    sample_matrix,
    trial_rng,
)
from .solver import (
    SingularGramError,
    SolverOptions,
    SolverReport,
    SolverState,
    active_set,
    gna_step,
    hard_threshold,
    kkt_residual,
    newton_step,
    restricted_least_squares,
    run_gna,
)

__version__ = "0.1.0"
