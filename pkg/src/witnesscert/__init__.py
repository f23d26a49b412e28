"""Certifying entanglement with witnesses from finitely many, possibly correlated rounds."""

from .correction import DeviceNoise, GammaBreakdown, effective_operator, gamma1, gamma2, gamma2_first_order, witness_correction
from .errors import (
    DataIntegrityError,
    DegenerateScoreError,
    DomainError,
    InconsistentModelError,
    InvalidDecompositionError,
    InvalidModelError,
    InvalidOutcomeError,
    NonInvertibleReadoutError,
    PartialRunError,
    RunLoadError,
    SourceError,
    WitnessError,
)
from .experiment import (
    ExperimentConfig,
    RoundRecord,
    RunRecord,
    analyze_estimation,
    analyze_rejection,
    experiment_preset,
    load_run,
    run_experiment,
    save_run,
    simulate,
)
from .qsim import DensityMatrix, OutcomeDistribution, born_distribution, expectation, operator_norm, pauli, sample_outcome
from .rng import make_rng
from .sources import (
    DriftParams,
    DriftSource,
    FractionParams,
    FractionSource,
    IidSource,
    SceEprParams,
    StateSource,
    named_state,
    table4_state,
)
from .stats import (
    EstimationResult,
    RejectionResult,
    beta_param,
    binom_survival,
    confidence_radius,
    estimation,
    f_circ,
    hoeffding_p_bound,
    hoeffding_radius,
    p_value_bound,
    rejection_test,
    running_p_bounds,
    total_normalized_score,
    witness_estimate,
)
from .witness import (
    LocalObservable,
    MeasurementSetting,
    ObservableTerm,
    PovmModel,
    SettingDistribution,
    WitnessDecomposition,
    WitnessGame,
    ghz_game,
    ghz_projection_witness,
    readout_povm,
    recommended_setting_distribution,
    reconstruct_witness,
    score,
    score_extrema,
)

__version__ = "0.1.0"
