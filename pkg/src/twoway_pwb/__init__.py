"""Projection-based wild bootstrap for two-way clustered panel regressions."""

from .dgp import Design, DgpSpec, generate, lattice_locations, population_variances, true_regime
from .drc import RegimeLabel, RegimeReport, classify
from .exceptions import (
    DataError,
    DegenerateAutocorrelation,
    DegenerateDraws,
    ExperimentAborted,
    NotPositiveSemiDefinite,
    NumericalError,
    PanelFormatError,
    PwbError,
    SingularDesign,
    SingularGram,
)
from .harness import (
    ExperimentConfig,
    ResultTable,
    classification_accuracy,
    prepare_inference,
    run_experiment,
    run_inference,
)
from .multipliers import (
    SerialMultiplierSpec,
    SpatialMultiplierEngine,
    build_spatial_engine,
    default_bandwidth,
    draw_serial,
    draw_spatial,
    select_q,
    wendland_c2,
)
from .panel import (
    OlsFit,
    PanelData,
    ScoreProjection,
    euclidean_distances,
    ols_fit,
    project_scores,
    read_panel,
    write_panel_csv,
    write_panel_json,
)
from .pwb import (
    PWB_D,
    PWB_H,
    PWB_V,
    BootstrapResult,
    PwbVariant,
    ScalingState,
    VariantKind,
    bootstrap_draw,
    compute_scaling,
    ks_diagnostic,
    run_pwb,
)
from .rng import KeyedStream
from .variance import (
    CrveResult,
    VarianceEstimates,
    crve,
    estimate_sigma_a,
    estimate_sigma_d,
    estimate_sigma_w,
    estimate_variances,
    evc,
    feasible_rate,
)

__version__ = "0.1.0"
