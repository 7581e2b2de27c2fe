"""Simulation and analysis of dynamical-decoupling pulse sequences under
classical dephasing noise.

The package predicts qubit coherence analytically through the
finite-pulse-width filter-function formalism, cross-checks those predictions
with time-domain Monte Carlo ensembles, and characterizes how sequences
tolerate systematic control errors.
"""

from ddsim.sequences import (
    SequenceFamily,
    SequenceLayout,
    LayoutError,
    build_layout,
    cpmg_fractions,
    round_to_grid,
    udd_fractions,
)
from ddsim.filters import (
    FilterSample,
    ToggleFunction,
    ToggleSegment,
    filter_closed_form,
    filter_curve,
    filter_numeric,
    toggle_function,
)
from ddsim.noise import (
    Ambient,
    NoiseTrace,
    OhmicHardCutoff,
    PowerLaw,
    SpectrumError,
    Spur,
    Tabulated,
    VARIANCE_FACTOR,
    periodogram,
    psd,
    synthesize_trace,
)
from ddsim.coherence import (
    ChiDivergenceError,
    ChiConvergenceError,
    ChiResult,
    CoherenceCurve,
    QuadratureConfig,
    chi,
    coherence_curve,
    tau_for_target_w,
)
from ddsim.montecarlo import (
    ControlErrorModel,
    EnsembleResult,
    ErrorAxis,
    RobustnessMap,
    accumulate_phase,
    bright_population,
    ensemble_coherence,
    ensemble_curve,
    evolve_sequence,
    robustness_scan,
)
from ddsim.analysis import (
    ComparisonReport,
    FitError,
    FitResult,
    ScalingResult,
    compare_sequences,
    fit_alpha,
    scaling_study,
)

__version__ = "0.1.0"
