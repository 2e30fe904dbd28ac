"""Rectangular free additive convolution with a Marchenko-Pastur noise
spectrum: self-consistent solvers, densities, spectral edges, classical
eigenvalue locations, and Monte-Carlo experiments for edge statistics.
"""

from .edge import (
    EdgeBracketError,
    EdgeData,
    bbp_threshold,
    edge_report_json,
    edge_velocity,
    find_right_edge,
    outlier_location,
    sqrt_coefficient,
)
from .ensemble import (
    NOISE_KINDS,
    TrialRecord,
    assemble_Wt,
    derive_seed,
    empirical_stieltjes,
    noise_entry,
    pi_apply,
    pi_quadratic_form,
    pi_split_norm,
    read_trial,
    resolvent_quadratic_form,
    run_trial,
    sample_noise,
    singular_values_sq,
    write_trial,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    Thresholds,
    bbp_experiment,
    delocalization_experiment,
    edge_universality_experiment,
    local_law_experiment,
    rank_estimator,
    rank_experiment,
    report_to_json,
    rigidity_experiment,
    t1_null_experiment,
    t1_statistic,
    write_report_csv,
)
from .freeconv import (
    ConvolutionPoint,
    SolverConfig,
    SolverError,
    SupportScan,
    density,
    density_curve,
    density_diagnostics,
    phi,
    phi_derivative,
    scan_to_json,
    solve_many,
    solve_point,
    support_scan,
    write_density_csv,
)
from .quantiles import (
    QuantileTable,
    classical_locations,
    eta_lower,
    in_domain,
    write_quantile_csv,
)
from .spectrum import (
    ModelParams,
    RegularityReport,
    Spectrum,
    canonical_sqrt_spectrum,
    make_spectrum,
    regularity_check,
    spectrum_from_json,
    spectrum_from_text,
    spectrum_to_json,
    spectrum_to_text,
)
from .stieltjes import AtomCollisionError, m_v, m_v_derivative

__version__ = "0.1.0"

__all__ = [
    "AtomCollisionError",
    "ConvolutionPoint",
    "EdgeBracketError",
    "EdgeData",
    "ExperimentConfig",
    "ExperimentReport",
    "ModelParams",
    "NOISE_KINDS",
    "QuantileTable",
    "RegularityReport",
    "SolverConfig",
    "SolverError",
    "Spectrum",
    "SupportScan",
    "Thresholds",
    "TrialRecord",
    "assemble_Wt",
    "bbp_experiment",
    "bbp_threshold",
    "canonical_sqrt_spectrum",
    "classical_locations",
    "delocalization_experiment",
    "density",
    "density_curve",
    "density_diagnostics",
    "derive_seed",
    "edge_report_json",
    "edge_universality_experiment",
    "edge_velocity",
    "empirical_stieltjes",
    "eta_lower",
    "find_right_edge",
    "in_domain",
    "local_law_experiment",
    "m_v",
    "m_v_derivative",
    "make_spectrum",
    "noise_entry",
    "outlier_location",
    "phi",
    "phi_derivative",
    "pi_apply",
    "pi_quadratic_form",
    "pi_split_norm",
    "rank_estimator",
    "rank_experiment",
    "read_trial",
    "regularity_check",
    "report_to_json",
    "resolvent_quadratic_form",
    "rigidity_experiment",
    "run_trial",
    "sample_noise",
    "scan_to_json",
    "singular_values_sq",
    "solve_many",
    "solve_point",
    "spectrum_from_json",
    "spectrum_from_text",
    "spectrum_to_json",
    "spectrum_to_text",
    "sqrt_coefficient",
    "support_scan",
    "t1_null_experiment",
    "t1_statistic",
    "write_density_csv",
    "write_report_csv",
    "write_trial",
    "write_quantile_csv",
]
