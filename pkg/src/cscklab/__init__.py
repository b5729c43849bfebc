"""Radial toolkit for gluing scalar-flat resolution models into
conically singular constant-scalar-curvature backgrounds.

The pipeline mirrors the construction it measures: link spectra fix the
admissible weights, closed-form resolution models supply the inner
geometry, outer caps supply the compact piece, the glue step interpolates
the two, and the weighted linear theory plus the fixed-point solver turn
the pair into a solved background with measured rates and constants.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, CscklabError, InsufficientDataError,
                     NumericalError, PositivityError)
from .radial import (AnalyticPotential, MetricProfile, RadialPotential,
                     flat_potential, laplacian, link_volume_constant,
                     metric_from_potential, scalar_curvature, scale_pullback,
                     volume)
from .spectrum import (GapCertificate, IndicialSet, LinkSpectrum,
                       gap_certificate, indicial_residual_test, indicial_roots,
                       quotient_sphere_spectrum)
from .acmodels import (ACResolutionModel, calabi_resolution, cy_residual,
                       decay_fit, decay_rate, flat_model,
                       volume_excess_coefficient)
from .outer import (OuterModel, SurgeryConfig, asymptotic_rate, conify,
                    fubini_study_cap, manufactured_cap, truncated_cone)
from .preglue import (CutoffSpec, GluedMetric, error_profile, glue, neck_radius,
                      neck_rate, positivity_threshold, sweep_rows)
from .linear import (approximate_right_inverse, build_modified_system,
                     default_probes, defect_sweep, discretize_glued,
                     edge_growth_sweep, inverse_bound_sweep,
                     lichnerowicz_check, saturating_probe, weighted_norm)
from .solver import (SolveConfig, SolutionReport, admissible_delta, cscK_sweep,
                     error_rate_sweep, predicted_constant, ricci_flat_verify,
                     solve_cscK)

__all__ = [
    "__version__",
    "CscklabError", "ConfigurationError", "NumericalError", "PositivityError",
    "InsufficientDataError",
    "AnalyticPotential", "RadialPotential", "MetricProfile",
    "metric_from_potential", "scalar_curvature", "laplacian", "scale_pullback",
    "flat_potential", "volume", "link_volume_constant",
    "LinkSpectrum", "IndicialSet", "GapCertificate",
    "quotient_sphere_spectrum", "indicial_roots", "gap_certificate",
    "indicial_residual_test",
    "ACResolutionModel", "calabi_resolution", "flat_model", "decay_fit",
    "decay_rate", "cy_residual", "volume_excess_coefficient",
    "OuterModel", "fubini_study_cap", "manufactured_cap", "truncated_cone",
    "SurgeryConfig", "conify", "asymptotic_rate",
    "CutoffSpec", "GluedMetric", "glue", "neck_radius", "error_profile",
    "positivity_threshold", "sweep_rows", "neck_rate",
    "discretize_glued", "build_modified_system", "weighted_norm",
    "default_probes", "saturating_probe", "inverse_bound_sweep",
    "edge_growth_sweep", "approximate_right_inverse",
    "defect_sweep", "lichnerowicz_check",
    "SolveConfig", "SolutionReport", "admissible_delta", "solve_cscK",
    "error_rate_sweep", "predicted_constant", "cscK_sweep",
    "ricci_flat_verify",
]
