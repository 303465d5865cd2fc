"""Projection inference for set-identified structural VARs.

Reduced-form estimation lives in :mod:`svarproj.varcore`, restriction
handling in :mod:`svarproj.restrictions`, identified-set bounds in
:mod:`svarproj.idset`, projection regions and radius calibration in
:mod:`svarproj.projection` / :mod:`svarproj.calibrate`, and posterior
samplers in :mod:`svarproj.posterior`. The most used names are re-exported
here.
"""

__version__ = "0.1.0"

from .calibrate import (CalibrateConfig, CalibrationResult, DmInterval,
                        calibrate_frequentist, calibrate_radius, dm_interval,
                        dm_sigma, frequentist_coverage, gk_robust_region,
                        robust_credibility)
from .errors import (BracketFailure, ConfigError, DataFormatError,
                     DegenerateWishart, DimensionMismatch, DomainError,
                     EmptyAtCenter, EmptyIdentifiedSet, LowAcceptance,
                     NoFeasibleStart, NonDifferentiableSuspect,
                     NonMonotoneDetected, NormalizationMissing, NoValidDraws,
                     RidgeApplied, ShortSample, SingularDesign, SingularSigma,
                     SingularUpdate, SvarProjError, SvarProjWarning, UnitRoot)
from .idset import (BatchBounds, BoundsConfig, IdentifiedSetBounds, bounds,
                    bounds_batch, oracle_bounds_2d, oracle_bounds_haar)
from .posterior import (NwHyper, PosteriorDraws, UhligBands,
                        gaussian_posterior_draws, nw_posterior_draws,
                        nw_update, uhlig_credible_bands)
from .projection import (EndpointResult, ProjectionConfig, ProjectionRegion,
                         WaldEllipsoid, chi2_cdf, chi2_quantile, contains,
                         effective_dof, project_endpoint, projection_region)
from .restrictions import (Restriction, RestrictionSet, bh_labor_market_preset,
                           constraint_rows, evaluate, load_restrictions,
                           save_restrictions)
from .solver import (NlpProblem, NlpSolution, SolverConfig, gradient_error,
                     solve, with_fd_gradient)
from .varcore import (ReducedForm, Target, TimeSeriesData, VarSpec,
                      asymptotic_covariance, companion_matrix, estimate,
                      infer_lag_order, irf_matrix, irf_stack, load_csv,
                      long_run_matrix, ols_estimate, stability_margin,
                      structural_irf)

__all__ = [name for name in dir() if not name.startswith("_")]
