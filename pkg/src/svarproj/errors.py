"""Exception and warning taxonomy for svarproj.

Errors are grouped by origin: input/shape problems, numeric degeneracies,
and solver failures. Warnings never abort a computation; they mark results
that need a second look.
"""

from __future__ import annotations


class SvarProjError(Exception):
    """Base class for all svarproj errors."""


# -- input and shape --------------------------------------------------------

class DimensionMismatch(SvarProjError, ValueError):
    """Array shapes or index ranges are inconsistent."""


class DataFormatError(SvarProjError, ValueError):
    """Malformed input file (bad cell, missing header, ragged row)."""


class ConfigError(SvarProjError, ValueError):
    """Invalid run configuration."""


class DomainError(SvarProjError, ValueError):
    """Scalar argument outside its mathematical domain."""


class ShortSample(SvarProjError, ValueError):
    """Too few observations for the requested lag order."""


class NormalizationMissing(SvarProjError, ValueError):
    """A shock column under study carries no sign restriction.

    Without at least one sign restriction the feasible set is symmetric
    under a column sign flip and the bounds are ambiguous by construction.
    """


# -- numeric degeneracies ---------------------------------------------------

class SingularDesign(SvarProjError):
    """Regressor second-moment matrix is numerically singular."""


class SingularSigma(SvarProjError):
    """Residual covariance is not positive definite."""


class UnitRoot(SvarProjError):
    """I - A_1 - ... - A_p is numerically singular; no long-run matrix."""


class SingularUpdate(SvarProjError):
    """Posterior update matrix N0/T + Q_T could not be inverted."""


class DegenerateWishart(SvarProjError):
    """Inner Gram matrix of the covariance sampler is singular."""


# -- solver and search failures ---------------------------------------------

class NoFeasibleStart(SvarProjError):
    """Every optimizer start failed to reach feasibility."""

    def __init__(self, message: str = "no start reached feasibility", diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class EmptyIdentifiedSet(SvarProjError):
    """No B satisfies BB' = Sigma together with the restrictions."""


class NoValidDraws(SvarProjError):
    """Every posterior draw was excluded (empty or singular)."""


class BracketFailure(SvarProjError):
    """Credibility stays below target even at the expanded radius bracket."""


# -- warnings ----------------------------------------------------------------

class SvarProjWarning(UserWarning):
    """Base class for svarproj warnings."""


class RidgeApplied(SvarProjWarning):
    """Covariance matrix was ridged before inversion."""


class EmptyAtCenter(SvarProjWarning):
    """Identified set is empty at the ellipsoid center; search continues."""


class LowAcceptance(SvarProjWarning):
    """Accept/reject sampler acceptance rate below 0.1%."""


class NonDifferentiableSuspect(SvarProjWarning):
    """One-sided finite differences disagree; bound may have a kink."""


class NonMonotoneDetected(SvarProjWarning):
    """Calibration trace violates monotonicity beyond Monte Carlo noise."""
