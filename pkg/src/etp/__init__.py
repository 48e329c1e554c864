"""Exterior transmission eigenvalues of radially symmetric refractive profiles."""
from .cartwright import (DensityEstimate, IndicatorEstimate, IndicatorWidth, TiledZeroProvider,
                         check_indicator_algebra, estimate_density, estimate_indicator,
                         geometric_ladder, width_and_prediction)
from .determinant import DeterminantFn, eval_alpha, eval_determinant, grid_eval
from .errors import (BoundaryZero, EtpError, NearPole, NoConvergence, OutOfRange, ProfileError,
                     QuadratureFailure, StiffnessFailure)
from .experiments import (ComparisonReport, SpectrumJob, compare_profiles, interior_vanishing_check,
                          locality_scan, run_spectrum_job, validate_job)
from .profile import LiouvilleMap, RadialProfile, TransformedPotential, eval_n, eval_q, eval_xi, invert_xi
from .radial import (asymptotic_y, check_estimate, error_envelope, regular_solution,
                     solve_from_interface, solve_regular_from_origin)
from .specfun import SphericalOrder, assoc_legendre, sph_bessel_j, sph_bessel_j_prime, sph_harmonic
from .zerofind import Rect, ZeroSet, count_zeros_rect, locate_zeros, refine_zero

__version__ = "0.1.0"
