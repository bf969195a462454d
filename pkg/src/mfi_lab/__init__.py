"""Desk-scale lab for multiscale functional inequalities of random fields.

Builds the standard stochastic-geometry field models (clamped Gaussian,
Poisson-Voronoi, random parking, hardcore Poisson, spherical inclusions,
dependent colorings), measures their action radii, constructs the matching
scale weights, and Monte Carlo checks the multiscale Poincare, log-Sobolev,
and covariance inequalities.
"""

from .core import BoxSpec, FieldSample, RngStream, ball_restriction, lattice_sites, substream
from .estimators import (Estimate, MfiReport, covariance_estimate, efron_stein_check,
                         entropy_estimate, mci_rhs, multiscale_rhs, variance_estimate,
                         verify_inequality)
from .gaussian import (CovarianceModel, LipschitzClamp, brascamp_lieb_oracle,
                       empirical_covariance, gaussian_weight, sample_gaussian_field)
from .inclusions import InclusionModelSpec, dependent_color_field, gamma_weight, inclusion_field
from .laws import RadiusLaw, ScalarLaw
from .derivatives import (empirical_action_radius, fct_derivative, osc_derivative,
                          sup_derivative)
from .models import (DependentColorVoronoiModel, GaussianModel, HardcorePoissonModel,
                     MovingAverageModel, ParkingInclusionModel, PoissonInclusionModel,
                     VoronoiModel)
from .observables import Observable, make_observable
from .pointproc import (HardcoreSpec, PointConfiguration, causal_chain_radius, decimate,
                        decorate, graphical_parking, hardcore_poisson, parking_saturated,
                        rsa_sweep_oracle, sample_poisson)
from .tails import TailEstimate, tail_fit
from .tessellation import influence_region, voronoi_action_radius, voronoi_field
from .weights import (WeightFunction, action_radius_weight, geometric_scale_grid,
                      iterated_radius_weight, radius_law_weight)

__version__ = "0.1.0"
