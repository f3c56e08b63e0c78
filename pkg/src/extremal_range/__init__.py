"""Extremal range of random-field excursion sets: simulation, estimation, theory."""

from .estimators import (ChiCurve, ChiCurveEstimator, EmpiricalCdf, ExtremalRangeEstimator,
                         LkcDensities, LkcDensityEstimator, SlopeEstimate, cdf_direct, cdf_erosion,
                         chi_curve, estimate_c_d, estimate_c_dm1, extremal_range_sample,
                         extremal_range_samples, lkc_densities, prop3_check, slope_at_zero)
from .geometry import (DistanceMap, DistanceTransformer, ExcursionMask, ExcursionSetTransformer,
                       dilate, disc_fraction, distance_transform, erode, excursion_mask)
from .numerics import MaternParams, matern_correlation, second_spectral_moment
from .randfield import (FieldSimulator, GridField, GridSpec, RngSeed, make_model,
                        quantile_threshold, sample_conditional_exceedance, sample_fields)
from .theory import (beta_d, gaussian_limit_constant, gaussian_slope, lkc_densities_gaussian,
                     mixture_slope)

__version__ = "0.1.0"
