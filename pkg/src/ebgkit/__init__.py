"""Volume bounds for geodesic balls and the Jacobi-equation machinery behind them."""

from .model_spaces import (Direction, ProductSpace, RicciSpectrum, SpaceFactor,
                           exact_ball_volume, model_ball_volume, ricci_quadratic_form,
                           ricci_spectrum, scalar_curvature)
from .sn_kernel import (BoundCurve, QuadratureError, SphereQuadrature, bg_area, bg_bound,
                        ebg_area, ebg_bound, sn, sphere_average)

__version__ = "0.1.0"
