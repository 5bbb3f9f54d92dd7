"""Numerical laboratory for uniformly parabolic fully nonlinear equations.

The package measures pointwise regularity quantities of grid solutions
of ``du/dt + F(D^2 u) = g``: touching openings and cubic expansion
errors, their distributional decay in the opening parameter, sliding
paraboloid contact sets, a certified barrier construction, the full
explicit constant chain for the decay exponent, and box-counting
dimensions of near-singular sets.
"""

from ._kernels import NUMBA_ACTIVE, impl_name
from .barrier import (BarrierParams, BarrierReport, barrier_eval,
                      barrier_params, rescaled_barrier_check, sabotaged,
                      verify_barrier)
from .constants import (ChainError, ConstantChain, SideConditions,
                        compute_constants, default_c_vol, dyadic_kappas,
                        r_bound, side_conditions)
from .geometry import (Cylinder, CylinderPropertyReport, Orientation,
                       ParabolicBall, SpaceTimePoint, balls_intersect,
                       covers_points, hat_contains_ball, cylinder_properties_report, eta0,
                       hat_ball, hat_volume_ratio, interior_cylinder,
                       parabolic_boundary_distance, pball_volume,
                       sample_pball, unit_ball_volume, vitali_select)
from .hausdorff import (CoverReport, PointSet, box_dimension, classical_band,
                        singular_set)
from .operators import (EllipticityPair, OperatorSpec, eval_operator,
                        linear_spec, normalize_problem, pucci_minus,
                        pucci_minus_spec, pucci_plus, pucci_plus_spec,
                        spec_from_dict, spec_from_json, spec_to_dict,
                        spec_to_json, sym_eigvals, verify_ellipticity)
from .regularity import (AbpReport, KappaSetField, Paraboloid, PsiField,
                         QuadraticExpansion, SurvivalFit, ThetaField,
                         a_kappa_membership, a_kappa_set, abp_check,
                         assemble_expansion, directional_derivative_check,
                         inf_convolution, kappa_containment, psi, psi_field,
                         rescaled_remainder, survival_and_fit,
                         survival_dominated, theta_field, theta_lower,
                         theta_upper, vertex_map)
from .solver import (CflError, ExactSolution, Grid, GridFunction,
                     ProblemSpec, cusp_space, heat_mode, problem_from_exact,
                     quadratic, residual, solve, stencil_eval, time_ramp)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
