"""Numerical machinery for interval maps with inducing schemes: Gibbs-Markov
induced maps, tower extensions, invariant measures, entropy estimators, and
the infinite-entropy counterexamples where the entropy formula fails."""

from .maps1d import (Branch, PiecewiseMap1D, AffineIntervalMap, SingularPoint,
                     doubling_map, lorenz_like_map, lsv_map,
                     piecewise_linear_map, singular_intermittent_map,
                     skew_product_map)
from .inducing import (InducingScheme, NotFullBranch, DistortionReport,
                       build_lsv_scheme, check_gibbs_markov, separation_time,
                       trivial_scheme)
from .tower import (Tower, TowerMeasure, TruncatedCell, UniformDensity,
                    UlamMeasure, OrbitMeasure, base_invariant_measure,
                    pushforward_measure, tower_invariant_measure)
from .entropy import (EstimatorReport, FormulaConfig, FormulaReport,
                      block_entropy, entropy_formula_report,
                      finiteness_criterion, jacobian_integral,
                      lyapunov_birkhoff, rohlin_entropy)
from .counterexample import (CounterexampleParams, ConvergenceReport,
                             build_counterexample_scheme,
                             counterexample_interval_map,
                             counterexample_params, phi, phi_inverse,
                             tail_series_report)
from .skew2d import (SkewSystem, injectivity_check, quotient_project,
                     unstable_integral_report)

__version__ = "0.1.0"
