"""Discontinuities in compositional survey series after a redesign."""

from .adjust import (AdjustedSeries, BenchmarkProblem, adjust_series, adjust_values, benchmark_lagrange,
                     benchmark_panel, build_restrictions)
from .estimation import (DiscontinuityEstimate, FitResult, NaiveDifference, extract_discontinuities, fit_mle,
                         naive_difference)
from .models import (CompositionalPanel, InterventionSpec, ModelVariant, build_domain_consistent,
                     build_intervention_regressor, build_m1, build_m2, build_m3, build_m4, build_model,
                     build_seasonal_intervention, domain_observations)
from .simulation import (ModelScenario, MultinomialScenario, SimulationSummary, run_study,
                         simulate_from_model, simulate_multinomial, summarize_resample)
from .statespace import (DiffuseUnresolvedError, FilterSmootherOutput, NonFiniteObservationError,
                         SingularInnovationError, StateSpaceError, StateSpaceModel, diffuse_loglik,
                         filter_and_smooth, fixed_interval_smoother, kalman_filter)
from .transforms import (TransformedPanel, ZeroProportionError, alr_forward, alr_inverse, clr_forward,
                         clr_inverse, transform_panel)
