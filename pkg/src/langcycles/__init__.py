"""Origin-fixation and Wright-Fisher models of article grammaticalisation.

A library for fitting population-level accounts of article change (the
four-stage grammaticalisation cycle) to documented language histories, and
for deriving those population-level parameters from individual-level
Wright-Fisher scenarios: child-based learning, usage-based updating and
heterogeneous social networks.
"""

from .data_model import (ARTICLES, ArticleRecord, CycleDistribution,
                         LanguageHistory, ObservationWindow,
                         RegionPopulationRecord, changes_count, data_dir,
                         load_composition, load_dataset, load_histories,
                         load_regions, load_wals, rate_estimate,
                         stationary_fractions)
from .demography import (DemographyFit, fit_population_model, growth_g,
                         language_mean_size, mean_population_sizes)
from .fixation import (DiffusionParams, FixationMoments, NetworkSpec,
                       effective_population_size, fixation_probability,
                       fixation_time_moments, gamma_params, origination_rate,
                       sample_power_law_degrees,
                       sampled_effective_population_size)
from .inference import (FitReport, GofResult, WrightFisherParams, aicc,
                        child_grid, evaluate_scenario, fit_poisson_baseline,
                        monte_carlo_gof, network_grid, scenario_params,
                        sweep, usage_grid)
from .likelihood import (InversionConfig, NumericalError,
                         OriginFixationParams, dataset_log_likelihood,
                         interference_factor, invert_likelihood,
                         language_log_likelihood, likelihood_transform,
                         poisson_count_distribution)
from .wf_sim import (SimConfig, SimOutcome, fixation_fraction,
                     fixation_time_distribution, interference_experiment,
                     simulate_run)
from .abm_demo import (DemoParams, DemoRun, estimate_jump_moments,
                       naive_estimates, run_demo)

__version__ = "0.1.0"
