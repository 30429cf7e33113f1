"""Active sequential two-sample testing by betting.

Several paired data sources are available; at each slot the test picks one
with a vanishing epsilon-greedy rule, bets on the payoff of a learned witness
function, and rejects the global null once its wealth reaches ``1/alpha``.
"""
from .analysis import (PopulationSummary, distance, gap, kelly_bet, lambda_star, population_summary,
                       sigma_k, t0_bound)
from .betting import BettorState, WealthState, ons_step, wealth_lower_bound, wealth_update
from .engine import RunConfig, TrialResult, run_active, run_oracle, run_passive, simulate, trial_seed
from .estimators import ActiveTwoSampleTest, OracleTwoSampleTest, PassiveTwoSampleTest, check_scenario
from .exceptions import CapabilityError, ConfigError, ContractViolation
from .features import (CenteredBinary, OneHotCategorical, PredictorState, RandomFourier, TanhScalar, Witness,
                       best_in_hindsight, evaluate, increment, make_feature_map, oga_update, regret)
from .harness import ExperimentSpec, compare_active_passive, diagnostics, emit_report, load_report, monte_carlo
from .selection import SelectorState, compute_C, epsilon_schedule, record_outcome, select_source
from .sources import Scenario, SourceModel, parse_scenario, sample_pair, true_mean_embedding

__version__ = "0.1.0"
