"""Joint cache-version selection and content placement for adaptive video
streaming over hierarchical edge caches."""

from .model import (Catalog, CacheNode, Link, ModelError, Scenario,
                    ScenarioParams, Topology, UserProfile, VideoVersion,
                    build_catalog, generate_scenario, load_scenario,
                    route_links, save_scenario, utility, validate,
                    zipf_probabilities)
from .placement import Placement, PseudoPlacement
from .candidates import CandidateSpace
from .cave import (AveragedSelection, CaveDualState, CaveRunResult, Selection,
                   StepSchedule, cave_average, cave_dual_value,
                   cave_link_update, cave_run, cave_user_select)
from .cop import (CopDualState, CopRunResult, cop_cache_update,
                  cop_link_update, cop_run, cop_user_select,
                  greedy_fractional_fill, round_placement)
from .oracle import (CaveCopOracleResult, CaveOracleResult, SmallInstance,
                     Violation, brute_force_cave, brute_force_cavecop,
                     cop_lp_value, feasibility_check,
                     fractional_knapsack_oracle)
from .sim import (FlowState, MetricsRow, PolicyKind, PolicySummary,
                  cav_placement, compare_policies, delivered_rates,
                  link_loads, run_policy, step_playback)

__version__ = "0.1.0"
