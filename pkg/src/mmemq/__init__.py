"""Tabular multi-agent mixed Q-learning on grid wireless networks.

The library simulates networked transmitters that learn transmitter /
base-station associations with Q-learning accelerated by synthetic cousin
environments, coordinate through a leader only when their sensed aggregate
signal strength demands it, and ships closed-form bounds that the
experiment driver cross-validates against simulation.
"""

from .bounds import (MisdetectionSnapshot, beta_iterations, empirical_variance,
                     golden_section, optimal_threshold, pmis_bounds_general,
                     pmis_bounds_two_agents, variance_bound_asymptotic,
                     variance_bound_finite_t)
from .config import ExperimentConfig, Schedules, parse_config, parse_config_text
from .coordination import (BeliefVector, CommsLedger, JointQTable,
                           classify_state, comms_cost, dispatch_update,
                           likelihood)
from .cousins import (MixedQAgent, ReplayBuffer, ensemble_update,
                      matrix_power_kernel, update_weights)
from .mdp import (QTable, Sample, TransitionTensor, epsilon_greedy,
                  estimate_ptt, greedy_policy, q_update, value_iteration)
from .metrics import ape, aqd
from .oracles import agent_q_star, enumerate_agent_mdp, joint_oracle
from .records import RunRecord
from .runner import (ConsistentSpace, build_network, run_algorithm,
                     run_centralized, run_decentralized_baseline,
                     run_generic_single_agent, run_m_memq)
from .wireless import (NetworkState, WirelessConfig, WirelessNetwork,
                       noisy_arss, quantize, snr_cost, true_arss)

__version__ = "0.1.0"
