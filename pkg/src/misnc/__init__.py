"""Extreme-flow algorithms for multi-source multicast with intra-session network coding."""

from misnc.lpsolve import LinearProgram, LpSolution, solve_lp
from misnc.mincost import (MinCostKernel, MinCostResult, UnitExtremeFlow, build_mnc,
                           decompose_paths, granularity, mincost_approx, mincost_exact,
                           shift_small_flows)
from misnc.netgraph import (MulticastRequest, Network, build_network, make_request, max_flow,
                            request_feasible)
from misnc.offline import (FptasParams, OfflineSolution, dual_objective, params_from_epsilon,
                           params_from_omega, run_fptas, verify_offline_certificates)
from misnc.online import (OnlineMetrics, OnlineState, init_state, metrics, process_request,
                          run_online, verify_online_certificates)

__version__ = "0.1.0"
