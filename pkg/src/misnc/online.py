"""Online primal-dual admission and routing of coded multicast requests.

Requests arrive one at a time. Each request gets its min-cost unit extreme
flow under the current prices. It is accepted whole if that cost is at
most the threshold and rejected otherwise. An accepted request raises the
prices of the links it uses. Decisions are final and there is no partial
routing.

Two variants exist. ``exact`` uses the exact kernel. ``shifted`` uses the
flow-shifted kernel and damps every update by ``sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from misnc.certs import CertificateReport
from misnc.mincost import InfeasibleRequestError, MinCostKernel
from misnc.netgraph import MulticastRequest, Network, request_feasible

EXACT = "exact"
SHIFTED = "shifted"
VARIANTS = (EXACT, SHIFTED)

DEFAULT_SIGMA = 2.0

TOL = 1e-9


@dataclass
class Decision:
    request_id: str
    accepted: bool
    size: float
    cost: float | None = None
    exact_cost: float | None = None
    z: float = 0.0
    flow: np.ndarray | None = field(default=None, repr=False)
    granularity: float | None = None
    prices_before: np.ndarray | None = field(default=None, repr=False)
    prices_after: np.ndarray | None = field(default=None, repr=False)
    reason: str = ""

    @property
    def increments(self) -> np.ndarray | None:
        return None if self.flow is None else self.flow * self.size


@dataclass
class OnlineState:
    net: Network
    phi: float
    variant: str = EXACT
    sigma: float = 1.0
    lambda_thr: float = 1.0
    prices: np.ndarray = None
    loads: np.ndarray = None
    decisions: list[Decision] = field(default_factory=list)
    f_min: float = math.inf
    kernel: MinCostKernel = field(default=None, repr=False)

    @property
    def accepted(self) -> int:
        return sum(d.accepted for d in self.decisions)

    @property
    def capacities(self) -> np.ndarray:
        return np.asarray(self.net.capacities, dtype=float)


def init_state(net: Network, phi: float, variant: str = EXACT, sigma: float | None = None,
               lambda_thr: float = 1.0) -> OnlineState:
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == SHIFTED:
        sigma = DEFAULT_SIGMA if sigma is None else float(sigma)
        if sigma < 1:
            raise ValueError("sigma must be at least 1")
    else:
        sigma = 1.0
    if not lambda_thr > 0:
        raise ValueError("lambda_thr must be positive")
    return OnlineState(net, float(phi), variant, sigma, float(lambda_thr),
                       np.zeros(net.m), np.zeros(net.m), kernel=MinCostKernel(net))


def process_request(state: OnlineState, r: MulticastRequest) -> Decision:
    """Admit or reject ``r``; on admission route it and update the prices."""
    net = state.net
    if not request_feasible(net, r):
        dec = Decision(r.id, False, r.size, reason="infeasible")
        state.decisions.append(dec)
        return dec
    try:
        if state.variant == EXACT:
            res = state.kernel.exact(r, state.prices)
        else:
            res = state.kernel.approx(r, state.prices)
    except InfeasibleRequestError:
        dec = Decision(r.id, False, r.size, reason="infeasible")
        state.decisions.append(dec)
        return dec

    L = res.cost
    threshold = 1.0 if state.variant == EXACT else state.lambda_thr
    if L > threshold:
        dec = Decision(r.id, False, r.size, L, res.exact_cost, reason="cost above threshold")
        state.decisions.append(dec)
        return dec

    f = res.flow.f
    sigma = state.sigma
    z = r.size * (1.0 - L / sigma)
    step = f * r.size / (sigma * state.capacities)
    before = state.prices.copy()
    state.prices = before * (1.0 + step) + (state.phi / net.m) * step
    state.loads = state.loads + f * r.size
    state.f_min = min(state.f_min, res.granularity)
    dec = Decision(r.id, True, r.size, L, res.exact_cost, z, f.copy(), res.granularity,
                   before, state.prices.copy())
    state.decisions.append(dec)
    return dec


def run_online(net: Network, requests: Iterable[MulticastRequest], phi: float,
               variant: str = EXACT, sigma: float | None = None,
               lambda_thr: float = 1.0) -> OnlineState:
    state = init_state(net, phi, variant, sigma, lambda_thr)
    for r in requests:
        process_request(state, r)
    return state


@dataclass
class OnlineMetrics:
    acceptance_ratio: float
    violation_ratio: float
    bottleneck: str | None
    utilization: dict[str, float]
    delta_primal: list[float]
    delta_dual: list[float]
    B: float
    log_bound: float
    violation_bound: float
    competitive_bound: float


def bound_constant(state: OnlineState) -> float:
    """Price ceiling ``B`` from the running minimum granularity."""
    if not math.isfinite(state.f_min):
        return math.inf
    if state.variant == EXACT:
        return (1.0 + state.phi) / state.f_min
    return (2.0 * state.lambda_thr + state.phi) / state.f_min


def _dual_increase(state: OnlineState, d: Decision) -> float:
    return d.z + float(state.capacities @ (d.prices_after - d.prices_before))


def metrics(state: OnlineState) -> OnlineMetrics:
    total = len(state.decisions)
    util = state.loads / state.capacities
    k = int(np.argmax(util)) if state.net.m else None
    B = bound_constant(state)
    m = state.net.m
    log_bound = math.log(B * m / state.phi + 1.0) if math.isfinite(B) else math.inf
    acc = [d for d in state.decisions if d.accepted]
    return OnlineMetrics(
        acceptance_ratio=state.accepted / total if total else 0.0,
        violation_ratio=float(util.max()) if m else 0.0,
        bottleneck=state.net.link_ids[k] if k is not None and util[k] > 0 else None,
        utilization=dict(zip(state.net.link_ids, map(float, util))),
        delta_primal=[d.size for d in acc],
        delta_dual=[_dual_increase(state, d) for d in acc],
        B=B,
        log_bound=log_bound,
        violation_bound=state.sigma * log_bound,
        competitive_bound=1.0 + state.phi / state.sigma,
    )


def verify_online_certificates(state: OnlineState,
                               trace: list[Decision] | None = None) -> CertificateReport:
    """Recheck the competitive analysis inequalities on a finished run.

    Per accepted request: dual feasibility against the exact min cost at
    decision time, and the dual/primal increase ratio. At the end of the
    run: the price ceiling ``B``, the logarithmic utilization bound, and
    price monotonicity over the whole trace.
    """
    trace = state.decisions if trace is None else trace
    rep = CertificateReport()
    ids = state.net.link_ids
    accepted = [d for d in trace if d.accepted]

    bad = []
    for d in accepted:
        # z_r must cover d_r (1 - p.f) for every extreme flow; the exact min cost is the worst case
        worst = d.exact_cost if d.exact_cost is not None else d.cost
        if d.z < -TOL or d.z + d.size * worst < d.size * (1.0 - TOL):
            bad.append(f"request {d.request_id}: z={d.z:.6g}, d*L_exact={d.size * worst:.6g}")
    rep.add("dual-feasibility", bad)

    ratio_cap = 1.0 + state.phi / state.sigma
    bad, worst_ratio = [], 0.0
    for d in accepted:
        ratio = _dual_increase(state, d) / d.size
        worst_ratio = max(worst_ratio, ratio)
        if ratio > ratio_cap + TOL:
            bad.append(f"request {d.request_id}: dD/dP={ratio:.6g} > {ratio_cap:.6g}")
    rep.add("competitive-ratio", bad, f"max dD/dP {worst_ratio:.6f} <= {ratio_cap:.6g}")

    B = bound_constant(state)
    rep.add("price-ceiling", [
        f"link {lid}: p={p:.6g} > B={B:.6g}" for lid, p in zip(ids, state.prices) if p > B + TOL
    ], f"max price {state.prices.max() if ids else 0:.6g} <= B={B:.6g}")

    m = state.net.m
    bound = state.sigma * math.log(B * m / state.phi + 1.0) if math.isfinite(B) else math.inf
    util = state.loads / state.capacities
    rep.add("violation-bound", [
        f"link {lid}: utilization {u:.6g} > {bound:.6g}"
        for lid, u in zip(ids, util) if u > bound + TOL
    ], f"max utilization {util.max() if ids else 0:.6f} <= {bound:.6g}")

    bad = []
    prev = np.zeros(m)
    for d in accepted:
        for snap, label in ((d.prices_before, "before"), (d.prices_after, "after")):
            drop = np.flatnonzero(snap < prev - TOL)
            bad += [f"request {d.request_id} ({label}): price of {ids[k]} decreased" for k in drop]
            prev = snap
    if accepted and (state.prices < prev - TOL).any():
        bad.append("final prices below last snapshot")
    rep.add("price-monotonicity", bad)
    return rep
