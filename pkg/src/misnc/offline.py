"""Primal-dual FPTAS for maximum concurrent coded-multicast throughput.

Prices start at ``delta / c_e``. Each phase routes every request once,
at full size, along its current min-cost extreme flow. After each
request the prices on the used links grow multiplicatively. The run stops
at the first phase boundary where ``sum_e p_e c_e`` reaches 1. Loads and
the throughput multiplier are then divided by ``log_{1+eps}(1/delta)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from misnc.certs import CertificateReport
from misnc.lpsolve import OPTIMAL, LinearProgram, solve_lp
from misnc.mincost import InfeasibleRequestError, MinCostKernel
from misnc.netgraph import MulticastRequest, Network, request_feasible

log = logging.getLogger(__name__)

LOAD_TOL = 1e-6
MAX_PHASES = 1_000_000


class FptasError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FptasParams:
    """Step size ``epsilon`` and initial price level ``delta``.

    ``log_inv_delta`` keeps ``ln(1/delta)`` exact when ``delta`` itself
    underflows (very small epsilon); such parameters are valid but cannot
    be run in double precision.
    """

    epsilon: float
    delta: float
    omega: float | None = None
    log_inv_delta: float | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.log_inv_delta is None:
            if not self.delta > 0:
                raise ValueError(f"delta must be positive, got {self.delta}")
            object.__setattr__(self, "log_inv_delta", -math.log(self.delta))

    @property
    def scale(self) -> float:
        """``log_{1+eps}(1/delta)``, shared by the load and lambda scaling."""
        return self.log_inv_delta / math.log1p(self.epsilon)


def _derived(epsilon: float, m: int, omega: float | None = None) -> FptasParams:
    if m < 1:
        raise ValueError("need at least one link")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    log_inv = math.log(m / (1.0 - epsilon)) / epsilon
    return FptasParams(epsilon, math.exp(-log_inv), omega, log_inv)


def params_from_epsilon(epsilon: float, m: int) -> FptasParams:
    return _derived(epsilon, m)


def params_from_omega(omega: float, m: int) -> FptasParams:
    """Parameters giving a ``(1 + omega)``-approximation."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    # -expm1(-x) = 1 - e^-x without cancellation for tiny omega
    eps = -math.expm1(-math.log1p(omega) / 3.0)
    return _derived(eps, m, omega)


def dual_objective(net: Network, prices) -> float:
    return float(np.dot(np.asarray(prices, dtype=float), net.capacities))


@dataclass
class IterationRecord:
    phase: int
    request_id: str
    flow: np.ndarray
    cost: float


@dataclass
class DualAccount:
    """Dual-side bookkeeping at the end of a run.

    ``D`` is recomputed from the final prices, ``D_tracked`` accumulated
    per iteration. ``z`` holds each request's unit min cost at the final
    prices and ``alpha`` their size-weighted sum. ``beta = D / alpha`` is
    the dual bound on the optimum, ``gamma = beta / lambda`` the
    dual-to-primal ratio, and ``kappa`` the per-link unscaled load over
    capacity.
    """

    D: float
    D_tracked: float
    z: dict
    alpha: float
    beta: float
    gamma: float
    kappa: np.ndarray


@dataclass
class OfflineSolution:
    """FPTAS output.

    ``raw_loads`` are the unscaled loads of the first ``phases - 1`` phases,
    the flow that ``lam`` accounts for; ``loads`` is that divided by
    ``log_{1+eps}(1/delta)``. ``total_raw_loads`` adds the final phase,
    whose prices already crossed the stopping level.
    """

    lam: float
    loads: np.ndarray
    raw_loads: np.ndarray
    phases: int
    prices: np.ndarray
    params: FptasParams
    link_ids: list[str]
    capacities: np.ndarray
    total_raw_loads: np.ndarray | None = None
    trace: list[IterationRecord] = field(default_factory=list, repr=False)
    dual_trace: list[float] = field(default_factory=list, repr=False)
    account: DualAccount | None = None
    beta_estimate: float = float("nan")
    phase_cap: int = 0
    wall_time: float = 0.0

    @property
    def utilization(self) -> np.ndarray:
        return self.loads / self.capacities

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _min_costs(kernel, requests, p):
    return {r.id: kernel.exact(r, p).cost for r in requests}


def phase_bound(beta: float, params: FptasParams, m: int) -> int:
    eps = params.epsilon
    return math.ceil((beta / eps) * math.log(m / (1.0 - eps)) / math.log1p(eps))


def run_fptas(net: Network, requests: Sequence[MulticastRequest], params: FptasParams, *,
              max_phases: int = MAX_PHASES, keep_trace: bool = True) -> OfflineSolution:
    """Run the FPTAS and return scaled loads and the throughput multiplier."""
    requests = list(requests)
    if not requests:
        raise ValueError("no requests")
    for r in requests:
        if not request_feasible(net, r):
            raise InfeasibleRequestError(r.id)
    t0 = time.perf_counter()
    eps, delta = params.epsilon, params.delta
    cap = np.asarray(net.capacities, dtype=float)
    if not (delta / cap).min() > 0:
        raise ValueError(f"epsilon={eps:g} puts the initial prices below double precision")
    kernel = MinCostKernel(net)
    p = delta / cap
    x = np.zeros(net.m)

    D = dual_objective(net, p)
    alpha0 = sum(r.size * c for r, c in zip(requests, _min_costs(kernel, requests, p).values()))
    beta_est = D / alpha0 if alpha0 > 0 else float("inf")
    guard = min(max_phases, 2 * phase_bound(min(beta_est, 1e6), params, net.m) + 1)

    trace: list[IterationRecord] = []
    dual_trace = [D]
    D_tracked = D
    rho = 0
    x_settled = x.copy()
    while D < 1.0:
        if rho >= guard:
            raise FptasError(
                f"FPTAS did not terminate within {guard} phases",
                {"phases": rho, "D": D, "beta_estimate": beta_est, "prices": p.copy()})
        x_settled = x.copy()
        for r in requests:
            res = kernel.exact(r, p)
            fd = res.flow.f * r.size
            x += fd
            D_tracked += eps * r.size * float(p @ res.flow.f)
            p = p * (1.0 + eps * fd / cap)
            if keep_trace:
                trace.append(IterationRecord(rho, r.id, res.flow.f.copy(), res.cost))
        rho += 1
        D = dual_objective(net, p)
        dual_trace.append(D)

    scale = params.scale
    lam = (rho - 1) / scale
    z = _min_costs(kernel, requests, p)
    alpha = sum(r.size * z[r.id] for r in requests)
    beta = D / alpha if alpha > 0 else float("inf")
    account = DualAccount(D, D_tracked, z, alpha, beta,
                          beta / lam if lam > 0 else float("inf"), x_settled / cap)
    sol = OfflineSolution(lam, x_settled / scale, x_settled, rho, p, params, net.link_ids, cap,
                          x, trace, dual_trace, account, beta_est, guard,
                          time.perf_counter() - t0)
    log.info("fptas eps=%g: %d phases, lambda=%.6f, %.2fs", eps, rho, lam, sol.wall_time)
    return sol


def max_concurrent_lp(net: Network, requests: Sequence[MulticastRequest],
                      max_variables: int = 4000):
    """Exact optimum of the concurrent coded-multicast LP in arc form.

    Returns ``(lambda, loads)``, or ``None`` when the instance is too large
    for the dense solver.
    """
    m = net.m
    nvar = 1 + sum((len(r.receivers) + 1) * m for r in requests)
    if nvar > max_variables:
        return None
    lp = LinearProgram()
    lam = lp.add_variable("lambda")
    actual = {}
    for r in requests:
        actual[r.id] = [lp.add_variable(f"F[{r.id},{lk.id}]") for lk in net.links]
        for i in r.receivers:
            cols = [lp.add_variable(f"G[{r.id},{i},{lk.id}]") for lk in net.links]
            for v in net.nodes:
                if v == r.source:
                    continue
                row: dict[int, float] = {}
                for k, lk in enumerate(net.links):
                    if lk.head == v:
                        row[cols[k]] = row.get(cols[k], 0.0) + 1.0
                    if lk.tail == v:
                        row[cols[k]] = row.get(cols[k], 0.0) - 1.0
                if v == i:
                    row[lam] = -r.size
                row = {k: c for k, c in row.items() if c != 0.0}
                if row:
                    lp.add_constraint(row, "=", 0.0)
            for k in range(m):
                lp.add_constraint({cols[k]: 1.0, actual[r.id][k]: -1.0}, "<=", 0.0)
    for k, lk in enumerate(net.links):
        lp.add_constraint({actual[r.id][k]: 1.0 for r in requests}, "<=", lk.capacity)
    lp.set_objective({lam: -1.0})
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"concurrent-flow LP ended with status {sol.status}")
    loads = np.zeros(m)
    for r in requests:
        loads += sol.x[actual[r.id]]
    return float(sol.x[lam]), loads


def verify_offline_certificates(sol: OfflineSolution, net: Network,
                                requests: Sequence[MulticastRequest], params: FptasParams,
                                lambda_lp: float | None = None,
                                compute_lp: bool = True) -> CertificateReport:
    """Check the scaling bound, capacity feasibility, approximation and duality.

    ``lambda_lp`` is the exact optimum when known; otherwise it is computed
    for small instances (``compute_lp``) and the LP-based parts are skipped
    on large ones.
    """
    rep = CertificateReport()
    scale = params.scale
    cap = np.asarray(net.capacities, dtype=float)
    kappa = sol.raw_loads / cap
    rep.add("scaling-factor", [
        f"link {lid}: kappa={k:.6g} >= {scale:.6g}"
        for lid, k in zip(net.link_ids, kappa) if not k < scale
    ], f"max kappa {kappa.max():.6g} < log_(1+eps)(1/delta) = {scale:.6g}")
    rep.add("capacity", [
        f"link {lid}: x={x:.9g} > c={c:.9g}"
        for lid, x, c in zip(net.link_ids, sol.loads, cap) if x > c + LOAD_TOL
    ], f"max utilization {(sol.loads / cap).max():.6f}")

    if lambda_lp is None and compute_lp:
        out = max_concurrent_lp(net, requests)
        lambda_lp = None if out is None else out[0]
    floor = (1.0 - params.epsilon) ** 3
    if lambda_lp is None:
        rep.add("approximation", [], "skipped: no exact optimum available")
    else:
        rep.add("approximation",
                [] if sol.lam >= floor * lambda_lp - 1e-12 else
                [f"lambda={sol.lam:.6g} < (1-eps)^3 * {lambda_lp:.6g} = {floor * lambda_lp:.6g}"],
                f"lambda={sol.lam:.6f}, lambda_lp={lambda_lp:.6f}")

    bad = []
    acc = sol.account
    if acc is not None and sol.lam > 0 and acc.gamma < 1.0 - 1e-9:
        bad.append(f"dual bound D/alpha={acc.beta:.6g} below lambda={sol.lam:.6g}")
    if lambda_lp is not None and sol.lam > lambda_lp + 1e-6:
        bad.append(f"lambda={sol.lam:.9g} exceeds LP optimum {lambda_lp:.9g}")
    detail = "" if acc is None else f"D/alpha={acc.beta:.6f} >= lambda={sol.lam:.6f}"
    rep.add("weak-duality", bad, detail)
    return rep
