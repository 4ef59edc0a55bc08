"""Min-cost unit multicast with intra-session coding.

The LP is written in arc form. For each receiver ``i`` there is a unit flow
``g[i]`` from the source, and every link carries an actual flow ``f`` that
dominates all receiver flows on it and respects ``c_e / d_r``. A basic
optimal solution of that LP is an extreme flow.

Ties among optima are broken toward the least total flow. This matters
when some prices are zero. Otherwise a vertex could park ``f_e`` at
capacity on a free link, which costs nothing but would be charged as real
load by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from misnc.lpsolve import OPTIMAL, LinearProgram, LpSolution, solve_lp, with_objective
from misnc.netgraph import MulticastRequest, Network

POSITIVE = 1e-9

EXACT = (1, 1)
SHIFTED = (2, 2)


class InfeasibleRequestError(ValueError):
    def __init__(self, request_id):
        super().__init__(f"request {request_id!r} cannot be routed (empty flow polytope)")
        self.request_id = request_id


class DecompositionError(RuntimeError):
    pass


@dataclass
class UnitExtremeFlow:
    """One unit of coded multicast for a request.

    ``f`` is the actual per-link flow and ``g[i]`` the conceptual flow toward
    receiver ``i``, both indexed in the network's link order. ``paths`` maps
    receivers to ``[(link ids, amount), ...]`` once decomposed.
    """

    request_id: str
    source: object
    f: np.ndarray
    g: dict
    net: Network = field(repr=False, compare=False)
    paths: dict | None = None

    @property
    def receivers(self) -> tuple:
        return tuple(self.g)

    def link_flows(self) -> dict[str, float]:
        return {lid: float(v) for lid, v in zip(self.net.link_ids, self.f)}


@dataclass
class MinCostResult:
    flow: UnitExtremeFlow
    cost: float
    granularity: float
    criteria: tuple[int, int]
    basic: bool = True
    exact_cost: float | None = None


def as_prices(net: Network, prices) -> np.ndarray:
    """Price vector in link order from an array, a mapping or a scalar."""
    if np.isscalar(prices):
        p = np.full(net.m, float(prices))
    elif isinstance(prices, Mapping):
        p = np.array([float(prices[lid]) for lid in net.link_ids])
    else:
        p = np.asarray(prices, dtype=float).copy()
    if p.shape != (net.m,):
        raise ValueError(f"expected {net.m} prices, got shape {p.shape}")
    if (p < 0).any() or not np.isfinite(p).all():
        raise ValueError("prices must be finite and nonnegative")
    return p


def _f(lid):
    return f"f[{lid}]"


def _g(i, lid):
    return f"f[{i},{lid}]"


def build_mnc(net: Network, r: MulticastRequest, prices=0.0) -> LinearProgram:
    """Arc-form min-cost coded multicast LP for one unit of ``r``.

    Variables come in blocks of ``m``: actual flows first, then one block of
    conceptual flows per receiver. Conservation rows cover every node but
    the source (the source row is implied).
    """
    p = as_prices(net, prices)
    m = net.m
    lp = LinearProgram()
    for lk in net.links:
        lp.add_variable(_f(lk.id))
    for i in r.receivers:
        for lk in net.links:
            lp.add_variable(_g(i, lk.id))
    for b, i in enumerate(r.receivers, start=1):
        off = b * m
        for v in net.nodes:
            if v == r.source:
                continue
            row: dict[int, float] = {}
            for k, lk in enumerate(net.links):
                if lk.head == v:
                    row[off + k] = row.get(off + k, 0.0) + 1.0
                if lk.tail == v:
                    row[off + k] = row.get(off + k, 0.0) - 1.0
            row = {k: c for k, c in row.items() if c != 0.0}
            if row or v == i:
                lp.add_constraint(row, "=", 1.0 if v == i else 0.0)
    for b in range(1, len(r.receivers) + 1):
        for k in range(m):
            lp.add_constraint({b * m + k: 1.0, k: -1.0}, "<=", 0.0)
    for k, lk in enumerate(net.links):
        lp.add_constraint({k: 1.0}, "<=", lk.capacity / r.size)
    lp.set_objective({k: p[k] for k in range(m)})
    lp.set_secondary({k: 1.0 for k in range(len(lp.variables))})
    return lp


def _flow_from_solution(net, r, x: np.ndarray) -> UnitExtremeFlow:
    m = net.m
    f = x[:m].copy()
    g = {i: x[b * m:(b + 1) * m].copy() for b, i in enumerate(r.receivers, start=1)}
    return UnitExtremeFlow(r.id, r.source, f, g, net)


def granularity(flow: UnitExtremeFlow) -> float:
    """Smallest positive link load of ``flow``."""
    pos = flow.f[flow.f > POSITIVE]
    if pos.size == 0:
        raise ValueError("flow has no positive link load")
    return float(pos.min())


class MinCostKernel:
    """Min-cost solver bound to one network.

    Keeps the LP of every request shape it has seen (source, receivers,
    size) and warm-starts from the previous optimal basis. The iterative
    engines call it thousands of times with slowly moving prices.
    """

    def __init__(self, net: Network):
        self.net = net
        self._lps: dict = {}
        self._last: dict = {}

    def _solve(self, r: MulticastRequest, p: np.ndarray) -> LpSolution:
        key = (r.source, r.receivers, r.size)
        base = self._lps.get(key)
        if base is None:
            base = self._lps[key] = build_mnc(self.net, r, 0.0)
        top = p.max()
        # argmin is scale invariant; normalizing keeps tiny prices above the pivot tolerance
        c = p / top if top > 0 else p
        lp = with_objective(base, {k: c[k] for k in range(self.net.m)})
        sol = solve_lp(lp, warm_start=self._last.get(key))
        if sol.status == OPTIMAL:
            self._last[key] = sol
        return sol

    def exact(self, r: MulticastRequest, prices) -> MinCostResult:
        p = as_prices(self.net, prices)
        sol = self._solve(r, p)
        if sol.status != OPTIMAL:
            raise InfeasibleRequestError(r.id)
        flow = _flow_from_solution(self.net, r, sol.x)
        cost = float(p @ flow.f)
        return MinCostResult(flow, cost, granularity(flow), EXACT, sol.basic, cost)

    def approx(self, r: MulticastRequest, prices) -> MinCostResult:
        p = as_prices(self.net, prices)
        exact = self.exact(r, p)
        flow = exact.flow
        flow.paths = {i: decompose_paths(flow, i) for i in flow.receivers}
        shifted = shift_small_flows(flow)
        cost = float(p @ shifted.f)
        return MinCostResult(shifted, cost, granularity(shifted), SHIFTED, exact.basic,
                             exact.cost)


def mincost_exact(net: Network, r: MulticastRequest, prices) -> MinCostResult:
    """Exact min-cost unit coded multicast (a cold solve)."""
    return MinCostKernel(net).exact(r, prices)


def mincost_approx(net: Network, r: MulticastRequest, prices) -> MinCostResult:
    """Exact solve followed by flow shifting; a (2, 2)-criteria result."""
    return MinCostKernel(net).approx(r, prices)


def decompose_paths(flow: UnitExtremeFlow, receiver) -> list[tuple[tuple[str, ...], float]]:
    """Peel source-to-receiver paths off the conceptual flow of ``receiver``.

    Each round walks the positive-flow links depth first, trying links in
    link order, and removes the bottleneck amount along the path found.
    """
    net = flow.net
    if receiver not in flow.g:
        raise KeyError(receiver)
    resid = flow.g[receiver].copy()
    resid[resid <= POSITIVE] = 0.0
    if not resid.any():
        raise DecompositionError(f"no conceptual flow toward {receiver!r}")
    out_links: dict = {v: [] for v in net.nodes}
    for k, lk in enumerate(net.links):
        out_links[lk.tail].append(k)

    paths = []
    while True:
        path = _find_path(out_links, net, resid, flow.source, receiver)
        if path is None:
            break
        amount = float(resid[path].min())
        resid[path] -= amount
        resid[resid <= POSITIVE] = 0.0
        paths.append((tuple(net.links[k].id for k in path), amount))
    if resid.any():
        raise DecompositionError(
            f"residual flow toward {receiver!r} has no source path (cycle in conceptual flow)")
    return paths


def _find_path(out_links, net, resid, source, sink):
    stack = [(source, iter(out_links[source]))]
    on_path = {source}
    links: list[int] = []
    while stack:
        v, it = stack[-1]
        for k in it:
            w = net.links[k].head
            if resid[k] > 0 and w not in on_path:
                links.append(k)
                if w == sink:
                    return links
                on_path.add(w)
                stack.append((w, iter(out_links[w])))
                break
        else:
            stack.pop()
            if links:
                links.pop()
            on_path.discard(v)
    return None


def path_arc_flows(net: Network, paths: Sequence) -> np.ndarray:
    """Aggregate ``[(link ids, amount), ...]`` back into per-link flow."""
    g = np.zeros(net.m)
    for links, amount in paths:
        for lid in links:
            g[net.index(lid)] += amount
    return g


def shift_threshold(w: int) -> float:
    return 1.0 / (2.0 * w * w)


def shift_small_flows(flow: UnitExtremeFlow) -> UnitExtremeFlow:
    """Move every path flow below ``1/(2 w_i^2)`` onto the receiver's largest path.

    ``w_i`` is the receiver's path count before shifting. Receivers with
    nothing to shift keep their conceptual flow untouched; if no receiver
    changes, ``flow`` itself is returned.
    """
    if flow.paths is None or set(flow.paths) != set(flow.g):
        raise ValueError("shift_small_flows needs a path decomposition for every receiver")
    new_paths = {}
    new_g = {}
    changed = False
    for i, plist in flow.paths.items():
        thr = shift_threshold(len(plist))
        small = [k for k, (_, a) in enumerate(plist) if a < thr]
        if not small:
            new_paths[i] = list(plist)
            new_g[i] = flow.g[i]
            continue
        changed = True
        amounts = [a for _, a in plist]
        big = int(np.argmax(amounts))
        moved = sum(amounts[k] for k in small)
        kept = []
        for k, (links, a) in enumerate(plist):
            if k == big:
                kept.append((links, a + moved))
            elif k not in small:
                kept.append((links, a))
        new_paths[i] = kept
        new_g[i] = path_arc_flows(flow.net, kept)
    if not changed:
        return flow
    f = np.max(np.vstack(list(new_g.values())), axis=0)
    return replace(flow, f=f, g=new_g, paths=new_paths)
