"""Instances, request traces, experiment runs and report files."""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from misnc.mincost import MinCostKernel, decompose_paths
from misnc.netgraph import MulticastRequest, Network, NetworkError, build_network, make_request
from misnc.offline import (FptasParams, params_from_epsilon, params_from_omega, run_fptas,
                           verify_offline_certificates)
from misnc.online import EXACT, VARIANTS, metrics, run_online, verify_online_certificates

log = logging.getLogger(__name__)

MODES = ("offline", "online", "mincost")

BUTTERFLY_LINKS = [
    ("e1", 1, 3), ("e2", 1, 4), ("e3", 3, 8), ("e4", 3, 7),
    ("e5", 4, 7), ("e6", 4, 10), ("e7", 2, 5), ("e8", 2, 6),
    ("e9", 5, 12), ("e10", 7, 9), ("e11", 5, 7), ("e12", 6, 7),
    ("e13", 6, 10), ("e14", 9, 8), ("e15", 9, 10), ("e16", 9, 12),
]
BUTTERFLY_CAPACITY = 100.0
BUTTERFLY_SESSIONS = [("r1", 1, (8, 10)), ("r2", 2, (10, 12))]

OFFLINE_SIZE = 150.0
ONLINE_SIZE = 1.5
PER_SESSION = 100
DEFAULT_EPSILONS = (0.4, 0.2, 0.1, 0.05)
DEFAULT_PHIS = (1.0, 2.0, 4.0, 8.0)
REFERENCE_EPSILON = 0.1


class DocumentError(ValueError):
    pass


def build_extended_butterfly(size: float = OFFLINE_SIZE):
    """Two-session butterfly: 12 nodes, 16 unit-weight links of capacity 100."""
    net = build_network(range(1, 13),
                        [(lid, a, b, BUTTERFLY_CAPACITY) for lid, a, b in BUTTERFLY_LINKS])
    reqs = [make_request(net, rid, s, t, size) for rid, s, t in BUTTERFLY_SESSIONS]
    return net, reqs


def generate_online_trace(seed: int, count: int = PER_SESSION, size: float = ONLINE_SIZE,
                          sessions: Sequence[tuple] = BUTTERFLY_SESSIONS
                          ) -> list[MulticastRequest]:
    """``count`` requests per session, shuffled with a seeded RNG.

    ``sessions`` holds ``(name, source, receivers)`` triples. Request ids are
    ``<name>-<k>`` so the session of every request stays visible.
    """
    out = [MulticastRequest(f"{name}-{k:03d}", s, tuple(t), float(size))
           for name, s, t in sessions for k in range(count)]
    random.Random(seed).shuffle(out)
    return out


# instance documents

_TOP_KEYS = {"network", "requests", "mode", "params"}
_NET_KEYS = {"nodes", "links"}
_LINK_KEYS = {"id", "from", "to", "capacity", "weight"}
_REQ_KEYS = {"id", "source", "receivers", "size"}
_PARAM_KEYS = {"epsilon", "omega", "phi", "variant", "sigma", "lambda_thr", "seed", "prices"}


@dataclass
class InstanceDocument:
    network: Network
    requests: list[MulticastRequest]
    mode: str
    params: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        links = []
        for lk in self.network.links:
            entry = {"id": lk.id, "from": lk.tail, "to": lk.head, "capacity": lk.capacity}
            if lk.id in self.weights:
                entry["weight"] = self.weights[lk.id]
            links.append(entry)
        return {
            "mode": self.mode,
            "network": {"nodes": list(self.network.nodes), "links": links},
            "requests": [{"id": r.id, "source": r.source, "receivers": list(r.receivers),
                          "size": r.size} for r in self.requests],
            "params": dict(self.params),
        }


def _require(obj, keys, where):
    if not isinstance(obj, dict):
        raise DocumentError(f"{where}: expected an object")
    unknown = set(obj) - keys
    if unknown:
        raise DocumentError(f"{where}: unknown field(s) {sorted(unknown)}")


def _field(obj, key, where):
    try:
        return obj[key]
    except KeyError:
        raise DocumentError(f"{where}: missing field {key!r}") from None


def parse_document(data: dict | str) -> InstanceDocument:
    """Validate a decoded (or raw JSON) instance document."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _require(data, _TOP_KEYS, "document")
    mode = _field(data, "mode", "document")
    if mode not in MODES:
        raise DocumentError(f"mode: expected one of {MODES}, got {mode!r}")
    net_doc = _field(data, "network", "document")
    _require(net_doc, _NET_KEYS, "network")
    links, weights = [], {}
    for k, lk in enumerate(_field(net_doc, "links", "network")):
        where = f"network.links[{k}]"
        _require(lk, _LINK_KEYS, where)
        links.append(tuple(_field(lk, key, where) for key in ("id", "from", "to", "capacity")))
        if "weight" in lk:
            weights[str(lk["id"])] = lk["weight"]
    try:
        net = build_network(_field(net_doc, "nodes", "network"), links)
    except (NetworkError, TypeError, ValueError) as exc:
        raise DocumentError(f"network: {exc}") from None
    requests = []
    for k, rq in enumerate(_field(data, "requests", "document")):
        where = f"requests[{k}]"
        _require(rq, _REQ_KEYS, where)
        try:
            requests.append(make_request(net, _field(rq, "id", where), _field(rq, "source", where),
                                         _field(rq, "receivers", where), _field(rq, "size", where)))
        except (NetworkError, TypeError, ValueError) as exc:
            raise DocumentError(f"{where}: {exc}") from None
    params = data.get("params", {})
    _require(params, _PARAM_KEYS, "params")
    if params.get("variant", EXACT) not in VARIANTS:
        raise DocumentError(f"params.variant: expected one of {VARIANTS}")
    return InstanceDocument(net, requests, mode, dict(params), weights)


def load_document(path: str | Path) -> InstanceDocument:
    return parse_document(Path(path).read_text())


def save_document(doc: InstanceDocument, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc.to_dict(), indent=2) + "\n")


def butterfly_document(mode: str = "offline", size: float | None = None,
                       seed: int = 0, count: int = PER_SESSION, **params) -> InstanceDocument:
    """Butterfly instance: both sessions for offline/mincost, a shuffled trace for online."""
    if mode == "online":
        net, _ = build_extended_butterfly()
        reqs = generate_online_trace(seed, count, ONLINE_SIZE if size is None else size)
        params = {"seed": seed, **params}
    else:
        net, reqs = build_extended_butterfly(OFFLINE_SIZE if size is None else size)
    weights = {lid: 1 for lid, _, _ in BUTTERFLY_LINKS}
    return InstanceDocument(net, reqs, mode, params, weights)


# experiments

@dataclass
class ExperimentReport:
    mode: str
    params: dict
    seed: int | None
    wall_time: float
    instance: dict
    results: dict
    certificates: list[dict]

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.certificates)

    def to_dict(self) -> dict:
        return asdict(self)


def fptas_params(net: Network, params: dict) -> FptasParams:
    if "omega" in params and params["omega"] is not None:
        return params_from_omega(float(params["omega"]), net.m)
    return params_from_epsilon(float(params.get("epsilon", REFERENCE_EPSILON)), net.m)


def _offline(doc: InstanceDocument) -> tuple[dict, list[dict]]:
    params = fptas_params(doc.network, doc.params)
    sol = run_fptas(doc.network, doc.requests, params, keep_trace=False)
    certs = verify_offline_certificates(sol, doc.network, doc.requests, params)
    util = sol.utilization
    results = {
        "epsilon": params.epsilon, "delta": params.delta, "omega": params.omega,
        "lambda": sol.lam, "phases": sol.phases, "scale": params.scale,
        "fptas_time": sol.wall_time,
        "loads": dict(zip(sol.link_ids, map(float, sol.loads))),
        "utilization": dict(zip(sol.link_ids, map(float, util))),
        "bottleneck": sol.link_ids[int(np.argmax(util))],
        "dual": {"D": sol.account.D, "alpha": sol.account.alpha, "beta": sol.account.beta,
                 "gamma": sol.account.gamma},
    }
    return results, certs.as_list()


def _online(doc: InstanceDocument) -> tuple[dict, list[dict]]:
    p = doc.params
    state = run_online(doc.network, doc.requests, float(p.get("phi", 1.0)),
                       p.get("variant", EXACT), p.get("sigma"), float(p.get("lambda_thr", 1.0)))
    met = metrics(state)
    certs = verify_online_certificates(state)
    ids = doc.network.link_ids
    decisions = []
    for d in state.decisions:
        entry = {"request": d.request_id, "accepted": d.accepted, "L": d.cost, "z": d.z}
        if d.accepted:
            entry["increments"] = {lid: float(v) for lid, v in zip(ids, d.increments) if v}
        decisions.append(entry)
    results = {
        "phi": state.phi, "variant": state.variant, "sigma": state.sigma,
        "lambda_thr": state.lambda_thr,
        "acceptance_ratio": met.acceptance_ratio, "violation_ratio": met.violation_ratio,
        "bottleneck": met.bottleneck, "utilization": met.utilization,
        "B": met.B, "log_bound": met.log_bound, "f_min": state.f_min,
        "decisions": decisions,
    }
    return results, certs.as_list()


def _mincost(doc: InstanceDocument) -> tuple[dict, list[dict]]:
    kernel = MinCostKernel(doc.network)
    prices = doc.params.get("prices", 1.0)
    shifted = doc.params.get("variant", EXACT) != EXACT
    out, certs = [], []
    for r in doc.requests:
        res = kernel.approx(r, prices) if shifted else kernel.exact(r, prices)
        flow = res.flow
        paths = flow.paths or {i: decompose_paths(flow, i) for i in flow.receivers}
        out.append({
            "request": r.id, "L": res.cost, "exact_L": res.exact_cost,
            "granularity": res.granularity, "criteria": list(res.criteria),
            "flows": {lid: v for lid, v in flow.link_flows().items() if v > 0},
            "paths": {str(i): [[list(links), a] for links, a in pl] for i, pl in paths.items()},
        })
        cap_ok = bool((flow.f <= res.criteria[1] * np.asarray(doc.network.capacities) / r.size
                       + 1e-9).all())
        certs.append({"name": f"criteria[{r.id}]",
                      "passed": cap_ok and res.cost <= res.criteria[0] * res.exact_cost + 1e-9,
                      "detail": f"L={res.cost:.9g}, exact={res.exact_cost:.9g}",
                      "violations": []})
    return {"requests": out}, certs


def run_experiment(doc: InstanceDocument) -> ExperimentReport:
    t0 = time.perf_counter()
    runner = {"offline": _offline, "online": _online, "mincost": _mincost}[doc.mode]
    results, certs = runner(doc)
    return ExperimentReport(doc.mode, dict(doc.params), doc.params.get("seed"),
                            time.perf_counter() - t0, doc.to_dict(), results, certs)


# sweeps

@dataclass
class SweepReport:
    offline_rows: list[dict]
    online_rows: list[dict]
    link_rows: list[dict]
    offline_bottleneck: str
    online_bottleneck: str
    params: dict
    certificates: list[dict]

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.certificates)

    def to_dict(self) -> dict:
        return asdict(self)


def run_sweep(epsilons: Iterable[float] = DEFAULT_EPSILONS,
              phis: Iterable[float] = DEFAULT_PHIS, seed: int = 0, variant: str = EXACT,
              count: int = PER_SESSION, link_epsilon: float = REFERENCE_EPSILON,
              link_phi: float = 1.0) -> SweepReport:
    """Offline epsilon sweep, online phi sweep and a link-load comparison.

    Demand is matched: ``count`` online requests of ``150 / count`` per
    session against offline sessions of size 150.
    """
    epsilons = list(epsilons)
    phis = list(phis)
    net, offline_reqs = build_extended_butterfly(OFFLINE_SIZE)
    trace = generate_online_trace(seed, count, OFFLINE_SIZE / count)
    certs: list[dict] = []

    offline, times = {}, {}
    for eps in sorted(set(epsilons) | {link_epsilon}, reverse=True):
        params = params_from_epsilon(eps, net.m)
        t0 = time.perf_counter()
        sol = run_fptas(net, offline_reqs, params, keep_trace=False)
        times[eps] = time.perf_counter() - t0
        offline[eps] = sol
        for c in verify_offline_certificates(sol, net, offline_reqs, params, lambda_lp=None
                                             ).as_list():
            certs.append({**c, "name": f"offline eps={eps:g}: {c['name']}"})
    ref = times.get(REFERENCE_EPSILON, times[epsilons[0]] if epsilons else 1.0)
    offline_rows = [{"epsilon": eps, "lambda": offline[eps].lam, "normalized_time": times[eps] / ref}
                    for eps in epsilons]

    online, online_rows = {}, []
    for phi in sorted(set(phis) | {link_phi}):
        state = run_online(net, trace, phi, variant)
        online[phi] = state
        met = metrics(state)
        if phi in phis:
            online_rows.append({"phi": phi, "acceptance_ratio": met.acceptance_ratio,
                                "violation_ratio": met.violation_ratio})
        for c in verify_online_certificates(state).as_list():
            certs.append({**c, "name": f"online phi={phi:g}: {c['name']}"})
    online_rows.sort(key=lambda row: phis.index(row["phi"]))

    off_util = offline[link_epsilon].utilization
    on_state = online[link_phi]
    on_util = on_state.loads / on_state.capacities
    link_rows = [{"link_id": lid, "offline_utilization": float(a), "online_utilization": float(b)}
                 for lid, a, b in zip(net.link_ids, off_util, on_util)]
    return SweepReport(
        offline_rows, online_rows, link_rows,
        net.link_ids[int(np.argmax(off_util))], net.link_ids[int(np.argmax(on_util))],
        {"epsilons": epsilons, "phis": phis, "seed": seed, "variant": variant, "count": count,
         "link_epsilon": link_epsilon, "link_phi": link_phi},
        certs)


# report files

OFFLINE_SWEEP_COLUMNS = ("epsilon", "lambda", "normalized_time")
ONLINE_SWEEP_COLUMNS = ("phi", "acceptance_ratio", "violation_ratio")
LINK_COLUMNS = ("link_id", "offline_utilization", "online_utilization")
FORMATS = ("json", "csv", "all")


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return path


def _jsonable(obj: Any):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def emit_report(report: ExperimentReport | SweepReport, out_dir: str | Path,
                fmt: str = "all") -> list[Path]:
    """Write the full JSON document and/or the flat CSV tables into ``out_dir``."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if fmt in ("json", "all"):
        name = "sweep.json" if isinstance(report, SweepReport) else "report.json"
        path = out / name
        path.write_text(json.dumps(_jsonable(report.to_dict()), indent=2) + "\n")
        written.append(path)
    if fmt in ("csv", "all"):
        if isinstance(report, SweepReport):
            written.append(_write_csv(out / "offline_sweep.csv", OFFLINE_SWEEP_COLUMNS,
                                      report.offline_rows))
            written.append(_write_csv(out / "online_sweep.csv", ONLINE_SWEEP_COLUMNS,
                                      report.online_rows))
            written.append(_write_csv(out / "link_load.csv", LINK_COLUMNS, report.link_rows))
        elif report.mode in ("offline", "online"):
            util = report.results["utilization"]
            column = f"{report.mode}_utilization"
            written.append(_write_csv(out / "link_load.csv", LINK_COLUMNS,
                                      [{"link_id": lid, column: u} for lid, u in util.items()]))
            if report.mode == "online":
                written.append(_write_csv(
                    out / "decisions.csv", ("request", "accepted", "L", "z"),
                    report.results["decisions"]))
        else:
            written.append(_write_csv(
                out / "mincost.csv", ("request", "L", "exact_L", "granularity"),
                report.results["requests"]))
    return written
