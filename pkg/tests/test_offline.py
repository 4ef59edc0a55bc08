import math

import numpy as np
import pytest

from misnc.mincost import InfeasibleRequestError
from misnc.netgraph import build_network, make_request
from misnc.offline import (FptasError, FptasParams, dual_objective, max_concurrent_lp,
                           params_from_epsilon, params_from_omega, phase_bound, run_fptas,
                           verify_offline_certificates)


def invert_epsilon(omega):
    """Bisection for eps with (1 - eps)^-3 = 1 + omega."""
    lo, hi = 0.0, 1.0 - 1e-12
    for _ in range(200):
        mid = (lo + hi) / 2
        if (1 - mid) ** -3 < 1 + omega:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.fixture(scope="module")
def run01(butterfly):
    net, reqs = butterfly
    params = params_from_epsilon(0.1, net.m)
    return run_fptas(net, reqs, params), params


def test_params_from_omega_inverts_epsilon():
    omega = 0.9 ** -3 - 1
    params = params_from_omega(omega, 16)
    assert params.epsilon == pytest.approx(invert_epsilon(omega), abs=1e-12)
    assert params.epsilon == pytest.approx(0.1, abs=1e-12)
    assert params.delta == pytest.approx((0.9 / 16) ** 10, rel=1e-9)


def test_params_small_omega():
    assert 0 < params_from_omega(1e-9, 16).epsilon < 1e-9


def test_params_single_link():
    assert params_from_epsilon(0.5, 1).delta == pytest.approx(0.25)


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_params_reject_nonpositive_omega(omega):
    with pytest.raises(ValueError):
        params_from_omega(omega, 16)


def test_params_reject_bad_epsilon():
    with pytest.raises(ValueError):
        FptasParams(1.0, 0.1)


def test_dual_objective(net):
    params = params_from_epsilon(0.1, net.m)
    caps = np.asarray(net.capacities)
    assert dual_objective(net, params.delta / caps) == pytest.approx(16 * params.delta)
    assert dual_objective(net, np.zeros(16)) == 0.0
    assert dual_objective(net, np.full(16, 0.01)) == pytest.approx(16.0)


def test_butterfly_lp_optimum(butterfly):
    lam, loads = max_concurrent_lp(*butterfly)
    assert lam == pytest.approx(1.0, abs=1e-9)
    assert (loads <= 100 + 1e-9).all()


def test_butterfly_run(run01, butterfly):
    sol, params = run01
    assert 0.9 ** 3 <= sol.lam <= 1.0
    assert sol.lam == pytest.approx((sol.phases - 1) / params.scale)
    assert (sol.loads <= np.asarray(butterfly[0].capacities) + 1e-6).all()


def test_certificates_pass(run01, butterfly):
    sol, params = run01
    rep = verify_offline_certificates(sol, *butterfly, params, lambda_lp=1.0)
    assert rep.ok, rep.summary()
    assert [c.name for c in rep.checks] == ["scaling-factor", "capacity", "approximation",
                                            "weak-duality"]


def test_certificate_oversized_load_fails(run01, butterfly):
    sol, params = run01
    bad = sol.raw_loads.copy()
    bad[3] = 100 * params.scale * 1.01
    forged = type(sol)(**{**sol.__dict__, "raw_loads": bad})
    rep = verify_offline_certificates(forged, *butterfly, params, lambda_lp=1.0)
    assert not rep["scaling-factor"].passed
    assert "e4" in rep["scaling-factor"].violations[0]


def test_certificate_lambda_above_optimum(run01, butterfly):
    sol, params = run01
    forged = type(sol)(**{**sol.__dict__, "lam": 1.0 + 1e-5})
    rep = verify_offline_certificates(forged, *butterfly, params, lambda_lp=1.0)
    assert not rep["weak-duality"].passed


def test_single_link_instance():
    net = build_network(["s", "t"], [("e", "s", "t", 10.0)])
    r = make_request(net, "r", "s", ["t"], 10.0)
    params = params_from_epsilon(0.1, net.m)
    sol = run_fptas(net, [r], params)
    assert sol.lam <= 1.0
    assert sol.loads[0] <= 10.0 + 1e-6
    assert verify_offline_certificates(sol, net, [r], params).ok


def test_final_phase_overshoot_is_not_scaled():
    net = build_network(["s", "t"], [("e", "s", "t", 10.0)])
    r = make_request(net, "r", "s", ["t"], 10.0)
    sol = run_fptas(net, [r], params_from_epsilon(0.1, net.m))
    # one more phase than lambda accounts for; scaling all of them would exceed capacity
    assert sol.total_raw_loads[0] == pytest.approx(10.0 * sol.phases)
    assert sol.raw_loads[0] == pytest.approx(10.0 * (sol.phases - 1))
    assert sol.total_raw_loads[0] / sol.params.scale > 10.0


def test_epsilon_too_small_for_doubles(butterfly):
    params = params_from_epsilon(1e-3, 16)
    assert params.delta == 0.0 and params.scale > 0
    with pytest.raises(ValueError, match="double precision"):
        run_fptas(*butterfly, params)


def test_infeasible_request_aborts(net):
    r = make_request(net, "huge", 1, [8, 10], 300)
    with pytest.raises(InfeasibleRequestError) as exc:
        run_fptas(net, [r], params_from_epsilon(0.2, net.m))
    assert exc.value.request_id == "huge"


def test_phase_guard(butterfly):
    net, reqs = butterfly
    with pytest.raises(FptasError) as exc:
        run_fptas(net, reqs, params_from_epsilon(0.1, net.m), max_phases=5)
    assert exc.value.diagnostics["phases"] == 5


def test_empty_request_list(net):
    with pytest.raises(ValueError):
        run_fptas(net, [], params_from_epsilon(0.1, net.m))


def test_price_trajectory(run01, butterfly):
    """Replay the trace: prices stay positive and each multiplier lies in [1, 1 + eps]."""
    sol, params = run01
    net, reqs = butterfly
    eps = params.epsilon
    caps = np.asarray(net.capacities)
    size = {r.id: r.size for r in reqs}
    p = params.delta / caps
    for rec in sol.trace:
        mult = 1 + eps * rec.flow * size[rec.request_id] / caps
        assert (rec.flow * size[rec.request_id] <= caps + 1e-9).all()
        assert ((mult >= 1) & (mult <= 1 + eps + 1e-12)).all()
        p = p * mult
        assert (p > 0).all()
    assert np.allclose(p, sol.prices, rtol=1e-12)


def test_iteration_and_phase_bounds(run01, butterfly):
    sol, params = run01
    net, reqs = butterfly
    assert sol.iterations == len(reqs) * sol.phases
    # the optimum (and dual optimum) is 1 on this instance
    assert sol.phases <= phase_bound(1.0, params, net.m)
    assert sol.phases <= sol.phase_cap


def test_dual_account(run01):
    sol, params = run01
    acc = sol.account
    assert acc.D >= 1.0
    assert acc.D_tracked == pytest.approx(acc.D, rel=1e-7)
    assert acc.beta >= sol.lam
    assert acc.gamma >= 1.0
    assert (acc.kappa < params.scale).all()
    assert sol.dual_trace[0] == pytest.approx(16 * params.delta)
    assert all(a <= b for a, b in zip(sol.dual_trace, sol.dual_trace[1:]))


def test_deterministic(butterfly):
    net, reqs = butterfly
    params = params_from_epsilon(0.2, net.m)
    a = run_fptas(net, reqs, params)
    b = run_fptas(net, reqs, params)
    assert a.lam == b.lam and a.phases == b.phases
    assert all(x.request_id == y.request_id and np.array_equal(x.flow, y.flow)
               and x.cost == y.cost for x, y in zip(a.trace, b.trace))
    assert np.array_equal(a.loads, b.loads)


def test_omega_run_meets_guarantee(butterfly):
    net, reqs = butterfly
    params = params_from_omega(0.5, net.m)
    sol = run_fptas(net, reqs, params)
    assert sol.lam * (1 + 0.5) >= 1.0 - 1e-9


def test_lambda_grows_as_epsilon_shrinks(butterfly):
    net, reqs = butterfly
    lams = [run_fptas(net, reqs, params_from_epsilon(e, net.m), keep_trace=False).lam
            for e in (0.4, 0.2, 0.1, 0.05)]
    assert all(b >= a - 0.02 for a, b in zip(lams, lams[1:]))
    assert all(lam >= (1 - e) ** 3 for lam, e in zip(lams, (0.4, 0.2, 0.1, 0.05)))
