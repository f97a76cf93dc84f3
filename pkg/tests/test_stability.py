import numpy as np
import pytest

from gscr.devices import StatcomParams, build_ibr, case_ibr_params
from gscr.linsys import LinearSystem
from gscr.netmodel import (Branch, NetworkModel, OperatingCondition, ReducedNetwork,
                           kron_reduce)
from gscr.stability import (BracketError, DeviceSet, Placement, StabilityError, assemble,
                            assemble_full_system, bounding_subsystems,
                            build_critical_subsystem, cgscr, dominant_eigenvalues,
                            subsystem_cgscr, verdict)

from conftest import random_stable
from randsys import random_system

W0 = 2 * np.pi * 50
TAU = 10.0


def symmetric_pair(group=2):
    nodes = {"a": "ibr", "b": "ibr", "c": "passive", "inf": "infinite_bus"}
    br = (Branch("a", "c", 30.0), Branch("b", "c", 30.0), Branch("c", "inf", 4.0))
    red = kron_reduce(NetworkModel(nodes, br, TAU))
    ds = DeviceSet([case_ibr_params(group)] * 2)
    return red, ds, OperatingCondition.rated([1.0, 1.0], [])


# -- dominant_eigenvalues ------------------------------------------------------

def test_real_modes_only():
    v = dominant_eigenvalues(LinearSystem.build(np.diag([-1.0, -2.0])))
    assert v.max_real == pytest.approx(-1.0)
    assert v.dominant is None and v.stable


def test_rotation_minus_damping():
    v = dominant_eigenvalues(LinearSystem.build(np.array([[-0.1, 10.0], [-10.0, -0.1]])),
                             threshold=1.0)
    assert v.dominant == pytest.approx(-0.1 + 10j)
    assert v.damping_ratio == pytest.approx(0.1 / abs(-0.1 + 10j))


def test_stable_flag_matches_eigensolver(rng):
    for _ in range(10):
        a = rng.standard_normal((6, 6))
        v = dominant_eigenvalues(LinearSystem.build(a))
        assert v.stable == (np.linalg.eigvals(a).real.max() < 0)


# -- assembly ------------------------------------------------------------------

def test_single_device_has_crossing_scr():
    model = build_ibr(case_ibr_params(1))

    def at(scr):
        return assemble(ReducedNetwork.single_line(scr), [Placement(0, 1.0, model, "d")], TAU, W0)

    res = cgscr(at)
    assert 1.0 < res.cgscr < 10.0
    assert dominant_eigenvalues(at(res.hi)).stable
    assert not dominant_eigenvalues(at(res.lo)).stable


def test_node_without_capacitor_is_an_algebraic_loop():
    red = ReducedNetwork(np.array([[2.0, -1.0], [-1.0, 2.0]]), 2, 0, np.array([-1.0, -1.0]))
    model = build_ibr(case_ibr_params(1))
    with pytest.raises(StabilityError, match="algebraic loop"):
        assemble(red, [Placement(0, 1.0, model, "d")], TAU, W0)


def test_symmetric_pair_decouples_exactly():
    red, ds, oc = symmetric_pair()
    full = dominant_eigenvalues(assemble_full_system(red, ds, oc, TAU, W0))
    crit = dominant_eigenvalues(build_critical_subsystem(red, ds, oc, TAU, W0).system())
    assert crit.dominant == pytest.approx(full.dominant, rel=1e-8)


def test_single_ibr_collapse():
    red = ReducedNetwork(np.array([[6.0]]), 1, 0, np.array([-6.0]))
    ds = DeviceSet([case_ibr_params(3)])
    oc = OperatingCondition([0.8], [], [1.0], [])
    sub = build_critical_subsystem(red, ds, oc, TAU, W0)
    assert sub.lambda1 == pytest.approx(6.0 / 0.8)
    ref = assemble(ReducedNetwork.single_line(7.5), [Placement(0, 1.0, ds.ibr(0), "d")], TAU, W0)
    assert np.sort_complex(sub.system().eigvals()) == pytest.approx(np.sort_complex(ref.eigvals()))
    bs = bounding_subsystems(red, ds, oc, TAU, W0)
    assert len(bs) == 1
    assert np.sort_complex(bs[0].system().eigvals()) == pytest.approx(
        np.sort_complex(ref.eigvals()))


def test_homogeneous_bounding_subsystems_identical():
    r = random_system(3)
    ds = DeviceSet([case_ibr_params(2)] * r.red.n, StatcomParams())
    bs = bounding_subsystems(r.red, ds, r.oc, r.tau, r.omega0)
    ev = [np.sort_complex(b.system().eigvals()) for b in bs]
    for e in ev[1:]:
        assert e == pytest.approx(ev[0])
    assert [b.rank for b in bs] == list(range(1, r.red.n + 1))


def test_degenerate_subsystem_rejected():
    red = ReducedNetwork(np.diag([2.0, 2.0]), 2, 0, np.array([-2.0, -2.0]))
    ds = DeviceSet([case_ibr_params(1)] * 2)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(StabilityError, match="not simple"):
            build_critical_subsystem(red, ds, OperatingCondition.rated([1, 1], []), TAU, W0)


# -- cgscr ----------------------------------------------------------------------

def test_bracket_failure_reports_endpoints():
    model = build_ibr(case_ibr_params(1))

    def at(scr):
        return assemble(ReducedNetwork.single_line(scr), [Placement(0, 1.0, model, "d")], TAU, W0)

    with pytest.raises(BracketError, match="monotonicity violated") as exc:
        cgscr(at, (5.0, 20.0))
    assert exc.value.lo_verdict.stable and exc.value.hi_verdict.stable


def test_marginal_at_cgscr():
    red, ds, oc = symmetric_pair()
    sub = build_critical_subsystem(red, ds, oc, TAU, W0)
    res = subsystem_cgscr(sub)
    v = dominant_eigenvalues(sub.system(res.cgscr))
    assert abs(v.dominant.real) < 0.05
    assert res.omega_c == pytest.approx(abs(v.dominant.imag), rel=0.01)


def test_cgscr_trace_is_monotone():
    r = random_system(7)
    res = subsystem_cgscr(build_critical_subsystem(r.red, r.devices, r.oc, r.tau, r.omega0))
    for scr, mr in res.trace:
        assert (mr < 0) == (scr >= res.hi)


def test_verdict_margin_sign():
    red, ds, oc = symmetric_pair()
    v = verdict(red, ds, oc, TAU, W0)
    assert v.consistent
    assert (v.margin > 0) == v.stable


# -- randomized properties -----------------------------------------------------

SEEDS = range(40)


def _stats(seed):
    r = random_system(seed)
    full = dominant_eigenvalues(assemble_full_system(r.red, r.devices, r.oc, r.tau, r.omega0))
    crit = dominant_eigenvalues(
        build_critical_subsystem(r.red, r.devices, r.oc, r.tau, r.omega0).system())
    zs = [b.damping_ratio for b in bounding_subsystems(r.red, r.devices, r.oc, r.tau, r.omega0)]
    return full, crit, zs


def test_random_fidelity_frequency():
    for seed in SEEDS:
        full, crit, _ = _stats(seed)
        assert abs(crit.dominant.imag / full.dominant.imag - 1) < 0.05, seed


@pytest.mark.xfail(strict=True, reason="critical-subsystem real part drifts beyond 0.1 on "
                   "heterogeneous random systems; quantified in the decisions ledger")
def test_random_fidelity_real_part():
    worst = max(abs(c.dominant.real - f.dominant.real) for f, c, _ in map(_stats, SEEDS))
    assert worst < 0.1


@pytest.mark.xfail(strict=True, reason="bounding holds on the case study but is exceeded by "
                   "up to 7e-3 on two-IBR random systems; see the decisions ledger")
def test_random_bounding():
    for seed in SEEDS:
        full, _, zs = _stats(seed)
        assert min(zs) - 1e-3 <= full.damping_ratio <= max(zs) + 1e-3, seed


def test_random_stable_system_verdict(rng):
    for _ in range(5):
        a, *_ = random_stable(rng, 5)
        assert dominant_eigenvalues(LinearSystem.build(a)).stable
