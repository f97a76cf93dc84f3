import json
import math

import numpy as np
import pytest

from gscr.linsys import LinearSystem
from gscr.netmodel import ReducedNetwork
from gscr.scheduler import Site, TelemetrySample
from gscr.sim import (Disturbance, SimulationError, classify, discretize, simulate,
                      simulate_with_schedule, write_manifest)
from gscr.synthesis import GainSchedule, interval_edges


def first_order(rate=1.0):
    return LinearSystem.build([[-rate]], [[1.0, 0.0]], [[1.0]], [[0.0, 0.0]],
                              inputs=("vinf_d", "vinf_q"), outputs=("ibr1.p",), states=("x",))


def oscillator(sigma, omega=2 * math.pi * 15):
    a = [[sigma, omega], [-omega, sigma]]
    return LinearSystem.build(a, [[1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0]], np.zeros((1, 2)),
                              inputs=("vinf_d", "vinf_q"), outputs=("ibr1.p",),
                              states=("x1", "x2"))


def schedule():
    ivs = [{"lo": lo, "hi": hi, "certified": True, "k_acps": float(i), "k_acis": 1.0,
            "k_pllps": 1.0, "k_pllis": 1.0} for i, (lo, hi) in enumerate(interval_edges(2))]
    return GainSchedule.from_dict({"m": 2, "intervals": ivs})


@pytest.fixture
def site():
    red = ReducedNetwork(np.array([[4.0, -1.0], [-1.0, 3.0]]), 1, 1, np.array([-3.0, -2.0]))
    return Site(red, np.array([0.5]), np.array([1.0]))


def sample(t, iq):
    return TelemetrySample.make(t, [1.0], [iq])


def test_discretize_scalar():
    phi, gam = discretize(np.array([[-2.0]]), np.array([[1.0]]), 0.1)
    assert phi[0, 0] == pytest.approx(math.exp(-0.2), rel=1e-14)
    assert gam[0, 0] == pytest.approx((1 - math.exp(-0.2)) / 2, rel=1e-12)


def test_pulse_on_first_order_lag_decays():
    res = simulate(first_order(), Disturbance(start=0.5, duration=0.1, magnitude=1.0),
                   horizon=10.0, dt=1e-3)
    peak = np.max(np.abs(res.dp))
    assert peak == pytest.approx(1 - math.exp(-0.1), rel=1e-2)
    assert abs(res.dp[-1, 0]) < 1e-3 * peak
    assert res.classification == "decaying"


def test_linear_in_magnitude():
    sys = oscillator(-0.5)
    a = simulate(sys, Disturbance(magnitude=0.05), horizon=2.0)
    b = simulate(sys, Disturbance(magnitude=0.10), horizon=2.0)
    np.testing.assert_allclose(b.dp, 2 * a.dp, rtol=0, atol=1e-12 * np.abs(b.dp).max())


@pytest.mark.parametrize("sigma,label", [(-1.0, "decaying"), (0.0, "sustained"),
                                         (1.0, "growing")])
def test_classification_tracks_real_part(sigma, label):
    assert simulate(oscillator(sigma)).classification == label


def test_step_refinement_agrees():
    sys = oscillator(-0.3)
    coarse = simulate(sys, horizon=3.0, dt=2e-4)
    fine = simulate(sys, horizon=3.0, dt=2e-5)
    end_c, end_f = coarse.dp[-1, 0], fine.dp[-1, 0]
    assert abs(end_c - end_f) <= 1e-3 * np.abs(fine.dp).max()


def test_overflow_truncates_and_grows():
    res = simulate(oscillator(150.0), horizon=5.0, dt=1e-3)
    assert res.truncated
    assert res.classification == "growing"
    assert res.t.size < 5001


@pytest.mark.parametrize("dt", [0.0, -1e-4, 2e-3])
def test_dt_validation(dt):
    with pytest.raises(ValueError):
        simulate(first_order(), dt=dt)


def test_missing_power_outputs():
    sys = LinearSystem.build([[-1.0]], [[1.0, 0.0]], [[1.0]], [[0.0, 0.0]],
                             inputs=("vinf_d", "vinf_q"), outputs=("y",), states=("x",))
    with pytest.raises(SimulationError):
        simulate(sys)


def test_bad_disturbance():
    with pytest.raises(ValueError):
        Disturbance(duration=0.0)
    with pytest.raises(ValueError):
        Disturbance(kind="fault")


def test_classify_units():
    t = np.linspace(0, 5, 5001)
    osc = np.sin(2 * math.pi * 10 * t)[:, None]
    assert classify(t, osc * np.exp(-t)[:, None], 0.0)[0] == "decaying"
    assert classify(t, osc * np.exp(t)[:, None], 0.0)[0] == "growing"
    assert classify(t, osc, 0.0)[0] == "sustained"
    assert classify(t, 0 * osc, 0.0)[0] == "decaying"
    assert classify(t, osc, 0.0, truncated=True) == ("growing", math.inf)
    with pytest.raises(SimulationError):
        classify(t, osc, 4.99)


# -- scheduled runs ---------------------------------------------------------------

def factory(gains, sample):
    # gains.k_acps is the 0-based interval index: the lower interval is unstable, the upper one damped
    return oscillator(0.8 if gains.k_acps == 0 else -1.5)


def test_constant_telemetry_matches_plain_run(site):
    sched = simulate_with_schedule(factory, schedule(), site, [sample(0.0, 0.3)])
    plain = simulate(oscillator(-1.5))
    np.testing.assert_array_equal(sched.dp, plain.dp)
    assert sched.switches == []
    assert sched.classification == plain.classification


def test_crossing_swaps_once_and_is_continuous(site):
    tel = [sample(0.0, -0.4), sample(2.0, -0.2), sample(3.0, 0.3), sample(4.0, 0.4)]
    res = simulate_with_schedule(factory, schedule(), site, tel)
    assert [s["interval"] for s in res.switches] == [2]  # 1-based interval numbers
    assert res.switches[0]["time"] == pytest.approx(3.0)
    # the swap only changes the derivative, so the trace has no jump
    k = int(round(3.0 / 2e-4))
    steps = np.abs(np.diff(res.dp[:, 0]))
    assert steps[k - 1] <= 5 * steps[k - 50:k - 1].max()
    assert res.t.size == 25001


def test_scheduled_state_is_carried(site):
    """Splitting an LTI run at a no-op switch reproduces the unsplit trace."""
    def same(gains, sample):
        return oscillator(-0.7)

    tel = [sample(0.0, -0.4), sample(2.5, 0.4)]
    res = simulate_with_schedule(same, schedule(), site, tel)
    plain = simulate(oscillator(-0.7))
    assert len(res.switches) == 1
    np.testing.assert_allclose(res.dp, plain.dp, atol=1e-12)


def test_state_layout_change_rejected(site):
    def bad(gains, sample):
        return first_order() if gains.k_acps == 0 else oscillator(-1.0)

    with pytest.raises(SimulationError):
        simulate_with_schedule(bad, schedule(), site, [sample(0.0, -0.4), sample(2.0, 0.4)])


def test_unordered_or_empty_telemetry(site):
    with pytest.raises(ValueError):
        simulate_with_schedule(factory, schedule(), site, [])
    with pytest.raises(ValueError):
        simulate_with_schedule(factory, schedule(), site, [sample(1.0, 0), sample(0.0, 0)])


def test_outputs_written(tmp_path):
    dist = Disturbance()
    res = simulate(oscillator(-1.0), dist, horizon=2.0)
    res.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "time,dP_ibr_1"
    assert len(lines) == res.t.size + 1
    write_manifest(tmp_path / "m.json", res, {"case": "toy"}, dist, 2e-4, 2.0)
    man = json.loads((tmp_path / "m.json").read_text())
    assert man["result"]["classification"] == "decaying"
    assert man["disturbance"]["magnitude"] == 0.05


def test_bundled_case_reference_gains_grow(case):
    """Reference gains at IqΣ = 0.19 give a growing response and an unstable mode."""
    from gscr.stability import assemble_full_system
    from gscr.stability import dominant_eigenvalues

    oc = case.operating_condition(1.0, 0.19)
    sys = assemble_full_system(case.red, case.devices(), oc, case.tau, case.omega0,
                               statcom_gains=case.reference_gains())
    res = simulate(sys)
    assert res.classification == "growing"
    assert dominant_eigenvalues(sys).max_real > 0
