"""Interconnected small-signal models, dominant modes and the critical gSCR.

Assembly convention: each device node owns a voltage state set by the sum of
shunt capacitances of the devices at that node,

    (C/w0) dv/dt = sum_dev w * i_dev - i_net - j C v,

and the network realization takes those voltages as inputs.  Node voltages
are therefore states, so device feedthrough never creates an algebraic loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .devices import (J, AdmittanceModel, StatcomParams, aggregate_statcom, build_ibr,
                      build_statcom, weighted_device_sum)
from .linsys import LinearSystem
from .netmodel import (GridStrengthReport, OperatingCondition, ReducedNetwork, grid_strength,
                       network_dynamics)

logger = logging.getLogger(__name__)

OSC_THRESHOLD = 2 * np.pi * 5
CGSCR_RANGE = (0.2, 20.0)
CGSCR_TOL = 1e-3


class StabilityError(RuntimeError):
    pass


class BracketError(StabilityError):
    def __init__(self, message, lo_verdict=None, hi_verdict=None):
        super().__init__(message)
        self.lo_verdict = lo_verdict
        self.hi_verdict = hi_verdict


@dataclass(frozen=True)
class Placement:
    node: int
    weight: float
    model: AdmittanceModel
    tag: str


def assemble(red: ReducedNetwork, placements: Sequence[Placement], tau: float,
             omega0: float) -> LinearSystem:
    """Interconnect weighted devices with the dynamic network.

    Exposed inputs: ``vinf_d, vinf_q`` plus every device's extra inputs as
    ``<tag>.<name>``.  Outputs: every device's extra outputs (``<tag>.p`` is
    scaled to system base) and the node voltages ``v<d|q>[<node>]``.
    """
    nd = red.b_red.shape[0]
    net = network_dynamics(red, tau, omega0)
    cap = np.zeros(nd)
    for pl in placements:
        cap[pl.node] += pl.weight * pl.model.shunt_c
    bare = [i for i in range(nd) if cap[i] <= 0]
    if bare:
        raise StabilityError(
            f"node(s) {[red.node_ids[i] if red.node_ids else i for i in bare]} have no "
            "capacitive device: algebraic loop in the interconnection")

    dev_states = sum(pl.model.realization.n_states for pl in placements)
    n_x = dev_states + 2 * nd + 2 * nd
    v_off = dev_states
    net_off = dev_states + 2 * nd
    ext_in = ["vinf_d", "vinf_q"]
    ext_out: list[str] = []
    for pl in placements:
        r = pl.model.realization
        ext_in += [f"{pl.tag}.{u}" for u in r.inputs if u not in ("vd", "vq")]
        ext_out += [f"{pl.tag}.{y}" for y in r.outputs if y not in ("id", "iq")]
    node_ids = red.node_ids or tuple(str(i) for i in range(nd))
    ext_out += [f"v{ax}[{i}]" for i in node_ids for ax in "dq"]
    a = np.zeros((n_x, n_x))
    b = np.zeros((n_x, len(ext_in)))
    c = np.zeros((len(ext_out), n_x))
    d = np.zeros((len(ext_out), len(ext_in)))
    in_pos = {u: i for i, u in enumerate(ext_in)}
    out_pos = {y: i for i, y in enumerate(ext_out)}
    states: list[str] = []

    off = 0
    for pl in placements:
        r = pl.model.realization
        ns = r.n_states
        sl = slice(off, off + ns)
        vsl = slice(v_off + 2 * pl.node, v_off + 2 * pl.node + 2)
        a[sl, sl] = r.a
        vi = r.input_index(("vd", "vq"))
        a[sl, vsl] += r.b[:, vi]
        other_in = [k for k, u in enumerate(r.inputs) if u not in ("vd", "vq")]
        for k in other_in:
            b[sl, in_pos[f"{pl.tag}.{r.inputs[k]}"]] += r.b[:, k]
        # injected current into the node capacitor
        ii = r.output_index(("id", "iq"))
        gain = omega0 / cap[pl.node] * pl.weight
        a[vsl, sl] += gain * r.c[ii]
        a[vsl, vsl] += gain * r.d[np.ix_(ii, vi)]
        for k in other_in:
            b[vsl, in_pos[f"{pl.tag}.{r.inputs[k]}"]] += gain * r.d[ii, k]
        for oi, yname in enumerate(r.outputs):
            if yname in ("id", "iq"):
                continue
            row = out_pos[f"{pl.tag}.{yname}"]
            scale = pl.weight if yname == "p" else 1.0
            c[row, sl] += scale * r.c[oi]
            c[row, vsl] += scale * r.d[oi, vi]
            for k in other_in:
                d[row, in_pos[f"{pl.tag}.{r.inputs[k]}"]] += scale * r.d[oi, k]
        states += [f"{pl.tag}.{s}" for s in r.states]
        off += ns

    for i in range(nd):
        vsl = slice(v_off + 2 * i, v_off + 2 * i + 2)
        nsl = slice(net_off + 2 * i, net_off + 2 * i + 2)
        a[vsl, vsl] += -omega0 * J
        a[vsl, nsl] += -omega0 / cap[i] * np.eye(2)
        c[out_pos[f"vd[{node_ids[i]}]"], v_off + 2 * i] = 1.0
        c[out_pos[f"vq[{node_ids[i]}]"], v_off + 2 * i + 1] = 1.0
    states += [f"v{ax}[{i}]" for i in node_ids for ax in "dq"]
    net_v = net.input_index([f"v{ax}[{i}]" for i in node_ids for ax in "dq"])
    net_inf = net.input_index(("vinf_d", "vinf_q"))
    nsl = slice(net_off, net_off + 2 * nd)
    a[nsl, nsl] = net.a
    a[nsl, v_off:v_off + 2 * nd] = net.b[:, net_v]
    b[nsl, [in_pos["vinf_d"], in_pos["vinf_q"]]] = net.b[:, net_inf]
    states += list(net.states)
    return LinearSystem(a, b, c, d, tuple(ext_in), tuple(ext_out), tuple(states))


# -- case description --------------------------------------------------------------

@dataclass
class DeviceSet:
    """Device parameters attached to a reduced network.

    ``ibr_params[i]`` belongs to IBR node ``i``; every STATCOM shares
    ``statcom_params`` (the homogeneous-STATCOM assumption).
    ``statcom_location[j]`` is the reduced-node index hosting STATCOM ``j``.
    ``participation_location`` optionally attributes STATCOMs to other nodes
    (typically the IBR they serve) when computing participation factors.
    """

    ibr_params: list
    statcom_params: StatcomParams | None = None
    statcom_location: list[int] | None = None
    participation_location: list[int] | None = None
    _ibr_cache: dict = field(default_factory=dict, repr=False)

    def ibr(self, i: int) -> AdmittanceModel:
        if i not in self._ibr_cache:
            self._ibr_cache[i] = build_ibr(self.ibr_params[i])
        return self._ibr_cache[i]

    def locations(self, red: ReducedNetwork, k: int) -> list[int]:
        if self.statcom_location is not None:
            return list(self.statcom_location)
        return [red.n + j for j in range(k)]

    def participation(self, red: ReducedNetwork, k: int) -> list[int]:
        """Locations handed to ``grid_strength`` for p2 and IqΣ."""
        if self.participation_location is not None:
            return list(self.participation_location)
        return self.locations(red, k)


def assemble_full_system(red: ReducedNetwork, devices: DeviceSet, oc: OperatingCondition,
                         tau: float, omega0: float, statcom_gains=None,
                         open_statcoms: bool = False) -> LinearSystem:
    """Whole-network model with every IBR scaled by ``P_e`` and STATCOM by ``S_Bs``."""
    if len(devices.ibr_params) != red.n or oc.p_e.size != red.n:
        raise StabilityError("every IBR node needs a device and an active power")
    places = [Placement(i, float(oc.p_e[i]), devices.ibr(i), f"ibr{i + 1}") for i in range(red.n)]
    k = oc.s_bs.size
    if k:
        if devices.statcom_params is None:
            raise StabilityError("STATCOMs present but no STATCOM parameters")
        params = devices.statcom_params
        if statcom_gains is not None:
            params = statcom_gains.apply(params)
        for j, loc in enumerate(devices.locations(red, k)):
            model = build_statcom(params, float(oc.i_qs[j]), open_loop=open_statcoms)
            places.append(Placement(loc, float(oc.s_bs[j]), model, f"sta{j + 1}"))
    return assemble(red, places, tau, omega0)


@dataclass(frozen=True)
class CriticalSubsystem:
    device: AdmittanceModel
    lambda1: float
    tau: float
    omega0: float
    report: GridStrengthReport | None = None

    def system(self, scr: float | None = None) -> LinearSystem:
        lam = self.lambda1 if scr is None else scr
        if lam <= 0:
            raise StabilityError("SCR must be positive")
        red = ReducedNetwork.single_line(lam)
        return assemble(red, [Placement(0, 1.0, self.device, "dev")], self.tau, self.omega0)

    def with_line(self, scr: float) -> "CriticalSubsystem":
        return CriticalSubsystem(self.device, scr, self.tau, self.omega0, self.report)


def equivalent_device(ibr_models: Sequence[tuple[float, AdmittanceModel]],
                      statcom_params: StatcomParams | None, p_sigma: float, iq: float,
                      open_loop: bool = False) -> AdmittanceModel:
    sta = None
    if statcom_params is not None and p_sigma > 0:
        sta = aggregate_statcom(statcom_params, p_sigma, iq, open_loop=open_loop)
    return weighted_device_sum(ibr_models, sta)


def build_critical_subsystem(red: ReducedNetwork, devices: DeviceSet, oc: OperatingCondition,
                             tau: float, omega0: float, statcom_gains=None,
                             open_loop: bool = False, p_sigma: float | None = None,
                             iq: float | None = None) -> CriticalSubsystem:
    """Weighted-device single-line subsystem; ``p_sigma``/``iq`` override the computed values."""
    k = oc.s_bs.size
    rep = grid_strength(red, oc, devices.participation(red, k) if k else None)
    if rep.degenerate:
        raise StabilityError("smallest gSCR eigenvalue is not simple; critical subsystem ill-defined")
    params = devices.statcom_params
    if params is not None and statcom_gains is not None:
        params = statcom_gains.apply(params)
    p_sig = rep.p_sigma if p_sigma is None else float(p_sigma)
    iq_sig = rep.iq_sigma if iq is None else float(iq)
    if p_sig > 0 and params is None:
        raise StabilityError("STATCOM participation requested but no STATCOM parameters")
    dev = equivalent_device([(float(rep.p1[i]), devices.ibr(i)) for i in range(red.n)],
                            params, p_sig, iq_sig, open_loop)
    return CriticalSubsystem(dev, rep.gscr, tau, omega0, rep)


# -- eigen-analysis ------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityVerdict:
    eigenvalues: np.ndarray
    dominant: complex | None
    damping_ratio: float
    max_real: float
    stable: bool
    gscr: float | None = None
    cgscr: float | None = None
    margin: float | None = None
    consistent: bool = True
    omega_c: float | None = None

    def to_dict(self) -> dict:
        dom = self.dominant
        return {
            "dominant": None if dom is None else [dom.real, dom.imag],
            "damping_ratio": self.damping_ratio,
            "max_real": self.max_real,
            "stable": self.stable,
            "gscr": self.gscr,
            "cgscr": self.cgscr,
            "margin": self.margin,
            "consistent": self.consistent,
            "omega_c": self.omega_c,
        }


def dominant_eigenvalues(sys_or_eigs, threshold: float = OSC_THRESHOLD) -> StabilityVerdict:
    """Dominant oscillatory pair (largest real part with ``Im > threshold``)."""
    ev = sys_or_eigs.eigvals() if isinstance(sys_or_eigs, LinearSystem) else np.asarray(
        sys_or_eigs, complex)
    max_real = float(ev.real.max()) if ev.size else -np.inf
    osc = ev[ev.imag > threshold]
    if osc.size:
        dom = complex(osc[np.argmax(osc.real)])
        zeta = float(-dom.real / abs(dom))
    else:
        dom, zeta = None, float("nan")
    return StabilityVerdict(ev, dom, zeta, max_real, max_real < 0)


def dominant_real(sys: LinearSystem, threshold: float = OSC_THRESHOLD) -> float:
    v = dominant_eigenvalues(sys, threshold)
    return v.dominant.real if v.dominant is not None else v.max_real


@dataclass(frozen=True)
class CgscrResult:
    cgscr: float
    omega_c: float
    trace: tuple
    lo: float
    hi: float


def cgscr(system_at: Callable[[float], LinearSystem], search_range=CGSCR_RANGE,
          tol: float = CGSCR_TOL) -> CgscrResult:
    """SCR at which the subsystem's rightmost eigenvalue crosses the imaginary axis.

    ``system_at(scr)`` returns the subsystem with its line set to ``scr``.
    Bisection needs stability at the upper bound and instability at the lower
    bound; every trial is checked against that monotone picture.
    """
    lo, hi = map(float, search_range)
    v_lo = dominant_eigenvalues(system_at(lo))
    v_hi = dominant_eigenvalues(system_at(hi))
    if v_lo.stable or not v_hi.stable:
        raise BracketError(
            "monotonicity violated or range too narrow: "
            f"stable@{lo}={v_lo.stable}, stable@{hi}={v_hi.stable}", v_lo, v_hi)
    trace = [(lo, v_lo.max_real), (hi, v_hi.max_real)]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = dominant_eigenvalues(system_at(mid))
        trace.append((mid, v.max_real))
        if v.stable:
            hi = mid
        else:
            lo = mid
    for scr, mr in trace:
        if (scr >= hi and mr >= 0) or (scr <= lo and mr < 0):
            raise StabilityError(f"non-monotone stability in SCR at {scr}")
    v = dominant_eigenvalues(system_at(hi))
    crit = v.eigenvalues[np.argmax(v.eigenvalues.real)]
    return CgscrResult(0.5 * (lo + hi), float(abs(crit.imag)), tuple(trace), lo, hi)


def subsystem_cgscr(sub: CriticalSubsystem, search_range=CGSCR_RANGE,
                    tol: float = CGSCR_TOL) -> CgscrResult:
    return cgscr(sub.system, search_range, tol)


@dataclass(frozen=True)
class BoundingSubsystem:
    index: int
    device: AdmittanceModel
    gscr: float
    tau: float
    omega0: float
    damping_ratio: float = float("nan")
    rank: int = 0

    def system(self, scr: float | None = None) -> LinearSystem:
        red = ReducedNetwork.single_line(self.gscr if scr is None else scr)
        return assemble(red, [Placement(0, 1.0, self.device, "dev")], self.tau, self.omega0)


def bounding_subsystems(red: ReducedNetwork, devices: DeviceSet, oc: OperatingCondition,
                        tau: float, omega0: float, statcom_gains=None,
                        open_loop: bool = False, iq_override: float | None = None,
                        rank: bool = True) -> list[BoundingSubsystem]:
    """``n`` single-IBR + aggregated-STATCOM subsystems, weakest first.

    With ``rank=False`` the damping ratios are not computed and the natural
    IBR order is kept (useful when the STATCOM loops are open).
    """
    k = oc.s_bs.size
    rep = grid_strength(red, oc, devices.participation(red, k) if k else None)
    params = devices.statcom_params
    if params is not None and statcom_gains is not None:
        params = statcom_gains.apply(params)
    iq = rep.iq_sigma if iq_override is None else iq_override
    subs = []
    cache: dict[int, tuple] = {}
    for i in range(red.n):
        dev = equivalent_device([(1.0, devices.ibr(i))], params, rep.p_sigma, iq, open_loop)
        key = repr(devices.ibr_params[i])
        if key not in cache:
            sub = BoundingSubsystem(i, dev, rep.gscr, tau, omega0)
            cache[key] = dominant_eigenvalues(sub.system()).damping_ratio if rank else float("nan")
        subs.append(BoundingSubsystem(i, dev, rep.gscr, tau, omega0, cache[key]))
    if not rank:
        return [replace(s, rank=r + 1) for r, s in enumerate(subs)]
    order = sorted(range(len(subs)), key=lambda i: (subs[i].damping_ratio, i))
    return [BoundingSubsystem(s.index, s.device, s.gscr, s.tau, s.omega0, s.damping_ratio, r + 1)
            for r, s in enumerate(subs[i] for i in order)]


def verdict(red: ReducedNetwork, devices: DeviceSet, oc: OperatingCondition, tau: float,
            omega0: float, statcom_gains=None, search_range=CGSCR_RANGE) -> StabilityVerdict:
    """gSCR-vs-CgSCR verdict cross-checked against the full-system eigenvalues."""
    sub = build_critical_subsystem(red, devices, oc, tau, omega0, statcom_gains)
    res = subsystem_cgscr(sub, search_range)
    full = dominant_eigenvalues(
        assemble_full_system(red, devices, oc, tau, omega0, statcom_gains))
    margin = sub.lambda1 - res.cgscr
    criterion_stable = margin > 0
    consistent = criterion_stable == full.stable or abs(margin) <= 0.05
    if not consistent:
        logger.warning("gSCR criterion (margin %.4f) disagrees with full-system eigenvalues "
                       "(max real %.4g)", margin, full.max_real)
    return StabilityVerdict(full.eigenvalues, full.dominant, full.damping_ratio, full.max_real,
                            full.stable, sub.lambda1, res.cgscr, margin, consistent, res.omega_c)
