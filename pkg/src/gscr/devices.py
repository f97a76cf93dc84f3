"""Small-signal dq models of grid-following IBRs and STATCOMs.

All device quantities are per-unit on the device's own rated capacity and the
models are linearized with the terminal voltage at ``1 + j0``.  Complex dq
convention: ``x = x_d + j x_q``, complex power ``S = v conj(i)``, so a
positive q-axis current absorbs reactive power (``Q = -v_d i_q``).

A device's admittance is split in two parts: a proper realization from
terminal voltage to the converter current it injects, and a shunt capacitance
placed at the terminal node.  The node-side admittance (current drawn from the
node) is then ``Y(s) = c_shunt (s/w0 + J) - G(s)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .linsys import LinearSystem

J = np.array([[0.0, -1.0], [1.0, 0.0]])  # multiplication by j on (d, q)
CURRENT_LIMIT = 1.2
FICTITIOUS_C = 0.01


class DeviceError(ValueError):
    pass


@dataclass(frozen=True)
class PiGains:
    kp: float
    ki: float

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise DeviceError(f"PI gains must be nonnegative, got {self.kp}, {self.ki}")

    @classmethod
    def parse(cls, value) -> "PiGains":
        if isinstance(value, PiGains):
            return value
        if isinstance(value, dict):
            return cls(float(value["kp"]), float(value["ki"]))
        kp, ki = value
        return cls(float(kp), float(ki))


@dataclass(frozen=True)
class IbrParams:
    pll: PiGains
    outer: PiGains
    outer_mode: str = "dc_voltage"
    current: PiGains = PiGains(1.5, 10.0)
    ff_time_constant: float = 1e-4
    l_f: float = 0.05
    c_f: float = 0.05
    c_dc: float = 0.038
    i_qref: float = 0.0
    s_b: float = 1.0
    omega0: float = 2 * np.pi * 50

    def __post_init__(self):
        if self.outer_mode not in ("dc_voltage", "constant_power"):
            raise DeviceError(f"unknown outer_mode {self.outer_mode!r}")
        if self.l_f <= 0 or self.c_f <= 0:
            raise DeviceError("l_f and c_f must be positive")
        if self.outer_mode == "dc_voltage" and self.c_dc <= 0:
            raise DeviceError("c_dc must be positive in dc_voltage mode")


@dataclass(frozen=True)
class StatcomParams:
    pll: PiGains = PiGains(30.0, 7000.0)
    avc: PiGains = PiGains(1.0, 5.0)
    dc: PiGains = PiGains(1.0, 5.0)
    current: PiGains = PiGains(1.0, 10.0)
    ff_time_constant: float | None = None
    vm_time_constant: float | None = 1e-3
    l_f: float = 0.1
    c_dc: float = 0.038
    s_bs: float = 1.0
    omega0: float = 2 * np.pi * 50
    shunt_c: float = FICTITIOUS_C

    def with_gains(self, pll: PiGains | None = None, avc: PiGains | None = None) -> "StatcomParams":
        return replace(self, pll=pll or self.pll, avc=avc or self.avc)


@dataclass(frozen=True)
class AdmittanceModel:
    """Device admittance normalized at ``base_capacity``.

    ``realization`` maps ``vd, vq`` to the injected converter current
    ``id, iq`` and may carry further labelled channels (power output,
    gain-scheduling ports).  ``shunt_c`` is the terminal capacitance.
    """

    realization: LinearSystem
    shunt_c: float
    omega0: float
    base_capacity: float = 1.0
    tag: str = "dev"
    meta: dict = field(default_factory=dict, compare=False)

    def injection(self, s) -> np.ndarray:
        return self.realization.freqresp(s, inputs=("vd", "vq"), outputs=("id", "iq"))

    def response(self, s) -> np.ndarray:
        """Node-side admittance ``Y(s)`` (current drawn), shape ``(..., 2, 2)``."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
        g = self.injection(s_arr)
        cap = self.shunt_c * (s_arr[:, None, None] / self.omega0 * np.eye(2) + J)
        y = cap - g
        return y if np.ndim(s) else y[0]

    def scaled(self, factor: float) -> "AdmittanceModel":
        """Output (and shunt) scaled by ``factor``: capacity scaling of the device."""
        return replace(
            self,
            realization=self.realization.scale_outputs(factor, ("id", "iq")),
            shunt_c=self.shunt_c * factor,
            base_capacity=self.base_capacity * factor,
        )


class _Eq:
    """Accumulates linear equations ``dx = A x + B u``, ``y = C x + D u`` by name."""

    def __init__(self, states, inputs, outputs):
        self.states = list(states)
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.sx = {s: i for i, s in enumerate(self.states)}
        self.ux = {u: i for i, u in enumerate(self.inputs)}
        self.yx = {y: i for i, y in enumerate(self.outputs)}
        self.a = np.zeros((len(states), len(states)))
        self.b = np.zeros((len(states), len(inputs)))
        self.c = np.zeros((len(outputs), len(states)))
        self.d = np.zeros((len(outputs), len(inputs)))

    def _add(self, row_a, row_b, idx, expr, scale):
        for name, coef in expr.items():
            if name in self.sx:
                row_a[idx, self.sx[name]] += scale * coef
            else:
                row_b[idx, self.ux[name]] += scale * coef

    def deriv(self, state, expr, scale=1.0):
        self._add(self.a, self.b, self.sx[state], expr, scale)

    def out(self, output, expr, scale=1.0):
        self._add(self.c, self.d, self.yx[output], expr, scale)

    def system(self) -> LinearSystem:
        return LinearSystem(self.a, self.b, self.c, self.d,
                            tuple(self.inputs), tuple(self.outputs), tuple(self.states))


def _lin(*terms) -> dict:
    """Sum of ``(coef, expr)`` where expr is a name or a dict."""
    acc: dict[str, float] = {}
    for coef, expr in terms:
        if isinstance(expr, str):
            expr = {expr: 1.0}
        for k, v in expr.items():
            acc[k] = acc.get(k, 0.0) + coef * v
    return {k: v for k, v in acc.items() if v != 0.0}


def _converter_core(eq: _Eq, *, l_f, omega0, cur: PiGains, t_ff, i_d0, i_q0,
                    theta: str, id_ref: dict, iq_ref: dict):
    """Inner current loop in the PLL frame plus the L filter, in the global frame.

    Frame transforms around the equilibrium (v0 = 1, i0 = i_d0 + j i_q0):
    ``dv_c = dv - j v0 dtheta``, ``di_c = di - j i0 dtheta``,
    ``de = de_c + j e0 dtheta`` with ``e0 = v0 + j l_f i0``.
    """
    vcd = {"vd": 1.0}
    vcq = _lin((1.0, "vq"), (-1.0, theta))
    icd = _lin((1.0, "id"), (i_q0, theta))
    icq = _lin((1.0, "iq"), (-i_d0, theta))
    ed_err = _lin((1.0, id_ref), (-1.0, icd))
    eq_err = _lin((1.0, iq_ref), (-1.0, icq))
    eq.deriv("xi_d", ed_err)
    eq.deriv("xi_q", eq_err)
    # e_c = H_i (i_ref - i_c) + j l_f i_c + H_ff v_c  (no feedforward when t_ff is None)
    ecd = _lin((cur.kp, ed_err), (cur.ki, "xi_d"), (-l_f, icq))
    ecq = _lin((cur.kp, eq_err), (cur.ki, "xi_q"), (l_f, icd))
    if t_ff is not None:
        eq.deriv("vf_d", _lin((1.0, vcd), (-1.0, "vf_d")), 1.0 / t_ff)
        eq.deriv("vf_q", _lin((1.0, vcq), (-1.0, "vf_q")), 1.0 / t_ff)
        ecd = _lin((1.0, ecd), (1.0, "vf_d"))
        ecq = _lin((1.0, ecq), (1.0, "vf_q"))
    e0d, e0q = 1.0 - l_f * i_q0, l_f * i_d0
    ed = _lin((1.0, ecd), (-e0q, theta))
    eqq = _lin((1.0, ecq), (e0d, theta))
    # (l_f/w0) di/dt = e - v - j l_f i
    k = omega0 / l_f
    eq.deriv("id", _lin((1.0, ed), (-1.0, "vd"), (l_f, "iq")), k)
    eq.deriv("iq", _lin((1.0, eqq), (-1.0, "vq"), (-l_f, "id")), k)
    return vcq


def build_ibr(params: IbrParams, loading: float = 1.0) -> AdmittanceModel:
    """Grid-following IBR admittance normalized at its rated capacity.

    ``loading`` is the per-unit active power of the converter on its own base
    at the linearization point.  Under the aggregated-unit convention used for
    whole-system studies, a farm producing ``P_e`` is modelled as
    ``P_e`` worth of units each at rated loading, so callers keep
    ``loading = 1`` and scale the result by ``P_e``.
    """
    if not 0 < loading <= 1 + 1e-12:
        raise DeviceError(f"loading {loading} outside (0, 1]")
    i_d0, i_q0 = float(loading), float(params.i_qref)
    if np.hypot(i_d0, i_q0) > CURRENT_LIMIT:
        raise DeviceError("no equilibrium: converter current limit exceeded")
    dc = params.outer_mode == "dc_voltage"
    states = ["id", "iq", "theta", "eta", "xi_d", "xi_q", "vf_d", "vf_q"]
    states += ["vdc", "zeta"] if dc else ["zeta"]
    eq = _Eq(states, ["vd", "vq"], ["id", "iq", "p"])
    p_expr = _lin((i_d0, "vd"), (i_q0, "vq"), (1.0, "id"))
    if dc:
        # C_dc dvdc/dt = P_in - P; i_dref = H_dc (vdc - 1)
        eq.deriv("vdc", p_expr, -1.0 / params.c_dc)
        eq.deriv("zeta", {"vdc": 1.0})
        id_ref = _lin((params.outer.kp, "vdc"), (params.outer.ki, "zeta"))
    else:
        # i_dref = H_p (P_ref - P)
        eq.deriv("zeta", p_expr, -1.0)
        id_ref = _lin((-params.outer.kp, p_expr), (params.outer.ki, "zeta"))
    vcq = _converter_core(eq, l_f=params.l_f, omega0=params.omega0, cur=params.current,
                          t_ff=params.ff_time_constant, i_d0=i_d0, i_q0=i_q0,
                          theta="theta", id_ref=id_ref, iq_ref={})
    eq.deriv("eta", vcq)
    eq.deriv("theta", _lin((params.pll.kp, vcq), (params.pll.ki, "eta")))
    eq.out("id", {"id": 1.0})
    eq.out("iq", {"iq": 1.0})
    eq.out("p", p_expr)
    return AdmittanceModel(eq.system(), params.c_f, params.omega0, 1.0, "ibr",
                           {"params": params, "loading": loading})


STATCOM_U = ("omega_pll", "iq_ref")
STATCOM_Y = ("uq", "x1", "du", "x2")


def build_statcom(params: StatcomParams, i_qs: float, open_loop: bool = False) -> AdmittanceModel:
    """STATCOM admittance at reactive current ``i_qs`` (device base).

    With ``open_loop=True`` the PLL and AVC PI gains are removed and exposed
    as ports: inputs ``omega_pll, iq_ref`` and measurements
    ``uq`` (PLL-frame q voltage), ``x1`` (its integral), ``du`` (|V| - 1)
    and ``x2`` (its integral), so that ``u = K y`` restores the controller.
    """
    if abs(i_qs) > 1 + 1e-12:
        raise DeviceError(f"|i_qs| = {abs(i_qs)} > 1: AVC saturated, outside modelled regime")
    i_d0, i_q0 = 0.0, float(i_qs)
    states = ["id", "iq", "theta", "x1", "xi_d", "xi_q", "vdc", "zeta", "x2"]
    if params.ff_time_constant is not None:
        states[6:6] = ["vf_d", "vf_q"]
    if params.vm_time_constant is not None:
        states.append("vm")
    inputs = ["vd", "vq"] + (list(STATCOM_U) if open_loop else [])
    outputs = ["id", "iq", "p"] + (list(STATCOM_Y) if open_loop else [])
    eq = _Eq(states, inputs, outputs)
    p_expr = _lin((i_d0, "vd"), (i_q0, "vq"), (1.0, "id"))
    eq.deriv("vdc", p_expr, -1.0 / params.c_dc)
    eq.deriv("zeta", {"vdc": 1.0})
    id_ref = _lin((params.dc.kp, "vdc"), (params.dc.ki, "zeta"))
    du = {"vd": 1.0}  # linearized |V| - 1 at v0 = 1
    if params.vm_time_constant is not None:
        # first-order lag on the measured magnitude
        eq.deriv("vm", _lin((1.0, du), (-1.0, "vm")), 1.0 / params.vm_time_constant)
        du = {"vm": 1.0}
    eq.deriv("x2", du)
    if open_loop:
        iq_ref = {"iq_ref": 1.0}
    else:
        iq_ref = _lin((params.avc.kp, du), (params.avc.ki, "x2"))
    vcq = _converter_core(eq, l_f=params.l_f, omega0=params.omega0, cur=params.current,
                          t_ff=params.ff_time_constant, i_d0=i_d0, i_q0=i_q0,
                          theta="theta", id_ref=id_ref, iq_ref=iq_ref)
    eq.deriv("x1", vcq)
    if open_loop:
        eq.deriv("theta", {"omega_pll": 1.0})
        eq.out("uq", vcq)
        eq.out("x1", {"x1": 1.0})
        eq.out("du", du)
        eq.out("x2", {"x2": 1.0})
    else:
        eq.deriv("theta", _lin((params.pll.kp, vcq), (params.pll.ki, "x1")))
    eq.out("id", {"id": 1.0})
    eq.out("iq", {"iq": 1.0})
    eq.out("p", p_expr)
    return AdmittanceModel(eq.system(), params.shunt_c, params.omega0, 1.0, "sta",
                           {"params": params, "i_qs": i_qs, "open_loop": open_loop})


def aggregate_statcom(params: StatcomParams, p_sigma: float, iq_sigma: float,
                      open_loop: bool = False) -> AdmittanceModel:
    """Equivalent single STATCOM of capacity ``p_sigma`` at current ``iq_sigma``."""
    if p_sigma < 0:
        raise DeviceError("p_sigma must be nonnegative")
    return build_statcom(params, iq_sigma, open_loop=open_loop).scaled(p_sigma)


def weighted_device_sum(ibrs: Sequence[tuple[float, AdmittanceModel]],
                        statcom_agg: AdmittanceModel | None = None) -> AdmittanceModel:
    """Parallel connection of weighted devices sharing one terminal voltage.

    Extra channels of each member are kept with a ``m<i>.`` prefix.
    """
    members = list(ibrs) + ([(1.0, statcom_agg)] if statcom_agg is not None else [])
    weights = np.array([w for w, _ in ibrs], float)
    if ibrs and abs(weights.sum() - 1.0) > 1e-9:
        import warnings

        warnings.warn(f"device weights sum to {weights.sum():.6g}, not 1", RuntimeWarning,
                      stacklevel=2)
    states = []
    n_tot = sum(m.realization.n_states for _, m in members)
    ext_in_names = []
    for idx, (w, m) in enumerate(members):
        r = m.realization
        ext_in_names += [f"m{idx}.{u}" for u in r.inputs if u not in ("vd", "vq")]
    inputs = ["vd", "vq"] + ext_in_names
    a = np.zeros((n_tot, n_tot))
    b = np.zeros((n_tot, len(inputs)))
    rows_out = []
    c_i = np.zeros((2, n_tot))
    d_i = np.zeros((2, len(inputs)))
    off = 0
    for idx, (w, m) in enumerate(members):
        r = m.realization
        ns = r.n_states
        sl = slice(off, off + ns)
        a[sl, sl] = r.a
        for ui, uname in enumerate(r.inputs):
            col = inputs.index(uname if uname in ("vd", "vq") else f"m{idx}.{uname}")
            b[sl, col] = r.b[:, ui]
        for oi, oname in enumerate(r.outputs):
            crow = np.zeros(n_tot)
            crow[sl] = r.c[oi]
            drow = np.zeros(len(inputs))
            for ui, uname in enumerate(r.inputs):
                col = inputs.index(uname if uname in ("vd", "vq") else f"m{idx}.{uname}")
                drow[col] = r.d[oi, ui]
            if oname in ("id", "iq"):
                k = 0 if oname == "id" else 1
                c_i[k] += w * crow
                d_i[k] += w * drow
            else:
                scale = w if oname == "p" else 1.0
                rows_out.append((f"m{idx}.{oname}", scale * crow, scale * drow))
        states += [f"m{idx}.{s}" for s in r.states]
        off += ns
    c = np.vstack([c_i] + [row[1][None] for row in rows_out]) if rows_out else c_i
    d = np.vstack([d_i] + [row[2][None] for row in rows_out]) if rows_out else d_i
    outputs = ["id", "iq"] + [row[0] for row in rows_out]
    real = LinearSystem(a, b, c, d, tuple(inputs), tuple(outputs), tuple(states))
    shunt = sum(w * m.shunt_c for w, m in members)
    omega0 = members[0][1].omega0 if members else 2 * np.pi * 50
    return AdmittanceModel(real, shunt, omega0, 1.0, "sum", {"members": len(members)})


# reference parameter sets of the case study -------------------------------------

def case_ibr_params(group: int) -> IbrParams:
    """IBR parameter groups: 1 (IBR1-3, constant power), 2 (IBR4-6), 3 (IBR7-9)."""
    if group == 1:
        return IbrParams(pll=PiGains(16, 9500), outer=PiGains(1, 5), outer_mode="constant_power")
    if group == 2:
        return IbrParams(pll=PiGains(13, 9800), outer=PiGains(0.5, 5))
    if group == 3:
        return IbrParams(pll=PiGains(16, 9500), outer=PiGains(0.5, 5))
    raise DeviceError(f"unknown IBR group {group}")
