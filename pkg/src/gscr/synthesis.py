"""Structured static-output-feedback design of STATCOM PLL/AVC gains.

The STATCOM's PLL and AVC PI loops are opened (see ``build_statcom(...,
open_loop=True)``) and closed again through the structured gain

    omega_pll = k_pllps * uq + k_pllis * x1
    iq_ref    = k_acps  * du + k_acis  * x2

so that a candidate gain set only changes ``A + B K C``.  For each interval
of the scheduling variable IqΣ, the worst case over the bounding subsystems
and a grid of IqΣ samples is minimized by a derivative-free multi-start
pattern search: first the spectral abscissa (to find a stabilizing point),
then the H-infinity norm of the infinite-bus-voltage to node-voltage channel.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .devices import STATCOM_U, STATCOM_Y, PiGains, StatcomParams
from .linsys import ChannelError, LinearSystem, static_feedback
from .netmodel import OperatingCondition, ReducedNetwork, grid_strength
from .stability import (BracketError, DeviceSet, bounding_subsystems,
                        build_critical_subsystem, cgscr)

logger = logging.getLogger(__name__)

CERT_MARGIN = 1e-4
HINF_RTOL = 1e-4
NORM_INPUTS = ("vinf_d", "vinf_q")


class SynthesisError(RuntimeError):
    pass


# -- gains ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GainBounds:
    k_acps: tuple[float, float] = (0.5, 5.0)
    k_acis: tuple[float, float] = (1.0, 20.0)
    k_pllps: tuple[float, float] = (1.0, 120.0)
    k_pllis: tuple[float, float] = (100.0, 20000.0)

    def __post_init__(self):
        for name in GAIN_NAMES:
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"bad bounds for {name}: [{lo}, {hi}]")

    @classmethod
    def parse(cls, data: dict | None) -> "GainBounds":
        if not data:
            return cls()
        return cls(**{k: tuple(map(float, v)) for k, v in data.items()})

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([getattr(self, n)[0] for n in GAIN_NAMES])
        hi = np.array([getattr(self, n)[1] for n in GAIN_NAMES])
        return lo, hi


GAIN_NAMES = ("k_acps", "k_acis", "k_pllps", "k_pllis")


@dataclass(frozen=True)
class GainMatrix:
    """The four structured STATCOM gains (AVC PI and PLL PI)."""

    k_acps: float
    k_acis: float
    k_pllps: float
    k_pllis: float
    bounds: GainBounds = field(default_factory=GainBounds, compare=False)

    def __post_init__(self):
        for name in GAIN_NAMES:
            val = getattr(self, name)
            lo, hi = getattr(self.bounds, name)
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")
            if not lo * (1 - 1e-12) <= val <= hi * (1 + 1e-12):
                raise ValueError(f"{name} = {val} outside bounds [{lo}, {hi}]")

    @classmethod
    def from_params(cls, params: StatcomParams, bounds: GainBounds | None = None) -> "GainMatrix":
        """Gains already baked into ``params``; bounds default to a box containing them."""
        vals = (params.avc.kp, params.avc.ki, params.pll.kp, params.pll.ki)
        if bounds is None:
            bounds = GainBounds(*[(min(v, lo), max(v, hi)) for v, (lo, hi) in
                                  zip(vals, (getattr(GainBounds(), n) for n in GAIN_NAMES))])
        return cls(*vals, bounds=bounds)

    @classmethod
    def from_vector(cls, x, bounds: GainBounds | None = None) -> "GainMatrix":
        return cls(*map(float, x), bounds=bounds or GainBounds())

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in GAIN_NAMES])

    def as_matrix(self) -> np.ndarray:
        """``K`` with rows ``(omega_pll, iq_ref)`` and columns ``(uq, x1, du, x2)``."""
        return np.array([[self.k_pllps, self.k_pllis, 0.0, 0.0],
                         [0.0, 0.0, self.k_acps, self.k_acis]])

    def apply(self, params: StatcomParams) -> StatcomParams:
        return params.with_gains(pll=PiGains(self.k_pllps, self.k_pllis),
                                 avc=PiGains(self.k_acps, self.k_acis))

    def to_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in GAIN_NAMES}


# -- closed loop and norms ----------------------------------------------------------------

def _port_prefixes(sys: LinearSystem) -> list[str]:
    tail = "." + STATCOM_U[0]
    prefixes = [u[: -len(STATCOM_U[0])] for u in sys.inputs if u == STATCOM_U[0] or u.endswith(tail)]
    return prefixes


def closed_loop(sys: LinearSystem, k: GainMatrix) -> LinearSystem:
    """Close every exposed STATCOM port set of ``sys`` with the gain ``k``."""
    prefixes = _port_prefixes(sys)
    if not prefixes:
        raise ChannelError("system exposes no STATCOM gain ports (omega_pll, iq_ref)")
    u_names = [p + u for p in prefixes for u in STATCOM_U]
    y_names = [p + y for p in prefixes for y in STATCOM_Y]
    gain = np.kron(np.eye(len(prefixes)), k.as_matrix())
    return static_feedback(sys, gain, u_names, y_names)


def _hamiltonian_has_imag_eig(a, b, c, d, gam) -> bool:
    r = gam ** 2 * np.eye(d.shape[1]) - d.T @ d
    s = gam ** 2 * np.eye(d.shape[0]) - d @ d.T
    ri = np.linalg.inv(r)
    si = np.linalg.inv(s)
    a_h = a + b @ ri @ d.T @ c
    h = np.block([[a_h, b @ ri @ b.T], [-c.T @ si @ c, -a_h.T]])
    ev = np.linalg.eigvals(h)
    scale = max(1.0, float(np.max(np.abs(ev)))) if ev.size else 1.0
    return bool(np.any(np.abs(ev.real) < 1e-8 * scale))


def _sigma_max(sys: LinearSystem, w: np.ndarray) -> np.ndarray:
    g = sys.freqresp(1j * w)
    return np.linalg.svd(g, compute_uv=False)[:, 0]


def hinf_norm(sys: LinearSystem, inputs: Sequence[str] | None = None,
              outputs: Sequence[str] | None = None, rtol: float = HINF_RTOL,
              return_peak: bool = False):
    """H-infinity norm by Hamiltonian bisection; ``inf`` if not strictly stable.

    The bisection is seeded by a frequency-grid lower bound (grid points plus
    the system's modal frequencies), which also serves as a cross-check.
    """
    if inputs is not None or outputs is not None:
        sys = sys.subsystem(inputs, outputs)
    a, b, c, d = sys.a, sys.b, sys.c, sys.d
    if sys.n_states and np.max(np.linalg.eigvals(a).real) >= 0:
        return (math.inf, math.nan) if return_peak else math.inf
    if sys.n_states == 0 or not np.any(b) or not np.any(c):
        val = float(np.linalg.norm(d, 2)) if d.size else 0.0
        return (val, 0.0) if return_peak else val
    ev = np.linalg.eigvals(a)
    wmax = max(1.0, float(np.max(np.abs(ev)))) * 10
    grid = np.concatenate([[0.0], np.logspace(-3, np.log10(wmax), 400), np.abs(ev.imag)])
    grid = np.unique(grid)
    sig = _sigma_max(sys, grid)
    i_peak = int(np.argmax(sig))
    lo = max(float(sig[i_peak]), float(np.linalg.norm(d, 2)) if d.size else 0.0)
    w_peak = float(grid[i_peak])
    if lo == 0.0:
        return (0.0, 0.0) if return_peak else 0.0
    hi = 2.0 * lo
    while _hamiltonian_has_imag_eig(a, b, c, d, hi):
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            return (math.inf, math.nan) if return_peak else math.inf
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if _hamiltonian_has_imag_eig(a, b, c, d, mid):
            lo = mid
        else:
            hi = mid
    val = 0.5 * (lo + hi)
    return (val, w_peak) if return_peak else val


def hinf_grid(sys: LinearSystem, n_points: int = 100_000, w_max: float | None = None) -> float:
    """Dense frequency-grid lower bound of the H-infinity norm (an oracle)."""
    if sys.n_states and np.max(np.linalg.eigvals(sys.a).real) >= 0:
        return math.inf
    ev = np.linalg.eigvals(sys.a) if sys.n_states else np.zeros(0)
    if w_max is None:
        w_max = max(1.0, float(np.max(np.abs(ev))) if ev.size else 1.0) * 100
    w = np.concatenate([[0.0], np.logspace(-4, np.log10(w_max), n_points)])
    return float(np.max(_sigma_max(sys, w)))


# -- problem --------------------------------------------------------------------------------

@dataclass
class SynthesisProblem:
    """Worst-case stabilization over subsystems x IqΣ samples for one interval.

    ``subsystems`` maps an IqΣ value to the list of open-loop bounding
    subsystems (each exposing one STATCOM port set and the infinite-bus
    input).
    """

    subsystems: Callable[[float], list[LinearSystem]]
    iq_interval: tuple[float, float]
    iq_samples: tuple[float, ...]
    objective_mode: str = "hinf"
    bounds: GainBounds = field(default_factory=GainBounds)
    margin: float = CERT_MARGIN
    n_starts: int = 6
    max_evals: int = 600
    seed: int = 0
    norm_outputs: tuple[str, ...] | None = None
    initial: tuple[GainMatrix, ...] = ()

    def __post_init__(self):
        if self.objective_mode not in ("spectral_abscissa", "hinf"):
            raise ValueError(f"unknown objective_mode {self.objective_mode!r}")
        if not self.iq_samples:
            raise ValueError("iq_samples must be nonempty")


@dataclass(frozen=True)
class IntervalSolution:
    status: str  # "feasible" | "infeasible" | "budget"
    gains: GainMatrix | None
    objective: float
    worst_real: float
    evaluations: int


def interval_samples(lo: float, hi: float, count: int = 3, closed: bool = False) -> tuple:
    """Endpoints plus interior points; an open upper end is sampled just inside."""
    pts = np.linspace(lo, hi, count)
    if not closed:
        pts[-1] = hi - 1e-9
    return tuple(float(p) for p in pts)


class _Objective:
    def __init__(self, problem: SynthesisProblem):
        self.problem = problem
        self.systems = []
        for iq in problem.iq_samples:
            self.systems.extend(problem.subsystems(iq))
        self.evals = 0
        self.cache: dict[tuple, tuple[float, float]] = {}

    def abscissa(self, k: GainMatrix) -> float:
        key = ("a",) + tuple(k.as_vector())
        if key not in self.cache:
            self.evals += 1
            worst = -math.inf
            for s in self.systems:
                worst = max(worst, closed_loop(s, k).spectral_abscissa())
            self.cache[key] = worst
        return self.cache[key]

    def norm(self, k: GainMatrix) -> float:
        key = ("h",) + tuple(k.as_vector())
        if key not in self.cache:
            self.evals += 1
            if self.abscissa(k) >= -self.problem.margin:
                self.cache[key] = math.inf
            else:
                worst = 0.0
                for s in self.systems:
                    cl = closed_loop(s, k)
                    outs = self.problem.norm_outputs or _voltage_outputs(cl)
                    worst = max(worst, hinf_norm(cl, NORM_INPUTS, outs))
                self.cache[key] = worst
        return self.cache[key]


def _voltage_outputs(sys: LinearSystem) -> tuple[str, ...]:
    outs = tuple(y for y in sys.outputs if y.startswith("vd[") or y.startswith("vq["))
    if not outs:
        raise ChannelError("no node-voltage outputs for the norm channel")
    return outs


class _Coords:
    """Unit-box coordinates: linear for proportional gains, log for integral gains."""

    LOG = np.array([False, True, False, True])

    def __init__(self, bounds: GainBounds):
        self.bounds = bounds
        self.lo, self.hi = bounds.as_arrays()
        self.log = self.LOG & (self.lo > 0)

    def to_gain(self, z) -> GainMatrix:
        z = np.clip(np.asarray(z, float), 0.0, 1.0)
        x = np.where(self.log,
                     np.exp(np.log(np.maximum(self.lo, 1e-300)) + z * (
                         np.log(np.maximum(self.hi, 1e-300)) - np.log(np.maximum(self.lo, 1e-300)))),
                     self.lo + z * (self.hi - self.lo))
        x = np.clip(x, self.lo, self.hi)
        return GainMatrix.from_vector(x, self.bounds)

    def from_gain(self, k: GainMatrix) -> np.ndarray:
        x = k.as_vector()
        span = np.where(self.hi > self.lo, 1.0, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zl = (np.log(np.maximum(x, 1e-300)) - np.log(np.maximum(self.lo, 1e-300))) / (
                np.log(np.maximum(self.hi, 1e-300)) - np.log(np.maximum(self.lo, 1e-300)))
            zn = (x - self.lo) / (self.hi - self.lo)
        z = np.where(self.log, zl, zn)
        return np.clip(np.nan_to_num(z * span), 0.0, 1.0)


def _pattern_search(f, z0, budget, step0=0.25, step_min=2e-3, stop_below=None):
    """Coordinate search with step halving on the unit box.

    Returns ``(z, f(z), evaluations, converged)``.
    """
    z = np.array(z0, float)
    fz = f(z)
    used = 1
    step = step0
    dims = z.size
    while step >= step_min and used < budget:
        improved = False
        for i in range(dims):
            for sgn in (1.0, -1.0):
                trial = z.copy()
                trial[i] = np.clip(trial[i] + sgn * step, 0.0, 1.0)
                if trial[i] == z[i]:
                    continue
                ft = f(trial)
                used += 1
                if ft < fz:
                    # extrapolate along the successful direction
                    z, fz = trial, ft
                    improved = True
                    while used < budget:
                        t2 = z.copy()
                        t2[i] = np.clip(t2[i] + sgn * step, 0.0, 1.0)
                        if t2[i] == z[i]:
                            break
                        f2 = f(t2)
                        used += 1
                        if f2 < fz:
                            z, fz = t2, f2
                        else:
                            break
                    break
            if used >= budget:
                break
        if stop_below is not None and fz < stop_below:
            break
        if not improved:
            step *= 0.5
    return z, fz, used, step < step_min


def solve_interval(problem: SynthesisProblem) -> IntervalSolution:
    """Two-phase multi-start search; ``infeasible`` when no start stabilizes."""
    obj = _Objective(problem)
    coords = _Coords(problem.bounds)
    rng = np.random.default_rng(problem.seed)
    starts = [coords.from_gain(k) for k in problem.initial]
    starts.append(np.full(4, 0.5))
    while len(starts) < problem.n_starts + len(problem.initial):
        starts.append(rng.random(4))

    def f1(z):
        return obj.abscissa(coords.to_gain(z))

    per_start = max(40, problem.max_evals // max(1, len(starts)))
    best_z, best_f = None, math.inf
    all_converged = True
    for z0 in starts:
        z, fz, _, conv = _pattern_search(f1, z0, per_start, stop_below=-1.0)
        all_converged &= conv or fz < -1.0
        if fz < best_f:
            best_z, best_f = z, fz
    if best_f >= -problem.margin:
        status = "infeasible" if all_converged else "budget"
        return IntervalSolution(status, None, math.inf, float(best_f), obj.evals)

    if problem.objective_mode == "spectral_abscissa":
        k = coords.to_gain(best_z)
        return IntervalSolution("feasible", k, float(best_f), float(best_f), obj.evals)

    def f2(z):
        return obj.norm(coords.to_gain(z))

    z, fz, _, _ = _pattern_search(f2, best_z, max(40, problem.max_evals // 2), step0=0.125)
    k = coords.to_gain(z)
    return IntervalSolution("feasible", k, float(fz), float(obj.abscissa(k)), obj.evals)


# -- schedule -------------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalResult:
    lo: float
    hi: float
    gains: GainMatrix | None
    objective: float
    worst_real: float
    certified: bool
    status: str
    samples: tuple[float, ...] = ()
    cgscr_max: float | None = None
    cgscr_baseline: float | None = None
    below_gscr: bool | None = None
    below_baseline: bool | None = None

    def to_dict(self) -> dict:
        out = {"lo": self.lo, "hi": self.hi}
        out.update(self.gains.to_dict() if self.gains else
                   {n: None for n in GAIN_NAMES})
        out.update({
            "objective": _num(self.objective),
            "worst_real": _num(self.worst_real),
            "certified": self.certified,
            "status": self.status,
            "samples": list(self.samples),
            "cgscr_max": _num(self.cgscr_max),
            "cgscr_baseline": _num(self.cgscr_baseline),
            "below_gscr": self.below_gscr,
            "below_baseline": self.below_baseline,
        })
        return out


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def interval_edges(m: int) -> list[tuple[float, float]]:
    if m < 1:
        raise ValueError("m must be >= 1")
    return [(-1.0 + 2.0 * (i - 1) / m, -1.0 + 2.0 * i / m) for i in range(1, m + 1)]


@dataclass(frozen=True)
class GainSchedule:
    m: int
    intervals: tuple[IntervalResult, ...]
    gscr: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.intervals) != self.m:
            raise ValueError("interval count does not match m")

    @property
    def complete(self) -> bool:
        return all(iv.certified and iv.gains is not None for iv in self.intervals)

    @property
    def feasible_count(self) -> int:
        return sum(iv.gains is not None and iv.certified for iv in self.intervals)

    def index_of(self, iq: float) -> int:
        """0-based interval index by half-open membership (last interval closed)."""
        if not -1.0 - 1e-12 <= iq <= 1.0 + 1e-12:
            raise ValueError(f"IqΣ = {iq} outside [-1, 1]")
        for i, iv in enumerate(self.intervals):
            if iv.lo <= iq < iv.hi:
                return i
        return self.m - 1

    def to_dict(self) -> dict:
        return {"m": self.m, "gscr": _num(self.gscr),
                "intervals": [iv.to_dict() for iv in self.intervals], "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict, bounds: GainBounds | None = None) -> "GainSchedule":
        ivs = []
        for d in data["intervals"]:
            gains = None
            if d.get("k_acps") is not None:
                vals = [float(d[n]) for n in GAIN_NAMES]
                b = bounds or GainBounds(*[(min(v, lo), max(v, hi)) for v, (lo, hi) in
                                           zip(vals, (getattr(GainBounds(), n) for n in GAIN_NAMES))])
                gains = GainMatrix(*vals, bounds=b)
            inf = math.inf
            ivs.append(IntervalResult(
                float(d["lo"]), float(d["hi"]), gains,
                inf if d.get("objective") is None else float(d["objective"]),
                inf if d.get("worst_real") is None else float(d["worst_real"]),
                bool(d.get("certified", False)), d.get("status", "feasible" if gains else "infeasible"),
                tuple(d.get("samples", ())), d.get("cgscr_max"), d.get("cgscr_baseline"),
                d.get("below_gscr"), d.get("below_baseline")))
        return cls(int(data["m"]), tuple(ivs), data.get("gscr"), data.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "GainSchedule":
        return cls.from_dict(json.loads(text))


# -- case-level driver ---------------------------------------------------------------------

@dataclass
class SynthesisSetup:
    """Everything needed to build critical-condition subsystems for a case."""

    red: ReducedNetwork
    devices: DeviceSet
    s_b: np.ndarray
    s_bs: np.ndarray
    tau: float
    omega0: float
    bounds: GainBounds = field(default_factory=GainBounds)
    objective_mode: str = "hinf"
    seed: int = 0
    n_starts: int = 6
    max_evals: int = 600
    baseline_devices: DeviceSet | None = None
    baseline_red: ReducedNetwork | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def critical_condition(self, iq: float = 0.0) -> OperatingCondition:
        return OperatingCondition.rated(self.s_b, self.s_bs, iq)

    def subsystems(self, iq: float) -> list[LinearSystem]:
        """Distinct open-loop bounding subsystems at rated power and IqΣ = ``iq``."""
        key = round(float(iq), 15)
        if key not in self._cache:
            oc = self.critical_condition(0.0)
            bs = bounding_subsystems(self.red, self.devices, oc, self.tau, self.omega0,
                                     open_loop=True, iq_override=float(iq), rank=False)
            seen, systems = set(), []
            for b in bs:
                tag = repr(self.devices.ibr_params[b.index])
                if tag in seen:
                    continue
                seen.add(tag)
                systems.append(b.system())
            self._cache[key] = systems
        return self._cache[key]

    def rated_gscr(self) -> float:
        oc = self.critical_condition()
        k = oc.s_bs.size
        return grid_strength(self.red, oc, self.devices.participation(self.red, k) if k else None).gscr

    def cgscr_at(self, gains: GainMatrix | None, iq: float) -> float:
        oc = self.critical_condition(iq)
        sub = build_critical_subsystem(self.red, self.devices, oc, self.tau, self.omega0,
                                       statcom_gains=gains)
        return cgscr(sub.system).cgscr

    def baseline_cgscr(self) -> float | None:
        if self.baseline_devices is None or self.baseline_red is None:
            return None
        oc = OperatingCondition(self.s_b, np.zeros(0), self.s_b, np.zeros(0))
        sub = build_critical_subsystem(self.baseline_red, self.baseline_devices, oc,
                                       self.tau, self.omega0)
        return cgscr(sub.system).cgscr


def certify(setup: SynthesisSetup, gains: GainMatrix, samples: Sequence[float],
            margin: float = CERT_MARGIN) -> tuple[bool, float]:
    """Fresh eigenvalue check of every (subsystem, sample); returns (ok, worst real part)."""
    worst = -math.inf
    for iq in samples:
        for s in setup.subsystems(iq):
            worst = max(worst, float(np.max(np.linalg.eigvals(closed_loop(s, gains).a).real)))
    return worst < -margin, worst


def synthesize_schedule(setup: SynthesisSetup, m: int, verify: bool = True,
                        sweep_points: int = 21,
                        progress: Callable[[str], None] | None = None) -> GainSchedule:
    """Solve every interval, certify it and (optionally) verify the CgSCR shape."""
    gscr_rated = setup.rated_gscr()
    baseline = setup.baseline_cgscr() if verify else None
    results = []
    for idx, (lo, hi) in enumerate(interval_edges(m)):
        closed = idx == m - 1
        samples = interval_samples(lo, hi, 3, closed)
        dense = interval_samples(lo, hi, 5, closed)
        prob = SynthesisProblem(setup.subsystems, (lo, hi), samples, setup.objective_mode,
                                setup.bounds, CERT_MARGIN, setup.n_starts, setup.max_evals,
                                setup.seed + idx)
        sol = solve_interval(prob)
        certified, worst = False, sol.worst_real
        used = samples
        if sol.gains is not None:
            certified, worst = certify(setup, sol.gains, dense)
            if not certified:
                prob = replace(prob, iq_samples=dense, initial=(sol.gains,))
                sol = solve_interval(prob)
                used = dense
                if sol.gains is not None:
                    certified, worst = certify(setup, sol.gains, dense)
        status = sol.status if sol.gains is None else ("certified" if certified else "uncertified")
        cg_max = below = below_base = None
        if verify and sol.gains is not None and certified:
            sweep = np.linspace(lo, hi if closed else hi - 1e-9, sweep_points)
            vals = []
            for q in sweep:
                try:
                    vals.append(setup.cgscr_at(sol.gains, float(q)))
                except BracketError as exc:
                    # stable even at the lower end of the range: CgSCR below it
                    if exc.lo_verdict is not None and exc.lo_verdict.stable:
                        vals.append(0.0)
                    else:
                        raise
            cg_max = float(max(vals))
            below = cg_max < gscr_rated
            below_base = None if baseline is None else cg_max < baseline
        results.append(IntervalResult(lo, hi, sol.gains, sol.objective, worst, certified, status,
                                      used, cg_max, baseline, below, below_base))
        if progress:
            progress(f"interval {idx + 1}/{m} [{lo:+.3f}, {hi:+.3f}): {status}")
    meta = {"objective_mode": setup.objective_mode, "seed": setup.seed,
            "bounds": asdict(setup.bounds)}
    return GainSchedule(m, tuple(results), gscr_rated, meta)
