"""Linear time-domain simulation of the assembled small-signal model.

Between gain switches the system is LTI, so each step is propagated exactly
with the zero-order-hold discretization ``expm([[A, B], [0, 0]] dt)``.  The
response to an infinite-bus voltage dip is reported as the IBR active-power
deviations, and classified as decaying, sustained or growing from the slope
of the log peak envelope.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .linsys import LinearSystem
from .scheduler import HYSTERESIS, DispatchDecision, Site, TelemetrySample, dispatch
from .synthesis import GainMatrix, GainSchedule

logger = logging.getLogger(__name__)

DT = 2e-4
HORIZON = 5.0
SLOPE_THRESHOLD = 0.05  # 1/s
ENVELOPE_WINDOW = 0.2  # s, longer than the slowest oscillation of interest
SETTLE = 0.5  # s skipped after the disturbance before fitting the envelope


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Disturbance:
    """Step change of the infinite-bus d-axis voltage for a finite duration."""

    kind: str = "infinite_bus_voltage_dip"
    start: float = 1.0
    duration: float = 0.05
    magnitude: float = 0.05

    def __post_init__(self):
        if self.kind != "infinite_bus_voltage_dip":
            raise ValueError(f"unsupported disturbance kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("disturbance duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def input(self, t: np.ndarray) -> np.ndarray:
        """(len(t), 2) samples of (vinf_d, vinf_q) deviations, held over each step."""
        u = np.zeros((t.size, 2))
        # tolerance keeps a start on a grid point from slipping a step
        on = (t >= self.start - 1e-12) & (t < self.end - 1e-12)
        u[on, 0] = -self.magnitude
        return u


@dataclass
class SimulationResult:
    t: np.ndarray
    dp: np.ndarray  # (len(t), n) active-power deviations on system base
    names: tuple[str, ...]
    classification: str
    slope: float
    truncated: bool = False
    switches: list = field(default_factory=list)

    def __post_init__(self):
        if self.dp.shape[0] != self.t.size:
            raise ValueError("trace length differs from the time grid")

    @property
    def decaying(self) -> bool:
        return self.classification == "decaying"

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"dP_ibr_{i + 1}" for i in range(self.dp.shape[1])])
            for k in range(self.t.size):
                w.writerow([f"{self.t[k]:.6f}"] + [f"{v:.9e}" for v in self.dp[k]])

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "envelope_slope": self.slope if math.isfinite(self.slope) else None,
            "truncated": self.truncated,
            "samples": int(self.t.size),
            "peak": float(np.max(np.abs(self.dp))) if self.dp.size else 0.0,
            "switches": self.switches,
        }


def discretize(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold pair (Phi, Gamma)."""
    n, m = b.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a * dt
    aug[:n, n:] = b * dt
    e = sla.expm(aug)
    return e[:n, :n], e[:n, n:]


def _power_outputs(sys: LinearSystem) -> list[str]:
    names = [y for y in sys.outputs if y.startswith("ibr") and y.endswith(".p")]
    if not names:
        raise SimulationError("system has no IBR active-power outputs (ibr<i>.p)")
    return sorted(names, key=lambda y: int(y[3:-2]))


def classify(t: np.ndarray, dp: np.ndarray, after: float, truncated: bool = False,
             threshold: float = SLOPE_THRESHOLD, window: float = ENVELOPE_WINDOW
             ) -> tuple[str, float]:
    """Least-squares slope of log(window peak of max_i |dP_i|) after ``after``."""
    if truncated:
        return "growing", math.inf
    env = np.max(np.abs(dp), axis=1) if dp.ndim == 2 else np.abs(dp)
    sel = t >= after
    ts, es = t[sel], env[sel]
    if ts.size < 2:
        raise SimulationError("horizon too short to classify the response")
    edges = np.arange(ts[0], ts[-1] + 1e-12, window)
    centers, peaks = [], []
    for lo in edges:
        m = (ts >= lo) & (ts < lo + window)
        if np.count_nonzero(m) < 2:
            continue
        centers.append(lo + 0.5 * window)
        peaks.append(es[m].max())
    if len(peaks) < 2:
        raise SimulationError("horizon too short to classify the response")
    peaks = np.asarray(peaks)
    if peaks.max() == 0.0:
        return "decaying", -math.inf
    logp = np.log(np.maximum(peaks, peaks.max() * 1e-300))
    slope = float(np.polyfit(np.asarray(centers), logp, 1)[0])
    if slope > threshold:
        return "growing", slope
    if slope < -threshold:
        return "decaying", slope
    return "sustained", slope


def _grid(horizon: float, dt: float) -> np.ndarray:
    if not 0 < dt <= 1e-3:
        raise ValueError("dt must lie in (0, 1e-3] s")
    steps = int(round(horizon / dt)) + 1
    return np.arange(steps) * dt


def _run(sys: LinearSystem, u_full: np.ndarray, x0: np.ndarray, dt: float,
         outputs: list[str]):
    """Propagate one LTI segment; the system input vector is zero except vinf."""
    uidx = sys.input_index(("vinf_d", "vinf_q"))
    yidx = sys.output_index(outputs)
    phi, gam = discretize(sys.a, sys.b[:, uidx], dt)
    c = sys.c[yidx]
    d = sys.d[np.ix_(yidx, uidx)]
    return _kernels.propagate(phi, gam, c, d, x0, u_full)


def simulate(sys: LinearSystem, dist: Disturbance | None = None, horizon: float = HORIZON,
             dt: float = DT, x0: np.ndarray | None = None) -> SimulationResult:
    dist = dist or Disturbance()
    outputs = _power_outputs(sys)
    t = _grid(horizon, dt)
    u = dist.input(t)
    x0 = np.zeros(sys.n_states) if x0 is None else np.asarray(x0, float)
    xs, ys = _run(sys, u, x0, dt, outputs)
    truncated = ys.shape[0] < t.size
    if truncated:
        logger.info("state overflow at t=%.4f s; trace truncated", t[ys.shape[0] - 1])
    t = t[:ys.shape[0]]
    cls, slope = classify(t, ys, dist.end + SETTLE, truncated)
    return SimulationResult(t, ys, tuple(outputs), cls, slope, truncated)


def simulate_with_schedule(factory: Callable[[GainMatrix, TelemetrySample], LinearSystem],
                           schedule: GainSchedule, site: Site,
                           telemetry: Sequence[TelemetrySample],
                           dist: Disturbance | None = None, horizon: float = HORIZON,
                           dt: float = DT, hysteresis: float = HYSTERESIS) -> SimulationResult:
    """Dispatch at each telemetry timestamp; on a gain switch swap the state map.

    The state vector is carried across the swap unchanged (integrator states
    are kept, no bumpless-transfer logic).  ``factory(gains, sample)`` must
    return systems with identical state labels.
    """
    if not telemetry:
        raise ValueError("telemetry is empty")
    dist = dist or Disturbance()
    t = _grid(horizon, dt)
    u = dist.input(t)
    times = [s.timestamp for s in telemetry]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("telemetry is not time-ordered")

    decisions: list[tuple[int, DispatchDecision, TelemetrySample]] = []
    prev = None
    for s in telemetry:
        prev = dispatch(schedule, site, s, prev, hysteresis)
        k = max(0, int(math.ceil(s.timestamp / dt - 1e-9)))
        if not decisions or prev.switched:
            decisions.append((min(k, t.size - 1) if decisions else 0, prev, s))

    ys_parts = []
    x = None
    sys0 = None
    outputs = None
    truncated = False
    switches = []
    for idx, (k0, dec, sample) in enumerate(decisions):
        k1 = decisions[idx + 1][0] if idx + 1 < len(decisions) else t.size
        if k1 <= k0:
            continue
        sys = factory(dec.gains, sample)
        if sys0 is None:
            sys0, outputs = sys, _power_outputs(sys)
            x = np.zeros(sys.n_states)
        elif sys.states != sys0.states:
            raise SimulationError("state layout changed across a gain switch")
        else:
            switches.append({"time": float(t[k0]), "interval": dec.interval})
        # one extra step so the last state of the segment seeds the next one
        end = min(k1 + 1, t.size + 1)
        u_seg = u[k0:end] if end <= t.size else np.vstack([u[k0:], u[-1:]])
        xs, ys = _run(sys, u_seg, x, dt, outputs)
        n_keep = k1 - k0
        if ys.shape[0] < u_seg.shape[0] and ys.shape[0] <= n_keep:
            ys_parts.append(ys)
            truncated = True
            break
        ys_parts.append(ys[:n_keep])
        x = xs[n_keep] if xs.shape[0] > n_keep else xs[-1]
    ys = np.vstack(ys_parts)
    t = t[:ys.shape[0]]
    cls, slope = classify(t, ys, dist.end + SETTLE, truncated)
    return SimulationResult(t, ys, tuple(outputs), cls, slope, truncated, switches)


def write_manifest(path: str | Path, result: SimulationResult, inputs: dict,
                   dist: Disturbance, dt: float, horizon: float) -> None:
    manifest = {
        "inputs": inputs,
        "disturbance": asdict(dist),
        "dt": dt,
        "horizon": horizon,
        "result": result.summary(),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
