"""Online selection of the STATCOM gain set from telemetry.

Each telemetry sample (IBR active powers, STATCOM reactive currents) is turned
into the participation-weighted IqΣ, which picks an interval of the offline
gain schedule.  A hysteresis band keeps the previous interval until IqΣ has
left it by more than the band, so noisy telemetry near a boundary does not
make the gains chatter.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .netmodel import OperatingCondition, ReducedNetwork, grid_strength
from .synthesis import GainMatrix, GainSchedule

logger = logging.getLogger(__name__)

HYSTERESIS = 0.02


class SchedulerError(RuntimeError):
    """Telemetry mapped into an interval without certified gains."""

    def __init__(self, message: str, last_safe: "DispatchDecision | None" = None,
                 sample_index: int | None = None):
        super().__init__(message)
        self.last_safe = last_safe
        self.sample_index = sample_index


@dataclass(frozen=True)
class TelemetrySample:
    timestamp: float
    p_e: np.ndarray
    i_qs: np.ndarray
    clamped: bool = False

    @classmethod
    def make(cls, timestamp: float, p_e, i_qs) -> "TelemetrySample":
        p_e = np.asarray(p_e, float)
        i_qs = np.asarray(i_qs, float)
        if not (np.all(np.isfinite(p_e)) and np.all(np.isfinite(i_qs)) and math.isfinite(timestamp)):
            raise ValueError("telemetry contains non-finite values")
        clipped = np.clip(i_qs, -1.0, 1.0)
        clamped = bool(np.any(clipped != i_qs))
        if clamped:
            logger.warning("STATCOM reactive current clamped to [-1, 1] at t=%g", timestamp)
        return cls(float(timestamp), p_e, clipped, clamped)


@dataclass(frozen=True)
class DispatchDecision:
    index: int  # 0-based interval index
    gains: GainMatrix
    iq_sigma: float
    gscr: float
    switched: bool
    timestamp: float = 0.0
    clamped: bool = False

    @property
    def interval(self) -> int:
        """1-based interval number as used in reports."""
        return self.index + 1

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "interval": self.interval,
            "iq_sigma": self.iq_sigma,
            "gscr": self.gscr,
            "switched": self.switched,
            "clamped": self.clamped,
            **self.gains.to_dict(),
        }


@dataclass(frozen=True)
class Site:
    """What the dispatcher needs to know about the plant."""

    red: ReducedNetwork
    s_bs: np.ndarray
    s_b: np.ndarray | None = None
    statcom_location: Sequence[int] | None = None

    def measure(self, sample: TelemetrySample) -> tuple[float, float]:
        """(IqΣ, gSCR) for the sample's operating condition."""
        s_b = sample.p_e if self.s_b is None else self.s_b
        oc = OperatingCondition(sample.p_e, sample.i_qs, s_b, self.s_bs)
        rep = grid_strength(self.red, oc, self.statcom_location)
        return rep.iq_sigma, rep.gscr


def select_interval(schedule: GainSchedule, iq: float, previous: int | None = None,
                    hysteresis: float = HYSTERESIS) -> int:
    """Half-open interval membership with a hysteresis band around ``previous``."""
    raw = schedule.index_of(iq)
    if previous is None or raw == previous or hysteresis <= 0:
        return raw
    iv = schedule.intervals[previous]
    if iv.lo - hysteresis <= iq <= iv.hi + hysteresis:
        return previous
    return raw


def dispatch(schedule: GainSchedule, site: Site, sample: TelemetrySample,
             previous: DispatchDecision | None = None,
             hysteresis: float = HYSTERESIS) -> DispatchDecision:
    iq, gscr = site.measure(sample)
    idx = select_interval(schedule, iq, previous.index if previous else None, hysteresis)
    iv = schedule.intervals[idx]
    if iv.gains is None or not iv.certified:
        raise SchedulerError(
            f"IqΣ = {iq:.4f} falls in interval {idx + 1} [{iv.lo:g}, {iv.hi:g}) which has no "
            "certified gains", last_safe=previous)
    switched = previous is None or previous.index != idx
    return DispatchDecision(idx, iv.gains, iq, gscr, switched, sample.timestamp, sample.clamped)


def replay(schedule: GainSchedule, site: Site, samples: Iterable[TelemetrySample],
           hysteresis: float = HYSTERESIS) -> list[DispatchDecision]:
    out: list[DispatchDecision] = []
    prev = None
    last_t = -math.inf
    for i, s in enumerate(samples):
        if s.timestamp < last_t:
            raise SchedulerError(f"telemetry sample {i} is out of time order", prev, i)
        last_t = s.timestamp
        try:
            prev = dispatch(schedule, site, s, prev, hysteresis)
        except SchedulerError as exc:
            raise SchedulerError(f"sample {i}: {exc}", exc.last_safe, i) from None
        out.append(prev)
    return out


# -- files --------------------------------------------------------------------------------

def read_telemetry(path: str | Path, n: int, k: int) -> list[TelemetrySample]:
    """CSV columns: timestamp, p_e_1..p_e_n, i_qs_1..i_qs_k."""
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["timestamp"] + [f"p_e_{i + 1}" for i in range(n)] + [
            f"i_qs_{j + 1}" for j in range(k)]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"telemetry header {header} != {expected}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}:{line_no}: non-numeric telemetry") from None
            if len(vals) != len(expected):
                raise ValueError(f"{path}:{line_no}: expected {len(expected)} columns")
            samples.append(TelemetrySample.make(vals[0], vals[1:1 + n], vals[1 + n:]))
    return samples


def write_telemetry(path: str | Path, samples: Sequence[TelemetrySample]) -> None:
    n = samples[0].p_e.size if samples else 0
    k = samples[0].i_qs.size if samples else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp"] + [f"p_e_{i + 1}" for i in range(n)] +
                   [f"i_qs_{j + 1}" for j in range(k)])
        for s in samples:
            w.writerow([repr(float(s.timestamp))] + [repr(float(v)) for v in s.p_e] +
                       [repr(float(v)) for v in s.i_qs])


def write_decision_log(path: str | Path, decisions: Sequence[DispatchDecision]) -> None:
    with open(path, "w") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")
