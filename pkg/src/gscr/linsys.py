"""Labelled continuous-time state-space systems.

Every block in the package (devices, network, assembled systems) is passed
around as a :class:`LinearSystem`.  Channels are addressed by name so that
interconnections never depend on positional bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


class ChannelError(KeyError):
    """Raised when a named input/output/state channel does not exist."""


def _as2d(m, rows: int, cols: int) -> np.ndarray:
    arr = np.zeros((rows, cols)) if m is None else np.array(m, dtype=float)
    if arr.ndim != 2:
        arr = arr.reshape(rows, cols)
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """``dx/dt = a x + b u``, ``y = c x + d u`` with named channels."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    states: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError(f"state map must be square, got {self.a.shape}")
        m = self.b.shape[1] if self.b.ndim == 2 else 0
        p = self.c.shape[0] if self.c.ndim == 2 else 0
        if self.b.shape != (n, m) or self.c.shape != (p, n) or self.d.shape != (p, m):
            raise ValueError(
                f"inconsistent dimensions a{self.a.shape} b{self.b.shape} "
                f"c{self.c.shape} d{self.d.shape}"
            )
        if not self.inputs:
            object.__setattr__(self, "inputs", tuple(f"u{i}" for i in range(m)))
        if not self.outputs:
            object.__setattr__(self, "outputs", tuple(f"y{i}" for i in range(p)))
        if not self.states:
            object.__setattr__(self, "states", tuple(f"x{i}" for i in range(n)))
        for kind, labels, size in (
            ("input", self.inputs, m),
            ("output", self.outputs, p),
            ("state", self.states, n),
        ):
            if len(labels) != size:
                raise ValueError(f"{len(labels)} {kind} labels for {size} channels")
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate {kind} labels: {labels}")

    @classmethod
    def build(cls, a, b=None, c=None, d=None, inputs=(), outputs=(), states=()):
        a = np.atleast_2d(np.array(a, dtype=float))
        n = a.shape[0]
        m = len(inputs) if inputs else (np.shape(b)[1] if b is not None else 0)
        p = len(outputs) if outputs else (np.shape(c)[0] if c is not None else 0)
        return cls(
            a,
            _as2d(b, n, m),
            _as2d(c, p, n),
            _as2d(d, p, m),
            tuple(inputs),
            tuple(outputs),
            tuple(states),
        )

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    def input_index(self, names: str | Iterable[str]) -> list[int]:
        return _lookup(self.inputs, names, "input")

    def output_index(self, names: str | Iterable[str]) -> list[int]:
        return _lookup(self.outputs, names, "output")

    def state_index(self, names: str | Iterable[str]) -> list[int]:
        return _lookup(self.states, names, "state")

    def eigvals(self) -> np.ndarray:
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.a)

    def spectral_abscissa(self) -> float:
        ev = self.eigvals()
        return float(np.max(ev.real)) if ev.size else -np.inf

    def subsystem(self, inputs: Sequence[str] | None = None,
                  outputs: Sequence[str] | None = None) -> "LinearSystem":
        """Restrict to a subset of channels (states are kept)."""
        ii = self.input_index(inputs) if inputs is not None else list(range(len(self.inputs)))
        oo = self.output_index(outputs) if outputs is not None else list(range(len(self.outputs)))
        return LinearSystem(
            self.a,
            self.b[:, ii],
            self.c[oo, :],
            self.d[np.ix_(oo, ii)],
            tuple(self.inputs[i] for i in ii),
            tuple(self.outputs[o] for o in oo),
            self.states,
        )

    def scale_outputs(self, factor: float, names: Sequence[str] | None = None) -> "LinearSystem":
        oo = self.output_index(names) if names is not None else list(range(len(self.outputs)))
        c = self.c.copy()
        d = self.d.copy()
        c[oo, :] *= factor
        d[oo, :] *= factor
        return LinearSystem(self.a, self.b, c, d, self.inputs, self.outputs, self.states)

    def relabel(self, prefix: str) -> "LinearSystem":
        """Prefix every channel and state label, e.g. ``ibr3.``."""
        return LinearSystem(
            self.a,
            self.b,
            self.c,
            self.d,
            tuple(prefix + s for s in self.inputs),
            tuple(prefix + s for s in self.outputs),
            tuple(prefix + s for s in self.states),
        )

    def freqresp(self, s, inputs: Sequence[str] | None = None,
                 outputs: Sequence[str] | None = None) -> np.ndarray:
        """Transfer matrix at complex frequencies ``s``; shape ``(len(s), p, m)``."""
        sys = self if inputs is None and outputs is None else self.subsystem(inputs, outputs)
        s_arr = np.atleast_1d(np.asarray(s, dtype=complex))
        out = _kernels.transfer_matrix(sys.a, sys.b, sys.c, sys.d, s_arr)
        return out if np.ndim(s) else out[0]


def _lookup(labels: tuple[str, ...], names, kind: str) -> list[int]:
    if isinstance(names, str):
        names = [names]
    pos = {name: i for i, name in enumerate(labels)}
    try:
        return [pos[name] for name in names]
    except KeyError as exc:
        raise ChannelError(f"unknown {kind} channel {exc.args[0]!r}") from None


def append(*systems: LinearSystem) -> LinearSystem:
    """Block-diagonal union of independent systems (no interconnection)."""
    from scipy.linalg import block_diag

    a = block_diag(*[s.a for s in systems]) if systems else np.zeros((0, 0))
    b = block_diag(*[s.b for s in systems])
    c = block_diag(*[s.c for s in systems])
    d = block_diag(*[s.d for s in systems])
    n = a.shape[0]
    return LinearSystem(
        np.atleast_2d(a).reshape(n, n),
        b.reshape(n, -1),
        c.reshape(-1, n),
        d.reshape(c.shape[0] if c.ndim == 2 else 0, b.shape[1] if b.ndim == 2 else 0),
        sum((s.inputs for s in systems), ()),
        sum((s.outputs for s in systems), ()),
        sum((s.states for s in systems), ()),
    )


def static_feedback(sys: LinearSystem, gain: np.ndarray, u_names: Sequence[str],
                    y_names: Sequence[str]) -> LinearSystem:
    """Close ``u = gain @ y`` on the named channels; the closed channels are removed.

    Requires the loop to be free of direct feedthrough (``d[y, u] == 0``) so no
    algebraic loop arises.
    """
    ui = sys.input_index(u_names)
    yi = sys.output_index(y_names)
    gain = np.asarray(gain, dtype=float)
    if gain.shape != (len(ui), len(yi)):
        raise ValueError(f"gain shape {gain.shape} != ({len(ui)}, {len(yi)})")
    if np.any(sys.d[np.ix_(yi, ui)] != 0.0):
        raise ValueError("feedthrough from feedback inputs to measured outputs (algebraic loop)")
    bu = sys.b[:, ui]
    cy = sys.c[yi, :]
    dy_other = sys.d[yi, :]
    keep_in = [i for i in range(len(sys.inputs)) if i not in ui]
    keep_out = list(range(len(sys.outputs)))
    a = sys.a + bu @ gain @ cy
    b = sys.b[:, keep_in] + bu @ gain @ dy_other[:, keep_in]
    c = sys.c + sys.d[:, ui] @ gain @ cy
    d = sys.d[:, keep_in] + sys.d[:, ui] @ gain @ dy_other[:, keep_in]
    return LinearSystem(
        a, b, c[keep_out], d[keep_out],
        tuple(sys.inputs[i] for i in keep_in),
        tuple(sys.outputs[o] for o in keep_out),
        sys.states,
    )
