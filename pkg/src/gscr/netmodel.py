"""Network reduction, grid-strength eigenstructure and the dynamic line model.

Conventions
-----------
* Susceptances are per-unit on the system base.
* After :func:`kron_reduce` the kept (device) nodes are ordered IBRs first,
  then STATCOM nodes, matching the ``b11/b12/b21/b22`` partition.
* A STATCOM may also sit directly on an IBR node (co-located); it then has no
  node of its own and its "location" is that IBR's index.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .linsys import LinearSystem

logger = logging.getLogger(__name__)

NODE_KINDS = ("ibr", "statcom", "passive", "infinite_bus")
DEGENERACY_RTOL = 1e-8


class NetworkError(ValueError):
    """Invalid network topology or a failed reduction."""

    def __init__(self, message: str, nodes: Sequence = ()):
        super().__init__(message)
        self.nodes = tuple(nodes)


@dataclass(frozen=True)
class Branch:
    src: str
    dst: str
    b: float


@dataclass(frozen=True)
class NetworkModel:
    """Node-tagged susceptance network with a uniform R/L ratio.

    ``nodes`` maps node id to kind.  IBR and STATCOM nodes keep the insertion
    order of ``nodes``; that order defines IBR 1..n and STATCOM n+1..n+k.
    """

    nodes: dict[str, str]
    branches: tuple[Branch, ...]
    tau: float
    omega0: float = 2 * np.pi * 50

    def __post_init__(self):
        for nid, kind in self.nodes.items():
            if kind not in NODE_KINDS:
                raise NetworkError(f"node {nid!r} has unknown kind {kind!r}", [nid])
        inf = [n for n, k in self.nodes.items() if k == "infinite_bus"]
        if len(inf) != 1:
            raise NetworkError(f"expected exactly one infinite bus, found {len(inf)}", inf)
        for br in self.branches:
            for end in (br.src, br.dst):
                if end not in self.nodes:
                    raise NetworkError(
                        f"branch {br.src}-{br.dst} references unknown node {end!r}", [end])
            if not br.b > 0:
                raise NetworkError(f"branch {br.src}-{br.dst} has nonpositive susceptance {br.b}",
                                   [br.src, br.dst])
            if br.src == br.dst:
                raise NetworkError(f"branch {br.src}-{br.dst} is a self-loop", [br.src])
        if self.tau < 0 or self.omega0 <= 0:
            raise NetworkError("tau must be >= 0 and omega0 > 0")
        self._check_connected()

    def _check_connected(self):
        ids = list(self.nodes)
        adj = {n: set() for n in ids}
        for br in self.branches:
            adj[br.src].add(br.dst)
            adj[br.dst].add(br.src)
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        missing = [n for n in ids if n not in seen]
        if missing:
            raise NetworkError(f"network is not connected; unreachable nodes {missing}", missing)

    @property
    def ibr_nodes(self) -> list[str]:
        return [n for n, k in self.nodes.items() if k == "ibr"]

    @property
    def statcom_nodes(self) -> list[str]:
        return [n for n, k in self.nodes.items() if k == "statcom"]

    @property
    def infinite_bus(self) -> str:
        return next(n for n, k in self.nodes.items() if k == "infinite_bus")

    def laplacian(self) -> tuple[np.ndarray, list[str]]:
        ids = list(self.nodes)
        pos = {n: i for i, n in enumerate(ids)}
        lap = np.zeros((len(ids), len(ids)))
        for br in self.branches:
            i, j = pos[br.src], pos[br.dst]
            lap[i, i] += br.b
            lap[j, j] += br.b
            lap[i, j] -= br.b
            lap[j, i] -= br.b
        return lap, ids


@dataclass(frozen=True)
class ReducedNetwork:
    """Kron-reduced susceptance matrix over IBR + STATCOM nodes.

    ``b_inf`` is the (non-positive) coupling of each kept node to the
    infinite bus; it drives the network with infinite-bus voltage deviations.
    """

    b_red: np.ndarray
    n: int
    k: int
    b_inf: np.ndarray
    node_ids: tuple[str, ...] = ()

    @property
    def b11(self):
        return self.b_red[: self.n, : self.n]

    @property
    def b12(self):
        return self.b_red[: self.n, self.n:]

    @property
    def b21(self):
        return self.b_red[self.n:, : self.n]

    @property
    def b22(self):
        return self.b_red[self.n:, self.n:]

    @property
    def b_redn(self) -> np.ndarray:
        if self.k == 0:
            return self.b11.copy()
        return self.b11 - self.b12 @ np.linalg.solve(self.b22, self.b21)

    @classmethod
    def single_line(cls, scr: float) -> "ReducedNetwork":
        """One device node tied to the infinite bus through susceptance ``scr``."""
        return cls(np.array([[float(scr)]]), 1, 0, np.array([-float(scr)]), ("dev",))


def _schur(mat: np.ndarray, keep: list[int], drop: list[int], labels) -> np.ndarray:
    if not drop:
        return mat[np.ix_(keep, keep)]
    m22 = mat[np.ix_(drop, drop)]
    try:
        lu = sla.lu_factor(m22, check_finite=True)
        cond = np.linalg.cond(m22)
    except (sla.LinAlgError, ValueError):
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise NetworkError(
            "singular block during elimination; isolated island among nodes "
            f"{[labels[i] for i in drop]}", [labels[i] for i in drop])
    return mat[np.ix_(keep, keep)] - mat[np.ix_(keep, drop)] @ sla.lu_solve(
        lu, mat[np.ix_(drop, keep)])


def kron_reduce(net: NetworkModel, order: Sequence[str] | None = None) -> ReducedNetwork:
    """Eliminate passive nodes and ground the infinite bus.

    ``order`` optionally eliminates passive nodes one at a time in the given
    sequence (result is order independent; the option exists to check that).
    """
    lap, ids = net.laplacian()
    pos = {n: i for i, n in enumerate(ids)}
    dev = [pos[n] for n in net.ibr_nodes + net.statcom_nodes]
    inf = pos[net.infinite_bus]
    passive = [pos[n] for n, kind in net.nodes.items() if kind == "passive"]
    kept = dev + [inf]
    if order is None:
        red = _schur(lap, kept, passive, ids)
    else:
        mat = lap
        alive = list(range(len(ids)))
        for nid in order:
            if net.nodes.get(nid) != "passive":
                raise NetworkError(f"{nid!r} is not a passive node", [nid])
            p = alive.index(pos[nid])
            rest = [i for i in range(len(alive)) if i != p]
            mat = _schur(mat, rest, [p], [ids[a] for a in alive])
            alive.pop(p)
        loc = [alive.index(i) for i in kept]
        red = mat[np.ix_(loc, loc)]
    nd = len(dev)
    b_red = red[:nd, :nd]
    b_red = 0.5 * (b_red + b_red.T)
    b_inf = red[:nd, nd].copy()
    n = len(net.ibr_nodes)
    out = ReducedNetwork(b_red, n, nd - n, b_inf, tuple(ids[i] for i in dev))
    if out.k:
        try:
            cond = np.linalg.cond(out.b22)
        except np.linalg.LinAlgError:
            cond = np.inf
        if cond > 1e14:
            raise NetworkError("STATCOM block is singular (isolated STATCOM island)",
                               net.statcom_nodes)
    return out


@dataclass(frozen=True)
class OperatingCondition:
    p_e: np.ndarray
    i_qs: np.ndarray
    s_b: np.ndarray
    s_bs: np.ndarray

    def __post_init__(self):
        for name in ("p_e", "i_qs", "s_b", "s_bs"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        if self.p_e.shape != self.s_b.shape or self.i_qs.shape != self.s_bs.shape:
            raise ValueError("operating condition dimensions inconsistent")
        if np.any(self.p_e <= 0):
            raise ValueError("IBR active power outputs must be positive")
        if np.any(self.p_e > self.s_b * (1 + 1e-12)):
            raise ValueError("IBR active power exceeds rated capacity")
        if np.any(np.abs(self.i_qs) > 1 + 1e-12):
            raise ValueError("STATCOM reactive current outside [-1, 1]")

    @classmethod
    def rated(cls, s_b, s_bs, i_qs=None) -> "OperatingCondition":
        s_bs = np.atleast_1d(np.asarray(s_bs, float))
        i_qs = np.zeros_like(s_bs) if i_qs is None else i_qs
        return cls(np.asarray(s_b, float), np.broadcast_to(i_qs, s_bs.shape).copy(),
                   np.asarray(s_b, float), s_bs)

    def scaled(self, factor: float) -> "OperatingCondition":
        return OperatingCondition(self.p_e * factor, self.i_qs, self.s_b, self.s_bs)

    def with_iq(self, i_qs) -> "OperatingCondition":
        return OperatingCondition(self.p_e, np.broadcast_to(i_qs, self.s_bs.shape).copy(),
                                  self.s_b, self.s_bs)


@dataclass(frozen=True)
class GridStrengthReport:
    gscr: float
    lambda1: float
    u1: np.ndarray
    v1: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p_sigma: float
    iq_sigma: float
    degenerate: bool = False
    no_statcom_participation: bool = False
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "gscr": self.gscr,
            "lambda1": self.lambda1,
            "u1": self.u1.tolist(),
            "v1": self.v1.tolist(),
            "p1": self.p1.tolist(),
            "p2": self.p2.tolist(),
            "p_sigma": self.p_sigma,
            "iq_sigma": self.iq_sigma,
            "degenerate": self.degenerate,
            "eigenvalues": self.eigenvalues.tolist(),
        }


def iq_sigma(p2, i_qs) -> tuple[float, bool]:
    """Participation-weighted STATCOM reactive current.

    Returns ``(value, flag)`` where ``flag`` is True when no STATCOM
    participates (the value is then defined as 0).
    """
    p2 = np.asarray(p2, float)
    i_qs = np.asarray(i_qs, float)
    if np.any(p2 < 0):
        raise ValueError("participation factors must be nonnegative")
    total = p2.sum()
    if total <= 0:
        return 0.0, True
    if p2.size == 1:
        return float(i_qs[0]), False
    val = float(p2 @ i_qs / total)
    # clip rounding excursions outside the convex hull
    return float(np.clip(val, i_qs.min(), i_qs.max())), False


def grid_strength(red: ReducedNetwork, oc: OperatingCondition,
                  statcom_location: Sequence[int] | None = None) -> GridStrengthReport:
    """Smallest eigenvalue of ``P_e^-1 B_redn`` and the participation factors.

    ``statcom_location[j]`` is the index in the extended (IBR + STATCOM node)
    vector where STATCOM ``j`` is attached.  By default STATCOM ``j`` sits on
    its own reduced node ``n + j``; a value below ``n`` means the STATCOM is
    co-located with that IBR.
    """
    n = red.n
    p_e = oc.p_e
    if p_e.shape != (n,):
        raise ValueError(f"p_e has length {p_e.size}, network has {n} IBR nodes")
    if np.any(p_e <= 0):
        raise ValueError("nonpositive active power")
    k_dev = oc.s_bs.size
    if statcom_location is None:
        if k_dev != red.k:
            raise ValueError(f"{k_dev} STATCOMs for {red.k} STATCOM nodes")
        statcom_location = [n + j for j in range(k_dev)]
    loc = np.asarray(statcom_location, dtype=int)

    bn = red.b_redn
    bn = 0.5 * (bn + bn.T)
    sq = 1.0 / np.sqrt(p_e)
    sym = sq[:, None] * bn * sq[None, :]
    w, vecs = np.linalg.eigh(sym)
    lam = float(w[0])
    degenerate = n > 1 and (w[1] - w[0]) <= DEGENERACY_RTOL * max(abs(w[0]), 1e-300)
    if degenerate:
        warnings.warn("smallest gSCR eigenvalue is not simple; participation factors unreliable",
                      RuntimeWarning, stacklevel=2)
    z = vecs[:, 0]
    if z.sum() < 0:
        z = -z
    # P^-1 B = P^-1/2 S P^1/2  ->  right vec P^-1/2 z, left vec z^T P^1/2
    v1 = sq * z
    u1 = z / sq
    scale = u1 @ v1
    u1 = u1 / scale
    p1 = v1 * u1

    if k_dev:
        ext_u = np.concatenate([u1 / p_e, np.zeros(red.k)])
        ext_v = np.concatenate([v1, np.zeros(red.k)])
        if red.k:
            b22_inv_b21 = np.linalg.solve(red.b22, red.b21)
            b12_b22_inv = np.linalg.solve(red.b22.T, red.b12.T).T
            # extended eigenvectors; the P_e^-1 row weighting is folded into ext_u
            ext_u[n:] = -(u1 / p_e) @ b12_b22_inv
            ext_v[n:] = -b22_inv_b21 @ v1
        p2 = oc.s_bs * ext_u[loc] * ext_v[loc]
        p2 = np.where(np.abs(p2) < 1e-15, 0.0, p2)
        if np.any(p2 < -1e-12):
            logger.warning("negative STATCOM participation %s", p2)
        p2 = np.maximum(p2, 0.0)
    else:
        p2 = np.zeros(0)
    p_sigma = float(p2.sum())
    iq, flag = iq_sigma(p2, oc.i_qs) if k_dev else (0.0, True)
    return GridStrengthReport(
        gscr=lam, lambda1=lam, u1=u1, v1=v1, p1=p1, p2=p2, p_sigma=p_sigma, iq_sigma=iq,
        degenerate=bool(degenerate), no_statcom_participation=flag, eigenvalues=w,
    )


def colocated_participation(p1, p_e, s_bs) -> np.ndarray:
    """STATCOM participation when each STATCOM sits on the matching IBR node."""
    return np.asarray(s_bs, float) / np.asarray(p_e, float) * np.asarray(p1, float)


# realization of B_red (x) gamma(s) ----------------------------------------------

R90 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def gamma(s, tau: float, omega0: float) -> np.ndarray:
    """Closed-form 2x2 admittance of a unit-susceptance line."""
    s = complex(s)
    den = (s + tau) ** 2 / omega0 + omega0
    return np.array([[s + tau, omega0], [-omega0, s + tau]]) / den


def network_dynamics(red: ReducedNetwork, tau: float, omega0: float) -> LinearSystem:
    """State-space realization of ``B_red (x) gamma(s)``.

    Inputs are the dq voltage deviations of every kept node followed by the
    infinite-bus dq voltage; outputs are the dq currents flowing from each
    node into the network.  States equal the outputs.
    """
    nd = red.b_red.shape[0]
    eye = np.eye(nd)
    a = -tau * np.eye(2 * nd) + omega0 * np.kron(eye, R90)
    b_nodes = omega0 * np.kron(red.b_red, np.eye(2))
    b_inf = omega0 * np.kron(red.b_inf.reshape(-1, 1), np.eye(2))
    b = np.hstack([b_nodes, b_inf])
    c = np.eye(2 * nd)
    d = np.zeros((2 * nd, 2 * nd + 2))
    ids = red.node_ids or tuple(str(i) for i in range(nd))
    inputs = tuple(f"v{ax}[{i}]" for i in ids for ax in "dq") + ("vinf_d", "vinf_q")
    outputs = tuple(f"i{ax}[{i}]" for i in ids for ax in "dq")
    states = tuple(f"net.i{ax}[{i}]" for i in ids for ax in "dq")
    return LinearSystem(a, b, c, d, inputs, outputs, states)
