"""Rational approximation of a 2x2 dq admittance from frequency samples.

A vector-fitting scheme: all four entries share one pole set, residues are
found by linear least squares for fixed poles, and the poles are moved to the
zeros of the fitted weighting function on every iteration.  The fitted model

    Y(s) ~ sum_n R_n / (s - a_n) + D + s e I

is split into a terminal shunt capacitance (``e``, with the matching ``J``
coupling of a capacitor in the rotating frame) and a strictly proper current
injection, which is what ``AdmittanceModel`` expects.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .devices import J, AdmittanceModel
from .linsys import LinearSystem

logger = logging.getLogger(__name__)

MAX_ITER = 20
DEFAULT_TOL = 1e-4


class FitError(RuntimeError):
    """The fit missed the tolerance; ``model`` and ``error`` hold the best attempt."""

    def __init__(self, message: str, model: AdmittanceModel | None, error: float):
        super().__init__(message)
        self.model = model
        self.error = error


@dataclass(frozen=True)
class _Basis:
    poles: np.ndarray  # one entry per real pole, upper-half-plane member per pair

    @property
    def kinds(self) -> list[int]:
        # 0 real pole, 1 first column of a pair, 2 second column
        out = []
        for p in self.poles:
            out += [0] if p.imag == 0 else [1, 2]
        return out

    @property
    def size(self) -> int:
        return len(self.kinds)

    def matrix(self, s: np.ndarray) -> np.ndarray:
        cols = []
        for p in self.poles:
            if p.imag == 0:
                cols.append(1.0 / (s - p.real))
            else:
                a, b = 1.0 / (s - p), 1.0 / (s - np.conj(p))
                cols += [a + b, 1j * a - 1j * b]
        return np.stack(cols, axis=1) if cols else np.zeros((s.size, 0), complex)

    def realization(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with ``c^T (sI - A)^-1 b`` reproducing ``sum c_k phi_k(s)``."""
        n = self.size
        a = np.zeros((n, n))
        b = np.zeros(n)
        i = 0
        for p in self.poles:
            if p.imag == 0:
                a[i, i] = p.real
                b[i] = 1.0
                i += 1
            else:
                a[i:i + 2, i:i + 2] = [[p.real, p.imag], [-p.imag, p.real]]
                b[i:i + 2] = [2.0, 0.0]
                i += 2
        return a, b


def _initial_poles(w: np.ndarray, order: int) -> np.ndarray:
    lo, hi = max(w.min(), 1e-3 * w.max(), 1e-6), w.max()
    n_pairs = order // 2
    poles = []
    if order % 2:
        poles.append(complex(-np.sqrt(lo * hi), 0.0))
    for beta in np.geomspace(lo, hi, n_pairs) if n_pairs else []:
        poles.append(complex(-beta / 100.0, beta))
    return np.array(poles, complex)


def _normalize_poles(eigs: np.ndarray) -> np.ndarray:
    """Flip unstable poles and keep one member of each conjugate pair."""
    out = []
    eigs = np.where(eigs.real > 0, -eigs.real + 1j * eigs.imag, eigs)
    scale = max(1.0, float(np.max(np.abs(eigs)))) if eigs.size else 1.0
    for p in sorted(eigs, key=lambda z: (abs(z), z.imag)):
        if abs(p.imag) <= 1e-10 * scale:
            out.append(complex(min(p.real, -1e-9 * scale), 0.0))
        elif p.imag > 0:
            out.append(complex(p))
    return np.array(out, complex)


def _lstsq_real(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Column-scaled real least squares of complex equations."""
    a = np.vstack([m.real, m.imag])
    b = np.concatenate([rhs.real, rhs.imag])
    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0] = 1.0
    sol = np.linalg.lstsq(a / norms, b, rcond=None)[0]
    return sol / norms


_DIAG = (0, 3)  # flat indices of Y11, Y22


def _entry_terms(s: np.ndarray, idx: int) -> np.ndarray:
    """Constant (and for diagonal entries, proportional-to-s) columns."""
    cols = [np.ones_like(s)]
    if idx in _DIAG:
        cols.append(s)
    return np.stack(cols, axis=1)


def _relocate(basis: _Basis, s: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One pole-identification step over all four entries."""
    phi = basis.matrix(s)
    nb = basis.size
    rows, rhs = [], []
    n_own = [nb + _entry_terms(s, i).shape[1] for i in range(4)]
    total = sum(n_own) + nb
    off = 0
    for i in range(4):
        blk = np.zeros((s.size, total), complex)
        blk[:, off:off + nb] = phi
        blk[:, off + nb:off + n_own[i]] = _entry_terms(s, i)
        blk[:, sum(n_own):] = -h[:, i, None] * phi
        rows.append(blk)
        rhs.append(h[:, i])
        off += n_own[i]
    sol = _lstsq_real(np.vstack(rows), np.concatenate(rhs))
    c_sigma = sol[sum(n_own):]
    a, b = basis.realization()
    return np.linalg.eigvals(a - np.outer(b, c_sigma))


def _fit_residues(basis: _Basis, s: np.ndarray, h: np.ndarray):
    """Residues per entry and a shared diagonal ``e`` for fixed poles."""
    phi = basis.matrix(s)
    nb = basis.size
    # unknowns: 4 residue vectors, 4 constants, one shared e
    total = 4 * nb + 4 + 1
    rows, rhs = [], []
    for i in range(4):
        blk = np.zeros((s.size, total), complex)
        blk[:, i * nb:(i + 1) * nb] = phi
        blk[:, 4 * nb + i] = 1.0
        if i in _DIAG:
            blk[:, -1] = s
        rows.append(blk)
        rhs.append(h[:, i])
    sol = _lstsq_real(np.vstack(rows), np.concatenate(rhs))
    res = sol[:4 * nb].reshape(4, nb)
    d = sol[4 * nb:4 * nb + 4].reshape(2, 2)
    return res, d, float(sol[-1])


def _evaluate(basis: _Basis, res, d, e, s) -> np.ndarray:
    phi = basis.matrix(s)
    y = (phi @ res.T).reshape(s.size, 2, 2) + d[None]
    return y + e * s[:, None, None] * np.eye(2)[None]


def _rel_error(fit: np.ndarray, h: np.ndarray) -> float:
    num = np.linalg.norm((fit - h).reshape(h.shape[0], -1), axis=1)
    den = np.linalg.norm(h.reshape(h.shape[0], -1), axis=1)
    den = np.where(den > 0, den, 1.0)
    return float(np.max(num / den))


def _build_model(basis: _Basis, res, d, e, omega0: float) -> AdmittanceModel:
    """Injection realization ``G = -(Y - c (s/omega0 I + J))`` with ``c = omega0 e``."""
    a1, b1 = basis.realization()
    nb = basis.size
    c_shunt = omega0 * e
    a = np.kron(np.eye(2), a1)  # states: [basis for vd, basis for vq]
    b = np.zeros((2 * nb, 2))
    b[:nb, 0] = b1
    b[nb:, 1] = b1
    c = np.zeros((2, 2 * nb))
    for i in range(2):
        for j in range(2):
            c[i, j * nb:(j + 1) * nb] = -res[2 * i + j]
    dd = -(d - c_shunt * J)
    states = tuple(f"z{j}_{k}" for j in "dq" for k in range(nb))
    real = LinearSystem(a, b, c, dd, ("vd", "vq"), ("id", "iq"), states)
    return AdmittanceModel(real, c_shunt, omega0, tag="fit")


def fit_rational(samples, order: int, omega0: float = 2 * np.pi * 50,
                 tol: float | None = DEFAULT_TOL, max_iter: int = MAX_ITER
                 ) -> AdmittanceModel:
    """Fit ``order`` shared poles to ``[(omega, Y(j omega)), ...]``.

    The returned model carries ``meta["max_rel_error"]`` and ``meta["poles"]``.
    Raises :class:`FitError` (with the best fit attached) when the error
    exceeds ``tol``.
    """
    w = np.array([float(x[0]) for x in samples])
    h = np.array([np.asarray(x[1], complex).reshape(2, 2) for x in samples])
    if order < 0:
        raise ValueError("order must be nonnegative")
    if w.size < max(2 * order, 2):
        raise ValueError(f"need at least {max(2 * order, 2)} frequency samples for order {order}")
    if np.any(w <= 0) or not np.all(np.isfinite(h)):
        raise ValueError("frequencies must be positive and responses finite")
    s = 1j * w
    hf = h.reshape(w.size, 4)
    basis = _Basis(_initial_poles(w, order))
    best = None
    for it in range(max_iter if order else 0):
        if basis.size != order:
            break
        res, d, e = _fit_residues(basis, s, hf)
        err = _rel_error(_evaluate(basis, res, d, e, s), h)
        if best is None or err < best[0]:
            best = (err, basis, res, d, e)
        if err < 1e-12:
            break
        new = _normalize_poles(_relocate(basis, s, hf))
        if sum(1 if p.imag == 0 else 2 for p in new) != order:
            logger.debug("pole count changed during relocation; stopping at iteration %d", it)
            break
        basis = _Basis(new)
    res, d, e = _fit_residues(basis, s, hf)
    err = _rel_error(_evaluate(basis, res, d, e, s), h)
    if best is None or err < best[0]:
        best = (err, basis, res, d, e)
    err, basis, res, d, e = best
    model = _build_model(basis, res, d, e, omega0)
    poles = [complex(p) for p in basis.poles] + [complex(np.conj(p)) for p in basis.poles
                                                  if p.imag != 0]
    model.meta.update({"max_rel_error": err, "poles": poles, "order": order})
    if tol is not None and err > tol:
        raise FitError(f"rational fit of order {order} reached max relative error {err:.3g} "
                       f"(tolerance {tol:g})", model, err)
    return model


def sample_response(model: AdmittanceModel, w) -> list[tuple[float, np.ndarray]]:
    w = np.asarray(w, float)
    y = model.response(1j * w)
    return [(float(wi), yi) for wi, yi in zip(w, y)]


_COLS = ["omega_rad_s"] + [f"{p}_Y{i}{j}" for i in (1, 2) for j in (1, 2) for p in ("re", "im")]


def load_frequency_scan(path: str | Path) -> list[tuple[float, np.ndarray]]:
    """CSV with columns omega_rad_s, re_Y11, im_Y11, ..., re_Y22, im_Y22."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header != _COLS:
            raise ValueError(f"frequency scan header must be {_COLS}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_COLS):
                raise ValueError(f"{path}:{line_no}: expected {len(_COLS)} columns")
            v = [float(x) for x in row]
            y = np.array(v[1::2]) + 1j * np.array(v[2::2])
            out.append((v[0], y.reshape(2, 2)))
    return out


def write_frequency_scan(path: str | Path, samples) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(_COLS)
        for w, y in samples:
            y = np.asarray(y, complex).ravel()
            row = [repr(float(w))]
            for v in y:
                row += [repr(float(v.real)), repr(float(v.imag))]
            wr.writerow(row)
