"""Discrete weak (H^-1 equivalent) inner product on panel spaces.

``A`` is the periodic finite-difference matrix of ``-u'' + u`` on the
panel mesh and ``H = diag(l_i)``.  The product ``[phi, psi] =
e(psi)^* H A^{-1} e(phi)`` is equivalent to the H^-1 inner product with
level-independent constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from slmg.errors import DimensionMismatch, SingularSystem, TooCoarse
from slmg.geometry import MeshLevel


@dataclass(frozen=True, eq=False)
class WeakProductOperator:
    """Cyclic tridiagonal ``A`` (row ``i`` touches ``i-1, i, i+1`` mod N)."""

    level: int
    lengths: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diag)

    @property
    def H(self) -> np.ndarray:
        return np.diag(self.lengths)

    def _check(self, v):
        v = np.asarray(v)
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"expected leading dimension {self.n}, got {v.shape}")
        return v

    def _bcast(self, c, v):
        return c.reshape((-1,) + (1,) * (v.ndim - 1))

    def matvec(self, v) -> np.ndarray:
        # difference form v - [(v+ - v)/l^2 - (v - v-)/(l l-)], exact on constants
        v = self._check(v)
        lo, up = (self._bcast(c, v) for c in (self.lower, self.upper))
        return v + up * (np.roll(v, -1, axis=0) - v) + lo * (np.roll(v, 1, axis=0) - v)

    def rmatvec(self, v) -> np.ndarray:
        """``A^t v`` in O(N)."""
        v = self._check(v)
        lo, di, up = (self._bcast(c, v) for c in (self.lower, self.diag, self.upper))
        # column j collects lower[j+1] (row j+1) and upper[j-1] (row j-1)
        return di * v + np.roll(lo * v, -1, axis=0) + np.roll(up * v, 1, axis=0)

    def dense(self) -> np.ndarray:
        n = self.n
        a = np.diag(self.diag)
        i = np.arange(n)
        a[i, (i - 1) % n] += self.lower
        a[i, (i + 1) % n] += self.upper
        return a

    def solve(self, rhs) -> np.ndarray:
        """Solve ``A x = rhs`` by tridiagonal elimination plus a Sherman-Morrison correction."""
        rhs = self._check(rhs)
        n = self.n
        beta = self.lower[0]  # A[0, n-1]
        alpha = self.upper[-1]  # A[n-1, 0]
        gamma = -self.diag[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = self.upper[:-1]
        ab[1] = self.diag
        ab[2, :-1] = self.lower[1:]
        ab[1, 0] -= gamma
        ab[1, -1] -= alpha * beta / gamma
        u = np.zeros(n)
        u[0], u[-1] = gamma, alpha
        try:
            y = sla.solve_banded((1, 1), ab, rhs)
            z = sla.solve_banded((1, 1), ab, u)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystem(str(exc)) from exc
        vy = y[0] + (beta / gamma) * y[-1]
        vz = z[0] + (beta / gamma) * z[-1]
        if abs(1 + vz) < 1e-300:
            raise SingularSystem("Sherman-Morrison denominator vanished")
        zb = z.reshape((-1,) + (1,) * (np.ndim(rhs) - 1))
        return y - zb * (vy / (1 + vz))


def build_weak_operator(mesh: MeshLevel) -> WeakProductOperator:
    n = mesh.n_panels
    if n < 3:
        raise TooCoarse("weak product operator needs at least 3 panels")
    l = mesh.lengths
    lm = np.roll(l, 1)
    lower = -1.0 / (l * lm)
    upper = -1.0 / (l * l)
    diag = 1.0 - lower - upper
    return WeakProductOperator(mesh.level, l.copy(), lower, diag, upper)


def apply_A_transpose(op: WeakProductOperator, v) -> np.ndarray:
    return op.rmatvec(v)


def weak_product(op: WeakProductOperator, phi, psi) -> complex:
    """``[phi, psi] = e(psi)^* H A^{-1} e(phi)``."""
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape != (op.n,) or psi.shape != (op.n,):
        raise DimensionMismatch("panel vectors do not match the operator level")
    x = op.solve(phi)
    return complex(np.vdot(psi, op.lengths * x))


def _fine_cells(mesh: MeshLevel, factor: int):
    d = np.repeat(mesh.lengths / factor, factor)
    s = np.concatenate([[0.0], np.cumsum(d)[:-1]]) + 0.5 * d
    return d, s


def _cell_values(data, mesh, factor, s):
    if callable(data):
        return np.asarray(data(s))
    data = np.asarray(data)
    if data.shape[0] != mesh.n_panels:
        raise DimensionMismatch("panel data does not match the mesh")
    return np.repeat(data, factor, axis=0)


def hminus1_oracle(mesh: MeshLevel, v, w, refinement_factor: int = 16):
    """Reference ``(v, w)_{-1} = (T v, w)_Gamma`` with ``T`` the solution map of
    ``-u'' + u = v`` (periodic, arclength derivative).

    Solved by a conservative second-order finite-difference scheme on cells
    ``refinement_factor`` times finer than the panels.  ``v`` and ``w`` are
    per-panel values (optionally 2D with one column per sample, paired
    column-wise) or callables of arclength.
    """
    if refinement_factor < 8:
        raise ValueError("refinement_factor must be >= 8")
    d, s = _fine_cells(mesh, refinement_factor)
    m = len(d)
    cv = _cell_values(v, mesh, refinement_factor, s)
    cw = _cell_values(w, mesh, refinement_factor, s)
    flux = 2.0 / (d + np.roll(d, -1))  # between cell c and c+1
    main = d + flux + np.roll(flux, 1)
    i = np.arange(m)
    rows = np.concatenate([i, i, (i + 1) % m])
    cols = np.concatenate([i, (i + 1) % m, i])
    vals = np.concatenate([main, -flux, -flux])
    mat = sps.csc_matrix((vals, (rows, cols)), shape=(m, m))
    dv = d.reshape((-1,) + (1,) * (cv.ndim - 1)) * cv
    lu = spla.splu(mat)
    u = lu.solve(np.ascontiguousarray(dv.real))
    if np.iscomplexobj(dv):
        u = u + 1j * lu.solve(np.ascontiguousarray(dv.imag))
    dd = d.reshape((-1,) + (1,) * (cv.ndim - 1))
    return np.sum(dd * u * np.conj(cw), axis=0)
