"""Spectral studies and empirical checks of the multigrid theory."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from slmg.errors import DimensionMismatch, EigenFailure, NoConvergence
from slmg.geometry import MeshHierarchy, MeshLevel
from slmg.multigrid import MultigridSetup, apply_preconditioner
from slmg.weak_product import WeakProductOperator, build_weak_operator, hminus1_oracle, weak_product

SIGN_THRESHOLD = 1e-12


def count_sign_changes(v, cyclic: bool = True) -> int:
    """Number of adjacent pairs with strictly opposite signs.

    Entries below ``1e-12 * max|v|`` are dropped before counting.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0
    vmax = np.max(np.abs(v))
    if vmax == 0:
        return 0
    s = np.sign(v[np.abs(v) >= SIGN_THRESHOLD * vmax])
    if s.size < 2:
        return 0
    if cyclic:
        return int(np.sum(s != np.roll(s, -1)))
    return int(np.sum(s[1:] != s[:-1]))


@dataclass
class SpectrumReport:
    kind: str  # "plain" or "generalized"
    eigenvalues: np.ndarray
    indices: np.ndarray
    eigenvectors: np.ndarray  # columns are panel coefficient vectors
    sign_changes: np.ndarray


def spectrum_study(laplace: np.ndarray, weak: WeakProductOperator, kind: str = "generalized", how_many: int = 4) -> SpectrumReport:
    """Extreme eigenpairs of ``Lambda y = lam H y`` or ``Lambda A y = lam H y``.

    ``how_many`` smallest and largest pairs are kept.  Coefficient vectors
    are scaled so that the represented function has unit L2 norm.
    """
    n = weak.n
    if laplace.shape != (n, n):
        raise DimensionMismatch("Laplace matrix does not match the weak operator")
    if kind not in ("plain", "generalized"):
        raise ValueError(f"unknown spectrum kind {kind!r}")
    how_many = min(how_many, n // 2) if n > 1 else 1
    H = np.diag(weak.lengths)
    try:
        if kind == "plain":
            lam, Y = sla.eigh(laplace, H)
            E = Y
        else:
            A = weak.dense()
            lhs = A.T @ laplace @ A
            rhs = H @ A
            lam, Y = sla.eigh(0.5 * (lhs + lhs.T), 0.5 * (rhs + rhs.T))
            E = A @ Y
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    norms = np.sqrt(np.einsum("ij,i,ij->j", E, weak.lengths, E))
    E = E / norms
    idx = np.unique(np.r_[np.arange(how_many), np.arange(n - how_many, n)])
    vecs = E[:, idx]
    counts = np.array([count_sign_changes(vecs[:, j]) for j in range(vecs.shape[1])])
    return SpectrumReport(kind, lam, idx, vecs, counts)


def write_eigenvector_data(path, mesh: MeshLevel, report: SpectrumReport) -> None:
    """One file per eigenvector with rows ``arclength_midpoint, value``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    s = mesh.arclength_midpoints
    for col, i in enumerate(report.indices):
        data = np.column_stack([s, report.eigenvectors[:, col]])
        np.savetxt(path / f"{report.kind}_{i:05d}.csv", data, delimiter=",",
                   header=f"eigenvalue={report.eigenvalues[i]:.12e}\narclength,value", encoding="utf-8")


@dataclass
class RatioStats:
    level: int
    min_ratio: float
    max_ratio: float

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio


def norm_equivalence_study(hierarchy: MeshHierarchy, samples: int = 100, levels=None, seed: int = 0,
                           refinement_factor: int = 16) -> list[RatioStats]:
    """Ratios ``[s, s]_k / (s, s)_{-1}`` for random real panel vectors ``s``."""
    rng = np.random.default_rng(seed)
    levels = range(1, hierarchy.n_levels + 1) if levels is None else levels
    out = []
    for k in levels:
        mesh = hierarchy.level(k)
        op = build_weak_operator(mesh)
        S = rng.uniform(-1.0, 1.0, (mesh.n_panels, samples))
        discrete = np.einsum("ij,ij->j", S, op.lengths[:, None] * op.solve(S))
        exact = hminus1_oracle(mesh, S, S, refinement_factor).real
        r = discrete / exact
        out.append(RatioStats(k, float(r.min()), float(r.max())))
    return out


def contraction_factor(setup: MultigridSetup, laplace: np.ndarray | None = None, probes: int = 1,
                       tol: float = 1e-6, max_iters: int = 300, seed: int = 0) -> float:
    """Power-method estimate of ``|I - B_J M|`` in the norm induced by ``laplace``.

    ``M`` is the finest matrix of ``setup``.  The map ``E = I - B_J M`` is
    iterated through ``E^* E`` with ``E^* = L^-1 E^H L``; the square root of
    the converged Rayleigh quotient is returned (largest over ``probes``).
    """
    M = setup.finest.matrix
    L = setup.finest.laplace if laplace is None else laplace
    n = M.shape[0]
    if setup.n_levels == 1:
        return 0.0
    chol = sla.cho_factor(L)
    B = apply_preconditioner(setup, np.eye(n, dtype=M.dtype))
    E = np.eye(n) - B @ M
    # adjoint in the L-inner product: E^* = L^-1 E^H L
    E_adj = sla.cho_solve(chol, E.conj().T @ L)
    EE = E_adj @ E

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(probes):
        e = rng.uniform(-1.0, 1.0, n).astype(M.dtype)
        e /= np.sqrt(abs(np.vdot(e, L @ e)))
        q_old = None
        q = np.nan
        for _ in range(max_iters):
            w = EE @ e
            q = float(np.real(np.vdot(e, L @ w)))
            if q_old is not None and abs(q - q_old) <= tol * abs(q):
                break
            q_old = q
            e = w / np.sqrt(abs(np.vdot(w, L @ w)))
        else:
            warnings.warn("contraction estimate did not settle", NoConvergence, stacklevel=2)
        best = max(best, float(np.sqrt(max(q, 0.0))))
    return best


def weak_product_matrix(op: WeakProductOperator) -> np.ndarray:
    """Dense Gram matrix ``H A^-1`` of the weak product."""
    return op.lengths[:, None] * op.solve(np.eye(op.n))


__all__ = [
    "count_sign_changes",
    "SpectrumReport",
    "spectrum_study",
    "write_eigenvector_data",
    "RatioStats",
    "norm_equivalence_study",
    "contraction_factor",
    "weak_product",
    "weak_product_matrix",
]
