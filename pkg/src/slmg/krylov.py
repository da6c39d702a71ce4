"""Full (unrestarted) complex GMRES with optional left preconditioning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from slmg.errors import DimensionMismatch, Stagnation
from slmg.multigrid import MultigridSetup, SolveReport, apply_preconditioner

REORTHO_THRESHOLD = 1e-8


@dataclass(frozen=True)
class KrylovOptions:
    tol: float = 1e-9
    max_iters: int = 500
    preconditioner: str = "none"  # "none" or "multigrid"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.preconditioner not in ("none", "multigrid"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


def _givens(a, b):
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0 * np.conj(b) / abs(b)
    t = np.hypot(abs(a), abs(b))
    c = abs(a) / t
    s = (a / abs(a)) * np.conj(b) / t
    return c, s


def gmres(
    apply_V: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    apply_B: Callable[[np.ndarray], np.ndarray] | None = None,
    options: KrylovOptions = KrylovOptions(),
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``V x = b`` by GMRES on ``B V x = B b`` from a zero initial guess.

    Convergence is declared on the true relative residual
    ``|b - V x| / |b|``.  The images ``V q_j`` of the Arnoldi vectors are
    kept, so the true residual costs no extra products with ``V``.
    """
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n, complex), SolveReport(0, [0.0], True, 0.0, preconditioned_history=[0.0])
    prec = apply_B if apply_B is not None else (lambda v: v)

    r0 = prec(b)
    if r0.shape != (n,):
        raise DimensionMismatch("preconditioner changed the vector length")
    beta = np.linalg.norm(r0)
    m = min(options.max_iters, n)
    Q = np.zeros((m + 1, n), complex)
    W = np.zeros((m, n), complex)  # V q_j
    Hm = np.zeros((m + 1, m), complex)
    cs = np.zeros(m)
    sn = np.zeros(m, complex)
    g = np.zeros(m + 1, complex)
    g[0] = beta
    Q[0] = r0 / beta

    history = [1.0]
    prec_history = [1.0]
    x = np.zeros(n, complex)
    status = "max_iters"
    for j in range(m):
        W[j] = apply_V(Q[j])
        w = prec(W[j])
        wnorm = np.linalg.norm(w)
        for i in range(j + 1):
            Hm[i, j] = np.vdot(Q[i], w)
            w = w - Hm[i, j] * Q[i]
        c = Q[: j + 1].conj() @ w
        if np.max(np.abs(c)) > REORTHO_THRESHOLD * np.linalg.norm(w):
            for i in range(j + 1):
                ci = np.vdot(Q[i], w)
                Hm[i, j] += ci
                w = w - ci * Q[i]
        Hm[j + 1, j] = np.linalg.norm(w)
        breakdown = Hm[j + 1, j] <= 1e-14 * wnorm
        if not breakdown:
            Q[j + 1] = w / Hm[j + 1, j]

        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -np.conj(sn[i]) * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        cs[j], sn[j] = _givens(Hm[j, j], Hm[j + 1, j])
        Hm[j, j] = cs[j] * Hm[j, j] + sn[j] * Hm[j + 1, j]
        Hm[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        prec_history.append(float(abs(g[j + 1]) / beta))

        y = np.linalg.solve(np.triu(Hm[: j + 1, : j + 1]), g[: j + 1])
        x = y @ Q[: j + 1]
        res = float(np.linalg.norm(b - y @ W[: j + 1]) / bnorm)
        history.append(res)
        if res <= options.tol:
            status = "converged"
            break
        if breakdown:
            raise Stagnation(f"Arnoldi breakdown at step {j + 1} with residual {res:.3e}")
    report = SolveReport(
        len(history) - 1, history, status == "converged", history[-1], status, preconditioned_history=prec_history
    )
    return x, report


def mg_gmres(setup: MultigridSetup, b: np.ndarray, options: KrylovOptions = KrylovOptions(preconditioner="multigrid")):
    """GMRES on the finest-level system of ``setup``, optionally MG-preconditioned."""
    V = setup.finest.matrix
    apply_B = (lambda v: apply_preconditioner(setup, v)) if options.preconditioner == "multigrid" else None
    return gmres(lambda v: V @ v, b, apply_B, options)
