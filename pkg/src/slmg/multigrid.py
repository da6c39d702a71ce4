"""Multigrid V-cycle for first-kind single-layer systems.

The smoother is a Richardson step in the weak inner product,
``s <- s + lam^-1 H^-1 A^t (b - V s)``, where ``lam`` bounds the largest
eigenvalue of the Laplace single layer relative to that product.  Coarse
corrections use the panel restriction ``C`` and its transpose; the coarsest
level is solved directly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from slmg.assembly import DEFAULT_QUADRATURE, QuadratureOptions, assemble_helmholtz, assemble_laplace, coarse_condition_check
from slmg.errors import CoarseSolveFailure, DimensionMismatch, NoConvergence
from slmg.geometry import MeshHierarchy
from slmg.weak_product import WeakProductOperator, build_weak_operator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MultigridOptions:
    smoothing: str = "pre"  # "pre" or "prepost"
    lambda_strategy: str = "power"  # "power" or "constant"
    smoothing_constant: float | None = None  # replaces lam^-1 H^-1 when strategy is "constant"
    safety: float = 1.05
    power_tol: float = 1e-6
    power_max_iters: int = 200

    def __post_init__(self):
        if self.smoothing not in ("pre", "prepost"):
            raise ValueError(f"unknown smoothing mode {self.smoothing!r}")
        if self.lambda_strategy not in ("power", "constant"):
            raise ValueError(f"unknown lambda strategy {self.lambda_strategy!r}")
        if self.lambda_strategy == "constant" and not self.smoothing_constant:
            raise ValueError("constant strategy needs smoothing_constant")


@dataclass(eq=False)
class LevelOperators:
    k: int
    matrix: np.ndarray
    weak: WeakProductOperator
    laplace: np.ndarray | None = None
    restriction: sps.csr_matrix | None = None  # C_{k-1}, absent on level 1
    lam: float = np.nan
    h: float = np.nan
    lu: tuple | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(eq=False)
class MultigridSetup:
    levels: list[LevelOperators]
    options: MultigridOptions = field(default_factory=MultigridOptions)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> LevelOperators:
        return self.levels[-1]

    def coarsened(self, n_levels: int) -> "MultigridSetup":
        """Setup using only the ``n_levels`` finest levels (a finer coarse grid)."""
        if not 1 <= n_levels <= self.n_levels:
            raise ValueError(f"n_levels must be in [1, {self.n_levels}]")
        kept = self.levels[self.n_levels - n_levels:]
        out = []
        for k, lev in enumerate(kept, start=1):
            lev = replace(lev, k=k)
            if k == 1:
                lev = replace(lev, restriction=None, lu=_factor_coarse(lev.matrix))
            out.append(lev)
        return MultigridSetup(out, self.options)

    def with_options(self, **kw) -> "MultigridSetup":
        return MultigridSetup(self.levels, replace(self.options, **kw))


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    final_residual: float
    status: str = "converged"
    preconditioned_history: list[float] | None = None

    def __post_init__(self):
        if not self.residual_history:
            raise ValueError("residual_history must be non-empty")


def _factor_coarse(matrix: np.ndarray):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            lu = sla.lu_factor(matrix)
    except (sla.LinAlgWarning, np.linalg.LinAlgError, ValueError) as exc:
        raise CoarseSolveFailure(f"coarse matrix is singular: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise CoarseSolveFailure("coarse matrix is singular")
    return lu


def estimate_lambda(
    laplace: np.ndarray,
    weak: WeakProductOperator,
    tol: float = 1e-6,
    max_iters: int = 200,
    safety: float = 1.05,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of ``Lambda A y = lam H y`` by power iteration, times ``safety``.

    The Rayleigh quotient ``(Ay)^t Lambda (Ay) / (Ay)^t H y`` is tracked
    until its relative change drops below ``tol``.
    """
    n = weak.n
    if laplace.shape != (n, n):
        raise DimensionMismatch("Laplace matrix does not match the weak operator")
    rng = np.random.default_rng(seed)
    # the top eigenvector is oscillatory; start near it
    y = (-1.0) ** np.arange(n) + 0.1 * rng.uniform(-1.0, 1.0, n)
    q_old = None
    q = np.nan
    for _ in range(max_iters):
        z = weak.matvec(y)
        w = laplace @ z
        q = float(z @ w) / float(z @ (weak.lengths * y))
        if q_old is not None and abs(q - q_old) <= tol * abs(q):
            return safety * q
        q_old = q
        y = w / weak.lengths
        y /= np.linalg.norm(y)
    warnings.warn(f"power iteration did not settle in {max_iters} steps", NoConvergence, stacklevel=2)
    return safety * q


def build_setup(
    hierarchy: MeshHierarchy,
    fine_matrix: np.ndarray,
    fine_laplace: np.ndarray,
    options: MultigridOptions = MultigridOptions(),
) -> MultigridSetup:
    """Build level operators from finest-level matrices.

    Coarse matrices are Galerkin restrictions ``C V C^t``; this equals the
    coarse-level assembly because every coarse basis function is the sum of
    its two children.
    """
    J = hierarchy.n_levels
    mats = [None] * J
    laps = [None] * J
    mats[-1], laps[-1] = fine_matrix, fine_laplace
    for k in range(J - 1, 0, -1):
        C = hierarchy.restriction(k)
        mats[k - 1] = C @ (C @ mats[k]).T
        mats[k - 1] = np.ascontiguousarray(mats[k - 1].T)
        laps[k - 1] = np.ascontiguousarray((C @ (C @ laps[k]).T).T)
    return setup_from_levels(hierarchy, mats, laps, options)


def setup_from_levels(hierarchy, matrices, laplaces, options=MultigridOptions()) -> MultigridSetup:
    levels = []
    for k in range(1, hierarchy.n_levels + 1):
        mesh = hierarchy.level(k)
        mat = np.asarray(matrices[k - 1])
        if mat.shape != (mesh.n_panels, mesh.n_panels):
            raise DimensionMismatch(f"level {k} matrix has shape {mat.shape}")
        weak = build_weak_operator(mesh)
        lap = laplaces[k - 1]
        lam = np.nan
        if options.lambda_strategy == "power":
            lam = estimate_lambda(lap, weak, options.power_tol, options.power_max_iters, options.safety)
        levels.append(
            LevelOperators(
                k=k,
                matrix=mat,
                weak=weak,
                laplace=lap,
                restriction=hierarchy.restriction(k - 1) if k > 1 else None,
                lam=lam,
                h=mesh.h,
                lu=_factor_coarse(mat) if k == 1 else None,
            )
        )
    return MultigridSetup(levels, options)


def build_helmholtz_setup(
    hierarchy: MeshHierarchy,
    kappa: float,
    options: MultigridOptions = MultigridOptions(),
    quad: QuadratureOptions = DEFAULT_QUADRATURE,
) -> MultigridSetup:
    fine = hierarchy.levels[-1]
    setup = build_setup(hierarchy, assemble_helmholtz(fine, kappa, quad), assemble_laplace(fine, quad), options)
    coarse_condition_check(setup.levels[0].matrix)
    return setup


def build_laplace_setup(
    hierarchy: MeshHierarchy,
    options: MultigridOptions = MultigridOptions(),
    quad: QuadratureOptions = DEFAULT_QUADRATURE,
) -> MultigridSetup:
    """Setup for the definite problem (``V`` replaced by the Laplace single layer)."""
    lap = assemble_laplace(hierarchy.levels[-1], quad)
    return build_setup(hierarchy, lap, lap, options)


def smooth(level: LevelOperators, s: np.ndarray, b: np.ndarray, options: MultigridOptions = MultigridOptions()):
    """One Richardson step ``s + lam^-1 H^-1 A^t (b - V s)``."""
    if s.shape[0] != level.n or b.shape[0] != level.n:
        raise DimensionMismatch(f"level {level.k} expects vectors of length {level.n}")
    r = b - level.matrix @ s
    at_r = level.weak.rmatvec(r)
    if options.lambda_strategy == "constant":
        return s + options.smoothing_constant * at_r
    lengths = level.weak.lengths.reshape((-1,) + (1,) * (at_r.ndim - 1))
    return s + at_r / (level.lam * lengths)


def vcycle(setup: MultigridSetup, k: int, s: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``Mg_k(s, b)`` with levels numbered from 1 (coarsest) to J."""
    if not 1 <= k <= setup.n_levels:
        raise ValueError(f"level {k} outside 1..{setup.n_levels}")
    lev = setup.levels[k - 1]
    b = np.asarray(b)
    if b.shape[0] != lev.n:
        raise DimensionMismatch(f"level {k} expects vectors of length {lev.n}")
    if k == 1:
        return sla.lu_solve(lev.lu, b)
    opts = setup.options
    s1 = smooth(lev, np.asarray(s), b, opts)
    C = lev.restriction
    corr = vcycle(setup, k - 1, np.zeros((C.shape[0],) + b.shape[1:], dtype=np.result_type(b, lev.matrix)), C @ (b - lev.matrix @ s1))
    out = s1 + C.T @ corr
    if opts.smoothing == "prepost":
        out = smooth(lev, out, b, opts)
    return out


def apply_preconditioner(setup: MultigridSetup, b: np.ndarray) -> np.ndarray:
    """``B_J b = Mg_J(0, b)``."""
    b = np.asarray(b)
    zero = np.zeros(b.shape, dtype=np.result_type(b, setup.finest.matrix))
    return vcycle(setup, setup.n_levels, zero, b)


def mg_solve(
    setup: MultigridSetup,
    b: np.ndarray,
    tol: float = 1e-6,
    max_iters: int = 100,
    divergence_factor: float = 1e3,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate ``x <- Mg_J(x, b)`` from zero until the relative residual is below ``tol``."""
    V = setup.finest.matrix
    b = np.asarray(b)
    x = np.zeros(b.shape, dtype=np.result_type(b, V))
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, SolveReport(0, [0.0], True, 0.0)
    history = [1.0]
    status = "max_iters"
    for it in range(1, max_iters + 1):
        x = vcycle(setup, setup.n_levels, x, b)
        res = float(np.linalg.norm(b - V @ x) / bnorm)
        history.append(res)
        if res <= tol:
            status = "converged"
            break
        if not np.isfinite(res) or res > divergence_factor * history[0]:
            status = "diverged"
            break
    report = SolveReport(len(history) - 1, history, status == "converged", history[-1], status)
    logger.debug("mg_solve: %s after %d iterations (res %.3e)", status, report.iterations, report.final_residual)
    return x, report
