"""Test problems, field evaluation and iteration-count sweeps."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from slmg.assembly import DEFAULT_QUADRATURE, QuadratureOptions, assemble_double_layer, assemble_helmholtz, assemble_laplace
from slmg.errors import BemError, EvaluationFailure, PointInside, PointTooClose, SourceOnBoundary, SourceOutside
from slmg.geometry import MeshHierarchy, MeshLevel, PolygonBoundary, build_hierarchy, build_polygon
from slmg.krylov import KrylovOptions, gmres
from slmg.quadrature import gauss_rule
from slmg.multigrid import MultigridOptions, MultigridSetup, SolveReport, apply_preconditioner, build_setup, mg_solve
from slmg.specfun import hankel0, hankel1

logger = logging.getLogger(__name__)

RHS_ORDER = 16


# -- boundary data -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryData:
    kind: str  # "point_source", "plane_wave" or "custom"
    kappa: float
    evaluate: Callable[[np.ndarray], np.ndarray]
    source: np.ndarray | None = None
    direction: np.ndarray | None = None

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))


def fundamental_solution(x, y, kappa: float) -> np.ndarray:
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    return 0.25j * hankel0(kappa * r)


def point_source_trace(boundary: PolygonBoundary, source, kappa: float, min_distance: float = 1e-6) -> BoundaryData:
    """Dirichlet data ``g(x) = (i/4) H0(kappa |x - x*|)`` of a source inside the obstacle."""
    src = np.asarray(source, dtype=float)
    if boundary.distance(src[None])[0] <= min_distance:
        raise SourceOnBoundary(f"source {src} lies on the boundary")
    if not boundary.contains(src[None])[0]:
        raise SourceOutside(f"source {src} is not inside the obstacle")
    return BoundaryData("point_source", kappa, lambda x: fundamental_solution(x, src, kappa), source=src)


def plane_wave_trace(direction, kappa: float) -> BoundaryData:
    """Sound-soft scattered-field data ``g(x) = -exp(i kappa d.x)``."""
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return BoundaryData("plane_wave", kappa, lambda x: -np.exp(1j * kappa * (x @ d)), direction=d)


def panel_integrals(mesh: MeshLevel, g: Callable, order: int = RHS_ORDER) -> np.ndarray:
    """``int_{tau_i} g ds`` for every panel."""
    pts, wts = mesh.quadrature(order)
    vals = np.asarray(g(pts))
    if not np.all(np.isfinite(vals)):
        raise EvaluationFailure("boundary data returned non-finite values")
    return np.sum(vals * wts, axis=1)


def assemble_rhs(mesh: MeshLevel, g: Callable, formulation: str = "indirect", double_layer: np.ndarray | None = None,
                 quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """Load vector for ``V sigma = f``.

    ``indirect``: ``f = g``.  ``direct``: ``f = (K - I/2) g`` with ``g``
    replaced by its panel averages; the density is then the normal
    derivative of the exterior solution.
    """
    gi = panel_integrals(mesh, g)
    if formulation == "indirect":
        return gi
    if formulation != "direct":
        raise ValueError(f"unknown formulation {formulation!r}")
    kappa = getattr(g, "kappa", None)
    if double_layer is None:
        if kappa is None:
            raise ValueError("direct formulation needs BoundaryData or an assembled double layer")
        double_layer = assemble_double_layer(mesh, kappa, quad)
    gbar = gi / mesh.lengths
    return double_layer @ gbar - 0.5 * gi


def _near_rule(mesh: MeshLevel, points: np.ndarray, order: int, pieces: int):
    """Per-panel Gauss rule; panels within three lengths of a target are split into ``pieces``."""
    rule = gauss_rule(order)
    dist = np.min(np.linalg.norm(points[:, None, :] - mesh.midpoints[None], axis=-1), axis=0)
    near = dist < 3.0 * mesh.lengths
    k = pieces if near.any() else 1
    t = np.concatenate([(j + 0.5 * (rule.nodes + 1.0)) / k for j in range(k)])
    w = np.concatenate([0.5 * rule.weights / k] * k)
    fine_pts = mesh.starts[:, None, :] + t[None, :, None] * (mesh.ends - mesh.starts)[:, None, :]
    fine_wts = w[None, :] * mesh.lengths[:, None]
    if k == 1:
        return fine_pts, fine_wts
    pts, wts = mesh.quadrature(order)
    pts = np.concatenate([pts] + [pts] * (k - 1), axis=1)
    wts = np.concatenate([wts] + [np.zeros_like(wts)] * (k - 1), axis=1)
    pts[near], wts[near] = fine_pts[near], fine_wts[near]
    return pts, wts


def evaluate_field(mesh: MeshLevel, sigma: np.ndarray, points, kappa: float, g: Callable | None = None,
                   formulation: str = "indirect", order: int = 16, check: bool = True) -> np.ndarray:
    """Scattered field at exterior points.

    ``indirect``: ``u = S sigma``.  ``direct``: ``u = D g - S sigma`` with
    ``D`` the double-layer potential (normals point out of the obstacle).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sigma = np.asarray(sigma)
    if sigma.shape != (mesh.n_panels,):
        raise ValueError("density does not match the mesh")
    if check:
        if np.any(mesh.boundary.contains(points)):
            raise PointInside("evaluation point inside the obstacle")
        if np.any(mesh.boundary.distance(points) <= mesh.h):
            raise PointTooClose("evaluation point within one panel length of the boundary")
    if formulation not in ("direct", "indirect"):
        raise ValueError(f"unknown formulation {formulation!r}")
    pts, wts = _near_rule(mesh, points, order, 4)
    out = np.empty(len(points), dtype=complex)
    nrm = mesh.normals
    gy = g(pts) if formulation == "direct" else None
    for p, x in enumerate(points):
        d = x - pts  # (N, q, 2)
        r = np.linalg.norm(d, axis=-1)
        u = np.sum(0.25j * hankel0(kappa * r) * wts * sigma[:, None])
        if formulation == "direct":
            u = -u
            dn = np.sum(d * nrm[:, None, :], axis=-1)
            u += np.sum(0.25j * kappa * hankel1(kappa * r) * dn / r * gy * wts)
        out[p] = u
    return out


# -- geometry registry ---------------------------------------------------------


@dataclass(frozen=True)
class GeometrySpec:
    name: str
    vertices: tuple
    source_offset: tuple = (0.0, 0.0)  # relative to the centroid

    def polygon(self) -> PolygonBoundary:
        return build_polygon(self.vertices)

    def divisions(self, H: float) -> np.ndarray:
        """Panels per edge for coarse mesh size ``H`` (at least one)."""
        lengths = self.polygon().edge_lengths
        return np.maximum(1, np.round(lengths / H)).astype(int)

    def default_source(self) -> np.ndarray:
        return self.polygon().centroid + np.asarray(self.source_offset)


_S3 = np.sqrt(3.0)
GEOMETRIES = {
    "square": GeometrySpec("square", ((0, 0), (2, 0), (2, 2), (0, 2))),
    "rectangle": GeometrySpec("rectangle", ((0, 0), (2, 0), (2, 0.5), (0, 0.5)), (-0.3, -0.05)),
    "triangle": GeometrySpec("triangle", ((0, 0), (1, 0), (0.5, _S3 / 2)), (-0.15, -0.1)),
    "wedge": GeometrySpec("wedge", ((0, 0), (1 / 3, _S3 / 3), (0, 1 / 15))),
    "small_square": GeometrySpec("small_square", ((0, 0), (0.5, 0), (0.5, 0.5), (0, 0.5))),
}


def get_geometry(name_or_vertices) -> GeometrySpec:
    if isinstance(name_or_vertices, GeometrySpec):
        return name_or_vertices
    if isinstance(name_or_vertices, str):
        try:
            return GEOMETRIES[name_or_vertices]
        except KeyError:
            raise ValueError(f"unknown geometry {name_or_vertices!r}; known: {sorted(GEOMETRIES)}") from None
    return GeometrySpec("custom", tuple(tuple(map(float, v)) for v in name_or_vertices))


def levels_between(H: float, h: float) -> int:
    """``J`` with ``h = H / 2^(J-1)``."""
    ratio = H / h
    J = int(round(np.log2(ratio))) + 1
    if J < 1 or abs(2.0 ** (J - 1) - ratio) > 1e-9 * ratio:
        raise ValueError(f"h={h} is not H={H} divided by a power of two")
    return J


# -- experiments ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    geometry: object = "square"
    kappa: float = 2.1
    H: float = 0.5
    h: float = 1 / 32
    solver: str = "mg"  # "mg", "gmres" or "mg-gmres"
    smoothing: str = "pre"
    tol: float = 1e-6
    max_iters: int = 200
    formulation: str = "indirect"
    problem: str = "point_source"  # or "plane_wave"
    source: tuple | None = None
    direction: tuple = (1.0, 0.0)
    lambda_strategy: str = "power"
    smoothing_constant: float | None = None

    def __post_init__(self):
        if self.solver not in ("mg", "gmres", "mg-gmres"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.problem not in ("point_source", "plane_wave"):
            raise ValueError(f"unknown problem {self.problem!r}")
        self.n_levels  # validates H / h

    @property
    def n_levels(self) -> int:
        return levels_between(self.H, self.h)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        data = dict(data)
        for key in ("source", "direction"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.geometry, GeometrySpec):
            d["geometry"] = [list(v) for v in self.geometry.vertices]
        return d

    def multigrid_options(self) -> MultigridOptions:
        return MultigridOptions(smoothing=self.smoothing, lambda_strategy=self.lambda_strategy,
                                smoothing_constant=self.smoothing_constant)


def boundary_data(config: ExperimentConfig) -> BoundaryData:
    geo = get_geometry(config.geometry)
    if config.problem == "plane_wave":
        return plane_wave_trace(config.direction, config.kappa)
    src = geo.default_source() if config.source is None else np.asarray(config.source, float)
    return point_source_trace(geo.polygon(), src, config.kappa)


def build_hierarchy_for(config: ExperimentConfig) -> MeshHierarchy:
    geo = get_geometry(config.geometry)
    return build_hierarchy(geo.polygon(), geo.divisions(config.H), config.n_levels)


def build_problem_setup(hierarchy: MeshHierarchy, kappa: float, options: MultigridOptions = MultigridOptions(),
                        quad: QuadratureOptions = DEFAULT_QUADRATURE) -> MultigridSetup:
    fine = hierarchy.levels[-1]
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="boundary diameter")
        lap = assemble_laplace(fine, quad)
    return build_setup(hierarchy, assemble_helmholtz(fine, kappa, quad), lap, options)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    n_dof: int
    report: SolveReport
    solution: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def solve_system(setup: MultigridSetup, b: np.ndarray, solver: str, tol: float, max_iters: int):
    if solver == "mg":
        return mg_solve(setup, b, tol, max_iters)
    V = setup.finest.matrix
    prec = (lambda v: apply_preconditioner(setup, v)) if solver == "mg-gmres" else None
    return gmres(lambda v: V @ v, b, prec, KrylovOptions(tol=tol, max_iters=max_iters))


def run_experiment(config: ExperimentConfig, setup: MultigridSetup | None = None,
                   quad: QuadratureOptions = DEFAULT_QUADRATURE) -> ExperimentResult:
    """Assemble, solve and report one configuration."""
    hier = build_hierarchy_for(config)
    if setup is None:
        setup = build_problem_setup(hier, config.kappa, config.multigrid_options(), quad)
    fine = hier.levels[-1]
    g = boundary_data(config)
    b = assemble_rhs(fine, g, config.formulation, quad=quad)
    x, rep = solve_system(setup, b, config.solver, config.tol, config.max_iters)
    return ExperimentResult(config, fine.n_panels, rep, x, b)


# -- sweeps --------------------------------------------------------------------


@dataclass
class SweepTable:
    coarse: list[float]
    fine: list[float]
    dofs: list[int]
    cells: dict  # (h, H) -> iteration count or None (not converged)
    label: str = ""

    def cell_text(self, h, H) -> str:
        if (h, H) not in self.cells:
            return "-"
        v = self.cells[(h, H)]
        return "*" if v is None else str(v)

    def to_text(self, delimiter: str = "\t") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(["h\\H"] + [_frac(H) for H in self.coarse] + ["dof"])
        for h, n in zip(self.fine, self.dofs):
            w.writerow([_frac(h)] + [self.cell_text(h, H) for H in self.coarse] + [n])
        return buf.getvalue()


def _frac(x: float) -> str:
    if x >= 1:
        return f"{x:g}"
    inv = 1.0 / x
    return f"1/{int(round(inv))}" if abs(inv - round(inv)) < 1e-9 else f"{x:g}"


@dataclass(eq=False)
class PreparedSweep:
    """Hierarchy and level operators shared by every cell of a sweep."""

    geometry: GeometrySpec
    kappa: float
    hierarchy: MeshHierarchy
    setup: MultigridSetup
    H_max: float


def prepare_sweep(geometry, kappa: float, H_max: float, h_min: float, options: MultigridOptions = MultigridOptions(),
                  quad: QuadratureOptions = DEFAULT_QUADRATURE) -> PreparedSweep:
    geo = get_geometry(geometry)
    hier = build_hierarchy(geo.polygon(), geo.divisions(H_max), levels_between(H_max, h_min))
    return PreparedSweep(geo, kappa, hier, build_problem_setup(hier, kappa, options, quad), H_max)


def run_sweep(geometry, kappa: float, coarse: list[float], fine: list[float], solver: str = "mg",
              smoothing: str = "pre", tol: float = 1e-6, max_iters: int = 100, formulation: str = "indirect",
              source=None, quad: QuadratureOptions = DEFAULT_QUADRATURE,
              prepared: PreparedSweep | None = None, problem: str = "point_source",
              direction=(1.0, 0.0)) -> SweepTable:
    """Iteration counts for every cell with ``h < H``.

    One hierarchy from ``max(coarse)`` to ``min(fine)`` is assembled once
    (or taken from ``prepared``); each cell reuses its leading levels.
    Failures are recorded as ``*``.
    """
    coarse = sorted(coarse, reverse=True)
    fine = sorted(fine, reverse=True)
    if prepared is None:
        prepared = prepare_sweep(geometry, kappa, coarse[0], fine[-1], MultigridOptions(smoothing=smoothing), quad)
    elif coarse[0] > prepared.H_max or fine[-1] < prepared.hierarchy.levels[-1].h * (1 - 1e-12):
        raise ValueError("prepared hierarchy does not cover the requested mesh sizes")
    geo, hier = prepared.geometry, prepared.hierarchy
    setup = prepared.setup.with_options(smoothing=smoothing)
    src = geo.default_source() if source is None else np.asarray(source, float)
    if problem == "plane_wave":
        g = plane_wave_trace(direction, kappa)
    else:
        g = point_source_trace(geo.polygon(), src, kappa)
    cells = {}
    dofs = []
    for h in fine:
        jf = levels_between(prepared.H_max, h)
        mesh = hier.level(jf)
        dofs.append(mesh.n_panels)
        b = assemble_rhs(mesh, g, formulation, quad=quad)
        upto = MultigridSetup(setup.levels[:jf], setup.options)
        for H in coarse:
            if H <= h:
                continue
            try:
                sub = upto.coarsened(levels_between(H, h))
                _, rep = solve_system(sub, b, solver, tol, max_iters)
                cells[(h, H)] = rep.iterations if rep.converged else None
            except BemError as exc:
                logger.warning("cell h=%s H=%s failed: %s", h, H, exc)
                cells[(h, H)] = None
            logger.info("h=%s H=%s -> %s", _frac(h), _frac(H), cells[(h, H)])
    return SweepTable(coarse, fine, dofs, cells, label=f"{geo.name} kappa={kappa} {solver}/{smoothing}")
