"""Dense Galerkin matrices for piecewise-constant panels.

Entries are ``int_{tau_i} int_{tau_j} k(x, y) ds_y ds_x`` for the Laplace
single layer ``-ln|x-y| / (2 pi)``, the Helmholtz single layer
``(i/4) H_0(kappa |x-y|)`` and the Helmholtz double layer
``d/dn_y (i/4) H_0(kappa |x-y|)`` (``n`` the normal pointing out of the
obstacle).

Panel pairs are handled by class:

* same straight edge: the ``-ln r / (2 pi)`` part is integrated exactly and
  the smooth remainder by Gauss; the double layer vanishes identically;
* pairs meeting at a corner: tensor Gauss on geometrically graded pieces;
* close pairs on different edges: Gauss on subdivided panels;
* everything else: tensor Gauss, with a cheaper rule beyond ``far_ratio``
  panel lengths.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla

from slmg.errors import AssemblyFailure, DiameterWarning, GeometryError, IllConditioned, RadiusTooLarge
from slmg.geometry import MeshLevel
from slmg.quadrature import corner_pair_integral, gauss_rule, log_double_integral_1d, split_log_singularity
from slmg.specfun import EULER_GAMMA, hankel0, hankel1

logger = logging.getLogger(__name__)

INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class QuadratureOptions:
    """Panel-pair quadrature settings.

    ``order`` is used for pairs closer than ``far_ratio`` panel lengths,
    ``far_order`` beyond.  Pairs closer than ``near_ratio`` lengths on
    different edges are subdivided into ``near_pieces`` pieces each.
    """

    order: int = 8
    far_order: int = 4
    far_ratio: float = 6.0
    near_ratio: float = 0.5
    near_pieces: int = 4
    corner_depth: int = 12
    block_size: int = 64


DEFAULT_QUADRATURE = QuadratureOptions()


# -- kernels ---------------------------------------------------------------
# Each kernel is called as f(r, d, same, normal_y) with r = |x - y|, d = x - y,
# ``same`` flagging panel pairs on one straight edge (whose log part is added
# exactly afterwards) and ``normal_y`` the source-panel normal.


def laplace_kernel():
    def f(r, d, same, normal_y):
        val = -INV_2PI * np.log(np.where(r > 0, r, 1.0))
        return np.where(same, 0.0, val)

    return f


def _remainder(r, kappa, r_small):
    m0 = 0.25j - INV_2PI * (np.log(kappa / 2) + EULER_GAMMA)
    rs = np.where(r > r_small, r, 1.0)
    val = 0.25j * hankel0(kappa * rs) + INV_2PI * np.log(rs)
    return np.where(r > r_small, val, m0)


def helmholtz_kernel(kappa: float, r_small: float):
    def f(r, d, same, normal_y):
        rs = np.where(r > r_small, r, 1.0)
        full = 0.25j * hankel0(kappa * rs)
        if np.any(same):
            return np.where(same, _remainder(r, kappa, r_small), full)
        return full

    return f


def remainder_kernel(kappa: float, r_small: float):
    def f(r, d, same, normal_y):
        return _remainder(r, kappa, r_small) + np.zeros(np.shape(same))

    return f


def double_layer_kernel(kappa: float):
    def f(r, d, same, normal_y):
        rs = np.where(r > 0, r, 1.0)
        dn = np.sum(d * normal_y, axis=-1)
        val = 0.25j * kappa * hankel1(kappa * rs) * dn / rs
        return np.where(same | (r == 0), 0.0, val)

    return f


# -- generic assembly --------------------------------------------------------


def _require_polygon(mesh: MeshLevel):
    if mesh.kind != "polygon":
        raise GeometryError("this assembly routine needs a polygon mesh; use assemble_circle_laplace for circles")


def _subdivided_points(mesh: MeshLevel, idx, order, pieces):
    rule = gauss_rule(order)
    t = ((np.arange(pieces)[:, None] + 0.5 * (rule.nodes + 1)) / pieces).ravel()
    w = np.tile(rule.weights, pieces) / (2 * pieces)
    a, b = mesh.starts[idx], mesh.ends[idx]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return pts, w[None, :] * mesh.lengths[idx, None]


def _segment_gap(mesh: MeshLevel, i, j):
    """Distance between panels ``i`` and ``j`` (arrays of equal length)."""
    a0, a1 = mesh.starts[i], mesh.ends[i]
    b0, b1 = mesh.starts[j], mesh.ends[j]

    def pt_seg(p, s0, s1):
        d = s1 - s0
        t = np.clip(np.sum((p - s0) * d, axis=1) / np.sum(d * d, axis=1), 0, 1)
        return np.linalg.norm(p - (s0 + t[:, None] * d), axis=1)

    return np.min([pt_seg(a0, b0, b1), pt_seg(a1, b0, b1), pt_seg(b0, a0, a1), pt_seg(b1, a0, a1)], axis=0)


def _pair_values(mesh, kernel, i, j, pts, wts, same):
    xi, xj = pts[i], pts[j]
    d = xi[:, :, None, :] - xj[:, None, :, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    vals = kernel(r, d, same[:, None, None], mesh.normals[j][:, None, None, :])
    return np.einsum("pq,pqs,ps->p", wts[i], vals, wts[j])


def _galerkin_matrix(mesh: MeshLevel, kernel: Callable, symmetric: bool, quad: QuadratureOptions, dtype):
    n = mesh.n_panels
    out = np.zeros((n, n), dtype=dtype)
    mids, lengths, edges = mesh.midpoints, mesh.lengths, mesh.edge_ids
    normals = mesh.normals
    xf, wf = mesh.quadrature(quad.far_order)
    band_i, band_j = [], []

    for i0 in range(0, n, quad.block_size):
        i1 = min(n, i0 + quad.block_size)
        j0 = i0 if symmetric else 0
        xi = xf[i0:i1]
        xj = xf[j0:]
        d = xi[:, :, None, None, :] - xj[None, None, :, :, :]
        r = np.sqrt(np.sum(d * d, axis=-1))
        same = (edges[i0:i1, None] == edges[None, j0:])[:, None, :, None]
        vals = kernel(r, d, same, normals[None, None, j0:, None, :])
        block = np.einsum("iq,iqjp,jp->ij", wf[i0:i1], vals, wf[j0:], optimize=True)
        out[i0:i1, j0:] = block

        cd = np.linalg.norm(mids[i0:i1, None, :] - mids[None, j0:, :], axis=-1)
        half = 0.5 * (lengths[i0:i1, None] + lengths[None, j0:])
        lmax = np.maximum(lengths[i0:i1, None], lengths[None, j0:])
        bi, bj = np.nonzero(cd - half < quad.far_ratio * lmax)
        band_i.append(bi + i0)
        band_j.append(bj + j0)

    bi, bj = np.concatenate(band_i), np.concatenate(band_j)
    if symmetric:
        keep = bj >= bi
        bi, bj = bi[keep], bj[keep]
    same = edges[bi] == edges[bj]
    xn, wn = mesh.quadrature(quad.order)
    out[bi, bj] = _pair_values(mesh, kernel, bi, bj, xn, wn, same)

    # close pairs on different edges that do not touch
    nxt = (bi + 1) % n
    prv = (bi - 1) % n
    touching = (bj == bi) | (bj == nxt) | (bj == prv)
    cand = ~same & ~touching
    if np.any(cand):
        ci, cj = bi[cand], bj[cand]
        gap = _segment_gap(mesh, ci, cj)
        close = gap < quad.near_ratio * np.maximum(lengths[ci], lengths[cj])
        if np.any(close):
            ci, cj = ci[close], cj[close]
            idx = np.unique(np.concatenate([ci, cj]))
            pos = {k: m for m, k in enumerate(idx)}
            ps, ws = _subdivided_points(mesh, idx, quad.order, quad.near_pieces)
            li = np.array([pos[k] for k in ci])
            lj = np.array([pos[k] for k in cj])
            xi, xj = ps[li], ps[lj]
            d = xi[:, :, None, :] - xj[:, None, :, :]
            r = np.sqrt(np.sum(d * d, axis=-1))
            vals = kernel(r, d, np.zeros((len(ci), 1, 1), bool), normals[cj][:, None, None, :])
            out[ci, cj] = np.einsum("pq,pqs,ps->p", ws[li], vals, ws[lj])

    # corner pairs: consecutive panels on different edges
    for i in range(n):
        j = (i + 1) % n
        if edges[i] == edges[j]:
            continue
        for a, b in ((i, j), (j, i)):
            if symmetric and b < a:
                continue
            nb = normals[b]

            def k(x, y, nb=nb):
                d = x - y
                r = np.sqrt(np.sum(d * d, axis=-1))
                return kernel(r, d, np.zeros(np.shape(r), bool), nb)

            out[a, b] = corner_pair_integral(
                (mesh.starts[a], mesh.ends[a]), (mesh.starts[b], mesh.ends[b]), k,
                depth=quad.corner_depth, order=quad.order,
            )

    if symmetric:
        iu = np.triu_indices(n, 1)
        out[iu[1], iu[0]] = out[iu]
    if not np.all(np.isfinite(out)):
        raise AssemblyFailure("non-finite matrix entries")
    return out


def _same_edge_log(mesh: MeshLevel) -> np.ndarray:
    """``-1/(2 pi) int int ln|x-y|`` for all same-edge pairs (zero elsewhere)."""
    n = mesh.n_panels
    out = np.zeros((n, n))
    for e in np.unique(mesh.edge_ids):
        idx = np.nonzero(mesh.edge_ids == e)[0]
        a = mesh.starts[idx[0]]
        t = mesh.tangents[idx[0]]
        s0 = (mesh.starts[idx] - a) @ t
        s1 = (mesh.ends[idx] - a) @ t
        out[np.ix_(idx, idx)] = -INV_2PI * log_double_integral_1d(
            s0[:, None], s1[:, None], s0[None, :], s1[None, :]
        )
    return out


def _check_diameter(mesh: MeshLevel):
    if mesh.boundary.diameter >= 1.0:
        warnings.warn(
            f"boundary diameter {mesh.boundary.diameter:.3g} >= 1: Laplace single layer may be indefinite",
            DiameterWarning,
            stacklevel=3,
        )


def assemble_laplace(mesh: MeshLevel, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """Real symmetric Galerkin matrix of the Laplace single layer."""
    _require_polygon(mesh)
    _check_diameter(mesh)
    base = _galerkin_matrix(mesh, laplace_kernel(), True, quad, float)
    return base + _same_edge_log(mesh)


def assemble_helmholtz(mesh: MeshLevel, kappa: float, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """Complex symmetric Galerkin matrix of the Helmholtz single layer."""
    _require_polygon(mesh)
    if not kappa > 0:
        raise AssemblyFailure("wave number must be positive")
    kernel = helmholtz_kernel(kappa, 1e-6 * mesh.h)
    base = _galerkin_matrix(mesh, kernel, True, quad, complex)
    return base + _same_edge_log(mesh)


def assemble_remainder(mesh: MeshLevel, kappa: float, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """Galerkin matrix of the smooth kernel ``(i/4) H_0(kappa r) + ln(r) / (2 pi)``."""
    _require_polygon(mesh)
    return _galerkin_matrix(mesh, remainder_kernel(kappa, 1e-6 * mesh.h), True, quad, complex)


def assemble_double_layer(mesh: MeshLevel, kappa: float, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> np.ndarray:
    """Galerkin matrix ``K_ij = int_i int_j dPhi/dn_y``, zero on straight edges."""
    _require_polygon(mesh)
    if not kappa > 0:
        raise AssemblyFailure("wave number must be positive")
    return _galerkin_matrix(mesh, double_layer_kernel(kappa), False, quad, complex)


def assemble_circle_laplace(mesh: MeshLevel, order: int = 16) -> np.ndarray:
    """Laplace single layer on ``N`` equal arcs of a circle (symmetric Toeplitz).

    Uses ``-ln|x-y| = -(1/2) ln(2 R^2 (1 - cos(t)))`` with ``t`` the angle
    difference; the ``log(t^2)`` part of neighbouring and self pairs is
    integrated exactly.
    """
    if mesh.kind != "circle":
        raise GeometryError("assemble_circle_laplace needs a circle mesh")
    R = mesh.boundary.radius
    if R >= 0.5:
        raise RadiusTooLarge("circle radius must be < 1/2")
    n = mesh.n_panels
    dt = 2 * np.pi / n
    rule = gauss_rule(order)
    u = 0.5 * dt * (rule.nodes + 1)
    w = 0.5 * dt * rule.weights
    first = np.empty(n)
    # I_{0j}: theta_0 in [0, dt], theta_j in [j dt, (j+1) dt]; Toeplitz symmetric
    for j in range(n):
        jj = j if j <= n // 2 else j - n
        t = u[:, None] - (u[None, :] + jj * dt)
        if abs(jj) <= 1:
            fa = np.full(t.shape, -np.log(2.0))
            nz = t != 0
            fa[nz] = split_log_singularity(t[nz])[1]
            exact = 2 * float(log_double_integral_1d(0.0, dt, jj * dt, (jj + 1) * dt))
            integral = exact + w @ fa @ w
        else:
            integral = w @ np.log(1 - np.cos(t)) @ w
        first[j] = -(R * R / (4 * np.pi)) * (np.log(2 * R * R) * dt * dt + integral)
    return sla.toeplitz(first)


def coarse_condition_check(matrix: np.ndarray, threshold: float = 1e8) -> float:
    """Estimate the 1-norm condition number of a coarse matrix; warn when large."""
    lu, piv = sla.lu_factor(matrix)
    rcond = _rcond_from_lu(lu, piv, matrix)
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if cond > threshold:
        warnings.warn(
            f"coarse matrix condition estimate {cond:.3g}: kappa^2 may be close to an interior eigenvalue",
            IllConditioned,
            stacklevel=2,
        )
    return cond


def _rcond_from_lu(lu, piv, matrix):
    anorm = np.linalg.norm(matrix, 1)
    getri = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = getri(lu, anorm, norm="1")
    return float(rcond)


# -- binary matrix dump --------------------------------------------------------

MATRIX_MAGIC = b"BEMM"
MATRIX_KINDS = {"laplace": 1, "helmholtz": 2, "double_layer": 3, "remainder": 4}


def write_matrix(path, matrix: np.ndarray, kind: str) -> None:
    """Write ``matrix`` as magic, u32 N, u8 kind, then N^2 (re, im) float64 LE."""
    m = np.asarray(matrix)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    data = np.empty((n, n, 2), dtype="<f8")
    data[..., 0] = m.real
    data[..., 1] = m.imag if np.iscomplexobj(m) else 0.0
    with open(Path(path), "wb") as fh:
        fh.write(MATRIX_MAGIC + struct.pack("<IB", n, MATRIX_KINDS[kind]))
        fh.write(data.tobytes())


def read_matrix(path) -> tuple[np.ndarray, str]:
    raw = Path(path).read_bytes()
    if raw[:4] != MATRIX_MAGIC:
        raise ValueError("not a BEMM matrix file")
    n, code = struct.unpack("<IB", raw[4:9])
    kinds = {v: k for k, v in MATRIX_KINDS.items()}
    data = np.frombuffer(raw[9:], dtype="<f8")
    if data.size != 2 * n * n:
        raise ValueError("truncated matrix file")
    data = data.reshape(n, n, 2)
    return data[..., 0] + 1j * data[..., 1], kinds[code]
