import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slmg.errors import DimensionMismatch, Stagnation
from slmg.geometry import build_hierarchy, build_polygon
from slmg.krylov import KrylovOptions, gmres, mg_gmres
from slmg.multigrid import build_helmholtz_setup


@pytest.fixture(scope="module")
def setup():
    hier = build_hierarchy(build_polygon([(0, 0), (0.5, 0), (0.5, 0.5), (0, 0.5)]), 2, 4)
    return build_helmholtz_setup(hier, 2.1)


def test_options_validation():
    with pytest.raises(ValueError):
        KrylovOptions(tol=0)
    with pytest.raises(ValueError):
        KrylovOptions(max_iters=0)
    with pytest.raises(ValueError):
        KrylovOptions(preconditioner="ilu")


def test_identity_converges_in_one_step():
    b = np.arange(1.0, 6.0) + 1j
    x, rep = gmres(lambda v: v, b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(x, b, rtol=1e-14)


def test_zero_rhs():
    x, rep = gmres(lambda v: v, np.zeros(4))
    assert rep.iterations == 0 and rep.converged and not np.any(x)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31))
def test_solves_random_nonsymmetric_system(n, seed):
    rng = np.random.default_rng(seed)
    M = np.eye(n) * n + rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x, rep = gmres(lambda v: M @ v, b, options=KrylovOptions(tol=1e-10))
    assert rep.converged and rep.iterations <= n
    assert np.linalg.norm(b - M @ x) <= 1e-10 * np.linalg.norm(b)


def test_preconditioned_history_monotone(setup):
    V = setup.finest.matrix
    b = np.random.default_rng(0).standard_normal(V.shape[0]).astype(complex)
    _, rep = mg_gmres(setup, b, KrylovOptions(tol=1e-10, preconditioner="multigrid"))
    h = np.array(rep.preconditioned_history)
    assert np.all(np.diff(h) <= 1e-14)
    assert rep.converged and rep.final_residual <= 1e-10


def test_multigrid_preconditioning_helps(setup):
    V = setup.finest.matrix
    b = np.random.default_rng(1).standard_normal(V.shape[0]).astype(complex)
    _, plain = mg_gmres(setup, b, KrylovOptions(tol=1e-9))
    _, pre = mg_gmres(setup, b, KrylovOptions(tol=1e-9, preconditioner="multigrid"))
    assert pre.converged and plain.converged
    assert pre.iterations < plain.iterations


def test_max_iters_reported():
    M = np.diag(np.arange(1.0, 41.0))
    _, rep = gmres(lambda v: M @ v, np.ones(40), options=KrylovOptions(tol=1e-14, max_iters=3))
    assert rep.iterations == 3 and not rep.converged and rep.status == "max_iters"


def test_breakdown_without_convergence():
    # B V is singular: Krylov space closes before the residual vanishes
    with pytest.raises(Stagnation):
        gmres(lambda v: v, np.array([1.0, 1.0]), apply_B=lambda v: np.array([v[0], 0.0]))


def test_preconditioner_shape_check():
    with pytest.raises(DimensionMismatch):
        gmres(lambda v: v, np.ones(3), apply_B=lambda v: v[:2])
