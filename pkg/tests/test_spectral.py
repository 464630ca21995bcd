import numpy as np
import pytest
import scipy.sparse as sp

from oracles import dirichlet_levels_1d
from virtlevel.discretize import GridSpec, build_laplacian
from virtlevel.errors import DomainError
from virtlevel.spectral import (ComplementProjector, constrained_ground, counting_below, ground_state,
                                lowest_eigenpairs)


def test_laplacian_levels_match_closed_form():
    g = GridSpec.from_spacing(1, 10.0, 0.01)
    res = lowest_eigenpairs(build_laplacian(g), 5)
    ref = dirichlet_levels_1d(10.0, g.h, 5)
    assert np.allclose(res.eigenvalues, ref, rtol=1e-9)


@pytest.mark.parametrize("mode", ["shift_invert", "direct", "dense"])
def test_modes_agree_on_random_sparse(mode):
    rng = np.random.default_rng(3)
    A = sp.random(300, 300, density=0.02, random_state=4)
    A = (A + A.T + sp.diags(rng.uniform(1, 5, 300))).tocsr()
    ref = np.linalg.eigvalsh(A.toarray())[:3]
    res = lowest_eigenpairs(A, 3, mode=mode, tol=1e-9)
    assert np.allclose(res.eigenvalues, ref, atol=1e-7)


def test_counting_matches_dense_spectrum():
    rng = np.random.default_rng(5)
    A = sp.random(400, 400, density=0.01, random_state=6)
    A = (A + A.T + sp.diags(rng.normal(size=400))).tocsr()
    ev = np.linalg.eigvalsh(A.toarray())
    for z in (-1.0, 0.0, 0.7):
        assert counting_below(A, z) == int(np.sum(ev < z))


def test_counting_sparse_path_large():
    g = GridSpec.from_spacing(1, 40.0, 0.01)
    H = build_laplacian(g).matrix
    ref = dirichlet_levels_1d(40.0, g.h, 60)
    z = 0.5 * (ref[40] + ref[41])
    assert counting_below(H, z) == 41


def test_generalized_problem_with_diagonal_mass():
    rng = np.random.default_rng(7)
    A = sp.diags([-np.ones(199), 2 * np.ones(200), -np.ones(199)], [-1, 0, 1]).tocsr()
    w = rng.uniform(0.5, 2.0, 200)
    B = sp.diags(w).tocsr()
    from scipy.linalg import eigh

    ref = eigh(A.toarray(), np.diag(w), eigvals_only=True)[:2]
    res = lowest_eigenpairs(A, 2, B=B, tol=1e-9)
    assert np.allclose(res.eigenvalues, ref, rtol=1e-7)


def test_constrained_ground_gives_second_level():
    g = GridSpec.from_spacing(1, 5.0, 0.05)
    H = build_laplacian(g)
    res = lowest_eigenpairs(H, 2)
    P = ComplementProjector(res.eigenvectors[:, :1])
    value, _ = constrained_ground(H, P)
    assert np.isclose(value, res.eigenvalues[1], rtol=1e-8)


def test_non_projector_rejected():
    A = sp.identity(10, format="csr")
    with pytest.raises(DomainError):
        constrained_ground(A, 2.0 * np.eye(10))


def test_ground_state_sign_and_normalization():
    g = GridSpec.from_spacing(1, 5.0, 0.05)
    _, v = ground_state(build_laplacian(g))
    assert v[np.argmax(np.abs(v))] > 0
