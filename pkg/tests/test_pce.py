import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import roots_jacobi

from sgswe.pce import (MeasureSpec, build_basis, evaluate, galerkin_matrix, galerkin_product,
                       gauss_jacobi, mean_std, project, quadrature_size)

MEASURES = [
    MeasureSpec.uniform(1),
    MeasureSpec.uniform(3),
    MeasureSpec((2.0,), (0.5,), (6,)),
    MeasureSpec((-0.5,), (-0.5,), (5,)),
    MeasureSpec.uniform(3, dims=2),
    MeasureSpec((3.0, 0.0), (1.0, 0.0), (3, 3)),
    MeasureSpec((0.0, 1.5), (2.0, -0.3), (4, 2)),
]


@pytest.fixture(scope="module", params=MEASURES, ids=lambda m: f"a{m.alpha}b{m.beta}K{m.orders}")
def basis(request):
    return build_basis(request.param)


def test_gram_is_identity(basis):
    phi = basis.node_values
    gram = phi.T @ (basis.quad_weights[:, None] * phi)
    assert np.max(np.abs(gram - np.eye(basis.size))) <= 1e-12


def test_basis_invariants(basis):
    assert basis.index_set[0] == (0,) * basis.dims
    assert np.all(basis.node_values[:, 0] == 1.0)
    assert np.all(basis.quad_weights > 0)
    assert basis.quad_weights.sum() == pytest.approx(1.0, abs=1e-14)
    t = basis.triple
    for p in itertools.permutations(range(3)):
        assert np.max(np.abs(t - np.transpose(t, p))) <= 1e-12
    assert np.array_equal(t[:, 0, :], np.eye(basis.size))


def test_triple_matches_independent_quadrature(basis):
    # a finer rule per dimension gives an independent evaluation of the same integrals
    m = basis.measure
    rules = [gauss_jacobi(a, b, quadrature_size(k) + 4) for a, b, k in zip(m.alpha, m.beta, m.orders)]
    nodes = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1).reshape(-1, m.dims)
    weights = np.prod(np.stack(np.meshgrid(*[r[1] for r in rules], indexing="ij"), axis=-1), axis=-1).ravel()
    phi = basis.evaluate_basis(nodes)
    fine = np.einsum("n,nk,nl,nm->klm", weights, phi, phi, phi)
    assert np.max(np.abs(fine - basis.triple)) <= 1e-12


@pytest.mark.parametrize("alpha,beta,n", [(0.0, 0.0, 5), (2.0, 0.5, 7), (-0.5, 1.5, 4), (3.0, 1.0, 3)])
def test_gauss_jacobi_against_scipy(alpha, beta, n):
    x, w = gauss_jacobi(alpha, beta, n)
    xs, ws = roots_jacobi(n, alpha, beta)
    order = np.argsort(xs)
    assert np.allclose(np.sort(x), xs[order], atol=1e-13)
    assert np.allclose(w[np.argsort(x)], ws[order] / ws.sum(), atol=1e-13)


@pytest.mark.parametrize("K,expected", [(1, 2), (2, 3), (3, 5), (4, 6), (6, 9)])
def test_quadrature_size(K, expected):
    assert quadrature_size(K) == expected


def test_constant_basis():
    b = build_basis(MeasureSpec((0.7,), (1.2,), (1,)))
    assert b.triple.shape == (1, 1, 1) and b.triple[0, 0, 0] == 1.0
    assert np.allclose(galerkin_matrix(b, [2.5]), [[2.5]])


def test_legendre_k3_closed_forms():
    b = build_basis(MeasureSpec.uniform(3))
    xi = np.linspace(-1, 1, 7)
    phi = b.evaluate_basis(xi)
    assert np.allclose(phi[:, 1], np.sqrt(3) * xi, atol=1e-13)
    assert np.allclose(phi[:, 2], np.sqrt(5) / 2 * (3 * xi**2 - 1), atol=1e-13)
    assert b.triple[1, 1, 2] == pytest.approx(2 / np.sqrt(5), abs=1e-14)


def test_two_dim_index_order():
    b = build_basis(MeasureSpec.uniform(3, dims=2))
    assert b.size == 9
    assert b.index_set[:4] == ((0, 0), (1, 0), (2, 0), (0, 1))


def test_galerkin_matrix_k2():
    b = build_basis(MeasureSpec.uniform(2))
    assert np.allclose(galerkin_matrix(b, [0.7, -0.2]), [[0.7, -0.2], [-0.2, 0.7]], atol=1e-15)


def test_galerkin_matrix_identity_and_symmetry(basis):
    e1 = np.zeros(basis.size)
    e1[0] = 1
    assert np.array_equal(galerkin_matrix(basis, e1), np.eye(basis.size))
    z = np.random.default_rng(0).standard_normal((10, basis.size))
    P = galerkin_matrix(basis, z)
    assert np.max(np.abs(P - np.swapaxes(P, -1, -2))) <= 1e-15


def test_galerkin_matrix_rejects_wrong_length(basis):
    with pytest.raises(ValueError):
        galerkin_matrix(basis, np.ones(basis.size + 1))


def test_commutativity_200_cases(basis):
    rng = np.random.default_rng(1)
    a = rng.standard_normal((200, basis.size))
    b = rng.standard_normal((200, basis.size))
    assert np.max(np.abs(galerkin_product(basis, a, b) - galerkin_product(basis, b, a))) <= 1e-12
    lhs = np.einsum("nk,nk->n", b, galerkin_product(basis, a, np.ones_like(a)))
    rhs = np.einsum("nk,nk->n", a, galerkin_product(basis, b, np.ones_like(b)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_product_is_projection_of_pointwise_product(basis):
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, basis.size))
    pointwise = (basis.node_values @ a) * (basis.node_values @ b)
    direct = (basis.quad_weights * pointwise) @ basis.node_values
    assert np.allclose(galerkin_product(basis, a, b), direct, atol=1e-12)


def test_project_examples():
    b = build_basis(MeasureSpec.uniform(4))
    assert np.allclose(project(b, lambda xi: 2.0 + 0 * xi), [2, 0, 0, 0], atol=1e-14)
    z = project(b, lambda xi: 0.1 * (xi + 1))
    assert np.allclose(z, [0.1, 0.1 / np.sqrt(3), 0, 0], atol=1e-14)


def test_project_evaluate_roundtrip(basis):
    rng = np.random.default_rng(3)
    for k in range(basis.size):
        z = project(basis, lambda *xi, k=k: basis.evaluate_basis(np.stack(xi, -1))[..., k])
        assert np.allclose(z, np.eye(basis.size)[k], atol=1e-12)
    z = rng.standard_normal(basis.size)
    pts = rng.uniform(-1, 1, (20, basis.dims))
    again = project(basis, lambda *xi: evaluate(basis, z, np.stack(xi, -1)))
    assert np.allclose(again, z, atol=1e-12)
    assert evaluate(basis, np.eye(basis.size)[0] * 3.0, pts) == pytest.approx(3.0)


def test_evaluate_k2_endpoint():
    b = build_basis(MeasureSpec.uniform(2))
    assert evaluate(b, [0.0, 1.0], 1.0) == pytest.approx(np.sqrt(3), abs=1e-14)


@pytest.mark.parametrize("z,expected", [((3, 0, 0), (3, 0)), ((1, 0.3, 0.4), (1, 0.5)), ((0, 1), (0, 1))])
def test_mean_std(z, expected):
    assert mean_std(z) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("bad", [dict(alpha=(-1.0,), beta=(0.0,), orders=(2,)),
                                 dict(alpha=(0.0,), beta=(-2.0,), orders=(2,)),
                                 dict(alpha=(0.0,), beta=(0.0,), orders=(0,)),
                                 dict(alpha=(0.0, 0.0), beta=(0.0,), orders=(2, 2))])
def test_measure_rejects_invalid(bad):
    with pytest.raises(ValueError):
        MeasureSpec(**bad)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 4.0), st.floats(-0.9, 4.0), st.integers(1, 6))
def test_orthonormality_any_beta_measure(alpha, beta, K):
    b = build_basis(MeasureSpec((alpha,), (beta,), (K,)))
    phi = b.node_values
    assert np.max(np.abs(phi.T @ (b.quad_weights[:, None] * phi) - np.eye(K))) <= 1e-12
