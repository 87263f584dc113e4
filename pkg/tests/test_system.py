import numpy as np
import pytest

from sgswe import system
from sgswe.linalg import HyperbolicityError
from sgswe.pce import MeasureSpec, build_basis, galerkin_matrix, galerkin_product
from sgswe.system import pack

from conftest import random_primitives

G = 9.81
FD_STEP = 1e-6
FD_RTOL = 1e-5
N_STATES = 50


def fd_gradient(fun, U, step=FD_STEP):
    """Central differences of ``fun`` (scalar or array valued) with respect to the flat state."""
    flat = U.reshape(-1)
    cols = []
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        plus = np.asarray(fun((flat + e).reshape(U.shape)))
        minus = np.asarray(fun((flat - e).reshape(U.shape)))
        cols.append((plus - minus).reshape(-1) / (2 * step))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.fixture(scope="module")
def states():
    rng = np.random.default_rng(7)
    basis = build_basis(MeasureSpec.uniform(3))
    h, u, v = random_primitives(basis, rng, N_STATES)
    B = 0.2 * rng.standard_normal(h.shape)
    U = pack(h, galerkin_product(basis, h, u), galerkin_product(basis, h, v))
    return basis, U, B


def energy(basis, B):
    return lambda U: system.entropy_quantities(basis, U, B, G).E


class TestEntropyPair:
    def test_entropy_variable_is_energy_gradient(self, states):
        basis, U, B = states
        for n in range(N_STATES):
            V = system.entropy_quantities(basis, U[n], B[n], G).V.reshape(-1)
            fd = fd_gradient(energy(basis, B[n]), U[n])[0]
            assert rel_err(V, fd) <= FD_RTOL

    @pytest.mark.parametrize("direction", ["x", "y"])
    def test_jacobian_matches_fd_of_flux(self, states, direction):
        basis, U, _ = states
        flux = system.exact_flux_x if direction == "x" else system.exact_flux_y
        for n in range(N_STATES):
            vel = system.velocities(basis, U[n])
            J = system.flux_jacobian(basis, U[n, 0], vel.u, vel.v, G, direction)
            fd = fd_gradient(lambda W: flux(basis, W, G), U[n])
            assert rel_err(J, fd) <= FD_RTOL

    @pytest.mark.parametrize("direction", ["x", "y"])
    def test_compatibility(self, states, direction):
        basis, U, B = states
        attr = "Hflux" if direction == "x" else "Kflux"
        for n in range(N_STATES):
            eq = system.entropy_quantities(basis, U[n], B[n], G)
            vel = system.velocities(basis, U[n])
            J = system.flux_jacobian(basis, U[n, 0], vel.u, vel.v, G, direction)
            lhs = eq.V.reshape(-1) @ J
            fd = fd_gradient(lambda W: getattr(system.entropy_quantities(basis, W, B[n], G), attr), U[n])[0]
            assert rel_err(lhs, fd) <= FD_RTOL

    def test_energy_hessian_positive(self, states):
        basis, U, B = states
        for n in range(N_STATES):
            Hs = fd_gradient(lambda W: fd_gradient(energy(basis, B[n]), W, 1e-4)[0], U[n], 1e-4)
            Hs = 0.5 * (Hs + Hs.T)
            assert np.linalg.eigvalsh(Hs)[0] >= -1e-6

    def test_velocity_gradient(self, states):
        basis, U, _ = states
        for n in range(N_STATES):
            vel = system.velocities(basis, U[n])
            inv = np.linalg.inv(galerkin_matrix(basis, U[n, 0]))
            fd = fd_gradient(lambda W: system.velocities(basis, W).u, U[n])
            K = basis.size
            analytic = np.concatenate([-inv @ galerkin_matrix(basis, vel.u), inv, np.zeros((K, K))], axis=1)
            assert rel_err(analytic, fd) <= FD_RTOL

    def test_potential_identities(self, states):
        basis, U, B = states
        eq = system.entropy_quantities(basis, U, B, G)
        V = eq.V.reshape(N_STATES, -1)
        F = system.exact_flux_x(basis, U, G).reshape(N_STATES, -1)
        Gf = system.exact_flux_y(basis, U, G).reshape(N_STATES, -1)
        assert np.allclose(eq.Psi, np.einsum("ni,ni->n", V, F) - eq.Hflux, rtol=0, atol=1e-12)
        assert np.allclose(eq.Phi, np.einsum("ni,ni->n", V, Gf) - eq.Kflux, rtol=0, atol=1e-12)


@pytest.fixture(scope="module")
def data():
    """100 random deterministic states with random gravity."""
    rng = np.random.default_rng(11)
    n = 100
    h = 0.2 + 2 * rng.random(n)
    u, v, B = rng.standard_normal((3, n))
    g = 0.5 + 10 * rng.random(n)
    return build_basis(MeasureSpec.uniform(1)), h, u, v, B, g


class TestDeterministicReduction:
    def test_fluxes(self, data):
        b, h, u, v, B, g = data
        U = pack(h[:, None], (h * u)[:, None], (h * v)[:, None])
        for i in range(len(h)):
            F = system.exact_flux_x(b, U[i], g[i])[:, 0]
            Gf = system.exact_flux_y(b, U[i], g[i])[:, 0]
            hu, hv = h[i] * u[i], h[i] * v[i]
            p = 0.5 * g[i] * h[i] ** 2
            assert np.allclose(F, [hu, hu * u[i] + p, hu * v[i]], rtol=1e-12, atol=1e-12)
            assert np.allclose(Gf, [hv, hv * u[i], hv * v[i] + p], rtol=1e-12, atol=1e-12)

    def test_energy_pair(self, data):
        b, h, u, v, B, g = data
        U = pack(h[:, None], (h * u)[:, None], (h * v)[:, None])
        for i in range(len(h)):
            eq = system.entropy_quantities(b, U[i], B[i:i + 1], g[i])
            kin = 0.5 * h[i] * (u[i] ** 2 + v[i] ** 2)
            E = kin + 0.5 * g[i] * h[i] ** 2 + g[i] * h[i] * B[i]
            H = kin * u[i] + g[i] * h[i] * u[i] * (h[i] + B[i])
            K = kin * v[i] + g[i] * h[i] * v[i] * (h[i] + B[i])
            V = [g[i] * (h[i] + B[i]) - 0.5 * (u[i] ** 2 + v[i] ** 2), u[i], v[i]]
            assert np.allclose([eq.E, eq.Hflux, eq.Kflux], [E, H, K], rtol=1e-12, atol=1e-12)
            assert np.allclose(eq.V[:, 0], V, rtol=1e-12, atol=1e-12)
            assert eq.Psi == pytest.approx(0.5 * g[i] * u[i] * h[i] ** 2, rel=1e-12)


class TestExamples:
    b1 = build_basis(MeasureSpec.uniform(1))

    def test_fluxes(self):
        U = pack([1.0], [0.3], [0.0])
        assert np.allclose(system.exact_flux_x(self.b1, U, 1.0).ravel(), [0.3, 0.59, 0.0])
        assert np.allclose(system.exact_flux_y(self.b1, U, 1.0).ravel(), [0.0, 0.0, 0.5])

    def test_still_water_flux(self, basis4):
        h = np.array([1.0, 0.1, 0.05, 0.0])
        F = system.exact_flux_x(basis4, pack(h, 0 * h, 0 * h), G)
        assert np.allclose(F[0], 0) and np.allclose(F[2], 0)
        assert np.allclose(F[1], 0.5 * G * galerkin_product(basis4, h, h))

    def test_jacobian(self):
        J = system.flux_jacobian(self.b1, [1.0], [0.3], [0.0], 1.0, "x")
        assert np.allclose(J, [[0, 1, 0], [1 - 0.09, 0.6, 0], [0, 0, 0.3]], atol=1e-15)

    def test_energy(self):
        eq = system.entropy_quantities(self.b1, pack([1.0], [0.3], [0.0]), [0.0], 1.0)
        assert eq.E == pytest.approx(0.545)
        assert eq.Hflux == pytest.approx(0.3135)

    def test_still_water_entropy(self, basis4):
        h = np.eye(4)[0]
        eq = system.entropy_quantities(basis4, pack(h, 0 * h, 0 * h), np.zeros(4), 1.0)
        assert eq.E == pytest.approx(0.5)
        assert np.allclose(eq.V, pack(h, 0 * h, 0 * h))
        assert eq.Psi == 0 and eq.Phi == 0

    def test_source(self, basis4):
        U = pack([2.0], [0.0], [0.0])
        assert np.allclose(system.source(self.b1, U, [0.5], [0.0], 1.0).ravel(), [0, -1, 0])
        h = np.array([1.0, 0.2, 0.0, 0.1])
        Bx = np.array([0.3, -0.1, 0.05, 0.0])
        S1 = system.source(basis4, pack(h, 0 * h, 0 * h), Bx, 0 * Bx, G)
        S2 = system.source(basis4, pack(2 * h, 0 * h, 0 * h), Bx, 0 * Bx, G)
        assert np.allclose(S2, 2 * S1)
        assert np.allclose(system.source(basis4, pack(h, h, h), 0 * h, 0 * h, G), 0)


class TestVelocities:
    def test_exact_solve_when_well_conditioned(self, basis4, rng):
        h, u, v = random_primitives(basis4, rng, 20)
        U = pack(h, galerkin_product(basis4, h, u), galerkin_product(basis4, h, v))
        vel = system.velocities(basis4, U)
        assert not vel.any_desingularized
        assert np.allclose(vel.u, u, atol=1e-10) and np.allclose(vel.v, v, atol=1e-10)
        assert np.array_equal(vel.qx, U[..., 1, :])

    def test_zero_discharge(self, basis4):
        h = np.array([1.0, 0.3, 0.0, 0.0])
        vel = system.velocities(basis4, pack(h, 0 * h, 0 * h))
        assert np.all(vel.u == 0) and np.all(vel.qx == 0)

    def test_regularized_eigenvalue(self):
        b = build_basis(MeasureSpec.uniform(1))
        eps = 1e-3
        inv, mask = system.desingularized_inverse(b, [eps / 2], eps)
        assert mask.item()
        assert 1 / inv.item() == pytest.approx(np.sqrt(17) / (2 * np.sqrt(2)) * eps, rel=1e-12)

    def test_batch_regime_does_not_change_results(self, basis4, rng):
        # a single small height sends the whole batch down the eigen path
        h, _, _ = random_primitives(basis4, rng, 6)
        alone, _ = system.desingularized_inverse(basis4, h)
        mixed, mask = system.desingularized_inverse(basis4, np.vstack([h, [1e-7, 0, 0, 0]]))
        assert mask.tolist() == [False] * 6 + [True]
        assert np.allclose(mixed[:6], alone, rtol=1e-10, atol=0)

    def test_corrected_discharge_consistent(self):
        b = build_basis(MeasureSpec.uniform(1))
        vel = system.velocities(b, pack([5e-7], [1e-7], [0.0]))
        assert vel.any_desingularized
        assert np.allclose(vel.qx, galerkin_product(b, [5e-7], vel.u))

    def test_non_positive_height_raises(self):
        b = build_basis(MeasureSpec.uniform(1))
        with pytest.raises(HyperbolicityError):
            system.velocities(b, pack([-1.0], [0.0], [0.0]))


class TestEigensystem:
    @pytest.mark.parametrize("direction", ["x", "y"])
    @pytest.mark.parametrize("scaling", ["unit", "entropy"])
    def test_diagonalizes_jacobian(self, basis4, rng, direction, scaling):
        h, u, v = random_primitives(basis4, rng, 25)
        A = system.flux_jacobian(basis4, h, u, v, G, direction)
        e = system.flux_eigensystem(basis4, h, u, v, G, direction, scaling)
        res = A @ e.T - e.T * e.lam[..., None, :]
        assert np.max(np.abs(res)) <= 1e-8 * np.max(np.abs(A))

    def test_entropy_scaling_symmetrizes(self, basis4, rng):
        h, u, v = random_primitives(basis4, rng, 5)
        B = np.zeros_like(h)
        for n in range(5):
            U = pack(h[n], galerkin_product(basis4, h[n], u[n]), galerkin_product(basis4, h[n], v[n]))
            e = system.flux_eigensystem(basis4, h[n], u[n], v[n], G, "x", "entropy")
            dVdU = fd_gradient(lambda W: system.entropy_quantities(basis4, W, B[n], G).V, U)
            assert rel_err(e.T @ e.T.T, np.linalg.inv(dVdU)) <= 1e-6

    def test_symmetrizer_inverts_entropy_jacobian(self, basis4, rng):
        h, u, v = random_primitives(basis4, rng, 5)
        B = np.zeros_like(h)
        A0 = system.entropy_symmetrizer(basis4, h, u, v, G)
        assert np.array_equal(A0, np.swapaxes(A0, -1, -2))
        assert np.all(np.linalg.eigvalsh(A0) > 0)
        for n in range(5):
            U = pack(h[n], galerkin_product(basis4, h[n], u[n]), galerkin_product(basis4, h[n], v[n]))
            dVdU = fd_gradient(lambda W: system.entropy_quantities(basis4, W, B[n], G).V, U)
            assert rel_err(A0[n] @ dVdU, np.eye(12)) <= 1e-6

    def test_deterministic_eigenvalues(self):
        b = build_basis(MeasureSpec.uniform(1))
        e = system.flux_eigensystem(b, [1.0], [0.3], [0.0], 1.0, "x")
        assert np.allclose(e.lam, [-0.7, 0.3, 1.3])

    def test_not_positive_definite(self, basis4):
        with pytest.raises(HyperbolicityError):
            system.flux_eigensystem(basis4, np.array([-1.0, 0, 0, 0]), np.zeros(4), np.zeros(4), G)


@pytest.mark.parametrize("bad", ["z", "n"])
def test_direction_validated(basis4, bad):
    h = np.eye(4)[0]
    with pytest.raises(ValueError):
        system.flux_from_primitives(basis4, h, h, h, G, bad)
