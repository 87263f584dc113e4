import numpy as np
import pytest

from sgswe.mesh import GHOST, BcSpec, Mesh, StateField, apply_bc, pad


def numbered(Mx, My):
    return np.arange(Mx * My, dtype=float).reshape(Mx, My) + 1.0


def test_mesh_geometry():
    m = Mesh(4, 2, (0.0, 2.0), (-1.0, 1.0))
    assert (m.dx, m.dy) == (0.5, 1.0)
    x, y = m.centers()
    assert np.allclose(x[:, 0], [0.25, 0.75, 1.25, 1.75]) and np.allclose(y[0], [-0.5, 0.5])
    assert m.padded_shape == (8, 6)


@pytest.mark.parametrize("kw", [dict(Mx=0, My=3), dict(Mx=3, My=3, x_range=(1.0, 1.0))])
def test_mesh_rejects(kw):
    with pytest.raises(ValueError):
        Mesh(**kw)


def test_bc_rejects_unknown_kind():
    with pytest.raises(ValueError):
        BcSpec("reflective", "outflow", "periodic", "periodic")


def test_periodic_wrap():
    a = pad(numbered(5, 4), BcSpec.all_periodic())
    g = GHOST
    assert np.array_equal(a[g - 1, g:-g], a[g + 4, g:-g])  # ghost 0 = cell M
    assert np.array_equal(a[g - 2, g:-g], a[g + 3, g:-g])
    assert np.array_equal(a[-1, g:-g], a[g + 1, g:-g])
    assert np.array_equal(a[g:-g, g - 1], a[g:-g, g + 3])


def test_outflow_copies_edge_cell():
    a = pad(numbered(5, 4), BcSpec("outflow", "outflow", "outflow", "outflow"))
    g = GHOST
    assert np.array_equal(a[0, g:-g], a[g, g:-g]) and np.array_equal(a[1, g:-g], a[g, g:-g])
    assert np.array_equal(a[-1, g:-g], a[-g - 1, g:-g])
    assert np.array_equal(a[g:-g, 0], a[g:-g, g])


def test_narrow_periodic_direction():
    a = pad(numbered(3, 1), BcSpec("outflow", "outflow", "periodic", "periodic"))
    assert np.all(a[GHOST:-GHOST] == a[GHOST:-GHOST, GHOST:GHOST + 1])


@pytest.mark.parametrize("bc", [BcSpec.all_periodic(), BcSpec(), BcSpec("outflow", "outflow", "periodic", "periodic")])
def test_constant_field_ghosts(bc):
    m = Mesh(3, 4)
    U = np.full((3, 4, 3, 2), 0.7)
    f = apply_bc(StateField.from_interior(m, U, np.full((3, 4, 2), 0.1), bc))
    assert np.all(f.U == 0.7) and np.all(f.B == 0.1)


def test_with_interior_refills():
    m = Mesh(3, 3)
    f = StateField.from_interior(m, np.zeros((3, 3, 3, 1)), np.zeros((3, 3, 1)), BcSpec.all_periodic())
    U = np.zeros((3, 3, 3, 1))
    U[-1, 0] = 5.0
    f2 = f.with_interior(U)
    assert f2.U[GHOST - 1, GHOST, 0, 0] == 5.0
    assert np.all(f.U == 0)


def test_from_interior_shape_mismatch():
    with pytest.raises(ValueError):
        StateField.from_interior(Mesh(3, 3), np.zeros((2, 3, 3, 1)), np.zeros((3, 3, 1)), BcSpec())
