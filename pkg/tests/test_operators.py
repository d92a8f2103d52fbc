import numpy as np
import pytest

from qttmg.core import TruncationPolicy, apply, constant, mpo_to_dense, mpo_truncate, mpo_add, random_tt, to_dense
from qttmg.grid import Ordering, QuanticsGrid, build_delta, build_separable, interleaved
from qttmg.operators import (
    BCKind,
    BoundaryCondition,
    HamiltonianSpec,
    assemble_hamiltonian,
    diagonal_mpo,
    dirichlet_rhs,
    kinetic_mpo,
    laplacian_mpo,
)

DZ = "dirichlet_zero"


def dense_second_difference(f, axis, h, periodic):
    fp, fm = np.roll(f, -1, axis), np.roll(f, 1, axis)
    if not periodic:
        sl = [slice(None)] * f.ndim
        sl[axis] = -1
        fp[tuple(sl)] = 0
        sl[axis] = 0
        fm[tuple(sl)] = 0
    return (fp - 2 * f + fm) / h ** 2


@pytest.mark.parametrize("kind", ["dirichlet_zero", "periodic"])
@pytest.mark.parametrize("ordering", [Ordering("sequential"), Ordering("scale"), interleaved((0, 1))])
def test_laplacian_matches_stencil(kind, ordering):
    g = QuanticsGrid(((0, 1), (0, 2)), (3, 4), ordering)
    bc = BoundaryCondition.uniform(kind, 2)
    f = np.random.default_rng(0).standard_normal((8, 16))
    t = g.from_array(f)
    for d in range(2):
        op = laplacian_mpo(g, bc, d)
        assert op.max_bond <= 3
        out = g.to_array(apply(op, t))
        ref = dense_second_difference(f, d, g.step(d), kind == "periodic")
        assert np.abs(out - ref).max() <= 1e-12 * np.abs(ref).max()


def test_laplacian_of_constant_and_quadratic():
    g = QuanticsGrid(((0, 1),), (6,))
    bc = BoundaryCondition.uniform(DZ, 1)
    out = to_dense(apply(laplacian_mpo(g, bc, 0), constant(6)))
    assert np.abs(out[1:-1]).max() <= 1e-9
    h = g.step(0)
    assert np.isclose(out[0], -1 / h ** 2) and np.isclose(out[-1], -1 / h ** 2)
    x = g.points(0)
    out = to_dense(apply(laplacian_mpo(g, bc, 0), g.from_array(x ** 2)))
    assert np.abs(out[1:-1] - 2).max() <= 1e-8
    # boundary rows see zero outside: (x_1^2 - 2 x_0^2) / h^2 at the left end
    assert np.isclose(out[0], (x[1] ** 2 - 2 * x[0] ** 2) / h ** 2)


def test_periodic_laplacian_on_cosine():
    g = QuanticsGrid(((0, 1),), (8,))
    bc = BoundaryCondition.uniform("periodic", 1)
    x = g.points(0)
    out = to_dense(apply(laplacian_mpo(g, bc, 0), g.from_array(np.cos(2 * np.pi * x))))
    h = g.step(0)
    exact = -(2 * np.pi) ** 2 * np.cos(2 * np.pi * x)
    assert np.abs(out - exact).max() <= (2 * np.pi) ** 4 * h ** 2 / 12 * 1.01
    discrete = -4 * np.sin(np.pi * h) ** 2 / h ** 2 * np.cos(2 * np.pi * x)
    assert np.abs(out - discrete).max() <= 1e-8


def test_row_sums():
    g = QuanticsGrid(((0, 1), (0, 1)), (3, 3), Ordering("scale"))
    per = mpo_to_dense(laplacian_mpo(g, BoundaryCondition.uniform("periodic", 2), 0))
    assert np.abs(per.sum(axis=1)).max() <= 1e-9
    dz = mpo_to_dense(laplacian_mpo(QuanticsGrid(((0, 1),), (5,)), BoundaryCondition.uniform(DZ, 1), 0))
    assert np.abs(dz.sum(axis=1)[1:-1]).max() <= 1e-9


def test_dirichlet_rhs_cases():
    g = QuanticsGrid(((-1, 1), (0, 1)), (4, 4), Ordering("scale"), centering=("cell", "interior"))
    zero = BoundaryCondition((BCKind.PERIODIC, BCKind.DIRICHLET_DATA), {(1, 0): np.zeros(16), (1, 1): np.zeros(16)})
    assert np.all(to_dense(dirichlet_rhs(g, zero)) == 0)
    x = g.points(0)
    bottom = np.where(np.abs(x) < 0.25, 1.0, -1.0)
    bc = BoundaryCondition((BCKind.PERIODIC, BCKind.DIRICHLET_DATA), {(1, 0): bottom, (1, 1): np.zeros(16)})
    b = g.to_array(dirichlet_rhs(g, bc))
    ref = np.zeros((16, 16))
    ref[:, 0] = bottom / g.step(1) ** 2
    assert np.abs(b - ref).max() <= 1e-10 * np.abs(ref).max()
    # full stencil = interior Laplacian + boundary term
    f = np.random.default_rng(1).standard_normal((16, 16))
    lap = g.to_array(apply(laplacian_mpo(g, bc, 1), g.from_array(f)))
    padded = np.concatenate([bottom[:, None], f, np.zeros((16, 1))], axis=1)
    full = (padded[:, 2:] - 2 * padded[:, 1:-1] + padded[:, :-2]) / g.step(1) ** 2
    assert np.abs(lap + b - full).max() <= 1e-9 * np.abs(full).max()


def test_bc_validation():
    with pytest.raises(ValueError):
        BoundaryCondition((BCKind.DIRICHLET_ZERO,), {(0, 0): np.zeros(1)})
    g = QuanticsGrid(((0, 1),), (3,))
    with pytest.raises(ValueError):
        laplacian_mpo(g, BoundaryCondition.uniform(DZ, 2), 0)


def test_diagonal_mpo():
    g = QuanticsGrid(((0, 1),), (5,))
    rng = np.random.default_rng(2)
    f = random_tt(5, 2, rng)
    assert np.allclose(to_dense(apply(diagonal_mpo(constant(5)), f)), to_dense(f))
    masked = to_dense(apply(diagonal_mpo(build_delta(g, (7,))), f))
    assert masked[7] == to_dense(f)[7] and np.count_nonzero(masked) == 1
    v = random_tt(5, 3, rng)
    assert np.abs(to_dense(apply(diagonal_mpo(v), f)) - to_dense(v) * to_dense(f)).max() <= 1e-12


def test_free_particle_spectrum():
    g = QuanticsGrid(((0, 1),), (6,), centering="interior")
    h = g.step(0)
    ham = assemble_hamiltonian(HamiltonianSpec((0.5,)), g, BoundaryCondition.uniform(DZ, 1))
    ev = np.linalg.eigvalsh(mpo_to_dense(ham.mpo()))
    k = np.arange(1, 65)
    ref = 0.5 * 2 * (1 - np.cos(k * np.pi * h)) / h ** 2
    assert np.abs(np.sort(ev) - ref).max() <= 1e-8 * ref.max()


def test_harmonic_oscillator_dense():
    g = QuanticsGrid(((-10, 10),), (10,), centering="cell")
    v = build_separable(g, [0.5 * g.points(0) ** 2])
    ham = assemble_hamiltonian(HamiltonianSpec((0.5,), v), g, BoundaryCondition.uniform(DZ, 1))
    e0 = np.linalg.eigvalsh(mpo_to_dense(ham.mpo()))[0]
    assert abs(e0 - 0.5) <= g.step(0) ** 2


def test_penalty_removes_ground_state():
    g = QuanticsGrid(((-6, 6),), (7,), centering="cell")
    v = build_separable(g, [0.5 * g.points(0) ** 2])
    bc = BoundaryCondition.uniform(DZ, 1)
    ham = assemble_hamiltonian(HamiltonianSpec((0.5,), v), g, bc)
    w, u = np.linalg.eigh(mpo_to_dense(ham.mpo()))
    psi = g.from_array(u[:, 0])
    pen = assemble_hamiltonian(HamiltonianSpec((0.5,), v, [(psi, 1e3)]), g, bc)
    w2, u2 = np.linalg.eigh(mpo_to_dense(pen.mpo()))
    assert abs(u2[:, 0] @ u[:, 0]) <= 1e-6
    assert abs(w2[0] - w[1]) <= 1e-9


def test_hermiticity_and_bond_growth():
    rng = np.random.default_rng(3)
    g = QuanticsGrid(((0, 1),) * 3, (4, 4, 4), Ordering("scale"))
    v = random_tt(12, 3, rng)
    ham = assemble_hamiltonian(HamiltonianSpec((0.5, 0.7, 0.3), v, [(random_tt(12, 2, rng, True), 2.0)]),
                               g, BoundaryCondition.uniform(DZ, 3))
    m = mpo_to_dense(ham.mpo())
    assert np.abs(m - m.T).max() <= 1e-12 * np.abs(m).max()
    bonds = []
    for d in (1, 2, 3):
        gd = QuanticsGrid(((0, 1),) * d, (4,) * d, Ordering("scale"))
        op = kinetic_mpo(gd, BoundaryCondition.uniform(DZ, d), [1.0] * d, TruncationPolicy(rel_tol=1e-26))
        bonds.append(op.max_bond)
    assert bonds[0] == 3
    assert bonds[2] - bonds[1] <= bonds[1] - bonds[0] + 1
