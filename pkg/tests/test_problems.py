import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from qttmg.core import TruncationPolicy, mpo_to_dense, random_tt, to_dense
from qttmg.grid import Ordering, QuanticsGrid, build_separable
from qttmg.operators import BoundaryCondition, HamiltonianSpec, assemble_hamiltonian
from qttmg.problems.h2plus import (
    H2PlusSpec,
    coulomb_kernel,
    curve_grid,
    density,
    effective_potential,
    grid_3d,
    harmonic_fit,
    harmonic_nodes,
    integrate,
    observables,
    parity,
    problem_3d,
    vibrational_1d,
)
from qttmg.problems.poisson import (
    OscillatingCharge,
    PoissonBenchmark,
    analytic_benchmark,
    benchmark_exact,
    benchmark_error,
    benchmark_problem,
    cross_restriction_error,
    density_grid,
    oscillatory_density,
)
from qttmg.scale_ops import restrict
from qttmg.solvers import CycleSchedule, EigenProblem, SweepConfig, dmrg_solve, vcycle_linear

P = PoissonBenchmark()


def test_benchmark_boundary_limits():
    eps = 1e-9
    assert abs(analytic_benchmark(0.3, eps)) <= 1e-8
    assert abs(analytic_benchmark(0.0, 1 - eps) - P.v_t) <= 1e-6
    assert abs(analytic_benchmark(0.6, 1 - eps) - P.v_sc) <= 1e-6
    # far from the gate the field is the uniform one of the screening plate
    y = np.linspace(0.1, 0.9, 5)
    assert np.allclose(analytic_benchmark(7.0, y), P.v_sc * y, atol=1e-8)
    assert analytic_benchmark(0.0, 1.0) == P.v_t and analytic_benchmark(0.0, 0.0) == 0.0


def test_benchmark_symmetric_and_bounded():
    x = np.linspace(-3, 3, 61)
    y = np.linspace(0.05, 0.95, 19)[:, None]
    v = analytic_benchmark(x, y)
    assert np.allclose(v, v[:, ::-1], atol=1e-12)
    assert v.max() <= P.v_t and v.min() >= P.v_sc


def _fd_strip(nx, ny, p):
    """Sparse five-point solve on the periodic x / interior y grid."""
    hx, hy = 2 * p.half_width / nx, p.h / (ny + 1)
    x = -p.half_width + hx * (np.arange(nx) + 0.5)
    y = hy * (np.arange(ny) + 1)
    dx = sp.diags([np.ones(nx - 1), -2 * np.ones(nx), np.ones(nx - 1)], [-1, 0, 1]).tolil()
    dx[0, -1] = dx[-1, 0] = 1
    dy = sp.diags([np.ones(ny - 1), -2 * np.ones(ny), np.ones(ny - 1)], [-1, 0, 1])
    a = sp.kron(sp.identity(ny), dx.tocsr() / hx ** 2) + sp.kron(dy / hy ** 2, sp.identity(nx))
    b = np.zeros((ny, nx))
    b[-1] = -np.where(np.abs(x) < p.c, p.v_t, p.v_sc) / hy ** 2
    return x, y, spla.spsolve(a.tocsc(), b.ravel()).reshape(ny, nx)


def test_benchmark_midline_matches_finite_differences():
    x, y, f = _fd_strip(1024, 127, P)
    j = 63  # y = 0.5
    ref = analytic_benchmark(x, y[j])
    assert np.abs(f[j] - ref).max() <= 3e-3


def test_benchmark_qtt_solution_matches_dense_discrete_solve():
    bits = 6
    prob = benchmark_problem(P, bits)
    cfg = SweepConfig(max_sweeps=12, tol=1e-11, truncation=TruncationPolicy(64, 1e-26), min_sweeps=2)
    x, rep = vcycle_linear(prob, CycleSchedule((8, 10, 12), sweep=cfg, max_bond=64))
    op = prob.operator(prob.grid)
    rhs = prob.rhs(prob.grid, None)
    ref = np.linalg.solve(mpo_to_dense(op), to_dense(rhs))
    assert np.linalg.norm(to_dense(x) - ref) <= 1e-8 * np.linalg.norm(ref)
    assert benchmark_error(x, P) <= 0.05


def test_benchmark_error_of_exact_is_zero():
    g = benchmark_problem(P, 5).grid
    ex = benchmark_exact(g, P)
    assert benchmark_error(ex, P, exact=ex) <= 1e-14
    with pytest.raises(ValueError):
        benchmark_error(random_tt(4, 2, np.random.default_rng(0)), P)


def test_oscillatory_density_values():
    h, w = 100.0, 50.0
    assert oscillatory_density(0.0, 50.0, h, w) == 0.0
    x, y = -12.5, 50.0
    assert np.isclose(oscillatory_density(x, y, h, w), np.cos(np.pi / 8) * np.sin(-np.pi / 4))
    assert np.isclose(oscillatory_density(25.0, 50.0, h, w), 0.0, atol=1e-15)


def test_cross_restriction_error():
    params = OscillatingCharge()
    fine = density_grid(params, 5)
    rng = np.random.default_rng(1)
    f = random_tt(10, 3, rng).replace(grid=fine)
    coarse_f, coarse_g = restrict(f, fine, "avg")
    assert cross_restriction_error(coarse_f, coarse_g, f, fine) <= 1e-14
    assert cross_restriction_error(f, fine, f, fine) <= 1e-14
    with pytest.raises(ValueError):
        cross_restriction_error(f, fine, coarse_f, coarse_g)


def test_coulomb_kernel():
    assert np.isclose(coulomb_kernel(2.0, 0.0, 0.0, 1.0), 0.5 - np.sqrt(2))
    assert np.isclose(coulomb_kernel(2.0, 3.0, 0.0, 0.0), 0.5 - 0.5 - 0.25)
    with pytest.raises(ValueError):
        coulomb_kernel(2.0, 1.0, 0.0, 0.0)


def test_effective_potential_limits():
    one = effective_potential([2.0], [1.0])
    pts = np.random.default_rng(2).uniform(-3, 3, (3, 20))
    assert np.allclose(one(*pts), 0.5 - coulomb_kernel(2.0, *pts))
    mu, omega = 918.076, 0.0105
    r, w = harmonic_nodes(2.0, omega, mu)
    veff = effective_potential(r, w)
    assert np.isclose(veff(0.7, 0.2, 0.1), veff(-0.7, -0.2, -0.1))
    assert np.isfinite(veff(1.0, 0.0, 0.0))
    # brute force average over the Gaussian bond-length density
    sigma = np.sqrt(1 / (2 * mu * omega))
    rr = np.linspace(2 - 10 * sigma, 2 + 10 * sigma, 10001)
    pr = np.exp(-((rr - 2) / sigma) ** 2 / 2)
    pr /= pr.sum()
    for pt in ((0.4, 0.3, 0.0), (1.5, 0.1, 0.2)):
        brute = np.sum(pr * (0.0 + 1 / rr - coulomb_kernel(rr, *pt)))
        assert abs(veff(*pt) - brute) <= 1e-8


def test_vibrational_on_exact_parabola():
    mu, omega = 918.076, 0.01
    a = mu * omega ** 2 / 2
    coarse = curve_grid(1.2, 0.15, 4)
    r = coarse.points(0)
    e = -0.6 + a * (r - 2.4) ** 2
    res = vibrational_1d(e, coarse, mu, extra_bits=5, n_states=2)
    assert abs(res.fit.omega - omega) <= 1e-10
    assert abs(res.fit.r_min - 2.4) <= 1e-10
    assert abs(res.energies[0] - res.fit.energy) <= 1e-6
    assert abs(res.energies[1] - res.energies[0] - omega) <= 1e-5
    assert abs(res.zero_point - omega / 2) <= 1e-6


def test_harmonic_fit_window():
    mu = 918.076
    r = np.linspace(1.0, 4.0, 301)
    fit = harmonic_fit(r, 0.02 * (r - 2.0) ** 2 + 0.003 * (r - 2.0) ** 3, mu)
    lo, hi = fit.window
    assert lo < fit.r_min < hi
    assert np.all(0.02 * (np.array([lo, hi]) - 2.0) ** 2 <= 1.5 * fit.omega)


def test_oscillator_virial_is_one():
    g = QuanticsGrid(((-8, 8),), (9,), centering="cell")
    prob = EigenProblem(g, (0.5,), BoundaryCondition.uniform("dirichlet_zero", 1),
                        build_separable(g, [0.5 * g.points(0) ** 2]))
    ham = assemble_hamiltonian(HamiltonianSpec(prob.kinetic, prob.potential), g, prob.bc)
    cfg = SweepConfig(max_sweeps=20, tol=1e-12, truncation=TruncationPolicy(32, 1e-28), min_sweeps=2)
    e, psi, _ = dmrg_solve(ham, random_tt(9, 2, np.random.default_rng(3), True), cfg)
    obs = observables(psi, prob)
    assert abs(obs.virial - 1) <= 1e-3
    assert abs(obs.energy - e) <= 1e-10


def _gaussian(grid, sign):
    tabs = [np.exp(-grid.points(d) ** 2) for d in range(3)]
    if sign < 0:
        tabs[0] = tabs[0] * grid.points(0)
    return build_separable(grid, tabs)


def test_density_and_parity():
    g = grid_3d(4, 4.0)
    for sign in (1, -1):
        psi = _gaussian(g, sign)
        assert abs(parity(psi, g) - sign) <= 1e-12
        assert abs(parity(psi, g, dims=[0]) - sign) <= 1e-12
        assert abs(parity(psi, g, dims=[1, 2]) - 1) <= 1e-12
        n, sub = density(psi, g, [0])
        assert abs(integrate(n, sub) - 1) <= 1e-12
        dense = g.to_array(psi) ** 2
        ref = dense.sum(axis=(1, 2))
        ref = ref / (ref.sum() * sub.cell_volume)
        assert np.allclose(sub.to_array(n), ref, atol=1e-12)


def test_field_shifts_two_lowest_states_apart():
    spec = H2PlusSpec(half_box=5.0)
    low = []
    for w in (0.0, 0.05):
        prob = problem_3d(H2PlusSpec(half_box=5.0, field=w), 4, ordering=Ordering("sequential"))
        ham = assemble_hamiltonian(HamiltonianSpec(prob.kinetic, prob.potential, external=prob.external),
                                   prob.grid, prob.bc)
        low.append(eigh(mpo_to_dense(ham.mpo()), eigvals_only=True, subset_by_index=[0, 1]))
    assert spec.bond_length == 2.0
    assert low[1][0] < low[0][0]
    assert low[1][1] > low[0][1]
