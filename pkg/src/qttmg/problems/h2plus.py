"""The hydrogen molecular ion: clamped-nuclei 3D problem, the vibrational
1D problem on a Born-Oppenheimer curve, the harmonic approximation, the
vibrationally smeared potential and the 4D electron + bond-length problem.

Hartree atomic units throughout; nuclei sit on the x axis at -R/2 and +R/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..core import (
    TensorTrain,
    TruncationPolicy,
    add,
    bit_flip,
    from_dense,
    inner,
    mpo_expectation,
    norm,
    round_tt,
    scale,
    to_dense,
)
from ..grid import (
    FunctionAdaptor,
    Ordering,
    QuanticsGrid,
    SEQUENTIAL,
    build_separable,
    marginal_squared,
    slice_values,
)
from ..operators import BoundaryCondition, HamiltonianSpec, assemble_hamiltonian, diagonal_mpo, kinetic_mpo
from ..scale_ops import ProlongationKind, prolong
from ..solvers import CycleSchedule, EigenProblem, SweepConfig, dmrg_solve, vcycle_eigen
from ..tci import cross_interpolate

PROTON_MASS = 1836.152701
HARTREE_TO_CM = 219474.6313632
E0_REFERENCE = -0.597139  # vibronic ground state
BO_DEVIATION = -5.4952e-3  # clamped 3D value relative to the vibronic one
E_BO_REFERENCE = E0_REFERENCE + BO_DEVIATION
OMEGA_REFERENCE_CM = 2191.09952
ZPE_REFERENCE = 5.4952e-3 - 0.256e-3
R_WITH_X = Ordering("interleaved", ((0, 1),))


@dataclass(frozen=True)
class H2PlusSpec:
    """Physical setup. ``bond_length`` is used for clamped nuclei,
    ``r_interval`` for the bond-length coordinate of the 4D problem."""

    bond_length: float = 2.0
    half_box: float = 50.0
    mass: float = PROTON_MASS
    charge: float = 1.0
    field: float = 0.0
    r_interval: tuple[float, float] = (0.2, 100.2)

    def __post_init__(self):
        if not self.bond_length > 0:
            raise ValueError("bond length must be positive")
        lo, hi = self.r_interval
        if not 0 < lo < hi:
            raise ValueError("the R interval must exclude R = 0")

    @property
    def reduced_mass(self) -> float:
        return self.mass / 2.0


def coulomb_kernel(R, x, y, z, charge: float = 1.0):
    """1/R - Z/|r - R/2 e_x| - Z/|r + R/2 e_x| (nuclear repulsion Z^2/R)."""
    R, x, y, z = (np.asarray(a, dtype=float) for a in (R, x, y, z))
    rho2 = y * y + z * z
    da = np.sqrt((x - R / 2) ** 2 + rho2)
    db = np.sqrt((x + R / 2) ** 2 + rho2)
    if np.any(da == 0) or np.any(db == 0) or np.any(R == 0):
        raise ValueError("Coulomb kernel evaluated on a nucleus")
    out = charge * charge / R - charge / da - charge / db
    return out if out.ndim else float(out)


def field_potential(x, w: float):
    """External field term W sin(pi x / 2)."""
    return w * np.sin(np.pi * np.asarray(x, dtype=float) / 2)


# ---------------------------------------------------------------------------
# clamped nuclei


def grid_3d(bits: int, half_box: float = 25.0, ordering: Ordering = SEQUENTIAL) -> QuanticsGrid:
    """Cell-centred cube; nuclei at (+-1, 0, 0) never meet a grid point and
    the inversion r -> -r maps the grid onto itself (all bits flipped)."""
    return QuanticsGrid(((-half_box, half_box),) * 3, (bits,) * 3, ordering,
                        names=("x", "y", "z"), centering="cell")


def clamped_potential(spec: H2PlusSpec, grid: QuanticsGrid, max_bond: int = 120,
                      tol: float = 1e-9, round_tol: float = 1e-12) -> tuple[TensorTrain, float]:
    """TCI of the clamped Coulomb kernel (nuclear repulsion included).
    ``round_tol`` is the squared relative weight dropped afterwards."""
    R = spec.bond_length
    f = FunctionAdaptor(lambda x, y, z: coulomb_kernel(R, x, y, z, spec.charge), "coulomb")
    tt, st = cross_interpolate(f, grid, max_bond=max_bond, tol=tol)
    if round_tol > 0:
        tt = round_tt(tt, TruncationPolicy(rel_tol=round_tol))
    return tt.replace(grid=grid), st.pivot_error


def external_train(spec: H2PlusSpec, grid: QuanticsGrid) -> TensorTrain | None:
    if spec.field == 0:
        return None
    tables = [field_potential(grid.points(0), spec.field)]
    tables += [np.ones(2 ** grid.bits[d]) for d in range(1, grid.dims)]
    return build_separable(grid, tables)


def problem_3d(spec: H2PlusSpec, bits: int, ordering: Ordering = SEQUENTIAL,
               potential: TensorTrain | None = None, **tci) -> EigenProblem:
    grid = grid_3d(bits, spec.half_box, ordering)
    if potential is None:
        potential, _ = clamped_potential(spec, grid, **tci)
    return EigenProblem(grid, (0.5, 0.5, 0.5), BoundaryCondition.uniform("dirichlet_zero", 3),
                        potential, external_train(spec, grid))


def schedule_3d(n_min: int = 12, n_max: int = 30, max_bond: int = 64, max_sweeps: int = 6,
                tol: float = 1e-6, **kw) -> CycleSchedule:
    cfg = SweepConfig(max_sweeps=max_sweeps, tol=tol, min_sweeps=2,
                      truncation=TruncationPolicy(max_bond, 1e-16))
    return CycleSchedule.from_range(n_min, n_max, 3, sweep=cfg, max_bond=max_bond, **kw)


def parity(psi: TensorTrain, grid: QuanticsGrid | None = None, dims: Sequence[int] | None = None) -> float:
    """<psi| P psi> / <psi|psi> for the reflection of ``dims`` (all: inversion).
    +1 gerade, -1 ungerade. Needs a grid symmetric about 0 in those dims."""
    grid = grid or psi.grid
    if dims is None:
        sites = None
    else:
        sites = [p for p, (d, _) in enumerate(grid.layout) if d in dims]
    return inner(psi, bit_flip(psi, sites)) / inner(psi, psi)


@dataclass
class Observables:
    energy: float
    kinetic: float
    potential: float
    virial: float
    norm: float


def observables(psi: TensorTrain, problem: EigenProblem) -> Observables:
    """<T>, <V> and |<V>| / <T> (2 for a Coulomb ground state at equilibrium,
    1 for a harmonic oscillator)."""
    g = problem.grid
    nn = inner(psi, psi)
    t = mpo_expectation(kinetic_mpo(g, problem.bc, problem.kinetic), psi) / nn
    v = 0.0
    for pot in (problem.potential, problem.external):
        if pot is not None:
            v += mpo_expectation(diagonal_mpo(pot), psi) / nn
    return Observables(t + v, t, v, abs(v) / t if t else np.inf, float(np.sqrt(nn)))


def density(psi: TensorTrain, grid: QuanticsGrid, keep: Sequence[int]) -> tuple[TensorTrain, QuanticsGrid]:
    """Marginal probability density over ``keep``, normalized so that
    sum n dV = 1 on the kept grid."""
    m, sub = marginal_squared(psi, grid, keep)
    total = inner(psi, psi)
    return scale(m, 1.0 / (total * sub.cell_volume)), sub


def integrate(tt: TensorTrain, grid: QuanticsGrid) -> float:
    ones = TensorTrain([np.ones((1, 2, 1))] * len(tt))
    return inner(tt, ones) * grid.cell_volume


def axis_slice(psi: TensorTrain, grid: QuanticsGrid, dim: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Values along ``dim`` through the cells next to the axis (the middle
    index of every other dimension)."""
    fixed = {d: 2 ** grid.bits[d] // 2 for d in range(grid.dims) if d != dim}
    return slice_values(psi, grid, dim, fixed)


# ---------------------------------------------------------------------------
# Born-Oppenheimer curve and vibrations


def scaled_spec(spec: H2PlusSpec, R: float, reference: float = 2.0) -> H2PlusSpec:
    """Clamped setup at bond length R with the box scaled by R / reference,
    so the nuclei keep the same position relative to the grid."""
    return replace(spec, bond_length=R, half_box=spec.half_box * R / reference)


def _bo_point(spec: H2PlusSpec, R: float, bits: int, max_bond: int, n_min: int, sweeps: int,
              tol: float, ordering: Ordering, tci_bond: int, start: TensorTrain | None):
    sp = scaled_spec(spec, R)
    prob = problem_3d(sp, bits, ordering, max_bond=tci_bond)
    if start is None:
        sched = schedule_3d(n_min, 3 * bits, max_bond, max_sweeps=sweeps, tol=tol)
        (e, psi), = vcycle_eigen(prob, sched, 1)[0]
        return e, psi
    cfg = SweepConfig(max_sweeps=sweeps, tol=tol, min_sweeps=2,
                      truncation=TruncationPolicy(max_bond, 1e-16))
    ham = assemble_hamiltonian(HamiltonianSpec(prob.kinetic, prob.potential, external=prob.external),
                               prob.grid, prob.bc)
    e, psi, _ = dmrg_solve(ham, start.replace(grid=prob.grid), cfg)
    return e, psi


def bo_curve(spec: H2PlusSpec, r_values: Sequence[float], bits: int, max_bond: int = 64,
             n_min: int = 12, sweeps: int = 4, tol: float = 1e-7,
             ordering: Ordering = SEQUENTIAL, tci_bond: int = 120, jobs: int = 1,
             progress: Callable | None = None) -> np.ndarray:
    """Clamped ground energies E(R) in boxes scaled with R. Sequentially, the
    first point runs a full V-cycle and the others start from the previous
    state (same index grid); with ``jobs > 1`` every point runs its own
    V-cycle in a worker process."""
    args = (bits, max_bond, n_min, sweeps, tol, ordering, tci_bond)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            futs = [pool.submit(_bo_point, spec, float(R), *args, None) for R in r_values]
            energies = [f.result()[0] for f in futs]
        return np.asarray(energies)
    energies = []
    prev = None
    for R in r_values:
        e, prev = _bo_point(spec, float(R), *args, prev)
        energies.append(e)
        if progress:
            progress(float(R), e)
    return np.asarray(energies)


def curve_grid(r_lo: float, step: float, bits: int) -> QuanticsGrid:
    """Node-centred R grid R_j = r_lo + j * step, j < 2**bits."""
    return QuanticsGrid(((r_lo, r_lo + step * 2 ** bits),), (bits,), names=("R",))


def prolong_curve(values: np.ndarray, grid: QuanticsGrid, extra_bits: int,
                  kind: ProlongationKind = ProlongationKind.cubic()) -> tuple[TensorTrain, QuanticsGrid]:
    """Refine a sampled curve by ``extra_bits`` prolongations. The chord through
    the end samples is removed first so the zero continuation beyond the
    ends costs little; it is added back exactly at the fine level."""
    values = np.asarray(values, dtype=float)
    x = grid.points(0)
    slope = (values[-1] - values[0]) / (x[-1] - x[0])
    chord = values[0] + slope * (x - x[0])
    tt = from_dense(values - chord)
    g = grid
    for _ in range(extra_bits):
        tt, g = prolong(tt, g, kind)
    xf = g.points(0)
    line = build_separable(g, [values[0] + slope * (xf - x[0])])
    return round_tt(add(tt, line), TruncationPolicy(rel_tol=1e-28)).replace(grid=g), g


@dataclass
class HarmonicFit:
    omega: float  # Hartree
    r_min: float
    e_min: float
    curvature: float  # a in E = e_min + a (R - r_min)^2
    window: tuple[float, float]

    @property
    def omega_cm(self) -> float:
        return self.omega * HARTREE_TO_CM

    @property
    def energy(self) -> float:
        """Harmonic ground level E(R_min) + omega / 2."""
        return self.e_min + self.omega / 2


def harmonic_fit(r: np.ndarray, e: np.ndarray, mu: float, quanta: float = 1.0,
                 max_iter: int = 50) -> HarmonicFit:
    """Parabola fitted over the classically allowed region below
    E_min + quanta * omega, iterated until the window is stable."""
    r = np.asarray(r, dtype=float)
    e = np.asarray(e, dtype=float)
    i0 = int(np.argmin(e))
    lo, hi = max(i0 - 2, 0), min(i0 + 3, len(r))
    coef = np.polyfit(r[lo:hi], e[lo:hi], 2)
    mask = np.zeros(len(r), bool)
    for _ in range(max_iter):
        a = coef[0]
        if a <= 0:
            raise ValueError("curve has no minimum in the sampled range")
        omega = np.sqrt(2 * a / mu)
        r_min = -coef[1] / (2 * a)
        e_min = np.polyval(coef, r_min)
        new = e <= e_min + quanta * omega
        # keep the connected region around the minimum
        lo = hi = i0
        while lo > 0 and new[lo - 1]:
            lo -= 1
        while hi < len(r) - 1 and new[hi + 1]:
            hi += 1
        new = np.zeros(len(r), bool)
        new[lo:hi + 1] = True
        if new.sum() < 3:
            new[max(i0 - 1, 0):min(i0 + 2, len(r))] = True
        if np.array_equal(new, mask):
            break
        mask = new
        coef = np.polyfit(r[mask], e[mask], 2)
    a = coef[0]
    r_min = -coef[1] / (2 * a)
    return HarmonicFit(float(np.sqrt(2 * a / mu)), float(r_min), float(np.polyval(coef, r_min)),
                       float(a), (float(r[mask].min()), float(r[mask].max())))


@dataclass
class VibrationalResult:
    energies: list[float]
    states: list[TensorTrain]
    grid: QuanticsGrid
    curve: TensorTrain
    fit: HarmonicFit
    curve_min: float

    @property
    def zero_point(self) -> float:
        """Ground vibrational level above the minimum of the curve."""
        return self.energies[0] - self.fit.e_min


def vibrational_1d(values: np.ndarray, coarse: QuanticsGrid, mu: float, extra_bits: int = 5,
                   n_states: int = 1, max_bond: int = 24, quanta: float = 1.0,
                   kind: ProlongationKind = ProlongationKind.cubic(), seed: int = 0) -> VibrationalResult:
    """-1/(2 mu) E'' + E(R) on the refined R grid, plus the harmonic fit."""
    curve, fine = prolong_curve(values, coarse, extra_bits, kind)
    dense = to_dense(curve)
    fit = harmonic_fit(fine.points(0), dense, mu, quanta)
    prob = EigenProblem(fine, (1.0 / (2 * mu),), BoundaryCondition.uniform("dirichlet_zero", 1), curve)
    n_min = max(coarse.n_sites, 4)
    cfg = SweepConfig(max_sweeps=20, tol=1e-12, min_sweeps=2, truncation=TruncationPolicy(max_bond, 1e-20))
    sched = CycleSchedule(tuple(range(n_min, fine.n_sites + 1)), sweep=cfg, max_bond=max_bond, seed=seed)
    states, _ = vcycle_eigen(prob, sched, n_states)
    return VibrationalResult([e for e, _ in states], [s for _, s in states], fine, curve, fit,
                             float(dense.min()))


# ---------------------------------------------------------------------------
# smeared potential


def effective_potential(r_nodes: np.ndarray, weights: np.ndarray, charge: float = 1.0) -> FunctionAdaptor:
    """V_eff(r) = sum_k w_k (Z/|r - R_k/2 e_x| + Z/|r + R_k/2 e_x|), the electron
    attraction averaged over a bond-length distribution (weights sum to 1).
    The electron sees -V_eff."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)

    def f(x, y, z):
        rho2 = y * y + z * z
        out = np.zeros(np.broadcast(x, y, z).shape)
        for R, w in zip(r_nodes, weights):
            out += w * charge * (1 / np.sqrt((x - R / 2) ** 2 + rho2) + 1 / np.sqrt((x + R / 2) ** 2 + rho2))
        return out

    return FunctionAdaptor(f, "v_eff")


def harmonic_nodes(r_min: float, omega: float, mu: float, order: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes for |Psi(R)|^2 of the harmonic ground state,
    a Gaussian of variance 1 / (2 mu omega)."""
    t, w = np.polynomial.hermite.hermgauss(order)
    sigma = np.sqrt(1.0 / (2 * mu * omega))
    return r_min + np.sqrt(2) * sigma * t, w / np.sqrt(np.pi)


def grid_nodes(psi_r: TensorTrain, grid: QuanticsGrid, cutoff: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid-style nodes from a sampled 1D bond-length wavefunction."""
    p = to_dense(psi_r) ** 2
    p = p / p.sum()
    keep = p > cutoff * p.max()
    return grid.points(0)[keep], p[keep] / p[keep].sum()


def problem_ha_3d(spec: H2PlusSpec, bits: int, r_nodes, weights, ordering: Ordering = SEQUENTIAL,
                  max_bond: int = 120, tol: float = 1e-9) -> EigenProblem:
    """3D problem in the smeared potential -V_eff + <1/R>."""
    grid = grid_3d(bits, spec.half_box, ordering)
    veff = effective_potential(r_nodes, weights, spec.charge)
    repulsion = float(np.sum(np.asarray(weights) * spec.charge ** 2 / np.asarray(r_nodes)))
    f = FunctionAdaptor(lambda x, y, z: repulsion - veff(x, y, z), "ha_3d")
    tt, _ = cross_interpolate(f, grid, max_bond=max_bond, tol=tol)
    tt = round_tt(tt, TruncationPolicy(rel_tol=1e-12)).replace(grid=grid)
    return EigenProblem(grid, (0.5, 0.5, 0.5), BoundaryCondition.uniform("dirichlet_zero", 3), tt,
                        external_train(spec, grid))


# ---------------------------------------------------------------------------
# 4D: bond length + electron


def grid_4d(bits: int, r_interval: tuple[float, float], half_box: float,
            ordering: Ordering = R_WITH_X) -> QuanticsGrid:
    """Dimension 0 is R (cell-centred on ``r_interval``), then x, y, z. The
    default ordering interleaves the R and x bits, then y, then z."""
    return QuanticsGrid((tuple(r_interval),) + ((-half_box, half_box),) * 3, (bits,) * 4, ordering,
                        names=("R", "x", "y", "z"), centering="cell")


def problem_4d(spec: H2PlusSpec, bits: int, ordering: Ordering = R_WITH_X,
               max_bond: int = 120, tol: float = 1e-9) -> EigenProblem:
    """-1/(2mu) d_R^2 - 1/2 (1 + 1/(4mu)) Lap_r + V(R, r) with Dirichlet walls."""
    grid = grid_4d(bits, spec.r_interval, spec.half_box, ordering)
    mu = spec.reduced_mass
    f = FunctionAdaptor(lambda R, x, y, z: coulomb_kernel(R, x, y, z, spec.charge), "coulomb_4d")
    tt, _ = cross_interpolate(f, grid, max_bond=max_bond, tol=tol)
    tt = round_tt(tt, TruncationPolicy(rel_tol=1e-12)).replace(grid=grid)
    ke = 0.5 * (1 + 1 / (4 * mu))
    return EigenProblem(grid, (1 / (2 * mu), ke, ke, ke), BoundaryCondition.uniform("dirichlet_zero", 4), tt)
