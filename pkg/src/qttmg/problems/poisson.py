"""2D Poisson problems on a strip: the gate benchmark with its closed-form
solution and the rapidly oscillating charge density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import (
    TensorTrain,
    TensorTrainOperator,
    TruncationPolicy,
    add,
    inner,
    mpo_add,
    mpo_scale,
    mpo_truncate,
    norm,
    round_tt,
    scale,
)
from ..grid import QuanticsGrid, Ordering
from ..operators import BoundaryCondition, BCKind, dirichlet_rhs, laplacian_mpo
from ..scale_ops import RestrictionKind, restrict
from ..solvers import LinearProblem
from ..tci import cross_interpolate


@dataclass(frozen=True)
class PoissonBenchmark:
    """Strip 0 < y < h, V = 0 at y = 0 and at y = h the gate pattern
    V_t for |x| < c, V_sc elsewhere. The infinite strip is truncated to the
    periodic window -half_width <= x < half_width."""

    h: float = 1.0
    c: float = 0.25
    v_t: float = 1.0
    v_sc: float = -1.0
    half_width: float = 8.0

    def __post_init__(self):
        if not (self.h > 0 and self.c > 0):
            raise ValueError("need h > 0 and c > 0")
        if self.half_width <= self.c:
            raise ValueError("the x window must contain the central gate")


def analytic_benchmark(x, y, params: PoissonBenchmark = PoissonBenchmark()):
    """Closed-form potential of the gate benchmark (conformal map of the
    strip onto the upper half plane). Boundary points return the datum."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = params
    x, y = np.broadcast_arrays(x, y)
    out = np.empty(x.shape)
    top = y >= p.h
    bottom = y <= 0
    inside = ~(top | bottom)
    out[bottom] = 0.0
    out[top] = top_gate(x[top], p)
    xi, yi = x[inside], y[inside]
    s = np.sin(np.pi * yi / p.h)
    co = np.cos(np.pi * yi / p.h)
    a1 = (np.exp(np.pi * (p.c - xi) / p.h) + co) / s
    a2 = (np.exp(-np.pi * (p.c + xi) / p.h) + co) / s
    out[inside] = p.v_sc * yi / p.h + (p.v_t - p.v_sc) / np.pi * (np.arctan(a1) - np.arctan(a2))
    return out if out.ndim else float(out)


def top_gate(x, params: PoissonBenchmark):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.where(ax < params.c, params.v_t,
                    np.where(ax > params.c, params.v_sc, 0.5 * (params.v_t + params.v_sc)))


def benchmark_grid(params: PoissonBenchmark, bits: int, ordering: Ordering = Ordering("sequential")) -> QuanticsGrid:
    """x cell-centred on the periodic window, y on the interior points of (0, h)."""
    return QuanticsGrid(((-params.half_width, params.half_width), (0.0, params.h)), (bits, bits),
                        ordering, names=("x", "y"), centering=("cell", "interior"))


def strip_bc(grid: QuanticsGrid, bottom, top) -> BoundaryCondition:
    """Periodic x, Dirichlet y with the given face values (arrays over x)."""
    n = 2 ** grid.bits[0]
    faces = {(1, 0): np.broadcast_to(np.asarray(bottom, float), (n,)).copy(),
             (1, 1): np.broadcast_to(np.asarray(top, float), (n,)).copy()}
    return BoundaryCondition((BCKind.PERIODIC, BCKind.DIRICHLET_DATA), faces)


def benchmark_bc(grid: QuanticsGrid, params: PoissonBenchmark) -> BoundaryCondition:
    return strip_bc(grid, 0.0, top_gate(grid.points(0), params))


def neg_laplacian(grid: QuanticsGrid, bc: BoundaryCondition) -> TensorTrainOperator:
    """-(d_xx + d_yy), symmetric positive definite with a Dirichlet direction."""
    op = mpo_add(laplacian_mpo(grid, bc, 0), laplacian_mpo(grid, bc, 1))
    op = mpo_truncate(op, TruncationPolicy(rel_tol=1e-26))
    return mpo_scale(op, -1.0)


def benchmark_problem(params: PoissonBenchmark, bits: int,
                      ordering: Ordering = Ordering("sequential")) -> LinearProblem:
    """-Lap f = b where b carries the boundary data; rebuilt at every level."""
    grid = benchmark_grid(params, bits, ordering)
    return LinearProblem(
        grid=grid,
        operator=lambda g: neg_laplacian(g, benchmark_bc(g, params)),
        boundary=lambda g: dirichlet_rhs(g, benchmark_bc(g, params)),
    )


def benchmark_exact(grid: QuanticsGrid, params: PoissonBenchmark, max_bond: int = 100,
                    tol: float = 1e-12) -> TensorTrain:
    """TCI of the closed form, rounded into a well-scaled gauge."""
    tt, _ = cross_interpolate(lambda x, y: analytic_benchmark(x, y, params), grid,
                              max_bond=max_bond, tol=tol)
    return round_tt(tt, TruncationPolicy(rel_tol=1e-28)).replace(grid=grid)


def relative_error(f: TensorTrain, ref: TensorTrain) -> float:
    """||f - ref|| / ||ref|| on the grid (uniform weights cancel)."""
    rn = norm(ref)
    return norm(add(f, ref, 1.0, -1.0)) / rn if rn > 0 else norm(f)


def benchmark_error(f: TensorTrain, params: PoissonBenchmark, grid: QuanticsGrid | None = None,
                    exact: TensorTrain | None = None) -> float:
    grid = grid or f.grid
    if grid is None:
        raise ValueError("the train carries no grid")
    exact = exact if exact is not None else benchmark_exact(grid, params)
    return relative_error(f, exact)


# ---------------------------------------------------------------------------
# oscillating charge


@dataclass(frozen=True)
class OscillatingCharge:
    """rho = cos(8 pi (x^2 + (y - h/2)^2) / h^2) sin(pi x / w) on the strip
    0 < y < h, -half_width <= x < half_width."""

    h: float = 100.0
    w: float = 50.0
    half_width: float = 256.0
    gates: bool = False  # False: V = 0 on both edges; True: benchmark gate data
    c: float = 25.0
    v_t: float = 1.0
    v_sc: float = -1.0


def oscillatory_density(x, y, h: float, w: float):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.cos(8 * np.pi * (x ** 2 + (y - h / 2) ** 2) / h ** 2) * np.sin(np.pi * x / w)


def density_grid(params: OscillatingCharge, bits: int, ordering: Ordering = Ordering("sequential")) -> QuanticsGrid:
    """Sequential ordering by default: the density is far more compressible
    with all x bits ahead of the y bits than scale by scale."""
    return QuanticsGrid(((-params.half_width, params.half_width), (0.0, params.h)), (bits, bits),
                        ordering, names=("x", "y"), centering=("cell", "interior"))


def density_train(grid: QuanticsGrid, params: OscillatingCharge, max_bond: int = 80,
                  tol: float = 1e-10) -> tuple[TensorTrain, float]:
    tt, st = cross_interpolate(lambda x, y: oscillatory_density(x, y, params.h, params.w),
                               grid, max_bond=max_bond, tol=tol)
    return round_tt(tt, TruncationPolicy(rel_tol=1e-28)).replace(grid=grid), st.pivot_error


def grid_mean(tt: TensorTrain) -> float:
    """Average of the sampled values over all grid points."""
    ones = TensorTrain([np.ones((1, 2, 1))] * len(tt))
    return inner(tt, ones) / 2.0 ** len(tt)


def density_problem(params: OscillatingCharge, rho: TensorTrain, grid: QuanticsGrid) -> LinearProblem:
    """Lap f = rho, i.e. -Lap f = -rho + boundary terms."""
    gate = PoissonBenchmark(params.h, params.c, params.v_t, params.v_sc, params.half_width)

    def bc(g):
        if params.gates:
            return benchmark_bc(g, gate)
        return strip_bc(g, 0.0, 0.0)

    return LinearProblem(
        grid=grid,
        operator=lambda g: neg_laplacian(g, bc(g)),
        source=scale(rho, -1.0),
        boundary=(lambda g: dirichlet_rhs(g, bc(g))) if params.gates else None,
    )


def l2_norm(tt: TensorTrain, grid: QuanticsGrid) -> float:
    """Measure-weighted norm sqrt(sum f^2 dV)."""
    return norm(tt) * np.sqrt(grid.cell_volume)


def cross_restriction_error(f_n: TensorTrain, grid_n: QuanticsGrid, f_ref: TensorTrain,
                            grid_ref: QuanticsGrid, kind: RestrictionKind | str = "avg") -> float:
    """||f_N - R' f_ref|| / ||f_ref|| with R' the restriction ``kind`` applied
    until the reference reaches the resolution of ``f_n``."""
    if grid_n.dims != grid_ref.dims or grid_ref.n_sites < grid_n.n_sites:
        raise ValueError("the reference must be at least as fine as the solution")
    cur, g = f_ref, grid_ref
    while g.n_sites > grid_n.n_sites:
        if any(r < 2 for r in g.bits):
            break
        cur, g = restrict(cur, g, kind)
    if g.bits != grid_n.bits:
        raise ValueError(f"levels do not match: {g.bits} vs {grid_n.bits}")
    diff = add(f_n, cur, 1.0, -1.0)
    return l2_norm(diff, g) / l2_norm(f_ref, grid_ref)
