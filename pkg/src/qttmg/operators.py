"""Analytic MPO builders: second-difference Laplacians, diagonal potentials,
Dirichlet data, and Hamiltonian assembly with penalty projectors."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    TensorTrain,
    TensorTrainOperator,
    TruncationPolicy,
    add,
    from_dense,
    hadamard,
    mpo_add,
    mpo_scale,
    mpo_truncate,
    round_tt,
    zeros,
)
from .grid import QuanticsGrid, embed_1d, embed_mpo
from .scale_ops import _LOWER, _RAISE

OPERATOR_TOL = 1e-26  # squared relative Frobenius weight dropped when compressing operators


class BCKind(enum.Enum):
    DIRICHLET_ZERO = "dirichlet_zero"
    DIRICHLET_DATA = "dirichlet_data"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-dimension boundary kinds.

    Dirichlet dimensions hold interior unknowns only; the boundary value sits
    one step outside the grid on either side. ``faces`` maps ``(dim, side)``
    with side 0 (below the first point) or 1 (above the last point) to the
    boundary values sampled on the remaining dimensions, as an array whose
    axes follow the remaining dimensions in increasing order.
    """

    kinds: tuple[BCKind, ...]
    faces: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        kinds = tuple(BCKind(k) for k in self.kinds)
        object.__setattr__(self, "kinds", kinds)
        for (d, side) in self.faces:
            if side not in (0, 1):
                raise ValueError("face side must be 0 or 1")
            if not 0 <= d < len(kinds) or kinds[d] is not BCKind.DIRICHLET_DATA:
                raise ValueError(f"face data given for dimension {d} without dirichlet_data")

    @classmethod
    def uniform(cls, kind: BCKind | str, dims: int) -> "BoundaryCondition":
        return cls(tuple([BCKind(kind)] * dims))

    def periodic(self, dim: int) -> bool:
        return self.kinds[dim] is BCKind.PERIODIC


def _check_bc(grid: QuanticsGrid, bc: BoundaryCondition):
    if len(bc.kinds) != grid.dims:
        raise ValueError("boundary condition does not match grid dimensions")


def laplacian_1d_cores(n: int, h: float, periodic: bool) -> list[np.ndarray]:
    """Bond-3 MPO of (f[a-1] - 2 f[a] + f[a+1]) / h^2.

    Bond states: 0 no carry, 1 carry of a +1 shift, 2 borrow of a -1 shift.
    """
    w = np.zeros((3, 2, 2, 3))
    w[0, :, :, 0] = np.eye(2)
    w[0, :, :, 1] = _RAISE
    w[1, :, :, 1] = _LOWER
    w[0, :, :, 2] = _LOWER
    w[2, :, :, 2] = _RAISE
    vl = np.array([1.0, 1.0, 1.0]) if periodic else np.array([1.0, 0.0, 0.0])
    vr = np.array([-2.0, 1.0, 1.0]) / h ** 2
    if n == 1:
        return [np.einsum("a,astb,b->st", vl, w, vr).reshape(1, 2, 2, 1)]
    cores = [np.einsum("a,astb->stb", vl, w)[None]]
    cores += [w.copy() for _ in range(n - 2)]
    cores.append(np.einsum("astb,b->ast", w, vr)[..., None])
    return cores


def laplacian_mpo(grid: QuanticsGrid, bc: BoundaryCondition, dim: int,
                  h: float | None = None) -> TensorTrainOperator:
    """Second difference along ``dim``; Dirichlet dimensions see zero outside."""
    _check_bc(grid, bc)
    if not 0 <= dim < grid.dims:
        raise ValueError(f"no dimension {dim}")
    h = grid.step(dim) if h is None else h
    return embed_mpo(grid, dim, laplacian_1d_cores(grid.bits[dim], h, bc.periodic(dim)))


def kinetic_mpo(grid: QuanticsGrid, bc: BoundaryCondition, coeffs: Sequence[float],
                policy: TruncationPolicy | None = None) -> TensorTrainOperator:
    """sum_d c_d (-Laplacian_d), compressed."""
    if len(coeffs) != grid.dims:
        raise ValueError("need one kinetic coefficient per dimension")
    out = None
    for d, c in enumerate(coeffs):
        if c == 0:
            continue
        term = mpo_scale(laplacian_mpo(grid, bc, d), -float(c))
        out = term if out is None else mpo_truncate(mpo_add(out, term), policy or _op_policy())
    if out is None:
        raise ValueError("all kinetic coefficients are zero")
    return out


def _op_policy():
    return TruncationPolicy(rel_tol=OPERATOR_TOL)


def diagonal_mpo(v: TensorTrain) -> TensorTrainOperator:
    """Operator multiplying pointwise by ``v``."""
    eye = np.eye(2)
    return TensorTrainOperator([np.einsum("asb,st->astb", c, eye) for c in v.cores])


def projector_mpo(psi: TensorTrain) -> TensorTrainOperator:
    """|psi><psi| as an MPO (bond squared)."""
    cores = []
    for c in psi.cores:
        w = np.einsum("asb,ctd->acstbd", c, c)
        cores.append(w.reshape(c.shape[0] ** 2, 2, 2, c.shape[2] ** 2))
    return TensorTrainOperator(cores)


def _subgrid_train(grid: QuanticsGrid, dims: Sequence[int], values: np.ndarray,
                   policy) -> list[np.ndarray]:
    """TT-SVD of an array over ``dims`` with bits in the grid's layout order."""
    dims = list(dims)
    order = [(d, lvl) for d, lvl in grid.layout if d in dims]
    shape = []
    for d in dims:
        shape += [2] * grid.bits[d]
    arr = np.asarray(values, dtype=float).reshape(shape)
    offset = dict(zip(dims, np.concatenate([[0], np.cumsum([grid.bits[d] for d in dims])[:-1]])))
    perm = [int(offset[d] + lvl) for d, lvl in order]
    return list(from_dense(arr.transpose(perm).ravel(), policy).cores)


def _embed_subgrid(grid: QuanticsGrid, dims: Sequence[int], cores_sub: list[np.ndarray]) -> TensorTrain:
    cores = []
    chi = 1
    k = 0
    for d, _ in grid.layout:
        if d in dims:
            cores.append(cores_sub[k])
            chi = cores_sub[k].shape[2]
            k += 1
        else:
            c = np.zeros((chi, 2, chi))
            c[:, 0, :] = c[:, 1, :] = np.eye(chi)
            cores.append(c)
    return TensorTrain(cores, grid=grid)


def face_train(grid: QuanticsGrid, dim: int, side: int, values: np.ndarray | float,
               policy: TruncationPolicy | None = None) -> TensorTrain:
    """Train equal to ``values`` on the first (side 0) or last (side 1) layer
    of ``dim`` and zero elsewhere."""
    n = 2 ** grid.bits[dim]
    sel = np.zeros(n)
    sel[0 if side == 0 else n - 1] = 1.0
    out = embed_1d(grid, dim, from_dense(sel).cores)
    others = [d for d in range(grid.dims) if d != dim]
    if np.ndim(values) == 0 or not others:
        return out.replace(cores=[out.cores[0] * float(np.sum(values))] + list(out.cores[1:]))
    expected = tuple(2 ** grid.bits[d] for d in others)
    values = np.asarray(values, dtype=float)
    if values.shape != expected:
        raise ValueError(f"face data for dimension {dim} must have shape {expected}")
    data = _embed_subgrid(grid, others, _subgrid_train(grid, others, values, policy))
    return hadamard(out, data).replace(grid=grid)


def dirichlet_rhs(grid: QuanticsGrid, bc: BoundaryCondition, policy: TruncationPolicy | None = None) -> TensorTrain:
    """Boundary contribution b of the Laplacian, so that the full stencil on
    the interior reads ``laplacian f + b`` with ``b = value / h^2`` on the
    boundary-adjacent layers."""
    _check_bc(grid, bc)
    out = zeros(grid.n_sites).replace(grid=grid)
    pol = policy or TruncationPolicy(rel_tol=1e-28)
    for (d, side), values in sorted(bc.faces.items()):
        if np.all(np.asarray(values) == 0):
            continue
        t = face_train(grid, d, side, np.asarray(values) / grid.step(d) ** 2, policy)
        out = round_tt(add(out, t), pol)
    return out.replace(grid=grid)


@dataclass
class HamiltonianSpec:
    """H = sum_d kinetic[d] (-Laplacian_d) + diag(potential + external)
    + sum penalty weight |psi><psi|."""

    kinetic: tuple[float, ...]
    potential: TensorTrain | None = None
    penalties: list[tuple[TensorTrain, float]] = field(default_factory=list)
    external: TensorTrain | None = None

    def __post_init__(self):
        for _, w in self.penalties:
            if not w > 0:
                raise ValueError("penalty weights must be positive")


@dataclass
class Hamiltonian:
    """Assembled operator. Penalty projectors are kept as low-rank terms so
    the solvers can apply them without squaring the state bond."""

    op: TensorTrainOperator
    penalties: list[tuple[TensorTrain, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.op)

    def mpo(self) -> TensorTrainOperator:
        """Everything folded into one MPO (for dense checks)."""
        out = self.op
        for psi, w in self.penalties:
            out = mpo_add(out, projector_mpo(psi), 1.0, w)
        return out

    def with_penalties(self, penalties) -> "Hamiltonian":
        return Hamiltonian(self.op, list(penalties))


def assemble_hamiltonian(spec: HamiltonianSpec, grid: QuanticsGrid, bc: BoundaryCondition,
                         policy: TruncationPolicy | None = None) -> Hamiltonian:
    _check_bc(grid, bc)
    pol = policy or _op_policy()
    op = kinetic_mpo(grid, bc, spec.kinetic, pol)
    diag = None
    for v in (spec.potential, spec.external):
        if v is None:
            continue
        if len(v) != grid.n_sites:
            raise ValueError("potential train does not match the grid")
        diag = v if diag is None else add(diag, v)
    if diag is not None:
        diag = round_tt(diag, TruncationPolicy(rel_tol=1e-28))
        op = mpo_truncate(mpo_add(op, diagonal_mpo(diag)), pol)
    for psi, _ in spec.penalties:
        if len(psi) != grid.n_sites:
            raise ValueError("penalty state does not match the grid")
    return Hamiltonian(op, list(spec.penalties))
