"""Quantics grids: the alpha <-> bits <-> coordinate mapping, bit orderings,
and analytic builders for simple trains on a grid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import TensorTrain, TensorTrainOperator, TruncationPolicy, evaluate_many, from_dense, hadamard, to_dense


@dataclass(frozen=True)
class Ordering:
    """How the bits of the different dimensions are laid out along the train.

    ``sequential`` puts the dimensions one after the other. ``interleaved``
    takes a list of dimension groups; inside a group the bits are interleaved
    level by level (``R_1 x_1 R_2 x_2 ...``), groups follow each other.
    ``scale`` interleaves every dimension (one group).
    """

    kind: str = "sequential"
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("sequential", "interleaved", "scale"):
            raise ValueError(f"unknown ordering {self.kind!r}")
        object.__setattr__(self, "groups", tuple(tuple(int(d) for d in g) for g in self.groups))

    def resolved_groups(self, dims: int) -> tuple[tuple[int, ...], ...]:
        if self.kind == "sequential":
            return tuple((d,) for d in range(dims))
        if self.kind == "scale":
            return (tuple(range(dims)),)
        seen = [d for g in self.groups for d in g]
        rest = [d for d in range(dims) if d not in seen]
        groups = self.groups + tuple((d,) for d in rest)
        flat = sorted(d for g in groups for d in g)
        if flat != list(range(dims)):
            raise ValueError(f"groups {self.groups} are not a partition of {dims} dimensions")
        return groups


SEQUENTIAL = Ordering("sequential")
_OFFSETS = {"node": 0.0, "cell": 0.5, "interior": 1.0}


def interleaved(*groups: Sequence[int]) -> Ordering:
    return Ordering("interleaved", tuple(tuple(g) for g in groups))


@dataclass(frozen=True)
class QuanticsGrid:
    """Uniform grid with ``2**bits[d]`` points per dimension on ``[a_d, b_d)``.

    ``centering`` (one entry per dimension, or one for all) places the points:
    ``node`` gives ``x = a + h * alpha`` with ``h = (b - a) / 2**R``, ``cell``
    gives the cell midpoints ``a + h * (alpha + 1/2)``, and ``interior`` gives
    ``a + h * (alpha + 1)`` with ``h = (b - a) / (2**R + 1)``, i.e. the inner
    points of a grid whose end points ``a`` and ``b`` carry boundary data.
    """

    domain: tuple[tuple[float, float], ...]
    bits: tuple[int, ...]
    ordering: Ordering = SEQUENTIAL
    names: tuple[str, ...] = field(default=())
    centering: tuple[str, ...] | str = "node"

    def __post_init__(self):
        dom = tuple((float(a), float(b)) for a, b in self.domain)
        bits = tuple(int(r) for r in self.bits)
        if len(dom) != len(bits):
            raise ValueError("domain and bits must have one entry per dimension")
        if not 1 <= len(bits) <= 4:
            raise ValueError("grids have 1 to 4 dimensions")
        if any(r < 1 for r in bits):
            raise ValueError("every dimension needs at least one bit")
        if any(b <= a for a, b in dom):
            raise ValueError("empty interval in domain")
        names = tuple(self.names) or tuple("xyzw"[: len(bits)])
        cen = self.centering
        cen = (cen,) * len(bits) if isinstance(cen, str) else tuple(cen)
        if len(cen) != len(bits) or any(c not in _OFFSETS for c in cen):
            raise ValueError(f"bad centering {self.centering!r}")
        object.__setattr__(self, "centering", cen)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_layout", self._compute_layout())

    def _compute_layout(self) -> tuple[tuple[int, int], ...]:
        layout = []
        for group in self.ordering.resolved_groups(self.dims):
            for level in range(max(self.bits[d] for d in group)):
                for d in group:
                    if level < self.bits[d]:
                        layout.append((d, level))
        return tuple(layout)

    @property
    def dims(self) -> int:
        return len(self.bits)

    @property
    def n_sites(self) -> int:
        return sum(self.bits)

    @property
    def layout(self) -> tuple[tuple[int, int], ...]:
        """``layout[p] = (dim, level)``; level 0 is the most significant bit."""
        return self._layout

    def positions(self, dim: int) -> list[int]:
        """Train positions of the bits of ``dim``, most significant first."""
        pos = [0] * self.bits[dim]
        for p, (d, level) in enumerate(self.layout):
            if d == dim:
                pos[level] = p
        return pos

    def step(self, dim: int) -> float:
        a, b = self.domain[dim]
        extra = 1 if self.centering[dim] == "interior" else 0
        return (b - a) / (2 ** self.bits[dim] + extra)

    def offset(self, dim: int) -> float:
        """Position of index 0 in units of the step."""
        return _OFFSETS[self.centering[dim]]

    def points(self, dim: int) -> np.ndarray:
        a, _ = self.domain[dim]
        return a + self.step(dim) * (np.arange(2 ** self.bits[dim]) + self.offset(dim))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([self.step(d) for d in range(self.dims)]))

    def with_bits(self, bits: Sequence[int], domain=None) -> "QuanticsGrid":
        return replace(self, bits=tuple(bits), domain=self.domain if domain is None else domain)

    def coarsened(self) -> "QuanticsGrid":
        return self.with_bits([r - 1 for r in self.bits])

    def refined(self) -> "QuanticsGrid":
        return self.with_bits([r + 1 for r in self.bits])

    # -- permutations between the train order and the per-dimension order

    def _seq_axis(self) -> list[int]:
        offset = np.concatenate([[0], np.cumsum(self.bits)[:-1]])
        return [int(offset[d] + level) for d, level in self.layout]

    def to_array(self, tt: TensorTrain) -> np.ndarray:
        """Dense d-dimensional array ``f[alpha_0, ..., alpha_{d-1}]``."""
        if len(tt) != self.n_sites:
            raise ValueError("train length does not match grid")
        flat = to_dense(tt).reshape((2,) * self.n_sites)
        inv = np.argsort(self._seq_axis())
        return flat.transpose(inv).reshape([2 ** r for r in self.bits])

    def from_array(self, values: np.ndarray, policy=None) -> TensorTrain:
        """TT-SVD of a d-dimensional array laid out on this grid."""
        values = np.asarray(values, dtype=float).reshape((2,) * self.n_sites)
        flat = values.transpose(self._seq_axis())
        return from_dense(flat.ravel(), policy).replace(grid=self)

    def sample(self, f: Callable[..., np.ndarray]) -> np.ndarray:
        """Evaluate a vectorized ``f(x0, x1, ...)`` on all grid points."""
        mesh = np.meshgrid(*[self.points(d) for d in range(self.dims)], indexing="ij")
        return np.broadcast_to(np.asarray(f(*mesh), dtype=float), mesh[0].shape)


def index_to_bits(grid: QuanticsGrid, multi_index: Sequence[int]) -> tuple[int, ...]:
    """Bits of a multi-index in train order."""
    idx = np.asarray(multi_index, dtype=np.int64).reshape(1, -1)
    return tuple(int(b) for b in indices_to_bits(grid, idx)[0])


def indices_to_bits(grid: QuanticsGrid, indices: np.ndarray) -> np.ndarray:
    """Vectorized ``index_to_bits`` for an ``(M, d)`` integer array."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[1] != grid.dims:
        raise ValueError(f"expected shape (M, {grid.dims})")
    for d in range(grid.dims):
        if np.any(indices[:, d] < 0) or np.any(indices[:, d] >= 2 ** grid.bits[d]):
            raise ValueError(f"index out of range in dimension {d}")
    out = np.empty((indices.shape[0], grid.n_sites), dtype=np.int8)
    for p, (d, level) in enumerate(grid.layout):
        shift = grid.bits[d] - 1 - level
        out[:, p] = (indices[:, d] >> shift) & 1
    return out


def bits_to_indices(grid: QuanticsGrid, bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[None, :]
    if bits.shape[1] != grid.n_sites:
        raise ValueError(f"expected {grid.n_sites} bits, got {bits.shape[1]}")
    out = np.zeros((bits.shape[0], grid.dims), dtype=np.int64)
    for p, (d, level) in enumerate(grid.layout):
        out[:, d] |= bits[:, p] << (grid.bits[d] - 1 - level)
    return out


def bits_to_points(grid: QuanticsGrid, bits: np.ndarray) -> np.ndarray:
    """Coordinates (M, d) for an (M, N) array of bit strings."""
    idx = bits_to_indices(grid, bits)
    coords = np.empty(idx.shape, dtype=float)
    for d in range(grid.dims):
        a, _ = grid.domain[d]
        coords[:, d] = a + grid.step(d) * (idx[:, d] + grid.offset(d))
    return coords


def bits_to_point(grid: QuanticsGrid, bits: Sequence[int]) -> tuple[float, ...]:
    return tuple(float(x) for x in bits_to_points(grid, np.asarray(bits)[None, :])[0])


# ---------------------------------------------------------------------------
# analytic builders


def build_delta(grid: QuanticsGrid, multi_index: Sequence[int]) -> TensorTrain:
    bits = index_to_bits(grid, multi_index)
    cores = []
    for s in bits:
        c = np.zeros((1, 2, 1))
        c[0, s, 0] = 1.0
        cores.append(c)
    return TensorTrain(cores, grid=grid)


def _passthrough(chi: int) -> np.ndarray:
    c = np.zeros((chi, 2, chi))
    c[:, 0, :] = np.eye(chi)
    c[:, 1, :] = np.eye(chi)
    return c


def embed_1d(grid: QuanticsGrid, dim: int, cores_1d: Sequence[np.ndarray]) -> TensorTrain:
    """Place a 1D train (MSB first) on the slots of ``dim``; the function is
    constant along every other bit."""
    cores_1d = list(cores_1d)
    if len(cores_1d) != grid.bits[dim]:
        raise ValueError("1D train length does not match bits of the dimension")
    slots = grid.positions(dim)
    cores = []
    chi = 1
    k = 0
    for p in range(grid.n_sites):
        if k < len(slots) and slots[k] == p:
            cores.append(cores_1d[k])
            chi = cores_1d[k].shape[2]
            k += 1
        else:
            cores.append(_passthrough(chi))
    return TensorTrain(cores, grid=grid)


def embed_mpo(grid: QuanticsGrid, dim: int, cores_1d: Sequence[np.ndarray]) -> TensorTrainOperator:
    """Place a 1D operator on the slots of ``dim``; identity on the other bits."""
    cores_1d = list(cores_1d)
    if len(cores_1d) != grid.bits[dim]:
        raise ValueError("1D operator length does not match bits of the dimension")
    slots = grid.positions(dim)
    cores = []
    chi = 1
    k = 0
    for p in range(grid.n_sites):
        if k < len(slots) and slots[k] == p:
            cores.append(cores_1d[k])
            chi = cores_1d[k].shape[3]
            k += 1
        else:
            cores.append(np.einsum("ab,st->astb", np.eye(chi), np.eye(2)))
    return TensorTrainOperator(cores)


def build_separable(grid: QuanticsGrid, tables: Sequence[np.ndarray], policy=None) -> TensorTrain:
    """Outer product of per-dimension tables sampled on the grid points.
    Each table is compressed with ``policy`` (default: drop round-off)."""
    policy = policy or TruncationPolicy(rel_tol=1e-28)
    if len(tables) != grid.dims:
        raise ValueError("need one table per dimension")
    out = None
    for d, table in enumerate(tables):
        table = np.asarray(table, dtype=float)
        if table.shape != (2 ** grid.bits[d],):
            raise ValueError(f"table {d} must have {2 ** grid.bits[d]} entries")
        one_d = from_dense(table, policy)
        emb = embed_1d(grid, d, one_d.cores)
        out = emb if out is None else hadamard(out, emb)
    return out.replace(grid=grid)


class FunctionAdaptor:
    """Vectorized black-box function of the grid coordinates with an
    evaluation counter. ``f`` receives one array per dimension."""

    def __init__(self, f: Callable[..., np.ndarray], name: str = ""):
        self.f = f
        self.name = name or getattr(f, "__name__", "f")
        self.n_evals = 0

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        arrays = [np.asarray(c, dtype=float) for c in coords]
        self.n_evals += arrays[0].size
        return np.asarray(self.f(*arrays), dtype=float)

    def on_points(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an (M, d) coordinate array."""
        points = np.atleast_2d(points)
        return np.broadcast_to(self(*[points[:, d] for d in range(points.shape[1])]),
                               (points.shape[0],))


def subgrid(grid: QuanticsGrid, keep: Sequence[int]) -> QuanticsGrid:
    """Grid over the dimensions ``keep`` with their bits in the same relative
    train order as in ``grid``."""
    keep = list(keep)
    if not keep or len(set(keep)) != len(keep):
        raise ValueError("keep must list distinct dimensions")
    groups = []
    for g in grid.ordering.resolved_groups(grid.dims):
        sub = tuple(keep.index(d) for d in g if d in keep)
        if sub:
            groups.append(sub)
    ordering = Ordering("interleaved", tuple(groups)) if len(keep) > 1 else SEQUENTIAL
    out = QuanticsGrid(tuple(grid.domain[d] for d in keep), tuple(grid.bits[d] for d in keep),
                       ordering, tuple(grid.names[d] for d in keep),
                       tuple(grid.centering[d] for d in keep))
    expected = [(keep.index(d), lvl) for d, lvl in grid.layout if d in keep]
    if list(out.layout) != expected:
        raise ValueError("kept dimensions cannot be laid out as in the parent grid")
    return out


def marginal_squared(tt: TensorTrain, grid: QuanticsGrid, keep: Sequence[int]) -> tuple[TensorTrain, QuanticsGrid]:
    """sum over the other dimensions of tt^2, as a train on ``subgrid(keep)``
    (no measure factors)."""
    sub = subgrid(grid, keep)
    keep = set(keep)
    cores = []
    pending = np.ones((1, 1))
    for (d, _), c in zip(grid.layout, tt.cores):
        if d in keep:
            w = np.einsum("asb,csd->acsbd", c, c).reshape(c.shape[0] ** 2, 2, c.shape[2] ** 2)
            cores.append(np.tensordot(pending, w, axes=(1, 0)))
            pending = np.eye(c.shape[2] ** 2)
        else:
            t = np.einsum("asb,csd->acbd", c, c).reshape(c.shape[0] ** 2, c.shape[2] ** 2)
            pending = pending @ t
    cores[-1] = np.tensordot(cores[-1], pending, axes=(2, 0))
    return TensorTrain(cores, grid=sub), sub


def slice_values(tt: TensorTrain, grid: QuanticsGrid, dim: int, fixed: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Values along ``dim`` with the other dimensions pinned to the indices in
    ``fixed``; returns (coordinates, values)."""
    n = 2 ** grid.bits[dim]
    idx = np.zeros((n, grid.dims), dtype=np.int64)
    for d in range(grid.dims):
        if d == dim:
            idx[:, d] = np.arange(n)
        elif d in fixed:
            idx[:, d] = fixed[d]
        else:
            raise ValueError(f"no index given for dimension {d}")
    return grid.points(dim), evaluate_many(tt, indices_to_bits(grid, idx))
