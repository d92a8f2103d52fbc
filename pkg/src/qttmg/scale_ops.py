"""Multigrid moves on quantics trains: restriction (fine -> coarse) and
prolongation (coarse -> fine), plus the carry-chain shift operators and the
adder ("magic") tensor used to build them."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    TensorTrain,
    TensorTrainOperator,
    TruncationPolicy,
    add,
    apply,
    mpo_add,
    round_tt,
)
from .grid import QuanticsGrid, embed_mpo

# operators acting on one bit, (out, in)
_I = np.eye(2)
_RAISE = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0|
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1|

HIGH_ORDER_TOL = 1e-12


class RestrictionKind(enum.Enum):
    CST = "cst"
    AVG = "avg"


@dataclass(frozen=True)
class ProlongationKind:
    """``constant``, ``linear`` or ``high_order`` with a stencil of
    ``(offset, weight)`` pairs giving the new odd points
    ``f'[2a+1] = sum_k w_k f[a + k]``."""

    kind: str = "linear"
    stencil: tuple[tuple[int, float], ...] = field(default=())
    boundary: str = "zero"

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "high_order"):
            raise ValueError(f"unknown prolongation {self.kind!r}")
        if self.boundary not in ("zero", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        st = tuple((int(k), float(w)) for k, w in self.stencil)
        if self.kind == "high_order":
            if not st:
                raise ValueError("high_order prolongation needs a stencil")
            if abs(sum(w for _, w in st) - 1.0) > 1e-12:
                raise ValueError("stencil weights must sum to 1")
        object.__setattr__(self, "stencil", st)

    @classmethod
    def constant(cls, boundary="zero"):
        return cls("constant", boundary=boundary)

    @classmethod
    def linear(cls, boundary="zero"):
        return cls("linear", boundary=boundary)

    @classmethod
    def four_point(cls, boundary="zero"):
        """Four-point scheme with weights (-1, 4, 4, -1)/6. Note that it is
        exact only on affine data."""
        return cls("high_order", ((-1, -1 / 6), (0, 4 / 6), (1, 4 / 6), (2, -1 / 6)), boundary)

    @classmethod
    def cubic(cls, boundary="zero"):
        """Cubic midpoint interpolation, weights (-1, 9, 9, -1)/16."""
        return cls("high_order", ((-1, -1 / 16), (0, 9 / 16), (1, 9 / 16), (2, -1 / 16)), boundary)

    @classmethod
    def named(cls, name: str, boundary="zero"):
        if name in ("cubic", "four_point"):
            return getattr(cls, name)(boundary)
        return cls(name, boundary=boundary)

    def effective_stencil(self) -> tuple[tuple[int, float], ...]:
        if self.kind == "linear":
            return ((0, 0.5), (1, 0.5))
        return self.stencil


# ---------------------------------------------------------------------------
# carry-chain operators


def _carry_mpo_1d(n: int, on_carry: np.ndarray, keep_carry: np.ndarray,
                  v_left: Sequence[float], v_right: Sequence[float]) -> list[np.ndarray]:
    """Cores of v_L (prod_j W[j]) v_R with W = ((I, on_carry), (0, keep_carry))."""
    w = np.zeros((2, 2, 2, 2))
    w[0, :, :, 0] = _I
    w[0, :, :, 1] = on_carry
    w[1, :, :, 1] = keep_carry
    vl = np.asarray(v_left, dtype=float)
    vr = np.asarray(v_right, dtype=float)
    if n == 1:
        return [np.einsum("a,astb,b->st", vl, w, vr).reshape(1, 2, 2, 1)]
    cores = [np.einsum("a,astb->stb", vl, w)[None]]
    cores += [w.copy() for _ in range(n - 2)]
    cores.append(np.einsum("astb,b->ast", w, vr)[..., None])
    return cores


def shift_mpo(n: int, offset: int = 1, periodic: bool = False) -> TensorTrainOperator:
    """Pure shift moving the value at alpha to alpha + offset (offset = +-1).

    Out-of-range values are dropped (zero beyond the domain) unless
    ``periodic``, in which case the carry wraps around.
    """
    if n < 1:
        raise ValueError("need at least one site")
    if offset == 1:
        on, keep = _RAISE, _LOWER
    elif offset == -1:
        on, keep = _LOWER, _RAISE
    else:
        raise ValueError("shift_mpo supports offsets +1 and -1; use multi_shift_mpo")
    vl = (1.0, 1.0) if periodic else (1.0, 0.0)
    return TensorTrainOperator(_carry_mpo_1d(n, on, keep, vl, (0.0, 1.0)))


def averaging_mpo(n: int, periodic: bool = False) -> TensorTrainOperator:
    """Rank-2 operator ``(W f)[b] = (f[b] + f[b+1]) / 2`` with the halving baked
    into the left boundary vector (1/2, 0) and v_R = (1, 1)."""
    vl = (0.5, 0.5) if periodic else (0.5, 0.0)
    return TensorTrainOperator(_carry_mpo_1d(n, _LOWER, _RAISE, vl, (1.0, 1.0)))


def magic_tensor() -> np.ndarray:
    """M[z, x, y, c, c'] = 1 iff z = x + y + c' (mod 2) and c = floor((x+y+c')/2)."""
    m = np.zeros((2, 2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for cp in range(2):
                s = x + y + cp
                m[s % 2, x, y, s // 2, cp] = 1.0
    return m


def shift_train(n: int, stencil: Sequence[tuple[int, float]]) -> tuple[TensorTrain, TensorTrain]:
    """Trains of the offset weights ``t = sum_k w_k delta_k`` on ``n`` bits,
    split into nonnegative offsets and negative offsets (two's complement,
    i.e. stored at index 2**n + k)."""
    pos = [(k, w) for k, w in stencil if k >= 0]
    neg = [(k + 2 ** n, w) for k, w in stencil if k < 0]
    for k, _ in pos + neg:
        if not 0 <= k < 2 ** n:
            raise ValueError(f"stencil offset not representable on {n} bits")

    def _build(items):
        if not items:
            return None
        out = None
        for k, w in items:
            cores = []
            for p in range(n):
                c = np.zeros((1, 2, 1))
                c[0, (k >> (n - 1 - p)) & 1, 0] = 1.0
                cores.append(c)
            cores[0] = cores[0] * w
            t = TensorTrain(cores)
            out = t if out is None else add(out, t)
        return round_tt(out, TruncationPolicy(rel_tol=1e-30)) if len(items) > 1 else out

    return _build(pos), _build(neg)


def _adder_mpo(t: TensorTrain, v_left: Sequence[float]) -> TensorTrainOperator:
    """Contract the magic tensor with the offset train: W[out=y, in=z] with
    z = y + x over the bits of t."""
    m = magic_tensor()
    n = len(t)
    cores = []
    for p, tc in enumerate(t.cores):
        # W[(c, tl), y, z, (c', tr)]
        w = np.einsum("zxycd,lxr->clyzdr", m, tc)
        cl, tl, _, _, cr, tr = w.shape
        w = w.reshape(cl * tl, 2, 2, cr * tr)
        cores.append(w)
    # right boundary: no incoming carry at the least significant bit
    last = cores[-1].reshape(2, -1, 2, 2, 2, 1)[..., 0, :]
    cores[-1] = last.reshape(-1, 2, 2, 1)
    vl = np.asarray(v_left, dtype=float)
    first = cores[0].reshape(2, 1, 2, 2, -1)
    cores[0] = np.einsum("c,clyzr->lyzr", vl, first)
    if n == 1:
        cores[0] = cores[0].reshape(1, 2, 2, 1)
    return TensorTrainOperator(cores)


def multi_shift_mpo(n: int, stencil: Sequence[tuple[int, float]],
                    periodic: bool = False) -> TensorTrainOperator:
    """Operator ``(W f)[a] = sum_k w_k f[a + k]`` assembled from the adder
    tensor and the offset train; values beyond the domain are zero (or wrap
    around when ``periodic``)."""
    t_pos, t_neg = shift_train(n, stencil)
    ops = []
    if t_pos is not None:
        ops.append(_adder_mpo(t_pos, (1.0, 1.0) if periodic else (1.0, 0.0)))
    if t_neg is not None:
        ops.append(_adder_mpo(t_neg, (1.0, 1.0) if periodic else (0.0, 1.0)))
    out = ops[0]
    for op in ops[1:]:
        out = mpo_add(out, op)
    return out


def multi_shift_mps(f: TensorTrain, stencil: Sequence[tuple[int, float]],
                    periodic: bool = False, policy: TruncationPolicy | None = None) -> TensorTrain:
    """g[a] = sum_k w_k f[a + k] for a 1D train ``f``."""
    g = apply(multi_shift_mpo(len(f), stencil, periodic), f)
    return round_tt(g, policy or TruncationPolicy(rel_tol=HIGH_ORDER_TOL ** 2))


# ---------------------------------------------------------------------------
# restriction and prolongation


def _dims(grid: QuanticsGrid, dims):
    return list(range(grid.dims)) if dims is None else list(dims)


def restrict(tt: TensorTrain, grid: QuanticsGrid, kind: RestrictionKind | str = RestrictionKind.AVG,
             dims: Sequence[int] | None = None) -> tuple[TensorTrain, QuanticsGrid]:
    """Remove the least significant bit of every dimension (x first, then y, ...).

    ``cst`` keeps the even points, ``avg`` replaces each pair by its mean.
    """
    kind = RestrictionKind(kind)
    dims = _dims(grid, dims)
    if len(tt) != grid.n_sites:
        raise ValueError("train does not match grid")
    for d in dims:
        if grid.bits[d] < 2:
            raise ValueError(f"dimension {d} has a single bit and cannot be restricted")
    cores = list(tt.cores)
    for d in dims:
        p = grid.positions(d)[-1]
        core = cores.pop(p)
        if kind is RestrictionKind.CST:
            m = core[:, 0, :]
        else:
            m = 0.5 * (core[:, 0, :] + core[:, 1, :])
        if p > 0:
            cores[p - 1] = np.tensordot(cores[p - 1], m, axes=(2, 0))
        else:
            cores[0] = np.tensordot(m, cores[0], axes=(1, 0))
        bits = list(grid.bits)
        bits[d] -= 1
        grid = grid.with_bits(bits)
    return TensorTrain(cores, grid=grid), grid


def _insert_bit(tt: TensorTrain, p: int, selector: np.ndarray) -> TensorTrain:
    """Insert a site at position ``p`` whose core is ``selector[s] * I``."""
    cores = list(tt.cores)
    chi = cores[p - 1].shape[2] if p > 0 else 1
    c = np.einsum("s,ab->asb", selector, np.eye(chi))
    cores.insert(p, c)
    return TensorTrain(cores)


def prolong(tt: TensorTrain, grid: QuanticsGrid, kind: ProlongationKind | str = "linear",
            policy: TruncationPolicy | None = None,
            dims: Sequence[int] | None = None) -> tuple[TensorTrain, QuanticsGrid]:
    """Add one bit to every dimension (x first, then y, ...)."""
    if isinstance(kind, str):
        kind = ProlongationKind.named(kind)
    dims = _dims(grid, dims)
    if len(tt) != grid.n_sites:
        raise ValueError("train does not match grid")
    periodic = kind.boundary == "periodic"
    for d in dims:
        bits = list(grid.bits)
        bits[d] += 1
        fine = grid.with_bits(bits)
        p = fine.positions(d)[-1]
        if kind.kind == "constant":
            tt = _insert_bit(tt, p, np.ones(2))
        elif kind.kind == "linear":
            tt = _insert_bit(tt, p, np.ones(2))
            op = embed_mpo(fine, d, averaging_mpo(fine.bits[d], periodic).cores)
            tt = apply(op, tt)
            if policy is not None:
                tt = round_tt(tt, policy)
        else:
            op = embed_mpo(grid, d, multi_shift_mpo(grid.bits[d], kind.stencil, periodic).cores)
            g = round_tt(apply(op, tt), TruncationPolicy(rel_tol=HIGH_ORDER_TOL ** 2))
            # block-diagonal stack of f and g closed by the parity selector
            even = _insert_bit(tt, p, np.array([1.0, 0.0]))
            odd = _insert_bit(g, p, np.array([0.0, 1.0]))
            tt = add(even, odd)
            hp = TruncationPolicy(max_bond=policy.max_bond if policy else None,
                                  rel_tol=max(policy.rel_tol if policy else 0.0, HIGH_ORDER_TOL ** 2))
            tt = round_tt(tt, hp)
        grid = fine
    return tt.replace(grid=grid), grid
