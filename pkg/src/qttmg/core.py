"""Tensor-train (MPS) and tensor-train-operator (MPO) containers with the
dense kernels every other module relies on.

Conventions
-----------
* MPS cores have shape ``(chi_left, 2, chi_right)``.
* MPO cores have shape ``(D_left, 2, 2, D_right)`` ordered ``(.., out, in, ..)``
  so that ``(W f)[out] = sum_in W[out, in] f[in]``.
* The first site carries the most significant bit; ``to_dense`` therefore
  returns entries in natural (big-endian) index order.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Sequence

import numpy as np

DENSE_CAP_ENV = "QTTMG_DENSE_CAP"
_DEFAULT_DENSE_CAP = 26
_MAGIC = b"QTT1"


class DenseCapExceeded(ValueError):
    """Raised when a dense contraction would exceed the configured size cap."""


def dense_cap() -> int:
    """Largest number of sites that may be contracted densely."""
    value = os.environ.get(DENSE_CAP_ENV)
    if value is None:
        return _DEFAULT_DENSE_CAP
    return int(value)


def _check_dense(n: int) -> None:
    cap = dense_cap()
    if n > cap:
        raise DenseCapExceeded(
            f"dense contraction of {n} sites exceeds cap {cap} (set {DENSE_CAP_ENV})"
        )


@dataclass(frozen=True)
class TruncationPolicy:
    """SVD cut rule: drop the smallest singular values while their cumulative
    squared weight stays below ``rel_tol`` times the total, then cap at
    ``max_bond``."""

    max_bond: int | None = None
    rel_tol: float = 0.0

    def __post_init__(self):
        if self.max_bond is None and not self.rel_tol > 0:
            raise ValueError("a truncation policy needs max_bond or a positive rel_tol")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be a positive integer")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")

    def keep(self, s: np.ndarray) -> int:
        """Number of singular values (sorted descending) to keep."""
        if s.size == 0:
            return 0
        sq = s * s
        total = sq.sum()
        if total == 0.0:
            return 1
        keep = s.size
        if self.rel_tol > 0:
            # tail[k] = weight of s[k:], discarded if we keep k values
            tail = np.cumsum(sq[::-1])[::-1]
            ok = np.nonzero(tail <= self.rel_tol * total)[0]
            if ok.size:
                keep = max(int(ok[0]), 1)
        if self.max_bond is not None:
            keep = min(keep, self.max_bond)
        return max(keep, 1)


def _keep(policy: TruncationPolicy | None, s: np.ndarray) -> int:
    """Kept rank; ``policy=None`` only drops exact zeros beyond the first value."""
    if policy is not None:
        return policy.keep(s)
    if s.size == 0:
        return 0
    return max(int(np.count_nonzero(s > 0)), 1)


def _as_cores(cores: Sequence[np.ndarray], ndim: int) -> tuple[np.ndarray, ...]:
    out = []
    for c in cores:
        a = np.asarray(c, dtype=np.float64)
        if a.ndim != ndim:
            raise ValueError(f"core must have {ndim} indices, got shape {a.shape}")
        out.append(a)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class TensorTrain:
    """Quantics tensor train over binary site indices."""

    cores: tuple[np.ndarray, ...]
    canonical_center: int | None = None
    grid: Any = field(default=None, repr=False)

    def __post_init__(self):
        cores = _as_cores(self.cores, 3)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary bonds must be one-dimensional")
        for i, (a, b) in enumerate(zip(cores[:-1], cores[1:])):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        for c in cores:
            if c.shape[1] != 2:
                raise ValueError("physical dimension must be 2")
        object.__setattr__(self, "cores", cores)

    def __len__(self) -> int:
        return len(self.cores)

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> list[int]:
        """All N+1 bond dimensions including the two boundary ones."""
        return [self.cores[0].shape[0]] + [c.shape[2] for c in self.cores]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def parameter_count(self) -> int:
        return int(sum(c.size for c in self.cores))

    def replace(self, cores=None, canonical_center=None, grid=...) -> "TensorTrain":
        return TensorTrain(
            self.cores if cores is None else cores,
            canonical_center,
            self.grid if grid is ... else grid,
        )

    def __add__(self, other: "TensorTrain") -> "TensorTrain":
        return add(self, other)

    def __sub__(self, other: "TensorTrain") -> "TensorTrain":
        return add(self, other, 1.0, -1.0)

    def __mul__(self, c: float) -> "TensorTrain":
        return scale(self, c)

    __rmul__ = __mul__

    def __neg__(self) -> "TensorTrain":
        return scale(self, -1.0)


@dataclass(frozen=True, eq=False)
class TensorTrainOperator:
    """Matrix product operator with (out, in) physical legs per site."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        cores = _as_cores(self.cores, 4)
        if not cores:
            raise ValueError("an operator needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary operator bonds must be one-dimensional")
        for i, (a, b) in enumerate(zip(cores[:-1], cores[1:])):
            if a.shape[3] != b.shape[0]:
                raise ValueError(f"operator bond mismatch between sites {i} and {i + 1}")
        object.__setattr__(self, "cores", cores)

    def __len__(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> list[int]:
        return [self.cores[0].shape[0]] + [c.shape[3] for c in self.cores]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    def __add__(self, other):
        return mpo_add(self, other)

    def __sub__(self, other):
        return mpo_add(self, other, 1.0, -1.0)

    def __mul__(self, c: float):
        return mpo_scale(self, c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, TensorTrainOperator):
            return mpo_compose(self, other)
        return apply(self, other)


# ---------------------------------------------------------------------------
# construction helpers


def zeros(n: int) -> TensorTrain:
    """Canonical zero train with all bonds 1."""
    return TensorTrain([np.zeros((1, 2, 1)) for _ in range(n)], canonical_center=0)


def constant(n: int, value: float = 1.0) -> TensorTrain:
    cores = [np.ones((1, 2, 1)) for _ in range(n)]
    cores[0] = cores[0] * value
    return TensorTrain(cores)


def product(vectors: Sequence[Sequence[float]]) -> TensorTrain:
    """Rank-1 train whose site ``i`` carries the length-2 vector ``vectors[i]``."""
    return TensorTrain([np.asarray(v, dtype=float).reshape(1, 2, 1) for v in vectors])


def random_tt(n: int, bond: int | Sequence[int], rng=None, normalize=False) -> TensorTrain:
    """I.i.d. standard normal cores; ``bond`` is capped by the exact maximum."""
    rng = np.random.default_rng(rng)
    if np.isscalar(bond):
        bonds = [1] + [min(int(bond), 2 ** min(i, n - i)) for i in range(1, n)] + [1]
    else:
        bonds = [1] + list(bond) + [1]
    cores = [rng.standard_normal((bonds[i], 2, bonds[i + 1])) for i in range(n)]
    tt = TensorTrain(cores)
    if normalize:
        nrm = norm(tt)
        tt = scale(tt, 1.0 / nrm)
    return tt


def from_dense(values: np.ndarray, policy: TruncationPolicy | None = None) -> TensorTrain:
    """TT-SVD of a length-2^N vector (first site = most significant bit)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    n = int(round(np.log2(values.size)))
    if 2 ** n != values.size:
        raise ValueError("length must be a power of two")
    _check_dense(n)
    cores = []
    rest = values.reshape(1, -1)
    chi = 1
    for _ in range(n - 1):
        rest = rest.reshape(chi * 2, -1)
        u, s, vt = np.linalg.svd(rest, full_matrices=False)
        k = _keep(policy, s)
        cores.append(u[:, :k].reshape(chi, 2, k))
        rest = s[:k, None] * vt[:k]
        chi = k
    cores.append(rest.reshape(chi, 2, 1))
    return TensorTrain(cores, canonical_center=n - 1)


# ---------------------------------------------------------------------------
# gauge and truncation


def _left_orthogonalize(core, nxt):
    chi_l, d, chi_r = core.shape
    q, r = np.linalg.qr(core.reshape(chi_l * d, chi_r))
    k = q.shape[1]
    return q.reshape(chi_l, d, k), np.tensordot(r, nxt, axes=(1, 0))


def _right_orthogonalize(prev, core):
    chi_l, d, chi_r = core.shape
    q, r = np.linalg.qr(core.reshape(chi_l, d * chi_r).T)
    k = q.shape[1]
    return np.tensordot(prev, r.T, axes=(prev.ndim - 1, 0)), q.T.reshape(k, d, chi_r)


def canonicalize(tt: TensorTrain, center: int) -> TensorTrain:
    """Mixed-canonical gauge: cores left of ``center`` left-orthonormal, right
    of it right-orthonormal. The represented tensor is unchanged."""
    n = len(tt)
    if not 0 <= center < n:
        raise IndexError(f"center {center} out of range for {n} sites")
    cores = list(tt.cores)
    for i in range(center):
        cores[i], cores[i + 1] = _left_orthogonalize(cores[i], cores[i + 1])
    for i in range(n - 1, center, -1):
        cores[i - 1], cores[i] = _right_orthogonalize(cores[i - 1], cores[i])
    if not np.any(cores[center]):
        return zeros(n).replace(canonical_center=center, grid=tt.grid)
    return tt.replace(cores=cores, canonical_center=center)


def truncate(tt: TensorTrain, policy: TruncationPolicy | None) -> tuple[TensorTrain, float]:
    """Sweep-based SVD rounding.

    Returns the rounded train (canonical center 0) and the discarded weight,
    i.e. the sum of squared dropped singular values relative to the squared
    norm of the input.
    """
    n = len(tt)
    cur = canonicalize(tt, n - 1)
    cores = list(cur.cores)
    total = float(np.sum(cores[-1] ** 2))
    if total == 0.0:
        return zeros(n).replace(grid=tt.grid), 0.0
    dropped = 0.0
    for i in range(n - 1, 0, -1):
        chi_l, d, chi_r = cores[i].shape
        u, s, vt = np.linalg.svd(cores[i].reshape(chi_l, d * chi_r), full_matrices=False)
        k = _keep(policy, s)
        dropped += float(np.sum(s[k:] ** 2))
        cores[i] = vt[:k].reshape(k, d, chi_r)
        cores[i - 1] = np.tensordot(cores[i - 1], u[:, :k] * s[:k], axes=(2, 0))
    return tt.replace(cores=cores, canonical_center=0), dropped / total


def round_tt(tt: TensorTrain, policy: TruncationPolicy) -> TensorTrain:
    return truncate(tt, policy)[0]


# ---------------------------------------------------------------------------
# algebra


def _check_len(a, b):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def inner(a: TensorTrain, b: TensorTrain) -> float:
    """Euclidean scalar product sum_alpha a_alpha b_alpha."""
    _check_len(a, b)
    env = np.ones((1, 1))
    for x, y in zip(a.cores, b.cores):
        tmp = np.tensordot(env, x, axes=(0, 0))  # (b, s, a')
        env = np.tensordot(tmp, y, axes=([0, 1], [0, 1]))  # (a', b')
    return float(env[0, 0])


def norm(tt: TensorTrain) -> float:
    """Norm computed through an orthogonalizing sweep (no cancellation)."""
    cores = list(tt.cores)
    for i in range(len(cores) - 1):
        cores[i], cores[i + 1] = _left_orthogonalize(cores[i], cores[i + 1])
    return float(np.linalg.norm(cores[-1]))


def scale(tt: TensorTrain, c: float) -> TensorTrain:
    cores = list(tt.cores)
    k = tt.canonical_center if tt.canonical_center is not None else 0
    cores[k] = cores[k] * c
    return tt.replace(cores=cores, canonical_center=tt.canonical_center)


def add(a: TensorTrain, b: TensorTrain, coeff_a: float = 1.0, coeff_b: float = 1.0) -> TensorTrain:
    """Direct-sum representation of ``coeff_a*a + coeff_b*b``."""
    _check_len(a, b)
    n = len(a)
    if n == 1:
        return a.replace(cores=[coeff_a * a.cores[0] + coeff_b * b.cores[0]])
    cores = []
    for i, (x, y) in enumerate(zip(a.cores, b.cores)):
        if i == 0:
            c = np.concatenate([coeff_a * x, coeff_b * y], axis=2)
        elif i == n - 1:
            c = np.concatenate([x, y], axis=0)
        else:
            c = np.zeros((x.shape[0] + y.shape[0], 2, x.shape[2] + y.shape[2]))
            c[: x.shape[0], :, : x.shape[2]] = x
            c[x.shape[0]:, :, x.shape[2]:] = y
        cores.append(c)
    return a.replace(cores=cores)


def linear_combination(trains: Sequence[TensorTrain], coeffs: Sequence[float],
                       policy: TruncationPolicy | None = None) -> TensorTrain:
    out = scale(trains[0], coeffs[0])
    for t, c in zip(trains[1:], coeffs[1:]):
        out = add(out, t, 1.0, c)
        if policy is not None:
            out = round_tt(out, policy)
    return out


def hadamard(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Elementwise product; bonds multiply."""
    _check_len(a, b)
    cores = []
    for x, y in zip(a.cores, b.cores):
        c = np.einsum("asb,csd->acsbd", x, y)
        cores.append(c.reshape(x.shape[0] * y.shape[0], 2, x.shape[2] * y.shape[2]))
    return a.replace(cores=cores)


def apply(op: TensorTrainOperator, tt: TensorTrain, policy: TruncationPolicy | None = None) -> TensorTrain:
    """Matrix-vector product ``op @ tt``, rounded by ``policy`` when given."""
    _check_len(op, tt)
    cores = []
    for w, m in zip(op.cores, tt.cores):
        c = np.einsum("astb,itj->aisbj", w, m)
        cores.append(c.reshape(w.shape[0] * m.shape[0], 2, w.shape[3] * m.shape[2]))
    out = tt.replace(cores=cores)
    if policy is not None:
        out = round_tt(out, policy)
    return out


def evaluate(tt: TensorTrain, bits: Sequence[int]) -> float:
    """Single entry F[s_1 ... s_N] as a product of selected matrices."""
    if len(bits) != len(tt):
        raise ValueError(f"expected {len(tt)} bits, got {len(bits)}")
    v = np.ones(1)
    for core, s in zip(tt.cores, bits):
        v = v @ core[:, int(s), :]
    return float(v[0])


def evaluate_many(tt: TensorTrain, bits: np.ndarray) -> np.ndarray:
    """Vectorized ``evaluate`` for an ``(M, N)`` array of bit strings."""
    bits = np.asarray(bits, dtype=np.intp)
    if bits.ndim != 2 or bits.shape[1] != len(tt):
        raise ValueError("bits must have shape (M, N)")
    v = np.ones((bits.shape[0], 1))
    for i, core in enumerate(tt.cores):
        sel = core[:, bits[:, i], :]  # (chi_l, M, chi_r)
        v = np.einsum("ma,amb->mb", v, sel)
    return v[:, 0]


def to_dense(tt: TensorTrain) -> np.ndarray:
    """Full contraction to a vector of 2^N entries in bit order."""
    _check_dense(len(tt))
    out = tt.cores[0].reshape(2, -1)
    for core in tt.cores[1:]:
        out = np.tensordot(out, core, axes=(1, 0)).reshape(-1, core.shape[2])
    return out.ravel()


def bit_flip(tt: TensorTrain, sites: Sequence[int] | None = None) -> TensorTrain:
    """Flip the listed bits (all by default), i.e. alpha -> 2^R-1-alpha per group."""
    sites = range(len(tt)) if sites is None else sites
    cores = list(tt.cores)
    for i in sites:
        cores[i] = cores[i][:, ::-1, :].copy()
    return tt.replace(cores=cores)


# ---------------------------------------------------------------------------
# operators


def identity_mpo(n: int) -> TensorTrainOperator:
    return TensorTrainOperator([np.eye(2).reshape(1, 2, 2, 1) for _ in range(n)])


def mpo_scale(op: TensorTrainOperator, c: float) -> TensorTrainOperator:
    cores = list(op.cores)
    cores[0] = cores[0] * c
    return TensorTrainOperator(cores)


def mpo_add(a: TensorTrainOperator, b: TensorTrainOperator, coeff_a: float = 1.0,
            coeff_b: float = 1.0) -> TensorTrainOperator:
    _check_len(a, b)
    n = len(a)
    if n == 1:
        return TensorTrainOperator([coeff_a * a.cores[0] + coeff_b * b.cores[0]])
    cores = []
    for i, (x, y) in enumerate(zip(a.cores, b.cores)):
        if i == 0:
            c = np.concatenate([coeff_a * x, coeff_b * y], axis=3)
        elif i == n - 1:
            c = np.concatenate([x, y], axis=0)
        else:
            c = np.zeros((x.shape[0] + y.shape[0], 2, 2, x.shape[3] + y.shape[3]))
            c[: x.shape[0], :, :, : x.shape[3]] = x
            c[x.shape[0]:, :, :, x.shape[3]:] = y
        cores.append(c)
    return TensorTrainOperator(cores)


def mpo_compose(a: TensorTrainOperator, b: TensorTrainOperator) -> TensorTrainOperator:
    """Operator product ``a @ b``."""
    _check_len(a, b)
    cores = []
    for x, y in zip(a.cores, b.cores):
        c = np.einsum("asub,cutd->acstbd", x, y)
        cores.append(c.reshape(x.shape[0] * y.shape[0], 2, 2, x.shape[3] * y.shape[3]))
    return TensorTrainOperator(cores)


def mpo_transpose(op: TensorTrainOperator) -> TensorTrainOperator:
    return TensorTrainOperator([c.transpose(0, 2, 1, 3) for c in op.cores])


def mpo_truncate(op: TensorTrainOperator, policy: TruncationPolicy | None) -> TensorTrainOperator:
    """SVD rounding of an MPO in the Frobenius norm (physical legs fused)."""
    n = len(op)
    cores = [c.reshape(c.shape[0], 4, c.shape[3]) for c in op.cores]
    for i in range(n - 1):
        chi_l, d, chi_r = cores[i].shape
        q, r = np.linalg.qr(cores[i].reshape(chi_l * d, chi_r))
        cores[i] = q.reshape(chi_l, d, q.shape[1])
        cores[i + 1] = np.tensordot(r, cores[i + 1], axes=(1, 0))
    for i in range(n - 1, 0, -1):
        chi_l, d, chi_r = cores[i].shape
        u, s, vt = np.linalg.svd(cores[i].reshape(chi_l, d * chi_r), full_matrices=False)
        k = _keep(policy, s)
        cores[i] = vt[:k].reshape(k, d, chi_r)
        cores[i - 1] = np.tensordot(cores[i - 1], u[:, :k] * s[:k], axes=(2, 0))
    return TensorTrainOperator([c.reshape(c.shape[0], 2, 2, c.shape[2]) for c in cores])


def mpo_to_dense(op: TensorTrainOperator) -> np.ndarray:
    """Dense 2^N x 2^N matrix (rows = out index)."""
    n = len(op)
    _check_dense(2 * n)
    out = op.cores[0].reshape(2, 2, -1)
    for core in op.cores[1:]:
        out = np.einsum("xyb,bstc->xsytc", out, core)
        d = out.shape
        out = out.reshape(d[0] * d[1], d[2] * d[3], d[4])
    return out[:, :, 0]


def mpo_expectation(op: TensorTrainOperator, bra: TensorTrain, ket: TensorTrain | None = None) -> float:
    """<bra| op |ket> without forming op @ ket."""
    ket = bra if ket is None else ket
    _check_len(op, bra)
    env = np.ones((1, 1, 1))
    for a, w, b in zip(bra.cores, op.cores, ket.cores):
        env = _env_left_step(env, a, w, b)
    return float(env[0, 0, 0])


def _env_left_step(env, bra, w, ket):
    """env[a, d, b] with bra (a,s,a'), w (d,s,t,d'), ket (b,t,b') -> env'[a',d',b']."""
    tmp = np.tensordot(env, ket, axes=(2, 0))  # a d t b'
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 2]))  # a b' s d'
    tmp = np.tensordot(bra, tmp, axes=([0, 1], [0, 2]))  # a' b' d'
    return tmp.transpose(0, 2, 1)


def _env_right_step(env, bra, w, ket):
    """env[a', d', b'] -> env[a, d, b] moving one site left."""
    tmp = np.tensordot(ket, env, axes=(2, 2))  # b t a' d'
    tmp = np.tensordot(w, tmp, axes=([2, 3], [1, 3]))  # d s b a'
    tmp = np.tensordot(bra, tmp, axes=([1, 2], [1, 3]))  # a d b
    return tmp


# ---------------------------------------------------------------------------
# binary serialization


def write_qtt(tt: TensorTrain, fh: BinaryIO) -> None:
    """Header ``QTT1``, u32 site count, N+1 u32 bond dims, then f64 cores in
    row-major (left, physical, right) order; all little-endian."""
    bonds = tt.bond_dims
    fh.write(_MAGIC)
    fh.write(struct.pack("<I", len(tt)))
    fh.write(struct.pack(f"<{len(bonds)}I", *bonds))
    for c in tt.cores:
        fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def read_qtt(fh: BinaryIO) -> TensorTrain:
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    (n,) = struct.unpack("<I", fh.read(4))
    bonds = struct.unpack(f"<{n + 1}I", fh.read(4 * (n + 1)))
    cores = []
    for i in range(n):
        shape = (bonds[i], 2, bonds[i + 1])
        count = int(np.prod(shape))
        buf = fh.read(8 * count)
        if len(buf) != 8 * count:
            raise ValueError("truncated QTT1 stream")
        cores.append(np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64))
    return TensorTrain(cores)


def save_qtt(tt: TensorTrain, path) -> None:
    with open(path, "wb") as fh:
        write_qtt(tt, fh)


def load_qtt(path) -> TensorTrain:
    with open(path, "rb") as fh:
        return read_qtt(fh)


def qtt_bytes(tt: TensorTrain) -> bytes:
    buf = io.BytesIO()
    write_qtt(tt, buf)
    return buf.getvalue()
