"""Two-site sweeping solvers (ALS for L x = g, DMRG for H x = E x) and the
V-cycle driver that walks a problem from coarse to fine resolution."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .core import (
    TensorTrain,
    TensorTrainOperator,
    TruncationPolicy,
    _env_left_step,
    _env_right_step,
    add,
    apply,
    canonicalize,
    inner,
    mpo_expectation,
    norm,
    random_tt,
    round_tt,
    scale,
)
from .grid import QuanticsGrid
from .operators import BoundaryCondition, Hamiltonian, HamiltonianSpec, assemble_hamiltonian
from .scale_ops import ProlongationKind, RestrictionKind, prolong, restrict

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class LocalSolver:
    """Window solver choice. ``auto`` solves densely up to ``direct_max``
    unknowns (``eig_direct_max`` for eigenproblems) and iterates above."""

    kind: str = "auto"
    direct_max: int = 4096
    eig_direct_max: int = 1024
    max_iter: int = 300
    tol: float = 1e-10
    krylov_dim: int = 24
    eig_fallback_max: int = 4096

    def __post_init__(self):
        if self.kind not in ("auto", "direct", "krylov"):
            raise ValueError(f"unknown local solver {self.kind!r}")

    def use_direct(self, n: int, eigen: bool) -> bool:
        if self.kind != "auto":
            return self.kind == "direct"
        return n <= (self.eig_direct_max if eigen else self.direct_max)


@dataclass(frozen=True)
class SweepConfig:
    max_sweeps: int = 10
    tol: float = 1e-8
    truncation: TruncationPolicy = TruncationPolicy(max_bond=32, rel_tol=1e-24)
    local: LocalSolver = LocalSolver()
    min_sweeps: int = 1
    verbosity: int = 0
    expand: int = 0  # zero-weight random bond directions added per DMRG split

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("the sweep tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("need at least one sweep")


@dataclass
class SolveReport:
    """Chronological records. ``records`` holds one dict per local update,
    ``sweeps`` one per full sweep and ``levels`` one per resolution."""

    records: list[dict] = field(default_factory=list)
    sweeps: list[dict] = field(default_factory=list)
    levels: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    converged: bool = False

    def extend(self, other: "SolveReport", **tags):
        self.records += [{**tags, **r} for r in other.records]
        self.sweeps += [{**tags, **r} for r in other.sweeps]
        self.levels += [{**tags, **r} for r in other.levels]
        self.warnings += other.warnings

    @property
    def n_sweeps(self) -> int:
        return len(self.sweeps)

    def summary(self) -> dict:
        """Timing-free digest (identical for identical runs)."""
        def strip(rows):
            return [{k: v for k, v in r.items() if k not in ("time", "clock")} for r in rows]
        return {
            "converged": self.converged,
            "n_sweeps": len(self.sweeps),
            "n_updates": len(self.records),
            "sweeps": strip(self.sweeps),
            "levels": strip(self.levels),
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# environments


def _overlap_left(env, x, y):
    tmp = np.tensordot(env, x, axes=(0, 0))  # c s a'
    return np.tensordot(tmp, y, axes=([0, 1], [0, 1]))  # a' c'


def _overlap_right(env, x, y):
    tmp = np.tensordot(x, env, axes=(2, 0))  # a s c'
    return np.tensordot(tmp, y, axes=([1, 2], [1, 2]))  # a c


class _Sweeper:
    """Mixed-canonical state with operator, rhs and penalty environments."""

    def __init__(self, op: TensorTrainOperator, x: TensorTrain, rhs: TensorTrain | None = None,
                 penalties: Sequence[tuple[TensorTrain, float]] = ()):
        n = len(x)
        if n < 2:
            raise ValueError("the sweeping solvers need at least two sites")
        if len(op) != n or (rhs is not None and len(rhs) != n):
            raise ValueError("operator, state and rhs lengths differ")
        self.n = n
        self.w = list(op.cores)
        self.rhs = list(rhs.cores) if rhs is not None else None
        self.pen = [(list(p.cores), float(mu)) for p, mu in penalties]
        x = canonicalize(x, 0)
        self.cores = list(x.cores)
        one3 = np.ones((1, 1, 1))
        one2 = np.ones((1, 1))
        self.le = [one3] + [None] * n
        self.re = [None] * n + [one3]
        self.gl = [one2] + [None] * n
        self.gr = [None] * n + [one2]
        self.pl = [[one2] + [None] * n for _ in self.pen]
        self.pr = [[None] * n + [one2] for _ in self.pen]
        for k in range(n - 1, 0, -1):
            self._right_update(k)

    # environment updates after core k changed
    def _left_update(self, k):
        c = self.cores[k]
        self.le[k + 1] = _env_left_step(self.le[k], c, self.w[k], c)
        if self.rhs is not None:
            self.gl[k + 1] = _overlap_left(self.gl[k], c, self.rhs[k])
        for i, (p, _) in enumerate(self.pen):
            self.pl[i][k + 1] = _overlap_left(self.pl[i][k], c, p[k])

    def _right_update(self, k):
        c = self.cores[k]
        self.re[k] = _env_right_step(self.re[k + 1], c, self.w[k], c)
        if self.rhs is not None:
            self.gr[k] = _overlap_right(self.gr[k + 1], c, self.rhs[k])
        for i, (p, _) in enumerate(self.pen):
            self.pr[i][k] = _overlap_right(self.pr[i][k + 1], c, p[k])

    def theta(self, k):
        return np.tensordot(self.cores[k], self.cores[k + 1], axes=(2, 0))

    def _two_site(self, env_l, a, b, env_r):
        t = np.tensordot(env_l, a, axes=(1, 0))
        t = np.tensordot(t, b, axes=(2, 0))
        return np.tensordot(t, env_r, axes=(3, 1))

    def local_rhs(self, k):
        return self._two_site(self.gl[k], self.rhs[k], self.rhs[k + 1], self.gr[k + 2])

    def penalty_vectors(self, k):
        out = []
        for i, (p, mu) in enumerate(self.pen):
            v = self._two_site(self.pl[i][k], p[k], p[k + 1], self.pr[i][k + 2])
            out.append((v.ravel(), mu))
        return out

    def matvec_fn(self, k, shape):
        le, re = self.le[k], self.re[k + 2]
        w1, w2 = self.w[k], self.w[k + 1]
        pens = self.penalty_vectors(k)

        def mv(v):
            th = v.reshape(shape)
            t = np.tensordot(le, th, axes=(2, 0))  # a' d s t b
            t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # a' t b s' e
            t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))  # a' b s' t' f
            t = np.tensordot(t, re, axes=([1, 4], [2, 1]))  # a' s' t' b'
            out = t.ravel()
            for p, mu in pens:
                out = out + mu * p * (p @ v)
            return out

        return mv

    def local_matrix(self, k, shape):
        w12 = np.tensordot(self.w[k], self.w[k + 1], axes=(3, 0))  # d s u t v f
        a = np.einsum("xda,dsutvf,yfb->xstyauvb", self.le[k], w12, self.re[k + 2], optimize=True)
        n = int(np.prod(shape))
        a = a.reshape(n, n)
        for p, mu in self.penalty_vectors(k):
            a = a + mu * np.outer(p, p)
        return a

    def split(self, k, theta, policy, left_to_right, keep=None, expand=0, rng=None):
        """SVD split of the window tensor. ``expand`` random directions with
        zero weight are appended to the new bond (the state is unchanged),
        so later windows can grow components the current basis lacks."""
        cl, _, _, cr = theta.shape
        u, s, vt = np.linalg.svd(theta.reshape(cl * 2, 2 * cr), full_matrices=False)
        if keep is None:
            r = policy.keep(s)
        else:
            r = keep
        r = max(1, min(r, s.size))
        total = float(np.sum(s * s))
        discarded = float(np.sum(s[r:] ** 2)) / total if total > 0 else 0.0
        u, s, vt = u[:, :r], s[:r], vt[:r]
        cap = min(cl * 2, 2 * cr, policy.max_bond or cl * 2 * cr)
        extra = min(expand, cap - r)
        if extra > 0:
            if left_to_right:
                q = rng.standard_normal((cl * 2, extra))
                q -= u @ (u.T @ q)
                q, _ = np.linalg.qr(q)
                u = np.hstack([u, q])
                vt = np.vstack([vt, np.zeros((extra, vt.shape[1]))])
            else:
                q = rng.standard_normal((2 * cr, extra))
                q -= vt.T @ (vt @ q)
                q, _ = np.linalg.qr(q)
                vt = np.vstack([vt, q.T])
                u = np.hstack([u, np.zeros((u.shape[0], extra))])
            s = np.concatenate([s, np.zeros(extra)])
            r += extra
        if left_to_right:
            self.cores[k] = u.reshape(cl, 2, r)
            self.cores[k + 1] = (s[:, None] * vt).reshape(r, 2, cr)
            self._left_update(k)
        else:
            self.cores[k] = (u * s).reshape(cl, 2, r)
            self.cores[k + 1] = vt.reshape(r, 2, cr)
            self._right_update(k + 1)
        return discarded

    def state(self, grid=None, center=0) -> TensorTrain:
        return TensorTrain(list(self.cores), canonical_center=center, grid=grid)


def _sweep_order(n):
    return [(k, True) for k in range(n - 1)] + [(k, False) for k in range(n - 2, -1, -1)]


# ---------------------------------------------------------------------------
# local solves


def _solve_linear(sw: _Sweeper, k, theta, b, cfg: SweepConfig, report: SolveReport):
    shape = theta.shape
    n = theta.size
    if cfg.local.use_direct(n, eigen=False):
        a = sw.local_matrix(k, shape)
        a = 0.5 * (a + a.T)
        try:
            x = scipy.linalg.solve(a, b, assume_a="sym")
            if not np.all(np.isfinite(x)):
                raise np.linalg.LinAlgError("non-finite local solution")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            ridge = 1e-12 * max(float(np.abs(np.diag(a)).max()), 1.0)
            msg = f"singular local system at window {k}; ridge {ridge:.1e} added"
            report.warnings.append(msg)
            log.warning(msg)
            x = scipy.linalg.solve(a + ridge * np.eye(n), b, assume_a="sym")
        return x, 1
    mv = sw.matvec_fn(k, shape)
    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(op, b, x0=theta.ravel(), rtol=cfg.local.tol, maxiter=cfg.local.max_iter,
                      callback=cb)
    if info != 0:
        report.warnings.append(f"local CG at window {k} stopped after {count[0]} iterations")
    return x, count[0]


def _solve_eigen(sw: _Sweeper, k, theta, cfg: SweepConfig, report: SolveReport, rng):
    shape = theta.shape
    n = theta.size
    if cfg.local.use_direct(n, eigen=True):
        a = sw.local_matrix(k, shape)
        a = 0.5 * (a + a.T)
        w, v = scipy.linalg.eigh(a, subset_by_index=[0, 0])
        return v[:, 0], 1
    mv = sw.matvec_fn(k, shape)
    v0 = theta.ravel().copy()
    if not np.any(v0):
        v0 = rng.standard_normal(n)
    v, iters, ok = lanczos_lowest(mv, v0, cfg.local.krylov_dim, cfg.local.max_iter, cfg.local.tol)
    if ok or n > cfg.local.eig_fallback_max:
        return v, iters
    msg = f"local eigensolver did not converge at window {k}; dense fallback"
    report.warnings.append(msg)
    log.warning(msg)
    a = sw.local_matrix(k, shape)
    w, vv = scipy.linalg.eigh(0.5 * (a + a.T), subset_by_index=[0, 0])
    return vv[:, 0], iters


def lanczos_lowest(mv, v0: np.ndarray, krylov_dim: int = 24, max_iter: int = 300,
                   tol: float = 1e-10) -> tuple[np.ndarray, int, bool]:
    """Restarted Lanczos (full reorthogonalization) for the lowest eigenpair.

    Restarts from the current Ritz vector, so its Rayleigh quotient never
    exceeds that of ``v0``. Returns (vector, matvec count, converged), where
    convergence means a residual below ``tol`` times the spectral radius
    estimate (largest |Ritz value|, at least 1)."""
    n = v0.size
    m = max(2, min(krylov_dim, n))
    x = v0 / np.linalg.norm(v0)
    count = 0
    while True:
        basis = np.empty((m, n))
        alpha = np.zeros(m)
        beta = np.zeros(m)
        basis[0] = x
        size = m
        for j in range(m):
            w = mv(basis[j])
            count += 1
            alpha[j] = basis[j] @ w
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            b = np.linalg.norm(w)
            beta[j] = b
            if j + 1 == m:
                break
            if b < 1e-14 * max(1.0, abs(alpha[j])):
                size = j + 1
                break
            basis[j + 1] = w / b
        evals, evecs = scipy.linalg.eigh_tridiagonal(alpha[:size], beta[: size - 1])
        y = evecs[:, 0]
        x = basis[:size].T @ y
        x /= np.linalg.norm(x)
        resid = abs(beta[size - 1] * y[-1]) if size == m else 0.0
        if resid <= tol * max(1.0, float(np.abs(evals).max())):
            return x, count, True
        if count >= max_iter:
            return x, count, False


# ---------------------------------------------------------------------------
# solvers


def _as_hamiltonian(h) -> Hamiltonian:
    if isinstance(h, Hamiltonian):
        return h
    if isinstance(h, TensorTrainOperator):
        return Hamiltonian(h)
    raise TypeError("expected a TensorTrainOperator or Hamiltonian")


def linear_residual(op: TensorTrainOperator, x: TensorTrain, g: TensorTrain) -> float:
    """||L x - g|| / ||g|| (absolute when g = 0)."""
    r = norm(add(apply(op, x), g, 1.0, -1.0))
    gn = norm(g)
    return r / gn if gn > 0 else r


def als_solve(op: TensorTrainOperator, g: TensorTrain, x0: TensorTrain,
              cfg: SweepConfig = SweepConfig()) -> tuple[TensorTrain, SolveReport]:
    """Two-site ALS for a symmetric positive definite ``op``.

    Each window minimizes 1/2 x^T A x - x^T b; a truncated update that would
    raise this cost is replaced by the exact split of the previous window."""
    report = SolveReport()
    sw = _Sweeper(op, x0, rhs=g)
    gnorm = norm(g)
    if gnorm == 0.0:
        report.converged = True
        zero = scale(x0, 0.0)
        report.sweeps.append({"sweep": 1, "residual": 0.0, "max_bond": zero.max_bond,
                              "params": zero.parameter_count})
        return zero.replace(grid=g.grid or x0.grid), report
    best, best_res = None, np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        t0 = time.perf_counter()
        for k, l2r in _sweep_order(sw.n):
            th_old = sw.theta(k)
            b = sw.local_rhs(k).ravel()
            mv = sw.matvec_fn(k, th_old.shape)
            old_cost = 0.5 * th_old.ravel() @ mv(th_old.ravel()) - th_old.ravel() @ b
            x, iters = _solve_linear(sw, k, th_old, b, cfg, report)
            th = x.reshape(th_old.shape)
            old_rank = sw.cores[k].shape[2]
            disc = sw.split(k, th, cfg.truncation, l2r)
            th_new = sw.theta(k).ravel()
            cost = 0.5 * th_new @ mv(th_new) - th_new @ b
            reverted = False
            if cost > old_cost + MONOTONE_SLACK * max(abs(old_cost), 1e-300):
                sw.split(k, th_old, cfg.truncation, l2r, keep=old_rank)
                th_new = sw.theta(k).ravel()
                cost = 0.5 * th_new @ mv(th_new) - th_new @ b
                reverted = True
            report.records.append({
                "sweep": sweep, "window": k, "direction": "right" if l2r else "left",
                "cost": float(cost), "bond": int(sw.cores[k].shape[2]), "local_dim": int(th.size),
                "iterations": int(iters), "discarded": disc, "reverted": reverted,
                "clock": time.perf_counter(),
            })
        x = sw.state(grid=g.grid or x0.grid)
        res = linear_residual(op, x, g)
        report.sweeps.append({"sweep": sweep, "residual": res, "max_bond": x.max_bond,
                              "params": x.parameter_count, "time": time.perf_counter() - t0})
        if cfg.verbosity:
            log.info("ALS sweep %d residual %.3e bond %d", sweep, res, x.max_bond)
        if res < best_res:
            best, best_res = x, res
        if res <= cfg.tol and sweep >= cfg.min_sweeps:
            report.converged = True
            return x, report
    return best, report


def _rayleigh(mv, v):
    nv = v @ v
    return float(v @ mv(v) / nv) if nv > 0 else np.inf


def dmrg_solve(h, x0: TensorTrain, cfg: SweepConfig = SweepConfig(min_sweeps=2),
               seed: int = 0) -> tuple[float, TensorTrain, SolveReport]:
    """Two-site DMRG for the lowest eigenpair of ``h`` (plus penalty terms).

    Returns the objective (energy including penalties), the normalized state
    and the report. Energies are non-increasing across local updates."""
    h = _as_hamiltonian(h)
    rng = np.random.default_rng(seed)
    report = SolveReport()
    x0 = canonicalize(x0, 0)
    nrm = norm(x0)
    if nrm == 0:
        raise ValueError("initial state is zero")
    x0 = scale(x0, 1.0 / nrm)
    sw = _Sweeper(h.op, x0, penalties=h.penalties)
    energy = None
    prev = None
    for sweep in range(1, cfg.max_sweeps + 1):
        t0 = time.perf_counter()
        for k, l2r in _sweep_order(sw.n):
            th_old = sw.theta(k)
            mv = sw.matvec_fn(k, th_old.shape)
            e_old = _rayleigh(mv, th_old.ravel())
            v, iters = _solve_eigen(sw, k, th_old, cfg, report, rng)
            th = v.reshape(th_old.shape)
            th = th / np.linalg.norm(th)
            old_rank = sw.cores[k].shape[2]
            disc = sw.split(k, th, cfg.truncation, l2r, expand=cfg.expand, rng=rng)
            _renormalize(sw, k, l2r)
            e_new = _rayleigh(mv, sw.theta(k).ravel())
            reverted = False
            if e_new > e_old + MONOTONE_SLACK * max(abs(e_old), 1.0):
                sw.split(k, th_old, cfg.truncation, l2r, keep=old_rank)
                e_new = _rayleigh(mv, sw.theta(k).ravel())
                reverted = True
            energy = e_new
            report.records.append({
                "sweep": sweep, "window": k, "direction": "right" if l2r else "left",
                "energy": energy, "bond": int(sw.cores[k].shape[2]), "local_dim": int(th.size),
                "iterations": int(iters), "discarded": disc, "reverted": reverted,
                "clock": time.perf_counter(),
            })
        x = sw.state(grid=x0.grid)
        report.sweeps.append({"sweep": sweep, "energy": energy, "max_bond": x.max_bond,
                              "params": x.parameter_count, "time": time.perf_counter() - t0})
        if cfg.verbosity:
            log.info("DMRG sweep %d energy %.12f bond %d", sweep, energy, x.max_bond)
        if prev is not None and abs(prev - energy) < cfg.tol and sweep >= cfg.min_sweeps:
            report.converged = True
            break
        prev = energy
    # drop the zero-weight directions left by the expansion
    x = round_tt(sw.state(grid=x0.grid), TruncationPolicy(rel_tol=1e-30)).replace(grid=x0.grid)
    return energy, scale(x, 1.0 / norm(x)), report


def _renormalize(sw: _Sweeper, k, l2r):
    c = k + 1 if l2r else k
    nrm = np.linalg.norm(sw.cores[c])
    if nrm > 0:
        sw.cores[c] = sw.cores[c] / nrm


# ---------------------------------------------------------------------------
# V-cycle


@dataclass(frozen=True)
class CycleSchedule:
    """Resolutions (total site counts) visited from coarse to fine, with the
    sweep settings and bond cap used at each of them."""

    levels: tuple[int, ...]
    sweep: SweepConfig | tuple[SweepConfig, ...] = SweepConfig()
    max_bond: int | tuple[int, ...] = 32
    prolongation: ProlongationKind = ProlongationKind.linear()
    restriction: RestrictionKind = RestrictionKind.AVG
    static: bool = False
    seed: int = 0

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if not levels:
            raise ValueError("empty schedule")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "restriction", RestrictionKind(self.restriction))
        if isinstance(self.prolongation, str):
            kind = ProlongationKind.named(self.prolongation)
            object.__setattr__(self, "prolongation", kind)
        for attr in ("sweep", "max_bond"):
            val = getattr(self, attr)
            if isinstance(val, (tuple, list)) and len(val) != len(levels):
                raise ValueError(f"{attr} needs one entry per level")

    @classmethod
    def from_range(cls, n_min: int, n_max: int, step: int, **kw) -> "CycleSchedule":
        return cls(tuple(range(n_min, n_max + 1, step)), **kw)

    def check(self, dims: int):
        for a, b in zip(self.levels, self.levels[1:]):
            if b - a != dims:
                raise ValueError(f"levels must grow by {dims} sites (one bit per dimension)")

    def config(self, i: int) -> SweepConfig:
        cfg = self.sweep[i] if isinstance(self.sweep, tuple) else self.sweep
        chi = self.max_bond[i] if isinstance(self.max_bond, tuple) else self.max_bond
        return replace(cfg, truncation=replace(cfg.truncation, max_bond=int(chi)))


@dataclass
class LinearProblem:
    """Solve ``operator(grid) x = source + boundary(grid)`` at ``grid``.

    ``source`` lives on the finest grid and is carried to coarser levels by
    restriction; ``operator`` and ``boundary`` are rebuilt per level."""

    grid: QuanticsGrid
    operator: Callable[[QuanticsGrid], TensorTrainOperator]
    source: TensorTrain | None = None
    boundary: Callable[[QuanticsGrid], TensorTrain] | None = None

    def rhs(self, grid: QuanticsGrid, source: TensorTrain | None) -> TensorTrain:
        parts = [t for t in (source, self.boundary(grid) if self.boundary else None) if t is not None]
        if not parts:
            raise ValueError("problem has neither source nor boundary data")
        out = parts[0]
        for t in parts[1:]:
            out = add(out, t)
        return round_tt(out, TruncationPolicy(rel_tol=1e-28)).replace(grid=grid)


@dataclass
class EigenProblem:
    """H = sum_d kinetic[d] (-Laplacian_d) + diag(potential [+ external]) on
    ``grid``; coarse potentials are restrictions of the fine ones."""

    grid: QuanticsGrid
    kinetic: tuple[float, ...]
    bc: BoundaryCondition
    potential: TensorTrain | None = None
    external: TensorTrain | None = None


def _descend(tt: TensorTrain | None, grid: QuanticsGrid, levels, kind) -> list:
    """Copies of ``tt`` at each level (coarse first) by repeated restriction."""
    dims = grid.dims
    out = [None] * len(levels)
    cur, g = tt, grid
    for i in range(len(levels) - 1, -1, -1):
        while g.n_sites > levels[i]:
            if cur is not None:
                cur, g = restrict(cur, g, kind)
            else:
                g = g.with_bits([r - 1 for r in g.bits])
        if g.n_sites != levels[i]:
            raise ValueError(f"level {levels[i]} is not reachable from {grid.n_sites} sites "
                             f"in steps of {dims}")
        out[i] = (cur, g)
    return out


def vcycle_linear(problem: LinearProblem, schedule: CycleSchedule,
                  on_level: Callable | None = None) -> tuple[TensorTrain, SolveReport]:
    """Coarse-to-fine solve. ``on_level(level, x, grid)`` sees every level's solution."""
    grid = problem.grid
    schedule.check(grid.dims)
    if schedule.levels[-1] != grid.n_sites:
        raise ValueError("the last level must be the problem resolution")
    levels = schedule.levels[-1:] if schedule.static else schedule.levels
    data = _descend(problem.source, grid, levels, schedule.restriction)
    report = SolveReport()
    rng = np.random.default_rng(schedule.seed)
    x = None
    for i, (src, g) in enumerate(data):
        idx = schedule.levels.index(levels[i])
        cfg = schedule.config(idx)
        if schedule.static:
            cfg = replace(cfg, max_sweeps=_static_budget(schedule))
        op = problem.operator(g)
        rhs = problem.rhs(g, src)
        t0 = time.perf_counter()
        if x is None:
            x = random_tt(g.n_sites, 2, rng, normalize=True).replace(grid=g)
        else:
            x, _ = prolong(x, x.grid, schedule.prolongation, cfg.truncation)
        start = linear_residual(op, x, rhs)
        x, rep = als_solve(op, rhs, x, cfg)
        x = x.replace(grid=g)
        report.extend(rep, level=i, n_sites=g.n_sites)
        report.levels.append({
            "level": i, "n_sites": g.n_sites, "initial_residual": start,
            "residual": rep.sweeps[-1]["residual"], "sweeps": rep.n_sweeps,
            "max_bond": x.max_bond, "params": x.parameter_count, "converged": rep.converged,
            "time": time.perf_counter() - t0,
        })
        report.converged = rep.converged
        if on_level is not None:
            on_level(i, x, g)
    return x, report


def _static_budget(schedule: CycleSchedule) -> int:
    return sum(schedule.config(i).max_sweeps for i in range(len(schedule.levels)))


def _normalized(tt: TensorTrain) -> TensorTrain:
    return scale(tt, 1.0 / norm(tt))


def vcycle_eigen(problem: EigenProblem, schedule: CycleSchedule, n_states: int = 1,
                 penalty: float | None = None, budget: int | None = None,
                 on_level: Callable | None = None
                 ) -> tuple[list[tuple[float, TensorTrain]], SolveReport]:
    """Lowest ``n_states`` eigenpairs, one V-cycle per state. Lower states
    enter as penalties ``mu |psi><psi|``, restricted to every level.

    ``budget`` caps the total number of sweeps of one state; a static run
    spends the whole budget at the finest level."""
    grid = problem.grid
    schedule.check(grid.dims)
    if schedule.levels[-1] != grid.n_sites:
        raise ValueError("the last level must be the problem resolution")
    levels = schedule.levels[-1:] if schedule.static else schedule.levels
    pots = _descend(problem.potential, grid, levels, schedule.restriction)
    exts = _descend(problem.external, grid, levels, schedule.restriction)
    report = SolveReport()
    states: list[tuple[float, TensorTrain, float]] = []
    for m in range(n_states):
        rng = np.random.default_rng(schedule.seed + m)
        pen_fine = [(psi, mu) for _, psi, mu in states]
        pen_levels = [_descend(psi, grid, levels, schedule.restriction) for psi, _ in pen_fine]
        x = None
        used = 0
        for i, ((pot, g), (ext, _)) in enumerate(zip(pots, exts)):
            idx = schedule.levels.index(levels[i])
            cfg = schedule.config(idx)
            if schedule.static:
                cfg = replace(cfg, max_sweeps=budget or _static_budget(schedule))
            elif budget is not None:
                left = budget - used - (len(levels) - 1 - i)
                cfg = replace(cfg, max_sweeps=max(1, min(cfg.max_sweeps, left)))
            if idx == 0 and len(levels) > 1:
                # the coarse spectrum can be nearly degenerate (H2+ at 2^4 per
                # dimension: sigma_u and pi_u 2e-4 apart); padding every bond
                # to its cap makes the middle windows span the whole coarse
                # space, so the coarse state is the true lowest one
                cfg = replace(cfg, expand=max(cfg.expand, cfg.truncation.max_bond or 0))
            spec = HamiltonianSpec(problem.kinetic, pot, external=ext)
            ham = assemble_hamiltonian(spec, g, problem.bc)
            pens = [(_normalized(pl[i][0]).replace(grid=g), mu) for pl, (_, mu) in zip(pen_levels, pen_fine)]
            ham = ham.with_penalties(pens)
            t0 = time.perf_counter()
            if x is None:
                x = random_tt(g.n_sites, 2, rng, normalize=True).replace(grid=g)
            else:
                x, _ = prolong(x, x.grid, schedule.prolongation, cfg.truncation)
                x = _normalized(x)
            start = mpo_expectation(ham.mpo() if pens else ham.op, x) / inner(x, x)
            e, x, rep = dmrg_solve(ham, x, cfg, seed=schedule.seed + m)
            x = x.replace(grid=g)
            used += rep.n_sweeps
            report.extend(rep, state=m, level=i, n_sites=g.n_sites)
            report.levels.append({
                "state": m, "level": i, "n_sites": g.n_sites, "initial_energy": start,
                "energy": e, "sweeps": rep.n_sweeps, "max_bond": x.max_bond,
                "params": x.parameter_count, "converged": rep.converged,
                "time": time.perf_counter() - t0,
            })
            report.converged = rep.converged
            if on_level is not None:
                on_level(i, x, g, state=m, energy=e)
            h_plain = ham.op
        energy = mpo_expectation(h_plain, x)
        mu = penalty if penalty is not None else max(10.0 * abs(energy), 1.0)
        states.append((energy, x, mu))
    out = sorted(((e, x) for e, x, _ in states), key=lambda p: p[0])
    return out, report
