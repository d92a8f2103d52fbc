"""Two-site tensor cross interpolation of a black-box function on a quantics
grid.

Each window (k, k+1) picks the pivots of bond k+1 from scratch by partial
LU with complete pivoting on the block f(I_k x {0,1}, {0,1} x J_{k+2}), so
pivots chosen early can be replaced once a bond is full. The train is
assembled as T_0 P_1^{-1} T_1 ... with T_k[a, s, b] = f(I_k[a], s, J_{k+1}[b])
and P_k = f(I_k, J_k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .core import TensorTrain, zeros
from .grid import FunctionAdaptor, QuanticsGrid, bits_to_points

ZERO_FLOOR = 1e-14  # residuals below this times max|f| count as zero
NOISE = 64 * np.finfo(float).eps
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CrossState:
    """Pivot sets per bond (row prefixes ``rows[k]`` of length k, column
    suffixes ``cols[k]`` of length N - k), the current train and its error."""

    rows: list[list[tuple[int, ...]]]
    cols: list[list[tuple[int, ...]]]
    tt: TensorTrain | None = None
    pivot_error: float = np.inf
    max_bond: int = 0
    rank_step: int | None = None
    sweeps: int = 0
    n_evals: int = 0
    history: list[float] = field(default_factory=list)
    scale: float = 0.0
    globals: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def ranks(self) -> list[int]:
        return [len(r) for r in self.rows]


class _Evaluator:
    def __init__(self, f: FunctionAdaptor, grid: QuanticsGrid):
        self.f = f
        self.grid = grid
        self.n_evals = 0
        self.scale = 0.0

    def __call__(self, bits: np.ndarray) -> np.ndarray:
        pts = bits_to_points(self.grid, bits)
        vals = np.array(self.f.on_points(pts), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(
                f"non-finite value {vals[i]} of {self.f.name} at grid point "
                f"{tuple(float(x) for x in pts[i])} (bits {''.join(map(str, bits[i]))})"
            )
        self.n_evals += vals.size
        if vals.size:
            self.scale = max(self.scale, float(np.abs(vals).max()))
        return vals

    def block(self, rows: list[tuple], cols: list[tuple]) -> np.ndarray:
        """Matrix f(row + col) for prefix rows and suffix cols."""
        if not rows or not cols:
            return np.zeros((len(rows), len(cols)))
        r = np.asarray(rows, dtype=np.int8).reshape(len(rows), -1)
        c = np.asarray(cols, dtype=np.int8).reshape(len(cols), -1)
        full = np.concatenate(
            [np.repeat(r, len(cols), axis=0), np.tile(c, (len(rows), 1))], axis=1
        )
        return self(full).reshape(len(rows), len(cols))


def _seed_pivot(ev: _Evaluator, n: int, seeds) -> tuple[int, ...] | None:
    candidates = []
    if seeds is not None:
        candidates += [tuple(int(b) for b in s) for s in seeds]
    else:
        candidates.append((0,) * n)
    # fixed low-discrepancy fallback list (golden-ratio sequence)
    for j in range(1, 1025):
        x = (j * _GOLDEN) % 1.0
        idx = int(x * 2.0 ** n)
        candidates.append(tuple((idx >> (n - 1 - p)) & 1 for p in range(n)))
    if any(len(bits) != n for bits in candidates):
        raise ValueError("seed pivot has the wrong number of bits")
    # the largest value: a tiny seed would scale every pivot matrix badly
    vals = np.abs(ev(np.asarray(candidates, dtype=np.int8)))
    best = int(np.argmax(vals))
    return candidates[best] if vals[best] > 0 else None


def _partial_lu(m: np.ndarray, max_rank: int, limit: float, floor: float):
    """Rows and columns of the pivots chosen by complete pivoting on ``m``,
    stopping at ``max_rank`` or once the largest residual is at most
    ``limit``. Returns (rows, cols, largest residual left)."""
    res = m.copy()
    growth = float(np.abs(m).max()) if m.size else 0.0
    ri, ci = [], []
    while len(ri) < max_rank and res.size:
        flat = int(np.argmax(np.abs(res)))
        i, j = divmod(flat, res.shape[1])
        # rounding in the eliminations is ~eps times the largest update,
        # so residuals below that level are noise, not pivots
        if abs(res[i, j]) <= max(limit, floor, NOISE * growth):
            break
        ri.append(i)
        ci.append(j)
        upd = np.outer(res[:, j], res[i, :]) / res[i, j]
        growth = max(growth, float(np.abs(upd).max()))
        res -= upd
        # exact zeros: round-off must not re-select a pivot row or column
        res[i, :] = 0.0
        res[:, j] = 0.0
    return ri, ci, float(np.abs(res).max()) if res.size else 0.0


def _update_bond(ev: _Evaluator, state: CrossState, k: int, tol: float) -> float:
    """Visit the window of sites (k, k+1) and choose the pivots of bond k+1
    afresh from the two-site block (plus the global pivots).

    Returns the largest residual left on the window's candidates."""
    rows = list(dict.fromkeys([r + (s,) for r in state.rows[k] for s in (0, 1)]
                              + [g[:k + 1] for g in state.globals]))
    cols = list(dict.fromkeys([(s,) + c for s in (0, 1) for c in state.cols[k + 2]]
                              + [g[k + 1:] for g in state.globals]))
    pi = ev.block(rows, cols)
    cap = state.max_bond
    if state.rank_step is not None:
        cap = min(cap, len(state.rows[k + 1]) + state.rank_step)
    ri, ci, err = _partial_lu(pi, cap, tol * ev.scale, ZERO_FLOOR * ev.scale)
    if ri:
        state.rows[k + 1] = [rows[i] for i in ri]
        state.cols[k + 1] = [cols[j] for j in ci]
    return err


def _full_pivot_lu(p: np.ndarray):
    """p[pr][:, pc] = l @ u with complete pivoting (|l| <= 1)."""
    a = p.astype(float).copy()
    n = a.shape[0]
    pr, pc = np.arange(n), np.arange(n)
    for k in range(n):
        i, j = divmod(int(np.argmax(np.abs(a[k:, k:]))), n - k)
        i += k
        j += k
        a[[k, i]] = a[[i, k]]
        a[:, [k, j]] = a[:, [j, k]]
        pr[[k, i]] = pr[[i, k]]
        pc[[k, j]] = pc[[j, k]]
        if a[k, k] == 0.0:
            raise np.linalg.LinAlgError("singular pivot matrix")
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return pr, pc, np.tril(a, -1) + np.eye(n), np.triu(a)


def _assemble(ev: _Evaluator, state: CrossState, n: int) -> TensorTrain:
    """Cores T_k P_k^{-1} with P_k = L U split across neighbours: site k keeps
    T_k U^{-1} and L^{-1} moves into site k + 1, so no core carries the raw
    inverse of an ill-conditioned pivot matrix."""
    cores = []
    carry = None
    for k in range(n):
        left = state.rows[k]
        right = [(s,) + c for s in (0, 1) for c in state.cols[k + 1]]
        t = ev.block(left, right).reshape(len(left), 2, len(state.cols[k + 1]))
        if carry is not None:
            t = np.tensordot(carry, t, axes=(1, 0))
        if k < n - 1:
            p = ev.block(state.rows[k + 1], state.cols[k + 1])
            mat = t.reshape(-1, p.shape[0])
            try:
                pr, pc, lo, up = _full_pivot_lu(p)
                sol = solve_triangular(up, mat[:, pc].T, trans="T").T
                carry = solve_triangular(lo, np.eye(len(pr))[pr], lower=True, unit_diagonal=True)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(p.T, mat.T, rcond=None)[0].T
                carry = None
            t = sol.reshape(t.shape)
        cores.append(t)
    return TensorTrain(cores)


def _train_values(tt: TensorTrain, bits: np.ndarray) -> np.ndarray:
    v = tt.cores[0][0][bits[:, 0]]
    for p in range(1, len(tt)):
        v = np.einsum("ma,amb->mb", v, tt.cores[p][:, bits[:, p], :])
    return v[:, 0]


def cross_interpolate(f: FunctionAdaptor | callable, grid: QuanticsGrid, max_bond: int = 64,
                      tol: float = 1e-12, max_sweeps: int = 20, rank_step: int | None = None,
                      seeds=None, global_samples: int = 512) -> tuple[TensorTrain, CrossState]:
    """Compress ``f`` (vectorized in the grid coordinates) into a train with
    bonds at most ``max_bond``.

    Once a sweep leaves the pivots unchanged, ``global_samples`` fixed
    pseudo-random grid points are checked against the train; the worst ones
    above tolerance join every later window as candidate pivots and sweeping
    resumes. ``pivot_error`` is the
    largest residual over the last sweep's candidates and those samples,
    relative to max|f| seen."""
    if max_bond < 1:
        raise ValueError("max_bond must be positive")
    if not isinstance(f, FunctionAdaptor):
        f = FunctionAdaptor(f)
    n = grid.n_sites
    ev = _Evaluator(f, grid)
    seed = _seed_pivot(ev, n, seeds)
    if seed is None:
        state = CrossState([[()]] + [[] for _ in range(n)], [[] for _ in range(n)] + [[()]],
                           tt=zeros(n).replace(grid=grid), pivot_error=0.0, max_bond=max_bond,
                           n_evals=ev.n_evals)
        return state.tt, state
    rows = [[seed[:k]] for k in range(n + 1)]
    cols = [[seed[k:]] for k in range(n + 1)]
    state = CrossState(rows, cols, max_bond=max_bond, rank_step=rank_step)
    probes = np.random.default_rng(0).integers(0, 2, (global_samples, n), dtype=np.int8)
    probe_vals = ev(probes) if global_samples else None
    tt = None
    order = list(range(n - 1)) + list(range(n - 2, -1, -1))
    for sweep in range(max_sweeps):
        before = [set(r) for r in state.rows]
        prev_err = state.history[-1] * ev.scale if state.history else np.inf
        err = 0.0
        for k in order:
            err = max(err, _update_bond(ev, state, k, tol))
        state.sweeps = sweep + 1
        scale = ev.scale if ev.scale > 0 else 1.0
        # a small error right after the first sweeps can be an artefact of
        # pivots that have not reached the features yet, so stop only once
        # a full sweep leaves the pivots (or the ranks and the error, when
        # near-equal candidates keep swapping) unchanged and the probes agree
        tt = None
        same_ranks = [len(r) for r in before] == state.ranks
        stalled = same_ranks and np.isfinite(prev_err) and err >= 0.5 * prev_err
        if [set(r) for r in state.rows] == before or stalled:
            if not global_samples:
                state.pivot_error = err / scale
                state.history.append(state.pivot_error)
                break
            tt = _assemble(ev, state, n)
            miss = np.abs(_train_values(tt, probes) - probe_vals)
            err = max(err, float(miss.max()))
            limit = max(tol * scale, ZERO_FLOOR * scale)
            known = set(state.globals)
            new = [tuple(int(b) for b in probes[j]) for j in np.argsort(-miss)[:4] if miss[j] > limit]
            new = [p for p in new if p not in known]
            if not new:
                state.pivot_error = err / scale
                state.history.append(state.pivot_error)
                break
            state.globals += new
            tt = None
        state.pivot_error = err / scale
        state.history.append(state.pivot_error)
    state.tt = (tt if tt is not None else _assemble(ev, state, n)).replace(grid=grid)
    state.n_evals = ev.n_evals
    state.scale = ev.scale
    return state.tt, state


def pivot_error_sweep(f, grid: QuanticsGrid, bond_list, tol: float = 0.0, max_sweeps: int = 10,
                      **kwargs) -> list[tuple[int, float]]:
    """(chi, pivot error) for each bond cap in ``bond_list``."""
    out = []
    for chi in bond_list:
        _, st = cross_interpolate(f, grid, max_bond=int(chi), tol=tol, max_sweeps=max_sweeps, **kwargs)
        out.append((int(chi), st.pivot_error))
    return out
