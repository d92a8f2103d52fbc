import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qttmg.core import apply, constant, mpo_to_dense, random_tt, to_dense
from qttmg.grid import Ordering, QuanticsGrid, build_delta, interleaved
from qttmg.scale_ops import (
    ProlongationKind,
    RestrictionKind,
    averaging_mpo,
    magic_tensor,
    multi_shift_mpo,
    multi_shift_mps,
    prolong,
    restrict,
    shift_mpo,
    shift_train,
)

FOUR = ((-1, -1 / 6), (0, 4 / 6), (1, 4 / 6), (2, -1 / 6))


def grid1(bits):
    return QuanticsGrid(((0.0, 1.0),), (bits,))


def convolve(f, stencil, periodic=False):
    n = len(f)
    g = np.zeros(n)
    for k, w in stencil:
        for a in range(n):
            b = a + k
            if periodic:
                b %= n
            if 0 <= b < n:
                g[a] += w * f[b]
    return g


def test_restrict_avg_constant():
    g = QuanticsGrid(((0, 1), (0, 1)), (3, 4), Ordering("scale"))
    out, gc = restrict(constant(7, 2.5).replace(grid=g), g, "avg")
    assert gc.bits == (2, 3)
    assert np.allclose(to_dense(out), 2.5)


def test_restrict_cst_subsamples():
    g = grid1(4)
    x = g.points(0)
    out, gc = restrict(g.from_array(x), g, RestrictionKind.CST)
    assert np.abs(to_dense(out) - x[::2]).max() <= 1e-14


@pytest.mark.parametrize("ordering", [Ordering("sequential"), Ordering("scale"), interleaved((0, 1))])
def test_restrict_2d(ordering):
    g = QuanticsGrid(((0, 1), (0, 2)), (3, 4), ordering)
    f = np.random.default_rng(0).standard_normal((8, 16))
    t = g.from_array(f)
    a, ga = restrict(t, g, "avg")
    ref = 0.25 * (f[::2, ::2] + f[1::2, ::2] + f[::2, 1::2] + f[1::2, 1::2])
    assert np.abs(ga.to_array(a) - ref).max() <= 1e-13
    c, gc = restrict(t, g, "cst")
    assert np.abs(gc.to_array(c) - f[::2, ::2]).max() <= 1e-13
    assert abs(to_dense(a).mean() - f.mean()) <= 1e-14


def test_restrict_one_bit_rejected():
    g = grid1(1)
    with pytest.raises(ValueError):
        restrict(constant(1).replace(grid=g), g)


def test_prolong_constant_delta():
    g = grid1(3)
    out, gf = prolong(build_delta(g, (5,)), g, "constant")
    ref = np.zeros(16)
    ref[10] = ref[11] = 1
    assert np.array_equal(to_dense(out), ref)


def test_prolong_linear_affine():
    g = grid1(5)
    x = g.points(0)
    out, gf = prolong(g.from_array(3 * x - 1), g, "linear")
    fine = to_dense(out)
    f = 3 * x - 1
    assert np.abs(fine[::2] - f).max() <= 1e-12
    assert np.abs(fine[1:-1:2] - 0.5 * (f[:-1] + f[1:])).max() <= 1e-12
    # affine data reproduced on the interior of the fine grid
    assert np.abs(fine[:-1] - (3 * gf.points(0)[:-1] - 1)).max() <= 1e-12


def test_four_point_stencil_matches_its_definition():
    g = grid1(6)
    f = np.random.default_rng(1).standard_normal(64)
    out, _ = prolong(g.from_array(f), g, ProlongationKind.four_point())
    fine = to_dense(out)
    assert np.abs(fine[::2] - f).max() <= 1e-12
    assert np.abs(fine[1::2] - convolve(f, FOUR)).max() <= 1e-12


def test_cubic_midpoint_rule_exact_on_cubics():
    g = grid1(6)
    p = lambda x: 2 * x ** 3 - x ** 2 + 0.5 * x - 3
    out, gf = prolong(g.from_array(p(g.points(0))), g, ProlongationKind.cubic())
    fine = to_dense(out)
    xf = gf.points(0)
    interior = slice(3, 2 ** 7 - 4)
    assert np.abs(fine[interior] - p(xf[interior])).max() <= 1e-10


def test_shift_mpo_examples():
    g = grid1(3)
    s = shift_mpo(3)
    assert s.max_bond == 2 and s.bond_dims == [1, 2, 2, 1]
    assert np.array_equal(to_dense(apply(s, build_delta(g, (0,)))), to_dense(build_delta(g, (1,))))
    # 0b011 -> 0b100: the carry ripples through the trailing ones
    assert np.array_equal(to_dense(apply(s, build_delta(g, (3,)))), to_dense(build_delta(g, (4,))))
    assert np.all(to_dense(apply(s, build_delta(g, (7,)))) == 0)


@pytest.mark.parametrize("offset", [1, -1])
@pytest.mark.parametrize("periodic", [False, True])
def test_shift_mpo_dense(offset, periodic):
    n = 6
    m = mpo_to_dense(shift_mpo(n, offset, periodic))
    ref = np.zeros((64, 64))
    for a in range(64):
        b = a + offset
        if periodic:
            b %= 64
        if 0 <= b < 64:
            ref[b, a] = 1
    assert np.array_equal(m, ref)


def test_averaging_mpo():
    n = 5
    f = np.random.default_rng(2).standard_normal(32)
    w = averaging_mpo(n)
    assert w.max_bond == 2
    assert np.abs(mpo_to_dense(w) @ f - 0.5 * (f + np.append(f[1:], 0))).max() <= 1e-14


def test_magic_tensor_adds_with_carry():
    m = magic_tensor()
    for z, x, y, c, cp in np.ndindex(*m.shape):
        s = x + y + cp
        assert m[z, x, y, c, cp] == float(z == s % 2 and c == s // 2)


def test_shift_train_values():
    pos, neg = shift_train(4, FOUR)
    tp, tn = to_dense(pos), to_dense(neg)
    assert np.allclose(tp[:3], [4 / 6, 4 / 6, -1 / 6]) and np.allclose(tp[3:], 0)
    assert np.isclose(tn[15], -1 / 6) and np.allclose(tn[:15], 0)
    assert pos.max_bond <= 4


def test_multi_shift_identity_and_four_point():
    rng = np.random.default_rng(3)
    f = rng.standard_normal(64)
    t = grid1(6).from_array(f)
    assert np.abs(to_dense(multi_shift_mps(t, [(0, 1.0)])) - f).max() <= 1e-12
    assert np.abs(to_dense(multi_shift_mps(t, FOUR)) - convolve(f, FOUR)).max() <= 1e-12


@pytest.mark.parametrize("periodic", [False, True])
def test_multi_shift_irregular_stencil(periodic):
    st_ = [(-2, 0.1), (-1, -0.3), (0, 0.5), (1, 0.4), (3, 0.3)]
    f = np.random.default_rng(4).standard_normal(32)
    m = mpo_to_dense(multi_shift_mpo(5, st_, periodic))
    assert np.abs(m @ f - convolve(f, st_, periodic)).max() <= 1e-12


def test_prolongation_kind_validation():
    with pytest.raises(ValueError):
        ProlongationKind("high_order", ((0, 0.5),))
    with pytest.raises(ValueError):
        ProlongationKind("quintic")
    assert ProlongationKind.linear().effective_stencil() == ((0, 0.5), (1, 0.5))


@settings(max_examples=25, deadline=None)
@given(bits=st.integers(1, 8), seed=st.integers(0, 2 ** 31))
def test_cst_undoes_constant_prolongation(bits, seed):
    g = grid1(bits)
    t = random_tt(bits, 2, np.random.default_rng(seed)).replace(grid=g)
    p, gf = prolong(t, g, "constant")
    r, _ = restrict(p, gf, "cst")
    assert np.abs(to_dense(r) - to_dense(t)).max() <= 1e-12 * (1 + np.abs(to_dense(t)).max())


@settings(max_examples=25, deadline=None)
@given(bits=st.integers(1, 8), seed=st.integers(0, 2 ** 31))
def test_avg_after_linear_prolongation(bits, seed):
    # averaging the pair (f_a, (f_a + f_{a+1})/2) gives (3 f_a + f_{a+1}) / 4,
    # so Avg is a left inverse of Constant prolongation, and for Linear the
    # composition is the smoothing (3, 1)/4 stencil
    g = grid1(bits)
    t = random_tt(bits, 2, np.random.default_rng(seed)).replace(grid=g)
    f = to_dense(t)
    p, gf = prolong(t, g, "constant")
    r, _ = restrict(p, gf, "avg")
    assert np.abs(to_dense(r) - f).max() <= 1e-12 * (1 + np.abs(f).max())
    p, gf = prolong(t, g, "linear")
    r, _ = restrict(p, gf, "avg")
    ref = 0.75 * f + 0.25 * np.append(f[1:], 0)
    assert np.abs(to_dense(r) - ref).max() <= 1e-12 * (1 + np.abs(f).max())


@settings(max_examples=25, deadline=None)
@given(bits=st.integers(2, 8), seed=st.integers(0, 2 ** 31))
def test_avg_preserves_mean(bits, seed):
    g = grid1(bits)
    t = random_tt(bits, 3, np.random.default_rng(seed)).replace(grid=g)
    r, _ = restrict(t, g, "avg")
    assert abs(to_dense(r).mean() - to_dense(t).mean()) <= 1e-14 * (1 + np.abs(to_dense(t)).max())
