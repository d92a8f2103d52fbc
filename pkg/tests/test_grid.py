import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qttmg.core import random_tt, to_dense
from qttmg.grid import (
    FunctionAdaptor,
    Ordering,
    QuanticsGrid,
    bits_to_point,
    bits_to_points,
    build_delta,
    build_separable,
    index_to_bits,
    interleaved,
    marginal_squared,
    slice_values,
    subgrid,
)


def test_index_to_bits_examples():
    g1 = QuanticsGrid(((0, 1),), (3,))
    assert index_to_bits(g1, (5,)) == (1, 0, 1)
    g2 = QuanticsGrid(((0, 1), (0, 1)), (2, 2))
    assert index_to_bits(g2, (2, 1)) == (1, 0, 0, 1)
    gi = QuanticsGrid(((0, 1), (0, 1)), (2, 2), interleaved((0, 1)))
    # slots x_1, y_1, x_2, y_2
    assert index_to_bits(gi, (2, 1)) == (1, 0, 0, 1)
    assert index_to_bits(gi, (1, 2)) == (0, 1, 1, 0)
    with pytest.raises(ValueError):
        index_to_bits(g1, (8,))


def test_bits_to_point_examples():
    g = QuanticsGrid(((-50, 50),) * 2, (3, 3))
    assert bits_to_point(g, [0] * 6) == (-50.0, -50.0)
    assert bits_to_point(QuanticsGrid(((0, 1),), (1,)), [1]) == (0.5,)
    assert bits_to_point(QuanticsGrid(((-50, 50),), (3,)), [1, 0, 0]) == (0.0,)
    with pytest.raises(ValueError):
        bits_to_point(g, [0, 1])


def test_centering_variants():
    cell = QuanticsGrid(((0, 1),), (2,), centering="cell")
    assert np.allclose(cell.points(0), [0.125, 0.375, 0.625, 0.875])
    inner = QuanticsGrid(((0, 1),), (2,), centering="interior")
    assert np.allclose(inner.points(0), [0.2, 0.4, 0.6, 0.8])
    assert inner.coarsened().centering == ("interior",)


@pytest.mark.parametrize("bits", [1, 4, 10])
def test_encoding_reproduces_affine_map(bits):
    g = QuanticsGrid(((-2.0, 3.0),), (bits,))
    idx = np.arange(2 ** bits)
    pts = bits_to_points(g, np.array([index_to_bits(g, (a,)) for a in idx]))[:, 0]
    assert np.array_equal(pts, -2.0 + 5.0 / 2 ** bits * idx)


def test_build_delta():
    g = QuanticsGrid(((0, 1),), (4,))
    d = to_dense(build_delta(g, (0,)))
    assert d[0] == 1 and d[1] == 0 and d.sum() == 1


def test_build_separable():
    g = QuanticsGrid(((0, 1),) * 2, (3, 3))
    one = build_separable(g, [np.ones(8), np.ones(8)])
    assert one.max_bond == 1 and np.allclose(to_dense(one), 1)
    g1 = QuanticsGrid(((0, 1),), (3,))
    x = g1.points(0)
    assert np.allclose(to_dense(build_separable(g1, [x])), x)
    g2 = QuanticsGrid(((-1, 1), (0, 1)), (5, 5), Ordering("scale"))
    w = 0.7
    tt = build_separable(g2, [np.sin(np.pi * g2.points(0) / w), np.ones(32)])
    ref = np.sin(np.pi * g2.points(0) / w)[:, None] * np.ones(32)[None, :]
    assert np.abs(g2.to_array(tt) - ref).max() <= 1e-12


@pytest.mark.parametrize("ordering", [Ordering("sequential"), Ordering("scale"), interleaved((0, 2), (1,))])
def test_layout_is_consistent_permutation(ordering):
    g = QuanticsGrid(((0, 1),) * 3, (2, 3, 4), ordering)
    assert sorted(g.layout) == sorted((d, l) for d in range(3) for l in range(g.bits[d]))
    arr = np.random.default_rng(0).standard_normal((4, 8, 16))
    tt = g.from_array(arr)
    assert np.abs(g.to_array(tt) - arr).max() <= 1e-12
    # evaluating via bits agrees with the array
    idx = (3, 5, 9)
    from qttmg.core import evaluate
    assert abs(evaluate(tt, index_to_bits(g, idx)) - arr[idx]) <= 1e-12


def test_sample_and_adaptor():
    g = QuanticsGrid(((0, 1), (0, 2)), (2, 2))
    f = FunctionAdaptor(lambda x, y: x + 10 * y, "lin")
    vals = g.sample(f)
    assert vals.shape == (4, 4) and vals[1, 2] == 0.25 + 10 * 1.0
    assert f.n_evals == 16


@pytest.mark.parametrize("ordering", [Ordering("sequential"), Ordering("scale")])
def test_marginal_and_slice(ordering):
    rng = np.random.default_rng(1)
    g = QuanticsGrid(((0, 1),) * 3, (3, 3, 3), ordering)
    tt = random_tt(9, 3, rng).replace(grid=g)
    arr = g.to_array(tt)
    m, sub = marginal_squared(tt, g, [0, 2])
    ref = (arr ** 2).sum(axis=1)
    assert sub.bits == (3, 3)
    assert np.abs(sub.to_array(m) - ref).max() <= 1e-12 * np.abs(ref).max()
    coords, vals = slice_values(tt, g, 1, {0: 2, 2: 5})
    assert np.allclose(coords, g.points(1))
    assert np.abs(vals - arr[2, :, 5]).max() <= 1e-12 * np.abs(arr).max()


def test_subgrid_rejects_bad_keep():
    g = QuanticsGrid(((0, 1),) * 2, (2, 2))
    with pytest.raises(ValueError):
        subgrid(g, [0, 0])
    with pytest.raises(ValueError):
        subgrid(g, [])


@settings(max_examples=40, deadline=None)
@given(rx=st.integers(1, 4), ry=st.integers(1, 4), data=st.data())
def test_roundtrip_index_bits(rx, ry, data):
    g = QuanticsGrid(((0, 1), (0, 1)), (rx, ry), Ordering("scale"))
    a = data.draw(st.integers(0, 2 ** rx - 1))
    b = data.draw(st.integers(0, 2 ** ry - 1))
    pt = bits_to_point(g, index_to_bits(g, (a, b)))
    assert pt == (a / 2 ** rx, b / 2 ** ry)
