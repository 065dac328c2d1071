import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcmlab.connfn import (
    ConnFnError,
    exponential,
    gaussian,
    hard_disk,
    is_nonincreasing_on,
    make_variant,
    table_function,
    verify_identities,
)
from rcmlab.quadrature import adaptive_quad, radial_integral


GRID = np.linspace(0.0, 5.0, 51)

builtin = st.sampled_from(
    [hard_disk(1.0), hard_disk(0.4), exponential(1.0), exponential(0.5), gaussian(1.2)]
)


def test_eval_examples():
    assert hard_disk(1.0).eval(0.5) == 1.0
    assert exponential(1.0).truncate_outside(1.0).eval(0.5) == 0.0
    assert make_variant(exponential(1.0), "scaled", n=2.0).eval(0.5) == pytest.approx(
        math.exp(-1.0), abs=1e-12
    )


def test_indicator_ties_close_on_the_left():
    # 1{x <= R}: the boundary point belongs to the inside part
    f = exponential(1.0)
    assert f.truncate_inside(1.0).eval(1.0) == pytest.approx(math.exp(-1.0))
    assert f.truncate_outside(1.0).eval(1.0) == 0.0
    assert hard_disk(1.0).eval(1.0) == 1.0


def test_variant_formulas():
    g = exponential(1.0)
    # cut at R then scale: 1{x <= R/n} g(n x)
    v = make_variant(g, "cut_then_scale", R=2.0, n=4.0)
    assert v.eval(0.4) == pytest.approx(math.exp(-1.6), rel=1e-12)
    assert v.eval(0.6) == 0.0
    # scale then cut at R: 1{x <= R} g(n x)
    w = make_variant(g, "scale_then_cut", R=2.0, n=4.0)
    assert w.eval(1.0) == pytest.approx(math.exp(-4.0), rel=1e-12)
    assert w.eval(2.5) == 0.0
    # widened cut without scaling: 1{x <= n R} g(x)
    k = make_variant(g, "inside_scaled_radius", R=2.0, n=4.0)
    assert k.eval(7.9) == pytest.approx(math.exp(-7.9), rel=1e-12)
    assert k.eval(8.1) == 0.0


def test_inside_with_huge_radius_is_identity():
    g = exponential(1.0)
    v = make_variant(g, "inside", R=1e12)
    assert np.array_equal(v.eval(GRID), g.eval(GRID))


def test_non_commutation_of_cut_and_scale():
    g = exponential(1.0)
    sc = make_variant(g, "scale_then_cut", R=2.0, n=4.0)
    cs = make_variant(g, "cut_then_scale", R=2.0, n=4.0)
    assert sc.eval(1.0) == pytest.approx(math.exp(-4.0))
    assert cs.eval(1.0) == 0.0


def test_verify_identities_exponential():
    report = verify_identities(exponential(1.0), R=2.0, n=4.0, grid=GRID)
    assert report.ok, report.first_failure


def test_verify_identities_hard_disk_n1():
    report = verify_identities(hard_disk(1.0), R=0.5, n=1.0, grid=GRID)
    assert report.ok, report.first_failure


@given(builtin, st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([1.0, 2.0, 4.0, 8.0]))
def test_verify_identities_binary_scales(f, R, n):
    report = verify_identities(f, R=R, n=n, grid=GRID)
    assert report.ok, report.first_failure


@given(builtin, st.floats(0.1, 3.0))
def test_complement_is_exact(f, R):
    g_in = make_variant(f, "inside", R=R)
    g_out = make_variant(f, "outside", R=R)
    assert np.array_equal(g_in.eval(GRID) + g_out.eval(GRID), f.eval(GRID))


@given(builtin, st.floats(0.2, 3.0), st.floats(1.0, 8.0))
def test_bounds_and_monotone_inside_stacks(f, R, n):
    g = make_variant(f, "inside", R=R).scale(n)
    vals = g.eval(GRID)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    # outside truncations jump upward at the cut, so monotonicity is only
    # asserted for inside/scale stacks
    assert is_nonincreasing_on(g, GRID)


def test_table_function():
    f = table_function([(0.0, 1.0), (0.5, 0.8), (2.0, 0.0)])
    assert f.eval(0.25) == pytest.approx(0.9)
    assert f.eval(2.0) == 0.0
    assert f.eval(3.0) == 0.0
    assert f.support_radius == 2.0
    assert f.tail_radius(1e-9, 2) == 2.0


def test_table_validation():
    with pytest.raises(ConnFnError):
        table_function([(0.0, 1.0), (1.0, 0.5)])  # must end at 0
    with pytest.raises(ConnFnError):
        table_function([(0.0, 0.5), (1.0, 0.8), (2.0, 0.0)])  # increasing
    with pytest.raises(ConnFnError):
        table_function([(0.5, 1.0), (2.0, 0.0)])  # must start at 0
    with pytest.raises(ConnFnError):
        table_function([(0.0, 1.5), (2.0, 0.0)])  # above 1


def test_invalid_variant_and_params():
    g = exponential(1.0)
    with pytest.raises(ConnFnError):
        make_variant(g, "sideways", R=1.0, n=2.0)
    with pytest.raises(ConnFnError):
        make_variant(g, "inside", R=-1.0)
    with pytest.raises(ConnFnError):
        make_variant(g, "cut_then_scale", R=1.0, n=0.5)
    with pytest.raises(ConnFnError):
        exponential(-1.0)


def test_support_radius_tracking():
    g = hard_disk(1.0)
    assert g.support_radius == 1.0
    assert g.scale(4.0).support_radius == 0.25
    assert g.truncate_inside(0.5).support_radius == 0.5
    # outside-truncation beyond the support kills the function entirely
    dead = g.truncate_outside(1.0)
    assert dead.support_radius == 0.0
    assert np.all(dead.eval(GRID) == 0.0)
    assert exponential(1.0).support_radius is None


@pytest.mark.parametrize("f,d", [(exponential(1.0), 1), (exponential(0.7), 2), (gaussian(1.0), 3)])
@pytest.mark.parametrize("eps", [1e-6, 1e-9])
def test_tail_radius_soundness(f, d, eps):
    T = f.tail_radius(eps, d)
    total = radial_integral(f, d).value
    from rcmlab.connfn import sphere_surface

    om = sphere_surface(d)
    inside, _ = adaptive_quad(lambda r: om * r ** (d - 1) * f.eval(r), 0.0, T)
    assert total - inside < eps
    # doubling the cutoff changes the integral by less than eps
    wider, _ = adaptive_quad(lambda r: om * r ** (d - 1) * f.eval(r), 0.0, 2 * T)
    assert abs(wider - inside) < eps


def test_tail_radius_of_scaled_stack():
    f = exponential(1.0).scale(4.0)
    T = f.tail_radius(1e-8, 1)
    tail = radial_integral(f, 1).value - adaptive_quad(lambda r: 2 * f.eval(r), 0.0, T)[0]
    assert tail < 1e-8


def test_eval_accepts_scalars_and_arrays():
    f = exponential(1.0)
    assert isinstance(f.eval(1.0), float)
    out = f.eval(np.array([0.0, 1.0, 2.0]))
    assert out.shape == (3,)


def test_pickle_roundtrip():
    import pickle

    f = make_variant(gaussian(0.8), "cut_then_scale", R=1.0, n=2.0)
    g = pickle.loads(pickle.dumps(f))
    assert np.array_equal(f.eval(GRID), g.eval(GRID))
