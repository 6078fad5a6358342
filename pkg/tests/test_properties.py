import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fbm_ips.estimators import ContrastGrid, contrast_value
from fbm_ips.fbm import TimeGrid, fbm_covariance
from fbm_ips.kernels import build_kernel_weights
from fbm_ips.simulation import wasserstein2_1d

from conftest import simulate

hursts = st.floats(0.51, 0.99)
small_samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=6)


@given(h=st.floats(0.01, 0.99), t=st.floats(0, 10), s=st.floats(0, 10))
def test_covariance_symmetric_and_diagonal(h, t, s):
    assert fbm_covariance(h, t, s) == fbm_covariance(h, s, t)
    assert np.isclose(fbm_covariance(h, t, t), t ** (2 * h))
    assert fbm_covariance(h, t, s) <= np.sqrt(t ** (2 * h) * s ** (2 * h)) + 1e-12


@settings(max_examples=30, deadline=None)
@given(h=hursts, n=st.integers(2, 60), horizon=st.floats(0.1, 5), j=st.integers(0, 60), k=st.integers(0, 60))
def test_kernel_symmetry_and_telescoping(h, n, horizon, j, k):
    g = TimeGrid(horizon, n)
    w = build_kernel_weights(h, g)
    assert np.array_equal(w.cell_mass, w.cell_mass.T)
    j, k = min(j, n), min(k, n)
    assert np.isclose(w.cell_mass[:j, :k].sum(), fbm_covariance(h, g.node(j), g.node(k)), rtol=1e-10, atol=1e-14)


@given(a=small_samples, b=small_samples)
def test_wasserstein_metric_axioms(a, b):
    d = wasserstein2_1d(a, b)
    assert d >= 0
    assert np.isclose(d, wasserstein2_1d(b, a))
    assert wasserstein2_1d(a, a) == 0


@given(data=st.data(), n=st.integers(1, 5))
def test_wasserstein_sorted_coupling_is_optimal(data, n):
    elems = st.floats(-50, 50, allow_nan=False)
    a = data.draw(st.lists(elems, min_size=n, max_size=n))
    b = data.draw(st.lists(elems, min_size=n, max_size=n))
    brute = min(np.mean((np.array(a) - np.array(p)) ** 2) for p in itertools.permutations(b))
    assert np.isclose(wasserstein2_1d(a, b) ** 2, brute, rtol=1e-9, atol=1e-9)


@given(n=st.integers(1, 5), m=st.integers(1, 5), data=st.data())
def test_wasserstein_triangle(n, m, data):
    elems = st.floats(-50, 50, allow_nan=False)
    a = data.draw(st.lists(elems, min_size=n, max_size=n))
    b = data.draw(st.lists(elems, min_size=m, max_size=m))
    c = data.draw(st.lists(elems, min_size=n, max_size=n))
    assert wasserstein2_1d(a, c) <= wasserstein2_1d(a, b) + wasserstein2_1d(b, c) + 1e-9


_ENS = simulate("arctan", (3.0,), 0.7, 5, 40)


@given(a=st.floats(-20, 20), b=st.floats(-20, 20))
def test_contrast_convex_in_theta(a, b):
    qa, qb = contrast_value(_ENS, [a]), contrast_value(_ENS, [b])
    qm = contrast_value(_ENS, [(a + b) / 2])
    assert qm <= (qa + qb) / 2 + 1e-9 * (abs(qa) + abs(qb) + 1)


@given(lo=st.floats(-10, 10), width=st.floats(0, 10), mesh=st.floats(0.01, 1))
def test_contrast_grid_axes(lo, width, mesh):
    ax = ContrastGrid.uniform(1, lo, lo + width, mesh).axes()[0]
    assert np.isclose(ax[0], lo)
    assert ax[-1] <= lo + width + 1e-9
    assert np.all(np.diff(ax) > 0)
