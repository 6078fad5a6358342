import numpy as np
import pytest
from scipy import integrate

from fbm_ips.errors import ConfigError
from fbm_ips.fbm import TimeGrid, fbm_covariance
from fbm_ips.kernels import build_kernel_weights, double_integral, phi, separable_double_integral


def test_phi_examples():
    assert phi(0.75, 1.0, 0.0) == pytest.approx(0.375)
    assert phi(0.75, 4.0, 0.0) == pytest.approx(0.1875)
    assert phi(0.5 + 1e-12, 2.0, 1.0) == pytest.approx(0.0, abs=1e-11)


def test_phi_diagonal_rejected():
    with pytest.raises(ValueError):
        phi(0.7, 0.3, 0.3)


def test_weights_need_h_above_half():
    with pytest.raises(ConfigError, match="Ito"):
        build_kernel_weights(0.5, TimeGrid(1.0, 10))


@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_total_mass_and_symmetry(h):
    g = TimeGrid(1.7, 100)
    w = build_kernel_weights(h, g)
    assert np.array_equal(w.cell_mass, w.cell_mass.T)
    assert np.all(w.cell_mass >= 0)
    assert w.cell_mass.sum() == pytest.approx(1.7 ** (2 * h), rel=1e-10)
    assert w.triangular_mass.sum() == pytest.approx(0.5 * 1.7 ** (2 * h), rel=1e-10)
    assert np.allclose(np.diag(w.cell_mass), g.dt ** (2 * h), rtol=1e-12)


def test_partial_sums_telescope_to_covariance():
    h = 0.7
    g = TimeGrid(1.0, 40)
    w = build_kernel_weights(h, g)
    for j, k in [(5, 17), (40, 3), (22, 22)]:
        assert w.cell_mass[:j, :k].sum() == pytest.approx(fbm_covariance(h, g.node(j), g.node(k)), rel=1e-10)


def test_off_diagonal_cell_against_quadrature():
    h = 0.75
    g = TimeGrid(1.0, 20)
    w = build_kernel_weights(h, g)
    for j, k in [(10, 3), (19, 0), (7, 5)]:
        val, _ = integrate.dblquad(lambda s, t: phi(h, t, s), g.node(j), g.node(j + 1),
                                   g.node(k), g.node(k + 1), epsabs=0, epsrel=1e-12)
        assert w.cell_mass[j, k] == pytest.approx(val, rel=1e-8)


def test_strict_lower_drops_diagonal():
    w = build_kernel_weights(0.7, TimeGrid(1.0, 10))
    assert np.all(np.diag(w.strict_lower_mass) == 0)
    assert np.array_equal(np.tril(w.strict_lower_mass, -1), np.tril(w.cell_mass, -1))


def test_double_integral_of_one():
    h = 0.8
    g = TimeGrid(2.0, 30)
    w = build_kernel_weights(h, g)
    ones = np.ones((31, 31))
    assert double_integral(ones, w, "full") == pytest.approx(2.0 ** (2 * h), rel=1e-10)
    assert double_integral(ones, w, "lower_triangle") == pytest.approx(0.5 * 2.0 ** (2 * h), rel=1e-10)


def test_double_integral_ts_against_quadrature():
    h = 0.75
    g = TimeGrid(1.0, 256)
    w = build_kernel_weights(h, g)
    t = g.times
    approx = double_integral(t[:, None] * t[None, :], w)
    # substitute u = |t - s| to remove the singularity from the inner integral
    exact, _ = integrate.dblquad(lambda u, s: 2 * s * (s + u) * h * (2 * h - 1) * u ** (2 * h - 2),
                                 0, 1, 0, lambda s: 1 - s, epsrel=1e-12)
    assert approx == pytest.approx(exact, rel=1e-4)


def test_refinement_error_halves():
    h = 0.7
    f = lambda t, s: np.sin(3 * t) + s  # noqa: E731
    vals = []
    for n in (32, 64, 128, 1024):
        g = TimeGrid(1.0, n)
        vals.append(double_integral(f(g.times[:, None], g.times[None, :]), build_kernel_weights(h, g)))
    e1, e2, e3 = (abs(v - vals[-1]) for v in vals[:3])
    assert 1.5 <= e1 / e2 <= 2.5 and 1.5 <= e2 / e3 <= 2.5


def test_refinement_error_at_least_first_order():
    h = 0.7
    for f in (lambda t, s: np.sin(3 * t) + s, lambda t, s: np.abs(t - s)):
        vals = []
        for n in (32, 64, 128, 1024):
            g = TimeGrid(1.0, n)
            vals.append(double_integral(f(g.times[:, None], g.times[None, :]), build_kernel_weights(h, g)))
        e1, e2, e3 = (abs(v - vals[-1]) for v in vals[:3])
        assert e1 / e2 >= 1.5 and e2 / e3 >= 1.5


def test_separable_matches_dense():
    h = 0.65
    g = TimeGrid(1.0, 30)
    w = build_kernel_weights(h, g)
    rng = np.random.default_rng(0)
    a, c = rng.normal(size=(2, 31))
    for region in ("full", "lower_triangle", "strict_lower"):
        dense = double_integral(a[:, None] * c[None, :], w, region)
        assert separable_double_integral(a, c, w, region) == pytest.approx(dense, rel=1e-12)


def test_shape_mismatch():
    w = build_kernel_weights(0.7, TimeGrid(1.0, 10))
    with pytest.raises(ValueError):
        double_integral(np.ones((10, 10)), w)
