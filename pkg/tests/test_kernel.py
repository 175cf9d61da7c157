import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokes_ctm.errors import AdmissibilityError, GridError
from stokes_ctm.fitting import fit_linear
from stokes_ctm.kernel import (build_kernel, check_admissible, core_mass,
                               early_time_gaussian_error, fit_kernel_norms, gaussian,
                               kernel_norm_scaling)

HORIZONS = (0.2, 0.3, 0.5, 0.8, 1.2)
SLOPE_BASELINE = 0.932


@pytest.fixture(scope="module")
def k05():
    return build_kernel(2.5, 0.5, 1001, 129)


def test_initial_row_is_grid_delta(k05):
    k0 = k05.values[0]
    mid = k05.s.size // 2
    assert k0[mid] == 1 / k05.ds
    assert np.all(np.delete(k0, mid) == 0)
    assert np.sum(k05.s_weights * k0) == pytest.approx(1.0, rel=1e-12)


def test_terminal_and_boundary(k05):
    assert k05.terminal_ratio <= 1e-6
    assert k05.row_norm(-1) <= 1e-6 * k05.row_norm(0)
    assert k05.boundary[0] == 0
    np.testing.assert_array_equal(k05.values[:, 0], k05.boundary)
    np.testing.assert_array_equal(k05.values[:, -1], k05.boundary)


def test_even_in_s(k05):
    assert k05.evenness() <= 1e-6


def test_early_time_gaussian(k05):
    assert early_time_gaussian_error(k05) <= 0.02
    assert core_mass(k05) == pytest.approx(1.0, abs=1e-6)


def test_row_extension_and_interpolation(k05):
    assert np.all(k05.row(-0.1) == 0) and np.all(k05.row(0.6) == 0)
    np.testing.assert_array_equal(k05.row(k05.t[3]), k05.values[3])
    mid = 0.5 * (k05.t[3] + k05.t[4])
    np.testing.assert_allclose(k05.row(mid), 0.5 * (k05.values[3] + k05.values[4]))


def test_refine_reproduces_nodes(k05):
    r = k05.refine(2)
    np.testing.assert_allclose(r.values[::2], k05.values, atol=1e-9 * np.abs(k05.values).max())


def test_heat_residual_second_order(k05):
    res = [k05.refine(f).heat_residual() for f in (1, 2, 4)]
    rates = np.log2(np.array(res[:-1]) / res[1:])
    assert np.all(rates > 1.8)


@pytest.mark.parametrize("L,T", [(2.5, 0.0), (2.5, 2.6), (1.0, 1.1), (2.5, -1.0)])
def test_inadmissible_horizon(L, T):
    with pytest.raises(AdmissibilityError):
        check_admissible(L, T)
    with pytest.raises(AdmissibilityError):
        build_kernel(L, T)


@pytest.mark.parametrize("kw", [dict(n_s=1000), dict(n_s=41), dict(n_t=5)])
def test_grid_errors(kw):
    args = dict(n_s=1001, n_t=65) | kw
    with pytest.raises(GridError):
        build_kernel(2.5, 0.2, **args)


def test_norm_scaling_fit():
    rep = kernel_norm_scaling(2.5, HORIZONS, 1001, 257)
    assert rep.ok
    assert rep.fit.r2 >= 0.95 and rep.fit.slope > 0
    assert rep.fit.slope == pytest.approx(SLOPE_BASELINE, rel=0.02)
    assert np.all(np.diff(rep.norm_sq) < 0)
    with pytest.raises(ValueError):
        kernel_norm_scaling(2.5, HORIZONS[:3])


def test_fit_kernel_norms_synthetic():
    T = np.array([0.2, 0.3, 0.5, 0.8])
    rep = fit_kernel_norms(2.0, T, np.exp(1.5 + 0.7 * 4.0 / T))
    assert rep.fit.slope == pytest.approx(0.7) and rep.fit.intercept == pytest.approx(1.5)
    assert rep.fit.r2 == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(1e-3, 1.0))
def test_gaussian_unit_mass(t):
    s = np.linspace(-20 * math.sqrt(t), 20 * math.sqrt(t), 4001)
    assert np.trapezoid(gaussian(s, t), s) == pytest.approx(1.0, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_fit_linear_exact(a, b):
    x = np.linspace(1, 10, 7)
    f = fit_linear(x, a + b * x)
    assert f.slope == pytest.approx(b, abs=1e-9) and f.intercept == pytest.approx(a, abs=1e-8)
    assert f.rss <= 1e-15 * max(1, a * a + 100 * b * b) * 10
