import numpy as np
import pytest

from lawson_dpw import potential as po
from lawson_dpw import solver as so
from lawson_dpw.errors import InvalidSystem, NoConvergence, StepUnderflow
from lawson_dpw.loopalg import LaurentScalar


def test_sample_points():
    lam = so.sample_points(4)
    assert len(lam) == 6
    assert np.allclose(np.abs(lam), 1) and np.all(np.abs(lam.imag) > 1e-12)


def test_chart_dimension_and_seed():
    assert so.n_params(1) == 5
    x = so.inverse_chart(po.first_order_seed(0.1, 1))
    assert np.allclose(x, [-0.1 / (2 * np.sqrt(2)), 0, -0.1 / (2 * np.sqrt(2)), 0, -0.1 / (2 * np.sqrt(2))])
    c = so.chart(x, 0.1, 1)
    for u, v in zip(c.arrays(), po.first_order_seed(0.1, 1).arrays()):
        assert np.abs(u - v).max() < 1e-12


def test_chart_round_trip_random():
    rng = np.random.default_rng(0)
    N, t = 5, 0.1
    for _ in range(100):
        x = so.seed_params(t, N) + 0.01 * rng.normal(size=so.n_params(N))
        c = so.chart(x, t, N)
        assert np.abs(so.inverse_chart(c) - x).max() < 1e-12
        q = po.quadric_coefficients(c)
        assert max(abs(q.coeff(n)) for n in range(-2, N)) < 1e-12
        assert po.check_nilpotent_residue(c) < 1e-12


def test_resize_params():
    x = so.seed_params(0.1, 4)
    y = so.resize_params(x, 4, 8)
    assert len(y) == so.n_params(8)
    assert np.array_equal(so.resize_params(y, 8, 4), x)


def test_seed_residual_small_and_cubic():
    r1 = np.linalg.norm(so.closing_residual(po.first_order_seed(0.005, 6)))
    r2 = np.linalg.norm(so.closing_residual(po.first_order_seed(0.01, 6)))
    assert 0 < r2 < 1e-3
    assert r2 / r1 == pytest.approx(8, rel=0.05)


def test_breaking_b_equals_c_raises_residual():
    c = po.first_order_seed(0.01, 6)
    base = np.linalg.norm(so.closing_residual(c))
    b = c.b.coeffs.copy()
    b[2] *= 1.5
    broken = po.PotentialCoefficients(c.a, LaurentScalar(b, -1), c.c, c.t)
    assert np.linalg.norm(so.closing_residual(broken)) > 10 * base


def test_solve_small_t():
    res = so.solve_at_t(0.01, None, so.ClosingConfig(N=6))
    assert res.residual_norm < 1e-8 and res.guard_residual < 1e-8
    assert np.linalg.norm(so.closing_residual(res.coeffs)) < 1e-8
    assert po.check_quadric(res.coeffs) < 1e-8
    assert max(po.check_symmetries(res.coeffs)) < 1e-12


def test_solve_no_iterations():
    with pytest.raises(NoConvergence):
        so.solve_at_t(0.05, None, so.ClosingConfig(N=6, max_iter=0))


def test_solve_rejects_t():
    with pytest.raises(InvalidSystem):
        so.solve_at_t(0.3)
    with pytest.raises(InvalidSystem):
        so.ClosingConfig(newton_tol=-1)


def test_threads_do_not_change_residuals():
    X = so.seed_params(0.02, 6)[None] + 1e-4 * np.random.default_rng(1).normal(size=(4, so.n_params(6)))
    r1 = so.closing_residual_batch(X, 0.02, 6, so.ClosingConfig(N=6, threads=1))
    r2 = so.closing_residual_batch(X, 0.02, 6, so.ClosingConfig(N=6, threads=2))
    r3 = so.closing_residual_batch(X, 0.02, 6, so.ClosingConfig(N=6, threads=2))
    assert np.array_equal(r2, r3)
    # chunking changes the shared adaptive step sequence, so only rounding-level agreement across counts
    assert np.abs(r1 - r2).max() < 1e-13


def test_continuation_forward(continuation_005):
    ts = [r.coeffs.t for r in continuation_005]
    assert ts[0] == pytest.approx(0.01) and ts[-1] == pytest.approx(0.05)
    assert np.all(np.diff(ts) > 0)
    assert all(r.residual_norm < 1e-9 for r in continuation_005)
    assert continuation_005[-1].continuation_trace[-1][0] == pytest.approx(0.05)


def test_continuation_reverse_shrinks():
    rs = so.continue_in_t(0.02, 0.005, so.ClosingConfig(N=6))
    ts = [r.coeffs.t for r in rs]
    assert np.all(np.diff(ts) < 0) and ts[-1] == pytest.approx(0.005)
    ratios = [np.abs(r.coeffs.b.coeffs).max() / r.coeffs.t for r in rs]
    assert np.ptp(ratios) < 1e-3  # coefficients are O(t)


def test_continuation_step_underflow():
    cfg = so.ClosingConfig(N=6, N_max=6, step_floor=2e-3)
    with pytest.raises(StepUnderflow) as info:
        so.continue_in_t(0.03, 0.06, cfg)
    reached = info.value.results[-1].coeffs.t
    assert 0.03 <= reached < 0.06
    assert info.value.trace[-1][0] == pytest.approx(reached)


def test_first_derivatives_match_seed(solved_002):
    r1 = so.solve_at_t(0.01, None, so.ClosingConfig(N=6))
    for u, v, s in zip(r1.coeffs.arrays(), solved_002.coeffs.arrays(), po.first_order_seed(0.01, 6).arrays()):
        d, s = (v - u) / 0.01, s / 0.01
        assert np.linalg.norm(d - s) < 0.05 * np.linalg.norm(s)


def test_unitarity_a_posteriori(solved_002):
    results = so.unitarity_check(solved_002.coeffs)
    assert all(r.present and r.residual < 1e-7 for r in results)


def test_area_series_values():
    assert so.area_series(0) == pytest.approx(8 * np.pi)
    assert so.area_series(0.25) == pytest.approx(8 * np.pi * (1 - 0.17328680 - 0.04225981), abs=1e-6)
    assert so.area_series(0.25) == pytest.approx(19.71546, abs=1e-5)
    assert so.area_series(1 / 6) == pytest.approx(21.9146, abs=1e-4)
    assert so.area_series(0.02) == pytest.approx(8 * np.pi * (1 - 0.693147 * 0.02 - 2.704628 * 0.02 ** 3), rel=1e-7)
    with pytest.raises(InvalidSystem):
        so.area_series(0.3)


def test_parameter_path_is_smooth():
    # forward differences at steps h and h/2 agree (real-analytic dependence on t)
    rs = so.continue_in_t(0.02, 0.03, so.ClosingConfig(N=6, continuation_step=0.005))
    x = {round(r.coeffs.t, 6): r.x for r in rs}
    d1 = (x[0.03] - x[0.02]) / 0.01
    d2 = (x[0.025] - x[0.02]) / 0.005
    ratio = np.linalg.norm(d1) / np.linalg.norm(d2)
    assert 0.25 < ratio < 4
    assert np.linalg.norm(d1 - d2) < 0.1 * np.linalg.norm(d2)
