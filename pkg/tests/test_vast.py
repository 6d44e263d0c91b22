import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_spd, random_stats
from vastzones.eig import joint_diagonalize
from vastzones.stats import SpatialStats
from vastzones.vast import (MU_GRID, ControlFilterBank, VastParams, acoustic_contrast, closed_form_powers,
                            contrast_from_coefficients, contrast_ratio, default_v_grid, direct_powers,
                            solve_vast, sweep, write_sweep_csv)


def problem(seed, dim=16, l_count=2):
    rng = np.random.default_rng(seed)
    s = random_stats(rng, dim, m_b=4, m_d=5, l_count=l_count)
    return s, joint_diagonalize(s)


def test_params_validation():
    with pytest.raises(ValueError):
        VastParams(0, 1.0)
    with pytest.raises(ValueError):
        VastParams(1, -1.0)
    with pytest.raises(ValueError):
        VastParams(17, 1.0).check(16)


def test_zero_correlation_gives_zero_filter():
    s, jd = problem(0)
    bank = solve_vast(jd, np.zeros(16), VastParams(8, 1.0))
    assert not np.any(bank.q)


def test_filter_bank_layout():
    s, jd = problem(1)
    bank = solve_vast(jd, s.r_b, VastParams(16, 1.0))
    assert bank.q.shape == (2, 8)
    np.testing.assert_array_equal(bank.stacked[:8], bank.q[0])
    assert bank.coefficients.shape == (16,)


@pytest.mark.parametrize("seed", range(5))
def test_wiener_corner_matches_dense_solve(seed):
    s, jd = problem(seed)
    q = solve_vast(jd, s.r_b, VastParams(16, 1.0)).stacked
    ref = np.linalg.solve(s.R_b + s.R_d, s.r_b)
    assert np.linalg.norm(q - ref) / np.linalg.norm(ref) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_distortionless_corner_matches_dense_solve(seed):
    s, jd = problem(seed)
    q = solve_vast(jd, s.r_b, VastParams(16, 0.0)).stacked
    ref = np.linalg.solve(s.R_b, s.r_b)
    assert np.linalg.norm(q - ref) / np.linalg.norm(ref) < 1e-8


def test_singular_trade_off_rejected():
    jd = joint_diagonalize((np.diag([1.0, 0.0]), np.eye(2)))
    with pytest.raises(ZeroDivisionError):
        solve_vast(jd, np.ones(2), VastParams(2, 0.0))
    # restricting V to the nonzero eigenvalue is fine
    np.testing.assert_allclose(solve_vast(jd, np.ones(2), VastParams(1, 0.0)).q, [[1.0, 0.0]])


def test_contrast_of_top_eigenvector_is_scaled_eigenvalue():
    s, jd = problem(3)
    g = contrast_ratio(jd.u[:, 0], s.R_b, s.R_d, s.m_b, s.m_d)
    assert g == pytest.approx(s.m_d / s.m_b * jd.lam[0], rel=1e-9)


def test_identical_zones_zero_db(rng):
    R = random_spd(rng, 6)
    s = SpatialStats(1.0, np.zeros(6), R, R, 3, 3, 1, 1, 6)
    assert acoustic_contrast(rng.standard_normal(6), s) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), st.integers(0, 100))
def test_contrast_scale_invariance(c, seed):
    s, _ = problem(seed)
    q = np.random.default_rng(seed).standard_normal(16)
    assert acoustic_contrast(c * q, s) == pytest.approx(acoustic_contrast(q, s), abs=1e-9)


def test_silent_dark_zone_infinite_contrast():
    s = SpatialStats(1.0, np.zeros(2), np.eye(2), np.diag([0.0, 1.0]), 1, 1, 1, 1, 2)
    assert acoustic_contrast(np.array([1.0, 0.0]), s) == math.inf


@pytest.mark.parametrize("seed", range(5))
def test_closed_forms_match_quadratic_forms(seed):
    s, jd = problem(seed)
    for v in (1, 5, 16):
        for mu in MU_GRID:
            p = VastParams(v, mu)
            q = solve_vast(jd, s.r_b, p)
            cf = closed_form_powers(jd, s.r_b, s.sigma_d_sq, p)
            sb, sd = direct_powers(q, s.sigma_d_sq, s.r_b, s.R_b, s.R_d)
            assert cf.s_b == pytest.approx(sb, rel=1e-9)
            assert cf.s_d == pytest.approx(sd, rel=1e-9)
            assert cf.lagrangian == pytest.approx(sb + mu * sd, rel=1e-9)


def test_closed_forms_zero_correlation():
    s, jd = problem(2)
    cf = closed_form_powers(jd, np.zeros(16), s.sigma_d_sq, VastParams(10, 1.0))
    assert cf.s_b == s.sigma_d_sq and cf.s_d == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(MU_GRID))
def test_monotonicity_in_v(seed, mu):
    s, jd = problem(seed, dim=12, l_count=1)
    rows = [closed_form_powers(jd, s.r_b, s.sigma_d_sq, VastParams(v, mu)) for v in range(1, 13)]
    gam = [contrast_ratio(solve_vast(jd, s.r_b, VastParams(v, mu)), s.R_b, s.R_d, s.m_b, s.m_d) for v in range(1, 13)]
    tol = 1e-12 * s.sigma_d_sq
    for a, b in zip(rows, rows[1:]):
        assert b.s_b <= a.s_b + tol
        assert b.s_d >= a.s_d - tol
        assert b.lagrangian <= a.lagrangian + tol
    assert all(b <= a * (1 + 1e-12) for a, b in zip(gam, gam[1:]))


def test_large_mu_limit():
    s, jd = problem(4)
    mu = 1e8
    q = solve_vast(jd, s.r_b, VastParams(16, mu)).stacked
    limit = jd.u @ (jd.u.T @ s.r_b)
    assert np.linalg.norm(mu * q - limit) / np.linalg.norm(limit) < 1e-4


def test_first_order_optimality():
    s, jd = problem(5)
    v, mu = 7, 0.5
    a = solve_vast(jd, s.r_b, VastParams(v, mu)).coefficients
    U = jd.u[:, :v]

    def lagrangian(coef):
        q = U @ coef
        sb, sd = direct_powers(q, s.sigma_d_sq, s.r_b, s.R_b, s.R_d)
        return sb + mu * sd

    base = lagrangian(a)
    for i in range(v):
        for step in (1e-4, -1e-4):
            e = np.zeros(v)
            e[i] = step
            assert lagrangian(a + e) >= base - 1e-15


def test_contrast_from_coefficients_equals_matrix_form():
    s, jd = problem(6)
    bank = solve_vast(jd, s.r_b, VastParams(9, 0.1))
    g1 = contrast_from_coefficients(jd, bank.coefficients, s.m_b, s.m_d)
    g2 = contrast_ratio(bank, s.R_b, s.R_d, s.m_b, s.m_d)
    assert g1 == pytest.approx(g2, rel=1e-9)


def test_default_v_grid():
    grid = default_v_grid(1920)
    assert len(grid) == 18
    assert grid[:5] == [1, 60, 120, 240, 360]
    assert grid[5:] == list(range(480, 1921, 120))
    assert default_v_grid(4) == [1, 2, 3, 4]


def test_sweep_single_cell_matches_direct_calls():
    s, jd = problem(7)
    row = sweep(jd, s.r_b, s.sigma_d_sq, [5], [0.1], s)[0]
    p = VastParams(5, 0.1)
    cf = closed_form_powers(jd, s.r_b, s.sigma_d_sq, p)
    q = solve_vast(jd, s.r_b, p)
    assert (row.s_b, row.s_d, row.lagrangian) == (cf.s_b, cf.s_d, cf.lagrangian)
    assert row.ac_db == acoustic_contrast(q, s)
    assert row.q_l2_norm == pytest.approx(np.linalg.norm(q.stacked))


def test_sweep_contrast_monotone_and_v1_maximal():
    s, jd = problem(8)
    rows = sweep(jd, s.r_b, s.sigma_d_sq, default_v_grid(16), MU_GRID, s)
    assert len(rows) == len(default_v_grid(16)) * 5
    for mu in MU_GRID:
        ac = [r.ac_db for r in rows if r.mu == mu]
        assert all(b <= a + 1e-9 for a, b in zip(ac, ac[1:]))
    assert max(r.ac_db for r in rows) == pytest.approx(rows[0].ac_db)


def test_sweep_records_failing_cells_and_continues():
    jd = joint_diagonalize((np.diag([1.0, 0.0]), np.eye(2)))
    rows = sweep(jd, np.ones(2), 1.0, [1, 2, 3], [0.0, 1.0])
    errors = [(r.v, r.mu) for r in rows if r.error]
    assert errors == [(2, 0.0), (3, 0.0), (3, 1.0)]
    assert not math.isnan(rows[0].s_b)


def test_sweep_parallel_equals_serial():
    s, jd = problem(9)
    a = sweep(jd, s.r_b, s.sigma_d_sq, [1, 4, 16], MU_GRID, s, jobs=1)
    b = sweep(jd, s.r_b, s.sigma_d_sq, [1, 4, 16], MU_GRID, s, jobs=3)
    assert a == b


def test_sweep_csv(tmp_path):
    s, jd = problem(10)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, sweep(jd, s.r_b, s.sigma_d_sq, [1, 16], [0.0, 1.0], s))
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0][:7] == ["V", "mu", "s_b", "s_d", "lagrangian", "ac_db", "q_l2_norm"]
    assert len(rows) == 5


def test_delta_bank():
    bank = ControlFilterBank.delta(3, 4)
    assert bank.q.shape == (3, 4) and np.all(bank.q[:, 0] == 1) and not np.any(bank.q[:, 1:])
    with pytest.raises(ValueError):
        ControlFilterBank(np.array([[np.nan]]))
