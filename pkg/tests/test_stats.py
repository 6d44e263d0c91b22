import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vastzones.percept import WeightingFilter
from vastzones.room import RIRSet
from vastzones.stats import (UncontrolledResponses, _accumulate, _accumulate_direct, build_stats,
                             build_uncontrolled, filtered_window, numerical_rank, rank_condition)


def make_rirs(h):
    h = np.asarray(h, dtype=float)
    return RIRSet(h, np.zeros((h.shape[0], h.shape[2])), 16000)


def toeplitz_oracle(x, h_ml, j, n):
    """(X[n] h)[j] = sum_k x[n - k - j] h[k], zero outside x."""
    total = 0.0
    for k, hk in enumerate(h_ml):
        idx = n - k - j
        if 0 <= idx < len(x):
            total += x[idx] * hk
    return total


def naive_stats(desired, Yb, Yd):
    """Explicit per-point, per-sample averages; Y* are lists of (N, LJ) matrices."""
    m_b, n = desired.shape
    dim = Yb[0].shape[1]
    r = np.zeros(dim)
    Rb = np.zeros((dim, dim))
    Rd = np.zeros((dim, dim))
    for m in range(m_b):
        for i in range(n):
            r += Yb[m][i] * desired[m, i]
            Rb += np.outer(Yb[m][i], Yb[m][i])
    for Y in Yd:
        for i in range(n):
            Rd += np.outer(Y[i], Y[i])
    return np.sum(desired ** 2) / (m_b * n), r / (m_b * n), Rb / (m_b * n), Rd / (len(Yd) * n)


def test_delta_chain_reproduces_shifted_input():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    resp = build_uncontrolled(x, make_rirs(np.ones((1, 1, 1))), [0], 2)
    Y = resp.matrix(0)
    for n in range(resp.n_obs):
        assert Y[n, 0] == (x[n] if n < 4 else 0.0)
        assert Y[n, 1] == (x[n - 1] if 1 <= n <= 4 else 0.0)


def test_delta_weighting_equals_absent(rng):
    x = rng.standard_normal(50)
    rirs = make_rirs(rng.standard_normal((2, 3, 7)))
    a = build_uncontrolled(x, rirs, [0, 1], 4)
    b = build_uncontrolled(x, rirs, [0, 1], 4, [WeightingFilter.identity(), np.ones(1)])
    np.testing.assert_allclose(a.z, b.z, atol=1e-14)


def test_toeplitz_layout_matches_triple_loop(rng):
    x = rng.standard_normal(40)
    h = rng.standard_normal((2, 3, 6))
    j_len = 5
    resp = build_uncontrolled(x, make_rirs(h), [0, 1], j_len)
    for m in range(2):
        Y = resp.matrix(m)
        for n in (0, 3, 17, 44, resp.n_obs - 1):
            expected = [toeplitz_oracle(x, h[m, l], j, n) for l in range(3) for j in range(j_len)]
            np.testing.assert_allclose(Y[n], expected, atol=1e-12)
        np.testing.assert_allclose(resp.vector(m, 9), Y[9])


def test_segment_window_uses_history(rng):
    x = rng.standard_normal(60)
    h = rng.standard_normal((1, 2, 5))
    full = build_uncontrolled(x, make_rirs(h), [0], 4)
    part = build_uncontrolled(x, make_rirs(h), [0], 4, start=20, n_obs=10)
    np.testing.assert_allclose(part.matrix(0), full.matrix(0)[20:30], atol=1e-12)


def test_weighted_responses_match_convolution_oracle(rng):
    x = rng.standard_normal(80)
    h = rng.standard_normal((1, 2, 6))
    w = WeightingFilter(rng.standard_normal(9))
    resp = build_uncontrolled(x, make_rirs(h), [0], 3, [w], start=10, n_obs=20)
    for l in range(2):
        zw = np.convolve(np.convolve(x, h[0, l]), w.taps)[w.delay:]
        for n in range(20):
            for j in range(3):
                idx = 10 + n - j
                expected = zw[idx] if 0 <= idx < zw.size else 0.0
                assert resp.matrix(0)[n, l * 3 + j] == pytest.approx(expected, abs=1e-12)


def test_filtered_window_compensates_delay(rng):
    sig = rng.standard_normal(100)
    taps = np.zeros(11)
    taps[5] = 1.0
    np.testing.assert_allclose(filtered_window(sig, 30, 20, WeightingFilter(taps)), sig[30:50], atol=1e-14)


def test_missing_weighting_filter_rejected(rng):
    rirs = make_rirs(rng.standard_normal((2, 1, 3)))
    with pytest.raises(ValueError, match="weighting"):
        build_uncontrolled(rng.standard_normal(10), rirs, [0, 1], 2, [np.ones(1)])


def _small_problem(rng, m=2, l_count=2, j_len=3, n=16, k=4):
    x = rng.standard_normal(n + 5)
    rirs = make_rirs(rng.standard_normal((2 * m, l_count, k)))
    rb = build_uncontrolled(x, rirs, range(m), j_len, start=2, n_obs=n)
    rd = build_uncontrolled(x, rirs, range(m, 2 * m), j_len, start=2, n_obs=n)
    d = rng.standard_normal((m, n))
    return d, rb, rd


def test_build_stats_matches_naive_oracle(rng):
    d, rb, rd = _small_problem(rng)
    s = build_stats(d, rb, rd)
    sig, r, Rb, Rd = naive_stats(d, [rb.matrix(m) for m in range(2)], [rd.matrix(m) for m in range(2)])
    assert s.sigma_d_sq == pytest.approx(sig, rel=1e-12)
    np.testing.assert_allclose(s.r_b, r, rtol=0, atol=1e-12 * np.max(np.abs(r)))
    np.testing.assert_allclose(s.R_b, Rb, rtol=0, atol=1e-12 * np.max(np.abs(Rb)))
    np.testing.assert_allclose(s.R_d, Rd, rtol=0, atol=1e-12 * np.max(np.abs(Rd)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 9), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_structured_accumulation_matches_dense(m, l_count, j_len, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, l_count, n + j_len - 1))
    d = rng.standard_normal((m, n))
    resp = UncontrolledResponses(z, j_len, 0, n)
    R1, r1 = _accumulate(resp, d)
    R2, r2 = _accumulate_direct(resp, d)
    assert np.max(np.abs(R1 - R2)) <= 1e-12 * np.max(np.abs(R2))
    assert np.max(np.abs(r1 - r2)) <= 1e-12 * max(np.max(np.abs(r2)), 1e-300)


def test_zero_desired_gives_zero_correlation(rng):
    _, rb, rd = _small_problem(rng)
    s = build_stats(np.zeros((2, 16)), rb, rd)
    assert s.sigma_d_sq == 0.0
    assert not np.any(s.r_b)


def test_single_point_single_sample_outer_product(rng):
    z = rng.standard_normal((1, 2, 3))
    resp = UncontrolledResponses(z, 3, 0, 1)
    y = resp.vector(0, 0)
    s = build_stats(np.array([[0.7]]), resp, resp)
    np.testing.assert_allclose(s.R_b, np.outer(y, y), atol=1e-15)
    np.testing.assert_allclose(s.r_b, 0.7 * y, atol=1e-15)


def test_stats_symmetric_and_psd(rng):
    d, rb, rd = _small_problem(rng, m=3, l_count=3, j_len=4, n=30)
    s = build_stats(d, rb, rd)
    for R in (s.R_b, s.R_d):
        np.testing.assert_array_equal(R, R.T)
        assert np.min(np.linalg.eigvalsh(R)) >= -1e-10 * np.linalg.norm(R)


def test_quadratic_forms_match_direct_sums(rng):
    d, rb, rd = _small_problem(rng, m=3, l_count=2, j_len=5, n=25)
    s = build_stats(d, rb, rd)
    q = rng.standard_normal(10)
    dark = np.mean([np.sum((rd.matrix(m) @ q) ** 2) for m in range(3)]) / 25
    assert q @ s.R_d @ q == pytest.approx(dark, rel=1e-10)
    err = np.mean([np.sum((d[m] - rb.matrix(m) @ q) ** 2) for m in range(3)]) / 25
    assert s.sigma_d_sq - 2 * q @ s.r_b + q @ s.R_b @ q == pytest.approx(err, rel=1e-10)


def test_scaling_input_scales_statistics(rng):
    x = rng.standard_normal(40)
    rirs = make_rirs(rng.standard_normal((2, 2, 4)))
    c = 3.0

    def stats_for(sig):
        rb = build_uncontrolled(sig, rirs, [0], 3)
        rd = build_uncontrolled(sig, rirs, [1], 3)
        d = np.convolve(sig, [0.5, 0.25])[:rb.n_obs]
        d = np.pad(d, (0, rb.n_obs - d.size))[None]
        return build_stats(d, rb, rd)

    a, b = stats_for(x), stats_for(c * x)
    np.testing.assert_allclose(b.r_b, c ** 2 * a.r_b, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b.R_b, c ** 2 * a.R_b, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b.R_d, c ** 2 * a.R_d, rtol=1e-10, atol=1e-14)


def test_build_stats_dimension_mismatch(rng):
    d, rb, _ = _small_problem(rng)
    _, _, rd = _small_problem(rng, j_len=4)
    with pytest.raises(ValueError):
        build_stats(d, rb, rd)
    with pytest.raises(ValueError):
        build_stats(d[:, :5], rb, rb)


def test_rank_condition_reference_parameters():
    diag = rank_condition(None, m_d=25, n_obs=960, k_taps=3200, l_count=8, j_len=240)
    assert diag.condition_met
    assert diag.lhs == 24000 and diag.dim == 1920


def test_rank_condition_violated():
    diag = rank_condition(None, m_d=1, n_obs=1, k_taps=10, l_count=2, j_len=2)
    assert not diag.condition_met
    assert "VIOLATED" in diag.message()


def test_numerical_rank_of_outer_product(rng):
    v = rng.standard_normal(6)
    assert numerical_rank(np.outer(v, v)) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0
