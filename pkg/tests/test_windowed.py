import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from winkurt.alphabet import draw_iid_stream, make_mb_alphabet, make_qam_alphabet
from winkurt.errors import InvalidInput, InvalidParameter
from winkurt.formats import make_stream
from winkurt.windowed import (WindowRule, iid_invariance_check, moment_profile,
                              optimal_window_lengths, optimal_windows, power_of_two_windows,
                              windowed_moments)


def oracle(p, w, circular=False):
    # direct definition: pooled 2w-sample averages, stride one
    sp = p.sum(axis=1)
    if circular:
        sp = np.concatenate([sp, sp[: w - 1]])
    avg = np.convolve(sp, np.ones(w), mode="valid") / (2 * w)
    d = avg - 1
    m1 = d.mean()
    m2 = (d**2).mean() * 2 * w
    m3 = (d**3).mean() * (2 * w) ** 2
    return m2 + 2 * m1 + 1, m3 + 3 * m2 + 3 * m1 + 1


def test_hand_examples():
    anti = np.array([[2.0, 0.0], [0.0, 2.0]])
    assert windowed_moments(anti, 1).mu4_bar == pytest.approx(1.0)
    same = np.array([[2.0, 2.0], [0.0, 0.0]])
    assert windowed_moments(same, 1).mu4_bar == pytest.approx(3.0)
    assert windowed_moments(same, 2).mu4_bar == pytest.approx(1.0)
    assert windowed_moments(same, 2).n_positions == 1
    assert windowed_moments(same, 2, circular=True).n_positions == 2


@pytest.mark.parametrize("circular", [False, True])
def test_matches_direct_definition(circular):
    p = make_stream("ess1d-5", 5000, seed=2).pol_power
    for w in (1, 3, 7, 40):
        m = windowed_moments(p, w, circular=circular)
        assert (m.mu4_bar, m.mu6_bar) == pytest.approx(oracle(p, w, circular), rel=1e-9)


def test_w1_equals_pooled_classical():
    st_ = draw_iid_stream(make_qam_alphabet(4), 20000, seed=1)
    p = st_.pol_power
    m = windowed_moments(st_, 1)
    assert m.mu4_bar == pytest.approx(oracle(p, 1)[0], rel=1e-12)


def test_errors():
    p = np.ones((4, 2))
    with pytest.raises(InvalidParameter):
        windowed_moments(p, 0)
    with pytest.raises(InvalidInput):
        windowed_moments(p, 5)
    with pytest.raises(InvalidInput):
        windowed_moments(np.ones(4), 1)
    with pytest.raises(InvalidParameter):
        moment_profile(p, [2, 1])


def test_standard_errors_are_reported():
    m = windowed_moments(make_stream("gaussian", 200_000, seed=4), 8)
    assert 0 < m.se_mu4 < 0.05
    assert np.isfinite(m.se_mu6)


def test_profile_csv():
    prof = moment_profile(make_stream("qpsk", 1024, seed=1), [1, 2, 4])
    lines = prof.to_csv().strip().split("\n")
    assert lines[0] == "w,m2_bar,m3_bar,mu4_bar,mu6_bar,n_positions"
    assert len(lines) == 4
    assert lines[1].startswith("1,0.0,0.0,1.0,1.0,1024")
    assert prof.at(2) == pytest.approx((1.0, 1.0))


def test_power_of_two_windows():
    assert power_of_two_windows(256) == [1, 2, 4, 8, 16, 32, 64, 128, 256]
    assert power_of_two_windows(5) == [1, 2, 4]


def test_optimal_window_values():
    b2 = 2.199e-26
    # single span at 88 GBd: 2 * 88e9^2 * 2.199e-26 * 60e3
    expect = 2 * 88e9**2 * b2 * 60e3
    ws, wx = optimal_window_lengths(WindowRule(88e9, 88e9, b2, 60e3, 1, 100 / 88, 5))
    assert ws == pytest.approx(expect, rel=1e-12)
    assert wx == pytest.approx(expect * np.sqrt(100 / 88 * 5), rel=1e-12)
    assert optimal_windows(WindowRule(88e9, 88e9, b2, 60e3, 1)) [0] == 20
    assert optimal_windows(WindowRule(88e9, 88e9, -b2, 60e3, 72))[0] == 1471
    assert optimal_windows(WindowRule(5.5e9, 5.5e9, b2, 60e3, 1)) == (1, 1)
    with pytest.raises(InvalidParameter):
        WindowRule(0, 1, b2, 1, 1)


def test_iid_invariance_and_correlated_control():
    windows = power_of_two_windows(256)
    for alph in (make_qam_alphabet(4), make_mb_alphabet(4, 1.6)):
        rep = iid_invariance_check(draw_iid_stream(alph, 2**18, seed=11), windows)
        assert rep.passed, rep.failures()
    # repeating every slot 4 times makes neighbouring slots identical
    base = draw_iid_stream(make_qam_alphabet(4), 2**16, seed=12)
    from winkurt.alphabet import PdmSymbolStream
    corr = PdmSymbolStream.from_raw(np.repeat(base.symbols, 4, axis=0))
    assert not iid_invariance_check(corr, windows).passed


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 60), st.just(2)),
              elements=st.floats(0.0, 10.0)),
       st.integers(1, 8), st.booleans())
def test_property_matches_oracle(raw, w, circular):
    if raw.sum() <= 0:
        return
    p = raw / raw.mean()
    w = min(w, p.shape[0])
    m = windowed_moments(p, w, circular=circular)
    o4, o6 = oracle(p, w, circular)
    assert m.mu4_bar == pytest.approx(o4, rel=1e-7, abs=1e-9)
    assert m.mu6_bar == pytest.approx(o6, rel=1e-7, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 80), st.just(2)),
              elements=st.floats(0.01, 10.0)))
def test_property_long_window_limit(raw):
    # with one window covering everything d = m1 = 0 exactly
    p = raw / raw.mean()
    m = windowed_moments(p, p.shape[0])
    assert m.mu4_bar == pytest.approx(1.0, abs=1e-9)
    assert m.mu6_bar == pytest.approx(1.0, abs=1e-9)
