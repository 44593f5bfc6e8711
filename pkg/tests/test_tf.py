import json

import mpmath
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcdesign.tf import (ContinuousSecondOrder, DiscreteTransferFunction, FrequencyGrid, PoleOnUnitCircle,
                          SampleTimeMismatch, add, discretize, discretize_tustin, discretize_zoh, eval_freq,
                          feedback, impulse_response, is_stable, minreal, poles, poly_roots, series, zeros)

TS = 0.05
coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def direct_eval(num, den, ts, w):
    # sum of c_k z^-k term by term
    zi = np.exp(-1j * w * ts)
    n = sum(c * zi ** k for k, c in enumerate(num))
    d = sum(c * zi ** k for k, c in enumerate(den))
    return n / d


def test_normalisation_and_readonly():
    g = DiscreteTransferFunction([0, 2, 4, 0], [2, 1, 0], 0.1)
    assert g.num.tolist() == [0, 1, 2]
    assert g.den.tolist() == [1, 0.5]
    assert g.order == 1 and g.is_strictly_proper
    with pytest.raises(ValueError):
        g.num[0] = 3.0


@pytest.mark.parametrize("den,ts", [([0, 1], 0.1), ([1, 2], 0.0), ([1, 2], -1)])
def test_invalid_construction(den, ts):
    with pytest.raises(ValueError):
        DiscreteTransferFunction([1], den, ts)


def test_json_round_trip():
    g = DiscreteTransferFunction([0, 0.01262, -0.01236], [1, -2.957, 2.915, -0.9581], 0.05)
    d = json.loads(g.to_json())
    assert set(d) == {"num", "den", "ts"}
    assert DiscreteTransferFunction.from_json(g.to_json()) == g


def test_eval_matches_direct_sum():
    g = DiscreteTransferFunction([0.3, -0.2, 0.05], [1, -1.1, 0.3], TS)
    w = np.linspace(-np.pi / TS, np.pi / TS, 101)
    np.testing.assert_allclose(eval_freq(g, w), direct_eval(g.num, g.den, TS, w), rtol=1e-13)
    assert isinstance(eval_freq(g, 1.0), complex)


def test_eval_rejects_beyond_nyquist():
    g = DiscreteTransferFunction([1], [1, -0.5], TS)
    with pytest.raises(ValueError):
        eval_freq(g, 1.01 * np.pi / TS)


def test_pole_on_unit_circle_is_reported():
    g = DiscreteTransferFunction([1], [1, 1], TS)  # pole at z = -1
    with pytest.raises(PoleOnUnitCircle) as exc:
        eval_freq(g, np.array([1.0, np.pi / TS]))
    assert exc.value.omega == pytest.approx(np.pi / TS)


@settings(max_examples=60, deadline=None)
@given(num=st.lists(coef, min_size=1, max_size=5), den=st.lists(coef, min_size=1, max_size=4),
       w=st.floats(0, np.pi / TS))
def test_conjugate_symmetry(num, den, w):
    den = [1.0] + den
    g = DiscreteTransferFunction(num, den, TS)
    try:
        a, b = eval_freq(g, w), eval_freq(g, -w)
    except PoleOnUnitCircle:
        return
    assert a == pytest.approx(np.conj(b), rel=1e-12, abs=1e-12)


def expand(roots):
    return np.real(np.poly(roots))


@st.composite
def root_sets(draw):
    """Well separated real roots and conjugate pairs, stable or not."""
    n_real = draw(st.integers(0, 4))
    n_pair = draw(st.integers(0, (6 - n_real) // 2))
    if n_real + n_pair == 0:
        n_real = 1
    roots = []
    for _ in range(n_real):
        # z = 0 is a pure delay and disappears from a trimmed z^-1 denominator
        roots.append(draw(st.sampled_from([-1, 1])) * draw(st.floats(0.05, 1.8)))
    for _ in range(n_pair):
        r = draw(st.floats(0.2, 1.6))
        th = draw(st.floats(0.2, 2.9))
        roots += [r * np.exp(1j * th), r * np.exp(-1j * th)]
    roots = np.array(roots, dtype=complex)
    d = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots))
    if d.min() < 0.05:
        # collisions fall back to one real root (a lone complex root would lose its conjugate)
        roots = np.array([0.5 + 0j])
    return roots


@settings(max_examples=80, deadline=None)
@given(root_sets())
def test_poles_recover_known_factors(roots):
    g = DiscreteTransferFunction([1.0], expand(roots), 1.0)
    p = poles(g)
    assert len(p) == len(roots)
    # match every expected root to the nearest computed one
    for r in roots:
        assert np.min(np.abs(p - r)) < 1e-8


def test_poly_roots_against_mpmath():
    rng = np.random.default_rng(7)
    for _ in range(20):
        c = rng.normal(size=rng.integers(2, 9))
        ours = np.sort_complex(poly_roots(c))
        ref = np.sort_complex(np.array([complex(z) for z in mpmath.polyroots(list(c), maxsteps=200, extraprec=60)]))
        for r in ref:
            assert np.min(np.abs(ours - r)) < 1e-8 * max(1, abs(r))


def test_trailing_zeros_give_exact_zero_roots():
    r = poly_roots([1.0, -0.5, 0.0, 0.0])
    assert sorted(np.abs(r))[:2] == [0.0, 0.0]
    assert poly_roots([3.0]).size == 0


def test_stability_margin():
    assert is_stable(DiscreteTransferFunction([1], [1, -0.999], 1.0))
    assert not is_stable(DiscreteTransferFunction([1], [1, -1.0], 1.0))
    assert not is_stable(DiscreteTransferFunction([1], [1, -1.2], 1.0))


@settings(max_examples=40, deadline=None)
@given(a=st.lists(coef, min_size=1, max_size=4), b=st.lists(coef, min_size=0, max_size=3),
       c=st.lists(coef, min_size=1, max_size=3), d=st.lists(coef, min_size=0, max_size=3))
def test_feedback_identity(a, b, c, d):
    f = DiscreteTransferFunction(a, [1.0] + b, TS)
    h = DiscreteTransferFunction(c, [1.0] + d, TS)
    w = np.random.default_rng(len(a) + len(b)).uniform(-np.pi / TS, np.pi / TS, 100)
    try:
        ff, hh, cl = eval_freq(f, w), eval_freq(h, w), eval_freq(feedback(f, h), w)
    except PoleOnUnitCircle:
        return
    expected = ff / (1 + ff * hh)
    ok = np.abs(1 + ff * hh) > 1e-6
    np.testing.assert_allclose(cl[ok], expected[ok], rtol=1e-10, atol=1e-12)


def test_series_add_and_operators():
    a = DiscreteTransferFunction([1, 0.5], [1, -0.2], TS)
    b = DiscreteTransferFunction([0, 2], [1, 0.3], TS)
    w = np.linspace(0.1, 60, 7)
    np.testing.assert_allclose(eval_freq(series(a, b), w), eval_freq(a, w) * eval_freq(b, w))
    np.testing.assert_allclose(eval_freq(add(a, b), w), eval_freq(a, w) + eval_freq(b, w))
    np.testing.assert_allclose(eval_freq(a - b, w), eval_freq(a, w) - eval_freq(b, w))
    np.testing.assert_allclose(eval_freq(2 * a, w), 2 * eval_freq(a, w))
    with pytest.raises(SampleTimeMismatch):
        series(a, DiscreteTransferFunction([1], [1], 0.1))


def test_minreal_cancels_exact_factor_only():
    common = [1.0, -0.5]
    g = DiscreteTransferFunction(np.convolve([0, 1], common), np.convolve([1, -0.9], common), TS)
    r = minreal(g)
    assert r.order == 1
    np.testing.assert_allclose(eval_freq(r, [0.3, 7.0]), eval_freq(g, [0.3, 7.0]))
    # a differentiator against an integrator cancels
    d = DiscreteTransferFunction([1, -1], [1, -1.0], TS)
    assert minreal(d).order == 0
    # nearby but distinct roots are kept
    near = DiscreteTransferFunction([1, -1.0000273], [1, -1.0], TS)
    assert minreal(near).order == 1
    assert zeros(near)[0].real == pytest.approx(1.0000273)


def zoh_oracle(a2, a1, a0, k, ts):
    """Exact sampled state-space model through the augmented matrix exponential."""
    A = np.array([[0, 1], [-a0 / a2, -a1 / a2]])
    B = np.array([[0], [k / a2]])
    M = np.zeros((3, 3))
    M[:2, :2], M[:2, 2:] = A * ts, B * ts
    E = scipy.linalg.expm(M)
    Ad, Bd = E[:2, :2], E[:2, 2:]
    C = np.array([1.0, 0.0])

    def h(w):
        z = np.exp(1j * w * ts)
        return C @ np.linalg.solve(z * np.eye(2) - Ad, Bd)[:, 0]

    return h


@settings(max_examples=30, deadline=None)
@given(a2=st.floats(0.1, 3), a1=st.floats(0.05, 5), a0=st.one_of(st.floats(0.2, 5), st.floats(-5, -0.2)),
       k=st.floats(0.1, 3))
def test_zoh_against_matrix_exponential(a2, a1, a0, k):
    ts = 0.02
    g = discretize_zoh(ContinuousSecondOrder(a2, a1, a0, k), ts)
    h = zoh_oracle(a2, a1, a0, k, ts)
    for w in (0.5, 5.0, 50.0):
        assert eval_freq(g, w) == pytest.approx(h(w), rel=1e-7, abs=1e-12)
    # DC gain
    assert abs(eval_freq(g, 0.0)) == pytest.approx(abs(k / a0), rel=1e-9)


def test_tustin_substitution():
    s = ContinuousSecondOrder(0.35, 2.0, -2.45, 0.42)
    ts = 0.01
    g = discretize_tustin(s, ts)
    for w in (0.3, 3.0, 30.0):
        z = np.exp(1j * w * ts)
        sv = 2 / ts * (z - 1) / (z + 1)
        assert eval_freq(g, w) == pytest.approx(s.k / (s.a2 * sv ** 2 + s.a1 * sv + s.a0), rel=1e-9)


def test_second_order_validation():
    with pytest.raises(ValueError):
        ContinuousSecondOrder(0.0, 1, 1, 1)
    with pytest.raises(KeyError):
        discretize(ContinuousSecondOrder(1, 1, 1, 1), 0.1, "euler")


def test_impulse_response_of_first_order():
    g = DiscreteTransferFunction([0, 1], [1, -0.5], 1.0)
    np.testing.assert_allclose(impulse_response(g, 5), [0, 1, 0.5, 0.25, 0.125])


def test_frequency_grid():
    g = FrequencyGrid.default(0.01)
    w = g.omegas()
    assert len(w) == 4096 and w[0] == pytest.approx(2 * np.pi / 100) and w[-1] == np.pi / 0.01
    with pytest.raises(ValueError):
        FrequencyGrid(0.0, 1.0)
    with pytest.raises(ValueError):
        FrequencyGrid(1.0, 400.0).check(0.01)
