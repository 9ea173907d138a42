import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tcfou.errors import DomainError, InversionError, NonConvergenceError, PrecisionError
from tcfou.fou_analytic import SATURATION, FouParams, laplace_variance, variance, variance_limit, variance_mp
from tcfou.laplace_num import (
    TransformTable,
    forward_laplace,
    invert_gaver_stehfest,
    invert_talbot,
    stehfest_coefficients,
    talbot_contour,
)

P = FouParams(0.75, 1.0)
HALF_STABLE_T1_Y1 = 0.43939128946772239705  # e^{-1/4}/sqrt(pi)


def half_stable_kernel_np(s, y=1.0):
    r = np.sqrt(s)
    return r / s * np.exp(-y * r)


def half_stable_kernel_mp(s, y=1.0):
    r = mp.sqrt(s)
    return r / s * mp.exp(-y * r)


# forward transform -----------------------------------------------------------------

def test_forward_exponential():
    r = forward_laplace(lambda t: math.exp(-t), 1.0)
    assert r.value == pytest.approx(0.5, rel=1e-12)
    assert r.error < 1e-8


def test_forward_constant():
    assert forward_laplace(lambda t: 1.0, 2.0, bound=1.0).value == pytest.approx(0.5, rel=1e-12)


def test_forward_complex_argument():
    lam = 1.5 + 4j
    r = forward_laplace(lambda t: math.exp(-t), lam, bound=1.0)
    assert abs(r.value - 1 / (lam + 1)) < 1e-10


def test_forward_variance_matches_closed_form():
    Vinf = variance_limit(P)
    for lam in (0.5, 1.0, 3.0 + 1j):
        r = forward_laplace(lambda t: variance(P, t), lam, bound=Vinf,
                            constant_after=(SATURATION * P.theta, Vinf),
                            breakpoints=[2.0 ** -k for k in range(10)], atol=1e-14, rtol=1e-10)
        assert abs(r.value - laplace_variance(P, lam)) <= 1e-10 * abs(laplace_variance(P, lam))


def test_forward_with_growth_hint():
    r = forward_laplace(lambda t: math.exp(0.5 * t), 1.5, sigma0=0.5, bound=1.0)
    assert r.value == pytest.approx(1.0, rel=1e-10)


def test_forward_domain_and_convergence_errors():
    with pytest.raises(DomainError):
        forward_laplace(lambda t: 1.0, 0.0)
    with pytest.raises(DomainError):
        forward_laplace(lambda t: 1.0, 0.4, sigma0=0.5)
    with pytest.raises(NonConvergenceError):
        forward_laplace(lambda t: 1.0, 1e-3, horizon=1.0, bound=1.0)


def test_forward_extended_precision():
    with mp.workdps(30):
        r = forward_laplace(lambda t: mp.exp(-t), mp.mpf(1), precision="mp")
        assert abs(r.value - mp.mpf(1) / 2) < mp.mpf(10) ** -25


def test_transform_table_validates_half_plane():
    TransformTable(np.array([1.0, 2.0]), np.array([0.5, 1 / 3]))
    with pytest.raises(DomainError):
        TransformTable(np.array([0.0, 1.0]), np.array([1.0, 0.5]))


# Talbot ----------------------------------------------------------------------------

def test_talbot_inverse_square():
    r = invert_talbot(lambda s: 1 / s ** 2, 3.0)
    assert r.value == pytest.approx(3.0, rel=1e-10)


def test_talbot_shifted_pole():
    r = invert_talbot(lambda s: 1 / (s + 1), 1.0)
    assert r.value == pytest.approx(math.exp(-1), rel=1e-10)
    assert r.error <= 1e-8


def test_talbot_half_stable_kernel():
    r = invert_talbot(half_stable_kernel_np, 1.0)
    assert r.value == pytest.approx(HALF_STABLE_T1_Y1, rel=1e-10)


@pytest.mark.parametrize("y,t", [(0.5, 0.3), (2.0, 1.0), (1.0, 5.0)])
def test_talbot_half_stable_kernel_closed_form(y, t):
    r = invert_talbot(lambda s: half_stable_kernel_np(s, y), t)
    assert r.value == pytest.approx(math.exp(-y * y / (4 * t)) / math.sqrt(math.pi * t), rel=1e-9)


def test_talbot_vector_times():
    t = np.array([0.5, 1.0, 2.0])
    r = invert_talbot(lambda s: 1 / (s + 1), t)
    assert np.allclose(r.value, np.exp(-t), rtol=1e-10, atol=0)
    assert r.error.shape == t.shape


def test_talbot_reports_failure():
    # an oscillatory inverse that the contour cannot resolve at few nodes
    with pytest.raises(InversionError):
        invert_talbot(lambda s: 1 / (s * s + 400.0), 3.0, N=8)


def test_talbot_drops_undefined_nodes():
    def F(s):
        s = np.asarray(s)
        out = 1 / (s + 1)
        return np.where(np.abs(s.imag) > 1e3, np.nan, out)

    r = invert_talbot(F, 1.0, check=False)
    assert r.dropped >= 0 and np.isfinite(r.value)


def test_talbot_argument_checks():
    with pytest.raises(DomainError):
        invert_talbot(lambda s: 1 / s, 0.0)
    with pytest.raises(ValueError):
        invert_talbot(lambda s: 1 / s, 1.0, N=7)


def test_talbot_contour_shape():
    s, w, r = talbot_contour(1.0, 32)
    assert s.shape == w.shape == (32,)
    assert np.all(np.isfinite(s)) and r > 0


# Gaver-Stehfest --------------------------------------------------------------------

def test_stehfest_weights_sum_to_zero():
    for M in (8, 14, 32):
        assert sum(stehfest_coefficients(M)) == 0
    with pytest.raises(ValueError):
        stehfest_coefficients(5)


@pytest.mark.parametrize("F,t,ref", [
    (lambda s: 1 / s ** 2, 3.0, 3.0),
    (lambda s: 1 / (s + 1), 1.0, math.exp(-1)),
    (half_stable_kernel_mp, 1.0, HALF_STABLE_T1_Y1),
])
def test_gaver_stehfest_agrees_with_talbot(F, t, ref):
    gs = invert_gaver_stehfest(F, t)
    tb = invert_talbot(lambda s: complex(F(mp.mpc(s))) if np.ndim(s) == 0 else
                       np.array([complex(F(mp.mpc(z))) for z in np.ravel(s)]).reshape(np.shape(s)), t)
    assert gs.value == pytest.approx(ref, rel=1e-6)
    assert abs(gs.value - tb.value) <= 1e-6 * abs(ref)


def test_gaver_stehfest_double_precision_input_collapses():
    with pytest.raises(PrecisionError):
        invert_gaver_stehfest(lambda s: float(1 / (s + 1)), 1.0, M=32)


@given(st.floats(0.2, 5.0), st.floats(0.1, 1.0))
def test_inversions_agree_on_completely_monotone_transforms(t, a):
    # F(s) = 1/(s + a)^{1/2} is completely monotone; f(t) = t^{-1/2} e^{-a t} / Gamma(1/2)
    ref = math.exp(-a * t) / math.sqrt(math.pi * t)
    tb = invert_talbot(lambda s: (s + a) ** -0.5, t)
    gs = invert_gaver_stehfest(lambda s: (s + a) ** mp.mpf(-0.5), t)
    assert tb.value == pytest.approx(ref, rel=1e-6)
    assert gs.value == pytest.approx(ref, rel=1e-6)


def test_gaver_stehfest_error_estimate_is_honest():
    # outside the range above GS at M=32 loses relative accuracy, but says so
    t, a = 3.0, 2.75
    ref = math.exp(-a * t) / math.sqrt(math.pi * t)
    gs = invert_gaver_stehfest(lambda s: (s + a) ** mp.mpf(-0.5), t)
    assert abs(gs.value - ref) <= gs.error


# round trips -----------------------------------------------------------------------
# Forward transforms are only defined for Re(s) > 0 here, while the Talbot contour
# reaches into the left half-plane; the round trips therefore go through the
# real-axis Gaver-Stehfest inverter with extended-precision forward quadrature.

def _roundtrip(f, t, M=32, breakpoints=(0.5, 1, 2, 5, 10, 20, 50)):
    F = lambda s: forward_laplace(f, s, precision="mp", breakpoints=breakpoints).value
    return invert_gaver_stehfest(F, t, M=M)


@pytest.mark.parametrize("t", [0.5, 1.0, 5.0])
@pytest.mark.parametrize("name,f,exact", [
    ("exp", lambda t: mp.exp(-t), lambda t: math.exp(-t)),
    ("texp", lambda t: t * mp.exp(-t), lambda t: t * math.exp(-t)),
])
def test_roundtrip_elementary(name, f, exact, t):
    r = _roundtrip(f, t)
    assert r.value == pytest.approx(exact(t), rel=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("t", [0.5, 1.0, 5.0])
def test_roundtrip_variance(t):
    r = _roundtrip(lambda s: variance_mp(P, s), t)
    assert r.value == pytest.approx(variance(P, t), rel=1e-6)
