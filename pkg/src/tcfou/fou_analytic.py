"""Variance, moments and Gaussian densities of the fractional OU process.

For Hurst index ``H in (1/2, 1)`` and relaxation time ``theta > 0`` the fOU
process started at zero,

    U_H(t) = exp(-t/theta) int_0^t exp(s/theta) dB^H(s),

is a centered Gaussian process with variance

    V(t) = H ( int_0^t e^{-z/theta} z^{2H-1} dz
               + e^{-2t/theta} int_0^t e^{z/theta} z^{2H-1} dz ),

and derivative

    V'(t) = 2H(2H-1) e^{-2t/theta} int_0^t e^{z/theta} z^{2H-2} dz.

The first integral is a regularized incomplete gamma function.  The
growing integrals are evaluated after the substitution ``z = t w`` with a
Gauss-Jacobi rule whose weight ``w**(2H-1)`` (resp. ``w**(2H-2)``) absorbs
the endpoint singularity, so the remaining integrand is entire.  Adaptive
quadrature and extended-precision references are kept for cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath as mp
import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from ._quadrature import gauss_jacobi_unit
from .errors import DomainError

__all__ = [
    "FouParams",
    "VarianceProfile",
    "variance",
    "variance_limit",
    "variance_derivative",
    "laplace_variance",
    "laplace_variance_derivative",
    "even_moment",
    "double_factorial",
    "gaussian_density",
    "dx_density",
    "dxx_density",
    "dt_density",
    "variance_quad",
    "variance_double_integral",
    "variance_mp",
    "variance_derivative_mp",
    "SATURATION",
]

#: beyond ``SATURATION * theta`` the variance is replaced by its limit
SATURATION = 50.0


@dataclass(frozen=True)
class FouParams:
    """Parameters of the fOU process.

    Attributes
    ----------
    hurst : float
        Hurst index ``H`` in the open interval (1/2, 1).
    theta : float
        Relaxation time, positive.
    """

    hurst: float
    theta: float = 1.0

    def __post_init__(self):
        H, th = float(self.hurst), float(self.theta)
        if not (0.5 < H < 1.0):
            raise DomainError(f"Hurst index must lie in (1/2, 1), got {self.hurst}")
        if not (th > 0.0 and math.isfinite(th)):
            raise DomainError(f"theta must be positive and finite, got {self.theta}")
        object.__setattr__(self, "hurst", H)
        object.__setattr__(self, "theta", th)


class VarianceProfile:
    """Vectorized evaluator of ``V``, ``V'`` and ``V(inf)`` for fixed parameters.

    Parameters
    ----------
    params : FouParams
    order : int
        Number of Gauss-Jacobi nodes.  96 nodes give close to double
        precision for ``t <= SATURATION * theta``.
    """

    def __init__(self, params: FouParams, order: int = 96):
        self.params = params
        H = params.hurst
        self._w1, self._W1 = gauss_jacobi_unit(order, 2.0 * H - 1.0)
        self._w2, self._W2 = gauss_jacobi_unit(order, 2.0 * H - 2.0)
        self.limit = params.theta ** (2 * H) * H * float(gamma_fn(2 * H))

    def variance(self, t, full_output: bool = False):
        """``V(t)``; with ``full_output`` also a boolean mask of saturated entries."""
        H, th = self.params.hurst, self.params.theta
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise DomainError("variance needs t >= 0")
        sat = t > SATURATION * th
        tt = np.where(sat, 0.0, t).ravel()
        s = tt / th
        # int_0^t e^{-z/theta} z^{2H-1} dz = theta^{2H} Gamma(2H) P(2H, t/theta) exactly
        a = self.limit * gammainc(2 * H, s)
        with np.errstate(under="ignore"):
            b = np.exp(np.outer(s, self._w1) - 2.0 * s[:, None]) @ self._W1
        v = (a + H * tt ** (2 * H) * b).reshape(t.shape)
        v = np.where(sat, self.limit, v)
        if v.ndim == 0:
            v = float(v)
            sat = bool(sat)
        return (v, sat) if full_output else v

    def derivative(self, t):
        """``V'(t)``, with ``V'(0) = 0``."""
        H, th = self.params.hurst, self.params.theta
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise DomainError("variance_derivative needs t >= 0")
        tt = t.ravel()
        s = tt / th
        with np.errstate(under="ignore"):
            c = np.exp(np.outer(s, self._w2) - 2.0 * s[:, None]) @ self._W2
            out = 2 * H * (2 * H - 1) * np.where(tt > 0, tt, 1.0) ** (2 * H - 1) * c
        out = np.where(tt > 0, out, 0.0).reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    __call__ = variance


@lru_cache(maxsize=64)
def _profile(params: FouParams) -> VarianceProfile:
    return VarianceProfile(params)


def variance(params: FouParams, t, full_output: bool = False):
    """Variance ``V_{2,H}(t)`` of the fOU process (vectorized in ``t``).

    For ``t > SATURATION * theta`` the limit ``V(inf)`` is returned (relative
    gap below ``exp(-50)``); ``full_output=True`` also returns the mask of
    such entries.
    """
    return _profile(params).variance(t, full_output)


def variance_limit(params: FouParams) -> float:
    """Stationary variance ``theta**(2H) H Gamma(2H)``."""
    return _profile(params).limit


def variance_derivative(params: FouParams, t):
    """``V'_{2,H}(t)`` (vectorized in ``t``; ``V'(0) = 0``)."""
    return _profile(params).derivative(t)


def laplace_variance(params: FouParams, lam):
    """Closed-form Laplace transform of ``V``, valid for ``Re(lam) > 0``."""
    H, th = params.hurst, params.theta
    lam = np.asarray(lam)
    if np.any(np.real(lam) <= 0):
        raise DomainError("laplace_variance needs Re(lambda) > 0")
    return _lv_core(H, th, lam) / lam


def laplace_variance_derivative(params: FouParams, lam):
    """Closed-form Laplace transform of ``V'``, valid for ``Re(lam) > -1/theta``."""
    H, th = params.hurst, params.theta
    lam = np.asarray(lam)
    if np.any(np.real(lam) <= -1.0 / th):
        raise DomainError("laplace_variance_derivative needs Re(lambda) > -1/theta")
    return _lv_core(H, th, lam)


def _lv_core(H, th, lam):
    c = 2 * H * th ** (2 * H) * float(gamma_fn(2 * H))
    iscomplex = np.iscomplexobj(lam)
    lam_c = lam.astype(complex) if iscomplex else lam.astype(float)
    out = c / ((th * lam_c + 2.0) * (th * lam_c + 1.0) ** (2 * H - 1))
    return out if out.ndim else out[()]


_DF_MAX = 20


def double_factorial(n: int) -> int:
    """``(2n-1)!!`` computed exactly, for ``0 <= n <= 20``."""
    n = int(n)
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n > _DF_MAX:
        raise OverflowError(f"(2n-1)!! only supported for n <= {_DF_MAX}")
    return math.prod(range(1, 2 * n, 2))


def even_moment(params: FouParams, n: int, t):
    """``E[U_H(t)^{2n}] = (2n-1)!! V(t)^n``; ``t = inf`` gives the stationary value."""
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    df = double_factorial(n)
    t = np.asarray(t, dtype=float)
    v = np.where(np.isinf(t), variance_limit(params), variance(params, np.where(np.isinf(t), 0.0, t)))
    out = df * v ** int(n)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gaussian density p_H(t, x) and its derivatives
# ---------------------------------------------------------------------------

def _density_parts(params, t, x):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("densities need t > 0")
    x = np.asarray(x, dtype=float)
    V = variance(params, t)
    with np.errstate(under="ignore"):
        p = np.exp(-x * x / (2.0 * V)) / np.sqrt(2.0 * np.pi * V)
    return V, x, p


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def gaussian_density(params: FouParams, t, x):
    """``p_H(t, x)``, the centered Gaussian density with variance ``V(t)``."""
    _, _, p = _density_parts(params, t, x)
    return _scalar(p)


def dx_density(params: FouParams, t, x):
    """``d p_H / dx = -x p_H / V``."""
    V, x, p = _density_parts(params, t, x)
    return _scalar(-x / V * p)


def dxx_density(params: FouParams, t, x):
    """``d^2 p_H / dx^2 = (x^2/V^2 - 1/V) p_H``."""
    V, x, p = _density_parts(params, t, x)
    return _scalar((x * x / V - 1.0) / V * p)


def dt_density(params: FouParams, t, x):
    """``d p_H / dt = (V'/2) (x^2 - V) / V^2 p_H``."""
    V, x, p = _density_parts(params, t, x)
    Vp = variance_derivative(params, t)
    return _scalar(0.5 * Vp * (x * x - V) / (V * V) * p)


# ---------------------------------------------------------------------------
# Reference implementations (used as test oracles)
# ---------------------------------------------------------------------------

def variance_quad(params: FouParams, t: float, epsabs: float = 1e-13, epsrel: float = 1e-11) -> float:
    """``V(t)`` by adaptive quadrature with algebraic endpoint weights."""
    H, th = params.hurst, params.theta
    t = float(t)
    if t == 0.0:
        return 0.0
    kw = dict(weight="alg", wvar=(2 * H - 1, 0.0), epsabs=epsabs, epsrel=epsrel, limit=200)
    a, _ = integrate.quad(lambda z: math.exp(-z / th), 0.0, t, **kw)
    b, _ = integrate.quad(lambda z: math.exp((z - 2 * t) / th), 0.0, t, **kw)
    return H * (a + b)


def variance_double_integral(params: FouParams, t: float) -> float:
    """``V(t)`` from the two-dimensional covariance integral

    ``H(2H-1) theta^{2H} int int_{[0,t/theta]^2} e^{-s-u} |s-u|^{2H-2} ds du``,

    using symmetry about the diagonal and an algebraic weight for the
    diagonal singularity of the inner integral.
    """
    H, th = params.hurst, params.theta
    T = float(t) / th
    if T == 0.0:
        return 0.0

    def inner(s):
        # int_0^s e^{-s-u} (s-u)^{2H-2} du, with w = s - u
        v, _ = integrate.quad(lambda w: math.exp(-2 * s + w), 0.0, s,
                              weight="alg", wvar=(2 * H - 2, 0.0), epsabs=1e-14, epsrel=1e-12)
        return v

    outer, _ = integrate.quad(inner, 0.0, T, epsabs=1e-14, epsrel=1e-11, limit=200)
    return 2.0 * H * (2 * H - 1) * th ** (2 * H) * outer


def variance_mp(params: FouParams, t):
    """``V(t)`` in extended precision through confluent hypergeometric functions.

    Accepts and returns :mod:`mpmath` numbers; used for precision-sensitive
    cross-checks such as Gaver-Stehfest round trips.
    """
    H, th = mp.mpf(params.hurst), mp.mpf(params.theta)
    t = mp.mpf(t)
    if t == 0:
        return mp.mpf(0)
    a = 2 * H
    s = t / th
    first = th ** a * mp.gammainc(a, 0, s)
    second = th ** a * mp.exp(-2 * s) * s ** a / a * mp.hyp1f1(a, a + 1, s)
    return H * (first + second)


def variance_derivative_mp(params: FouParams, t):
    """``V'(t)`` in extended precision."""
    H, th = mp.mpf(params.hurst), mp.mpf(params.theta)
    t = mp.mpf(t)
    if t == 0:
        return mp.mpf(0)
    a = 2 * H - 1
    s = t / th
    return 2 * H * a * mp.exp(-2 * s) * th ** a * s ** a / a * mp.hyp1f1(a, a + 1, s)
