"""Inverse subordinators and time-changed fOU marginals.

For a subordinator ``sigma`` with exponent ``Psi`` the inverse
``E(t) = inf{y > 0 : sigma(y) > t}`` has a density ``f_E(t, y)`` with

    L[f_E(., y)](lam) = (Psi(lam)/lam) exp(-y Psi(lam)).

If ``E`` is independent of the fOU process, ``U_H(E(t))`` has the mixture
marginals

    V^Psi_{2n}(t) = int_0^inf V_{2n}(y) f_E(t, y) dy,
    phi^Psi(t, z) = int_0^inf exp(-z^2 V(y)/2) f_E(t, y) dy,
    p^Psi(t, x)  = int_0^inf p_H(y, x) f_E(t, y) dy.

All mixtures are evaluated with a fixed composite Gauss rule in ``y``
(geometrically graded towards ``y = 0``, uniform in the bulk) that is cached
per ``t``.  The rule is truncated where the tail mass of ``E(t)`` falls below
``1e-10`` according to Markov bounds from the positive moments of ``E(t)``.

For the stable subordinator ``f_E(t, y) = (t/alpha) y^{-1-1/alpha}
g_alpha(t y^{-1/alpha})`` in terms of the one-sided stable density
``g_alpha``, evaluated from Zolotarev's integral representation for moderate
arguments and from its convergent series for large ones.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import gamma as gamma_fn
from scipy.special import gammaln
from scipy.stats import qmc

from ._quadrature import CompositeRule, gauss_legendre_unit
from .bernstein import Kind, SubordinatorModel
from .errors import DivergenceError, DomainError, InversionError, NonConvergenceError
from .fou_analytic import (
    FouParams,
    double_factorial,
    even_moment,
    gaussian_density,
    laplace_variance,
    variance,
    variance_limit,
)
from .laplace_num import forward_laplace, invert_talbot, talbot_contour

__all__ = [
    "Strategy",
    "InverseSubordinatorKernel",
    "MixtureRule",
    "NegMoment",
    "MomentLimit",
    "DivergenceError",
    "stable_density",
    "increment_density",
    "stable_fractional_moment",
    "stable_fractional_moment_quad",
    "inverse_density",
    "tc_moment",
    "tc_moment_laplace",
    "moment_limit_integral",
    "tc_char_function",
    "tc_density",
    "neg_moment_E",
    "derivative_count",
]


# ---------------------------------------------------------------------------
# one-sided stable density
# ---------------------------------------------------------------------------

_ZOLOTAREV_NODES = 1000
_SERIES_SWITCH = 0.2   # use the series when x**(-alpha) < this
_SERIES_TERMS = 80


@lru_cache(maxsize=32)
def _zolotarev_table(alpha: float):
    u, w = gauss_legendre_unit(_ZOLOTAREV_NODES)
    u = np.pi * u
    w = np.pi * w
    a = alpha
    with np.errstate(divide="ignore"):
        logA = (a * np.log(np.sin(a * u)) + (1 - a) * np.log(np.sin((1 - a) * u))
                - np.log(np.sin(u))) / (1 - a)
    return logA, w


def _stable_zolotarev(x: np.ndarray, alpha: float) -> np.ndarray:
    logA, w = _zolotarev_table(alpha)
    kappa = alpha / (1 - alpha)
    lxk = -kappa * np.log(x)                   # log x^{-kappa}
    out = np.zeros_like(x)
    # A x^{-kappa} > 800 for every node: the density underflows
    live = np.flatnonzero(np.min(logA) + lxk < math.log(800.0))
    for start in range(0, live.size, _ZOLOTAREV_CHUNK):
        idx = live[start:start + _ZOLOTAREV_CHUNK]
        with np.errstate(over="ignore", under="ignore"):
            e = logA[None, :] + lxk[idx, None]
            integrand = np.exp(e - np.exp(e))  # A x^{-kappa} exp(-A x^{-kappa})
        out[idx] = (kappa / np.pi) / x[idx] * (integrand @ w)
    return out


_ZOLOTAREV_CHUNK = 4096


def _stable_series(x: np.ndarray, alpha: float) -> np.ndarray:
    k = np.arange(1, _SERIES_TERMS + 1)
    logc = gammaln(k * alpha + 1) - gammaln(k + 1)
    sgn = (-1.0) ** (k + 1) * np.sin(k * np.pi * alpha)
    lx = np.log(x)[:, None]
    with np.errstate(under="ignore"):
        terms = sgn[None, :] * np.exp(logc[None, :] - (k[None, :] * alpha + 1) * lx)
    return terms.sum(axis=1) / np.pi


def stable_density(x, alpha: float):
    """Density ``g_alpha`` of the positive stable law with ``E[e^{-lam S}] = e^{-lam^alpha}``.

    ``alpha = 1/2`` uses the Levy form ``x^{-3/2} e^{-1/(4x)} / (2 sqrt(pi))``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.zeros_like(flat)
    pos = flat > 0
    if alpha == 0.5:
        xp = flat[pos]
        with np.errstate(under="ignore"):
            out[pos] = xp ** -1.5 * np.exp(-0.25 / xp) / (2.0 * math.sqrt(math.pi))
    else:
        xp = flat[pos]
        big = xp ** (-alpha) < _SERIES_SWITCH
        vals = np.empty_like(xp)
        if big.any():
            vals[big] = _stable_series(xp[big], alpha)
        if (~big).any():
            vals[~big] = _stable_zolotarev(xp[~big], alpha)
        out[pos] = np.maximum(vals, 0.0)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def stable_fractional_moment(q: float, alpha: float) -> float:
    """Closed form ``E[S^q] = Gamma(1 - q/alpha) / Gamma(1 - q)`` for ``q < alpha``."""
    if q >= alpha:
        return math.inf
    return float(gamma_fn(1 - q / alpha) / gamma_fn(1 - q))


def stable_fractional_moment_quad(q: float, alpha: float) -> float:
    """``E[S^q]`` by quadrature over ``g_alpha``, ``q < alpha``.

    Beyond ``Z`` (where the series representation is used) the tail is
    integrated term by term in closed form.
    """
    if q >= alpha:
        return math.inf
    Z = _SERIES_SWITCH ** (-1.0 / alpha) * 2.0
    pts = [Z * 2.0 ** (-j) for j in range(1, 30)][::-1]
    body = 0.0
    edges = [0.0] + pts + [Z]
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(lambda s: s ** q * stable_density(s, alpha), lo, hi,
                              epsabs=0.0, epsrel=1e-12, limit=200)
        body += v
    k = np.arange(1, _SERIES_TERMS + 1)
    logc = gammaln(k * alpha + 1) - gammaln(k + 1)
    sgn = (-1.0) ** (k + 1) * np.sin(k * np.pi * alpha)
    tail = np.sum(sgn * np.exp(logc + (q - k * alpha) * math.log(Z)) / (k * alpha - q)) / np.pi
    return body + tail


def increment_density(model: SubordinatorModel, y, x):
    """Density of ``sigma(y)`` at ``x`` (broadcasting ``y`` against ``x``).

    Stable: ``y^{-1/alpha} g_alpha(x y^{-1/alpha})``; tempered: the stable
    density tilted by ``exp(-m x + y m^alpha)``; gamma: the Gamma(a y, b)
    density.
    """
    y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    k = model.kind
    if k in (Kind.STABLE, Kind.TEMPERED):
        a = model.alpha
        sc = y ** (-1.0 / a)
        out = sc * stable_density(x * sc, a)
        if k is Kind.TEMPERED:
            m = model.tempering
            with np.errstate(over="ignore", under="ignore"):
                out = out * np.exp(-m * x + y * m ** a)
        return out
    if k is Kind.GAMMA:
        return stats.gamma.pdf(x, model.shape * y, scale=1.0 / model.rate)
    raise DomainError("the identity model has no increment density")


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

class Strategy(str, enum.Enum):
    """How ``f_E`` is evaluated.

    ``TALBOT`` inverts the Laplace transform in ``t``; nodes where the
    contour estimate fails its accuracy check (far in the upper tail of
    ``E(t)``, where ``exp(-y Psi)`` grows along the contour) are recomputed
    from the convolution ``f_E(t, y) = int_0^t nu_inf(s) f_{sigma(y)}(t - s) ds``.
    ``CONVOLUTION`` uses that identity everywhere.
    """

    CLOSED_FORM_STABLE = "closed-form-stable"
    TALBOT = "talbot"
    CONVOLUTION = "convolution"
    POINT_MASS = "point-mass"


@dataclass(frozen=True)
class MixtureRule:
    """Quadrature rule for ``int h(y) f_E(t, y) dy``.

    ``weights`` already contain ``f_E(t, y_i)``; if ``singular_power`` is
    set, the first ``n_first`` weights also contain ``y**singular_power`` and
    integrands are divided by it there (see :meth:`integrate`).
    """

    t: float
    y: np.ndarray
    weights: np.ndarray
    singular_power: float | None
    n_first: int
    meta: dict = field(default_factory=dict)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        values = np.array(values, dtype=float)
        if self.n_first:
            values[..., : self.n_first] *= self.y[: self.n_first] ** (-self.singular_power)
        return values @ self.weights


class InverseSubordinatorKernel:
    """Density ``f_E(t, y)`` of the inverse subordinator and mixture rules.

    Parameters
    ----------
    model : SubordinatorModel
    strategy : Strategy, optional
        Defaults to the closed form for stable models, Talbot inversion
        otherwise, and a point mass at ``y = t`` for the identity model.
    talbot_nodes : int
        Node count for Talbot inversion.
    tail_mass : float
        Truncation level for the ``y`` range of mixture rules.
    order : int
        Gauss-Legendre order per panel of the mixture rules.
    """

    def __init__(
        self,
        model: SubordinatorModel,
        strategy: Strategy | str | None = None,
        *,
        talbot_nodes: int = 32,
        tail_mass: float = 1e-10,
        order: int = 16,
    ):
        self.model = model
        if strategy is None:
            if model.is_identity:
                strategy = Strategy.POINT_MASS
            elif model.kind is Kind.STABLE:
                strategy = Strategy.CLOSED_FORM_STABLE
            else:
                strategy = Strategy.TALBOT
        strategy = Strategy(strategy)
        if strategy is Strategy.CLOSED_FORM_STABLE and model.kind is not Kind.STABLE:
            raise DomainError("closed-form strategy is only available for stable models")
        if (strategy is Strategy.POINT_MASS) != model.is_identity:
            raise DomainError("the point-mass strategy is reserved for the identity model")
        self.strategy = strategy
        self.talbot_nodes = talbot_nodes
        self.tail_mass = tail_mass
        self.order = order
        self._rules: dict = {}

    def __repr__(self):
        return f"InverseSubordinatorKernel({self.model.spec()!r}, strategy={self.strategy.value!r})"

    # densities -------------------------------------------------------------
    def density(self, t: float, y, full_output: bool = False):
        """``f_E(t, y)`` for ``y > 0`` (vectorized in ``y``).

        With ``full_output`` also returns an error estimate (zero for the
        closed form, ``|f_N - f_{N/2}|`` for Talbot).
        """
        t = float(t)
        if not t > 0:
            raise DomainError("f_E needs t > 0")
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("f_E needs y > 0")
        if self.strategy is Strategy.POINT_MASS:
            raise DomainError("f_E is a point mass at y = t for the identity model")
        if self.strategy is Strategy.CLOSED_FORM_STABLE:
            a = self.model.alpha
            z = t * y ** (-1.0 / a)
            val = (t / a) * y ** (-1.0 - 1.0 / a) * stable_density(z, a)
            err = np.zeros_like(np.asarray(val, dtype=float))
        elif self.strategy is Strategy.TALBOT:
            val, err = self._talbot_density(t, y.ravel())
            val, err = val.reshape(y.shape), err.reshape(y.shape)
        else:
            val, err = self._convolution_density(t, y.ravel())
            val, err = val.reshape(y.shape), err.reshape(y.shape)
        if val.ndim == 0:
            val, err = float(val), float(err)
        return (val, err) if full_output else val

    def _talbot_raw(self, t, y):
        N = self.talbot_nodes
        outs = []
        for n in (N, N // 2):
            s, w, _ = talbot_contour(t, n)
            psi = self.model._psi(s)
            with np.errstate(over="ignore", invalid="ignore"):
                F = (psi / s)[None, :] * np.exp(-np.outer(y, psi))
                outs.append(np.real(F @ w))
        with np.errstate(invalid="ignore"):
            return outs[0], np.abs(outs[0] - outs[1])

    def _talbot_density(self, t, y):
        val, err = self._talbot_raw(t, y)
        bad = ~(np.isfinite(val) & (err <= 1e-10 + 1e-7 * np.abs(val)))
        if bad.any():
            val = val.copy()
            err = err.copy()
            cv, ce = self._convolution_density(t, y[bad])
            # keep whichever estimate is more accurate at each node
            take = ~np.isfinite(val[bad]) | ~(err[bad] <= ce)
            idx = np.flatnonzero(bad)[take]
            val[idx], err[idx] = cv[take], ce[take]
        return val, err

    def _convolution_density(self, t, y):
        """``f_E(t, y) = int_0^t nu_inf(s) f_{sigma(y)}(t - s) ds``; error from two orders.

        ``[0, t/2]`` is graded towards the singularity of ``nu_inf`` at 0 and
        ``[t/2, t]`` towards ``s = t``, where ``f_{sigma(y)}`` concentrates for
        small ``y``.  The last ``t 2^-60`` next to ``s = t`` is closed with the
        law of ``sigma(y)``, ``nu_inf(t) P(sigma(y) <= t 2^-60)``.
        """
        m = self.model
        beta = -m.alpha if m.kind in (Kind.STABLE, Kind.TEMPERED) else None
        eps = t * 2.0 ** -60
        head = 0.0
        if m.kind is Kind.GAMMA:  # sigma(y) has the singular density u^{ay-1} near 0
            head = float(m.levy_tail(t)) * stats.gamma.cdf(eps, m.shape * y, scale=1.0 / m.rate)
        outs = []
        for order in (self.order, self.order - 4):
            left = CompositeRule.graded(t / 2, smallest=t * 2.0 ** -22, grade_to=t / 2, step=t / 2,
                                        order=order, singular_power=beta)
            right = CompositeRule.from_edges(t * 2.0 ** np.arange(-60, 0), order=order)
            dl = increment_density(m, y[:, None], t - left.nodes[None, :])
            u = right.nodes
            dr = increment_density(m, y[:, None], u[None, :])
            outs.append(left.integrate_singular(dl * m.levy_tail(left.nodes)[None, :])
                        + (dr * m.levy_tail(t - u)[None, :]) @ right.weights + head)
        return outs[0], np.abs(outs[0] - outs[1])

    # moments of E(t) -------------------------------------------------------
    def moment(self, t: float, k: int = 1) -> float:
        """``E[E(t)^k] = k! L^{-1}[1/(lam Psi^k)](t)``."""
        t = float(t)
        m = self.model
        if m.is_identity:
            return t ** k
        if m.kind is Kind.STABLE:
            a = m.alpha
            return math.factorial(k) * t ** (a * k) / float(gamma_fn(1 + a * k))
        return _talbot_moment(m, t, k)

    def truncation(self, t: float) -> float:
        """``Y`` with ``P(E(t) > Y) <= tail_mass``.

        Uses the smaller of the Chernoff bound
        ``P(E(t) > y) = P(sigma(y) < t) <= inf_lam exp(lam t - y Psi(lam))``
        and the best Markov bound ``E[E(t)^k] / y^k``, ``k <= 8``.
        """
        t = float(t)
        markov = min((self.moment(t, k) / self.tail_mass) ** (1.0 / k) for k in range(1, 9))
        lams = np.logspace(-8, 14, 881)
        psi = self.model.psi(lams)
        target = math.log(self.tail_mass)

        def excess(y):
            return float(np.min(lams * t - y * psi)) - target

        if excess(markov) > 0:
            return markov
        lo = self.moment(t, 1)
        if excess(lo) <= 0:
            return lo
        return optimize.brentq(excess, lo, markov, xtol=1e-6 * markov)

    # mixture rules ----------------------------------------------------------
    def mixture_rule(self, t: float, singular_power: float | None = None) -> MixtureRule:
        """Cached rule for ``int h(y) f_E(t, y) dy``."""
        key = (float(t), singular_power)
        rule = self._rules.get(key)
        if rule is None:
            rule = self._build_rule(float(t), singular_power)
            if len(self._rules) > 1024:
                self._rules.clear()
            self._rules[key] = rule
        return rule

    def _build_rule(self, t, singular_power):
        if not t > 0:
            raise DomainError("mixture rules need t > 0")
        if self.model.is_identity:
            return MixtureRule(t, np.array([t]), np.array([1.0]), None, 0, {"point_mass": True})
        m1 = self.moment(t, 1)
        Y = self.truncation(t)
        base = CompositeRule.graded(Y, smallest=m1 * 2.0 ** -40, grade_to=m1, step=m1 / 4.0,
                                    order=self.order, singular_power=singular_power)
        fe, ferr = self.density(t, base.nodes, full_output=True)
        if np.any(ferr > 1e-7 * max(1.0, float(np.max(np.abs(fe))))):
            raise InversionError(f"f_E inversion at t={t} failed its accuracy check")
        w = base.weights * fe
        # f_E integrates to 1 - tail_mass on [0, Y]; normalizing removes the
        # inversion error from the zeroth moment of every mixture
        raw = MixtureRule(t, base.nodes, w, singular_power, base.n_first).integrate(np.ones(w.size))
        w = w / raw
        meta = {
            "raw_mass": float(raw),
            "truncation": Y,
            "tail_mass_bound": self.tail_mass,
            "mean_E": m1,
            "nodes": int(base.nodes.size),
            "f_E_max_error": float(np.max(ferr)),
            "strategy": self.strategy.value,
        }
        return MixtureRule(t, base.nodes, w, singular_power, base.n_first, meta)

    def companion(self) -> "InverseSubordinatorKernel":
        """Kernel with a lower panel order, used for error estimates."""
        c = getattr(self, "_companion", None)
        if c is None:
            c = InverseSubordinatorKernel(self.model, self.strategy, talbot_nodes=self.talbot_nodes,
                                          tail_mass=self.tail_mass, order=self.order - 4)
            self._companion = c
        return c

    def expect(self, h, t: float, singular_power: float | None = None):
        """``E[h(E(t))]`` for vectorized ``h`` (broadcast over a leading axis)."""
        rule = self.mixture_rule(t, singular_power)
        return rule.integrate(h(rule.y))


@lru_cache(maxsize=4096)
def _talbot_moment(model: SubordinatorModel, t: float, k: int) -> float:
    r = invert_talbot(lambda s: 1.0 / (s * model._psi(s) ** k), t, rtol=1e-8)
    return math.factorial(k) * r.value


@lru_cache(maxsize=32)
def _kernel(model: SubordinatorModel) -> InverseSubordinatorKernel:
    return InverseSubordinatorKernel(model)


def _as_kernel(k) -> InverseSubordinatorKernel:
    if isinstance(k, InverseSubordinatorKernel):
        return k
    if isinstance(k, SubordinatorModel):
        return _kernel(k)
    raise TypeError("expected an InverseSubordinatorKernel or SubordinatorModel")


def inverse_density(kernel, t: float, y):
    """``f_E(t, y)``."""
    return _as_kernel(kernel).density(t, y)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def tc_moment(kernel, params: FouParams, n: int, t):
    """``V^Psi_{2n}(t) = int V_{2n}(y) f_E(t, y) dy`` (vectorized in ``t``)."""
    kern = _as_kernel(kernel)
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise DomainError("tc_moment needs t > 0")
    if kern.model.is_identity:
        out = np.asarray(even_moment(params, n, ts), dtype=float)
    else:
        out = np.array([kern.expect(lambda y: even_moment(params, n, y), ti) for ti in ts])
    return float(out[0]) if np.ndim(t) == 0 else out


def _tc_moment_laplace_any(kern, params, n, lam):
    psi = kern.model._psi(lam)
    if n == 1:
        return psi / lam * _laplace_variance_continued(params, psi)
    raise DomainError("complex abscissas are only supported for n = 1")


def _laplace_variance_continued(params, mu):
    # analytic continuation of the closed form off the half-plane Re > 0
    H, th = params.hurst, params.theta
    c = 2 * H * th ** (2 * H) * float(gamma_fn(2 * H))
    return c / (mu * (th * mu + 2.0) * (th * mu + 1.0) ** (2 * H - 1))


def tc_moment_laplace(kernel, params: FouParams, n: int, lam):
    """``L[V^Psi_{2n}](lam) = (Psi(lam)/lam) L[V_{2n}](Psi(lam))`` for ``lam > 0``.

    ``n = 1`` uses the closed-form transform of the variance; larger ``n``
    transform ``(2n-1)!! V^n`` numerically.  Complex ``lam`` is accepted for
    ``n = 1`` (used by contour inversion).
    """
    kern = _as_kernel(kernel)
    lam_arr = np.asarray(lam)
    if np.iscomplexobj(lam_arr):
        return _tc_moment_laplace_any(kern, params, n, lam_arr)
    if np.any(lam_arr <= 0):
        raise DomainError("tc_moment_laplace needs lambda > 0")
    psi = kern.model.psi(lam_arr)
    if n == 1:
        out = psi / lam_arr * laplace_variance(params, psi)
        return float(out) if np.ndim(out) == 0 else out
    lim = even_moment(params, n, math.inf)
    th = params.theta

    def one(l, p):
        fl = forward_laplace(lambda s: even_moment(params, n, s), p, bound=lim,
                             constant_after=(50.0 * th, lim))
        return p / l * fl.value.real

    out = np.vectorize(one, otypes=[float])(lam_arr, psi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MomentLimit:
    """Result of :func:`moment_limit_integral`.

    ``value`` is ``(2n-1)!!`` times ``raw``; ``raw`` is the prefactor times
    the ``2n``-fold integral as displayed in the limit formula, which equals
    ``V(inf)^n``.  ``error`` is a standard error (QMC) or quadrature error.
    """

    n: int
    value: float
    raw: float
    integral: float
    error: float
    method: str
    points: int = 0


def moment_limit_integral(
    params: FouParams,
    n: int,
    *,
    qmc_log2_points: int = 19,
    qmc_replicates: int = 16,
    seed: int = 12345,
    max_rel_se: float = 0.01,
) -> MomentLimit:
    """Stationary moment ``lim_t V^Psi_{2n}(t)`` from its multiple-integral form.

    The integral

        K_n = int_{[0,inf)^{2n}} prod_i |x_i - y_i|^{2H-2}
              / (1 + sum x_i + sum y_i)^{2nH+1}

    times ``H^n (2H-1)^n Gamma(2nH+1) theta^{2nH}`` equals ``V(inf)^n``; the
    stationary Gaussian moment is ``(2n-1)!!`` times that, which is what
    ``value`` holds.

    ``n = 1`` uses nested adaptive quadrature, split along the diagonal
    ``x = y`` with an algebraic weight for the singularity.  ``n = 2`` uses
    randomized (scrambled Sobol) quasi-Monte Carlo: each pair ``(x, y)`` is
    mapped to ``u = x + y`` and ``w = |x - y| / u = v^{1/(2H-1)}``, which
    removes the diagonal singularity, and ``u = q / (1 - q)``.

    Raises
    ------
    NonConvergenceError
        If the QMC standard error exceeds ``max_rel_se`` relative.
    """
    H, th = params.hurst, params.theta
    if n not in (1, 2):
        raise DomainError("moment_limit_integral supports n = 1 or 2")
    pref = H ** n * (2 * H - 1) ** n * float(gamma_fn(2 * n * H + 1)) * th ** (2 * n * H)
    if n == 1:
        c = 2 * H + 1

        def inner(x):
            v, _ = integrate.quad(lambda y: (1.0 + x + y) ** (-c), 0.0, x, weight="alg",
                                  wvar=(0.0, 2 * H - 2), epsabs=0.0, epsrel=1e-12)
            return v

        K, err = integrate.quad(inner, 0.0, math.inf, epsabs=0.0, epsrel=1e-11, limit=400)
        K *= 2.0
        err *= 2.0
        raw = pref * K
        return MomentLimit(1, raw, raw, K, pref * err, "adaptive-quadrature")

    b = 1.0 / (2 * H - 1)
    c = 4 * H + 1
    ests = []
    seeds = np.random.SeedSequence(seed).spawn(qmc_replicates)
    for ss in seeds:
        eng = qmc.Sobol(d=4, scramble=True, seed=np.random.default_rng(ss))
        pts = eng.random_base2(qmc_log2_points)
        # coordinates (q1, v1, q2, v2); for each pair dx dy = u du dw (both
        # orderings), |x-y|^{2H-2} = (u w)^{2H-2}, and with w = v^b the factor
        # w^{2H-2} dw becomes b dv, so the integrand no longer depends on v
        q1, q2 = pts[:, 0], pts[:, 2]
        u1, u2 = q1 / (1 - q1), q2 / (1 - q2)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = (b * u1 ** (2 * H - 1) / (1 - q1) ** 2
                 * b * u2 ** (2 * H - 1) / (1 - q2) ** 2
                 / (1.0 + u1 + u2) ** c)
        f = np.where(np.isfinite(f), f, 0.0)
        ests.append(f.mean())
    ests = np.asarray(ests)
    K = float(ests.mean())
    se = float(ests.std(ddof=1) / math.sqrt(len(ests)))
    if se > max_rel_se * abs(K):
        raise NonConvergenceError(f"QMC standard error {se:.3e} exceeds {max_rel_se:.0%}")
    raw = pref * K
    return MomentLimit(2, double_factorial(2) * raw, raw, K, double_factorial(2) * pref * se,
                       "randomized-qmc", qmc_replicates * 2 ** qmc_log2_points)


# ---------------------------------------------------------------------------
# characteristic function and density
# ---------------------------------------------------------------------------

def tc_char_function(kernel, params: FouParams, t: float, z):
    """``phi^Psi(t, z) = E[exp(-z^2 V(E(t)) / 2)]`` (vectorized in ``z``)."""
    kern = _as_kernel(kernel)
    z = np.asarray(z, dtype=float)
    if kern.model.is_identity:
        out = np.exp(-0.5 * z * z * variance(params, t))
        return float(out) if out.ndim == 0 else out
    rule = kern.mixture_rule(t)
    V = variance(params, rule.y)
    zz = z.ravel()
    out = np.exp(-0.5 * np.outer(zz * zz, V)) @ rule.weights
    out = out.reshape(z.shape)
    return float(out) if out.ndim == 0 else out


def _char_tail_coefficient(kern, params, t):
    # phi(z) ~ f_E(t, 0+) Gamma(1 + 1/(2H)) 2^{1/(2H)} z^{-1/H} for large z, f_E(t, 0+) = nu_inf(t)
    H = params.hurst
    return float(kern.model.levy_tail(t)) * math.gamma(1 + 0.5 / H) * 2.0 ** (0.5 / H)


def tc_density(kernel, params: FouParams, t: float, x, *, method: str = "mixture",
               full_output: bool = False):
    """Density ``p^Psi(t, x)`` of the time-changed fOU marginal.

    Parameters
    ----------
    method : {"mixture", "fourier"}
        ``"mixture"`` integrates ``p_H(y, x) f_E(t, y)`` over ``y`` (a
        Gauss-Jacobi first panel absorbs the ``y^{-H}`` behaviour at
        ``x = 0``); ``"fourier"`` inverts the characteristic function,
        ``(1/pi) int_0^inf phi(t, z) cos(z x) dz``.
    full_output : bool
        Also return ``(errors, meta)``.

    Raises
    ------
    DivergenceError
        At ``x = 0`` when ``E[E(t)^{-H}]`` is infinite.
    """
    kern = _as_kernel(kernel)
    xs = np.asarray(x, dtype=float)
    H = params.hurst
    meta = {"method": method, "derivative_count": derivative_count(kern, t, H)}
    if kern.model.is_identity:
        vals = np.asarray(gaussian_density(params, t, xs), dtype=float)
        errs = np.zeros_like(vals)
    elif method == "mixture":
        if np.any(xs == 0) and not neg_moment_E(kern, t, H).finite:
            raise DivergenceError("p^Psi(t, 0) diverges: E[E(t)^-H] is infinite")
        rule = kern.mixture_rule(t, singular_power=-H)
        V = variance(params, rule.y)
        xf = xs.ravel()
        with np.errstate(under="ignore"):
            P = np.exp(-np.outer(xf * xf, 0.5 / V)) / np.sqrt(2 * np.pi * V)[None, :]
        vals = rule.integrate(P)
        rl = kern.companion().mixture_rule(t, singular_power=-H)
        Vl = variance(params, rl.y)
        with np.errstate(under="ignore"):
            Pl = np.exp(-np.outer(xf * xf, 0.5 / Vl)) / np.sqrt(2 * np.pi * Vl)[None, :]
        errs = np.abs(vals - rl.integrate(Pl))
        vals, errs = vals.reshape(xs.shape), errs.reshape(xs.shape)
        meta.update(rule.meta)
    elif method == "fourier":
        vals, errs = _density_fourier(kern, params, float(t), xs.ravel())
        vals, errs = vals.reshape(xs.shape), errs.reshape(xs.shape)
    else:
        raise ValueError("method must be 'mixture' or 'fourier'")
    if vals.ndim == 0:
        vals, errs = float(vals), float(errs)
    return (vals, errs, meta) if full_output else vals


def _density_fourier(kern, params, t, xs, z_max=1e4):
    rule = kern.mixture_rule(t)
    V = variance(params, rule.y)
    W = rule.weights
    H = params.hurst

    def phi(z):
        return float(np.exp(-0.5 * z * z * V) @ W)

    A = _char_tail_coefficient(kern, params, t)
    vals = np.empty_like(xs)
    errs = np.empty_like(xs)
    for i, x in enumerate(np.abs(xs)):
        if x == 0.0:
            edges = [0.0] + [z_max * 2.0 ** (-j) for j in range(30, -1, -1)]
            body = err = 0.0
            for lo, hi in zip(edges[:-1], edges[1:]):
                v, e = integrate.quad(phi, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
                body += v
                err += e
            tail = A * z_max ** (1 - 1 / H) / (1 / H - 1)
            # relative accuracy of the tail asymptotic is O(z_max^{-1/H})
            err += abs(tail) * z_max ** (-1 / H) * 10
            vals[i] = (body + tail) / np.pi
            errs[i] = err / np.pi
        else:
            v, e = integrate.quad(phi, 0.0, math.inf, weight="cos", wvar=x, limlst=200, limit=400)
            vals[i] = v / np.pi
            errs[i] = e / np.pi
    return vals, errs


# ---------------------------------------------------------------------------
# negative moments of E(t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NegMoment:
    """``E[E(t)^{-p}]``; ``finite`` is False (and ``value`` is inf) on divergence."""

    value: float
    finite: bool
    t: float
    power: float
    method: str
    detail: dict = field(default_factory=dict)


def neg_moment_E(kernel, t: float, p: float) -> NegMoment:
    """Negative moment ``E[E(t)^{-p}]`` with divergence detection.

    Stable models use ``E(t) = (t/S)^alpha`` in law, so
    ``E[E(t)^{-p}] = t^{-alpha p} E[S^{alpha p}]``, finite iff ``p < 1``;
    ``E[S^q]`` is obtained by quadrature over ``g_alpha``.  Other models
    integrate ``y^{-p} f_E(t, y)`` and detect divergence from the decay of
    the contributions of the geometric panels towards ``y = 0``.
    """
    kern = _as_kernel(kernel)
    t, p = float(t), float(p)
    if not t > 0 or not p > 0:
        raise DomainError("neg_moment_E needs t > 0 and p > 0")
    m = kern.model
    if m.is_identity:
        return NegMoment(t ** (-p), True, t, p, "point-mass")
    if m.kind is Kind.STABLE:
        a = m.alpha
        if p >= 1.0:
            return NegMoment(math.inf, False, t, p, "stable-scaling", {"condition": "p < 1"})
        ES = stable_fractional_moment_quad(a * p, a)
        return NegMoment(t ** (-a * p) * ES, True, t, p, "stable-scaling", {"E_S_q": ES})
    return _neg_moment_generic(kern, t, p)


def _neg_moment_generic(kern, t, p):
    # panel contributions of y^{-p} f_E on the geometric panels next to y = 0
    # scale like 2^{-(1-p) j} when f_E(t, 0+) > 0; a nonpositive exponent
    # means the integral diverges at the origin
    plain = kern.mixture_rule(t)
    o = kern.order
    contrib = (plain.y ** (-p) * plain.weights)[o: o + 10 * o].reshape(10, o).sum(axis=1)
    slope = float(np.median(np.log2(contrib[1:] / contrib[:-1])))
    if slope <= 0.02 or p >= 1.0:
        return NegMoment(math.inf, False, t, p, "mixture", {"panel_decay_exponent": slope})
    rule = kern.mixture_rule(t, singular_power=-p)
    val = float(rule.integrate(rule.y ** (-p)))
    return NegMoment(val, True, t, p, "mixture", {"panel_decay_exponent": slope})


def derivative_count(kernel, t: float, H: float, n_max: int = 8) -> int:
    """Largest ``n`` with ``E[E(t)^{-(n+1)H}] < inf`` (``-1`` if none).

    This is the number of times the density ``p^Psi(t, .)`` is guaranteed
    to be differentiable in ``x``.
    """
    kern = _as_kernel(kernel)
    n = -1
    for k in range(n_max + 1):
        if not neg_moment_E(kern, t, (k + 1) * H).finite:
            break
        n = k
    return n
