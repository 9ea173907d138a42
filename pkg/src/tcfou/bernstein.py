"""Subordinators described by their Laplace exponents.

A driftless subordinator ``sigma`` with Levy density ``nu`` has Laplace
exponent ``Psi(lam) = int_0^inf (1 - e^{-lam x}) nu(x) dx``.  The memory
kernel of the associated generalized Caputo derivative is the Levy tail
``nu_inf(t) = int_t^inf nu(x) dx``, and its primitive is the integrated tail
``I(x) = int_0^x nu_inf(y) dy``.

Catalog
-------
``stable(alpha)``
    ``Psi = lam**alpha``.
``tempered(alpha, m)``
    ``Psi = (lam + m)**alpha - m**alpha``; stable density times ``exp(-m x)``.
``gamma(a, b)``
    ``Psi = a log(1 + lam/b)``; density ``a exp(-b x) / x``.
``identity()``
    ``Psi = lam``, i.e. ``sigma(y) = y``.  Test-only: it has a drift and no
    jumps, so there is no Levy tail; every time change becomes the identity
    and time-changed quantities reduce to their plain counterparts.

Only the stable tails have closed forms here; tempered and gamma tails are
computed by quadrature of the Levy density (memoized per argument).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize
from scipy.special import exp1, gammaincc
from scipy.special import gamma as gamma_fn

from .errors import DomainError, GridError, SingularKernelWarning, UnsupportedModelError, ValidationError

__all__ = [
    "Kind",
    "SubordinatorModel",
    "ConjugateModel",
    "CaputoResult",
    "parse_model",
    "laplace_exponent",
    "laplace_exponent_derivative",
    "inverse_laplace_exponent",
    "levy_tail",
    "integrated_tail",
    "caputo_kernel_transform",
    "generalized_caputo",
    "conjugate_integral",
    "tail_convolution",
]


class Kind(str, enum.Enum):
    STABLE = "stable"
    TEMPERED = "tempered"
    GAMMA = "gamma"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SubordinatorModel:
    """A subordinator from the catalog.

    Use the constructors :meth:`stable`, :meth:`tempered`, :meth:`gamma`,
    :meth:`identity` or :func:`parse_model` rather than calling this directly.
    """

    kind: Kind
    alpha: float | None = None
    tempering: float | None = None
    shape: float | None = None
    rate: float | None = None

    def __post_init__(self):
        k = Kind(self.kind)
        object.__setattr__(self, "kind", k)

        def pos(name):
            v = getattr(self, name)
            if v is None or not (float(v) > 0.0 and math.isfinite(float(v))):
                raise DomainError(f"{k.value} model needs a positive finite {name}")
            object.__setattr__(self, name, float(v))

        if k in (Kind.STABLE, Kind.TEMPERED):
            a = self.alpha
            if a is None or not (0.0 < float(a) < 1.0):
                raise DomainError(f"alpha must lie in (0, 1), got {a}")
            object.__setattr__(self, "alpha", float(a))
        if k is Kind.TEMPERED:
            pos("tempering")
        if k is Kind.GAMMA:
            pos("shape")
            pos("rate")

    # constructors -------------------------------------------------------
    @classmethod
    def stable(cls, alpha: float) -> "SubordinatorModel":
        return cls(Kind.STABLE, alpha=alpha)

    @classmethod
    def tempered(cls, alpha: float, m: float) -> "SubordinatorModel":
        return cls(Kind.TEMPERED, alpha=alpha, tempering=m)

    @classmethod
    def gamma(cls, a: float = 1.0, b: float = 1.0) -> "SubordinatorModel":
        return cls(Kind.GAMMA, shape=a, rate=b)

    @classmethod
    def identity(cls) -> "SubordinatorModel":
        return cls(Kind.IDENTITY)

    # descriptors --------------------------------------------------------
    @property
    def is_identity(self) -> bool:
        return self.kind is Kind.IDENTITY

    @property
    def test_only(self) -> bool:
        """True for the degenerate identity model."""
        return self.is_identity

    @property
    def has_sampler(self) -> bool:
        return True

    def spec(self) -> str:
        """Model string accepted by :func:`parse_model`."""
        if self.kind is Kind.STABLE:
            return f"stable:{self.alpha!r}"
        if self.kind is Kind.TEMPERED:
            return f"tempered:{self.alpha!r}:{self.tempering!r}"
        if self.kind is Kind.GAMMA:
            return f"gamma:{self.shape!r}:{self.rate!r}"
        return "identity"

    def __str__(self):
        return self.spec()

    # Laplace exponent ---------------------------------------------------
    def psi(self, lam):
        """``Psi(lam)``, principal branch, for ``Re(lam) >= 0``."""
        lam = np.asarray(lam)
        if np.any(np.real(lam) < 0):
            raise DomainError("Laplace exponent needs Re(lambda) >= 0")
        return self._psi(lam)

    def _psi(self, lam):
        # no domain check: used on contours that may leave the half-plane
        lam = np.asarray(lam)
        k = self.kind
        if k is Kind.STABLE:
            out = np.where(lam == 0, 0.0, lam ** self.alpha) if not np.iscomplexobj(lam) \
                else lam ** self.alpha
        elif k is Kind.TEMPERED:
            m = self.tempering
            out = (lam + m) ** self.alpha - m ** self.alpha
        elif k is Kind.GAMMA:
            out = self.shape * np.log1p(lam / self.rate)
        else:
            out = lam * 1.0
        return out[()] if np.ndim(out) == 0 else out

    def dpsi(self, lam):
        """``Psi'(lam)`` for ``lam > 0`` (and complex ``lam`` off the branch cut)."""
        lam = np.asarray(lam)
        k = self.kind
        if k is Kind.STABLE:
            out = self.alpha * lam ** (self.alpha - 1.0)
        elif k is Kind.TEMPERED:
            out = self.alpha * (lam + self.tempering) ** (self.alpha - 1.0)
        elif k is Kind.GAMMA:
            out = self.shape / (self.rate + lam)
        else:
            out = np.ones_like(lam, dtype=float)
        return out[()] if np.ndim(out) == 0 else out

    # Levy measure -------------------------------------------------------
    def _density_form(self) -> tuple[float, callable]:
        """``(beta, r)`` with ``nu(x) = x**beta * r(x)`` and ``r`` smooth."""
        k = self.kind
        if k in (Kind.STABLE, Kind.TEMPERED):
            a = self.alpha
            c = a / float(gamma_fn(1.0 - a))
            m = self.tempering or 0.0
            return -1.0 - a, (lambda x: c * math.exp(-m * x))
        if k is Kind.GAMMA:
            a, b = self.shape, self.rate
            return -1.0, (lambda x: a * math.exp(-b * x))
        raise UnsupportedModelError("the identity model has no Levy measure")

    def _decay_rate(self) -> float:
        return self.tempering if self.kind is Kind.TEMPERED else self.rate

    def levy_density(self, x):
        """Levy density ``nu(x)`` for ``x > 0``."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("Levy density needs x > 0")
        k = self.kind
        if k in (Kind.STABLE, Kind.TEMPERED):
            a = self.alpha
            m = self.tempering or 0.0
            out = a / float(gamma_fn(1 - a)) * x ** (-1 - a) * np.exp(-m * x)
        elif k is Kind.GAMMA:
            out = self.shape * np.exp(-self.rate * x) / x
        else:
            raise UnsupportedModelError("the identity model has no Levy measure")
        return out[()] if out.ndim == 0 else out

    def levy_tail(self, t):
        """``nu_inf(t) = nu((t, inf))`` for ``t > 0`` (vectorized)."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0) or np.any(np.isnan(t)):
            raise DomainError("Levy tail needs t > 0")
        if self.is_identity:
            raise UnsupportedModelError("the identity model has no Levy tail")
        if self.kind is Kind.STABLE:
            a = self.alpha
            out = t ** (-a) / float(gamma_fn(1 - a))
        elif self.kind is Kind.GAMMA:
            out = self.shape * exp1(self.rate * t)
        else:
            out = _tempered_tail(self, t)
        return out[()] if out.ndim == 0 else out

    def integrated_tail(self, x):
        """``I(x) = int_0^x nu_inf``; for the identity model ``I`` is undefined."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0) or np.any(np.isnan(x)):
            raise DomainError("integrated tail needs x > 0")
        if self.is_identity:
            raise UnsupportedModelError("the identity model has no Levy tail")
        if self.kind is Kind.STABLE:
            a = self.alpha
            out = x ** (1 - a) / ((1 - a) * float(gamma_fn(1 - a)))
        else:
            out = _map(lambda s: _itail_quad(self, s), x)
        return out[()] if out.ndim == 0 else out

    def integrated_tail2(self, x):
        """``J(x) = int_0^x I``, the second primitive of ``nu_inf``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("J needs x >= 0")
        if self.is_identity:
            raise UnsupportedModelError("the identity model has no Levy tail")
        if self.kind is Kind.STABLE:
            a = self.alpha
            out = x ** (2 - a) / float(gamma_fn(3 - a))
        else:
            out = _map(lambda s: _jtail_quad(self, s) if s > 0 else 0.0, x)
        return out[()] if out.ndim == 0 else out

    def mean_jump_rate(self) -> float:
        """``Psi'(0+)``: the mean ``E[sigma(1)]`` (``inf`` for stable)."""
        if self.kind is Kind.STABLE:
            return math.inf
        return float(self.dpsi(0.0))


# memoized quadratures for the non-stable tails ------------------------------

_EPS = 1e-13


def _map(f, x: np.ndarray) -> np.ndarray:
    # a plain loop rather than np.vectorize: QUADPACK leaves stale floating-point
    # status flags that a ufunc wrapper would report as overflow warnings
    return np.array([f(float(s)) for s in x.ravel()], dtype=float).reshape(x.shape)


_TEMPERED_CLOSED_MAX = 20.0


def _tempered_tail(model: SubordinatorModel, t: np.ndarray) -> np.ndarray:
    # m^a Gamma(-a, x) a / Gamma(1-a) with x = m t, through the recurrence
    # a Gamma(-a, x) = x^-a e^-x - Gamma(1-a, x); it cancels like 1/x, so large
    # x falls back to quadrature
    a, m = model.alpha, model.tempering
    x = m * t
    out = np.empty_like(x)
    near = x <= _TEMPERED_CLOSED_MAX
    xn = x[near]
    out[near] = m ** a * (xn ** (-a) * np.exp(-xn) / float(gamma_fn(1 - a)) - gammaincc(1 - a, xn))
    out[~near] = _map(lambda s: _tail_quad(model, s), t[~near])
    return out


@lru_cache(maxsize=65536)
def _tail_quad(model: SubordinatorModel, t: float) -> float:
    beta, r = model._density_form()
    # x = t e^u turns the singular decay into a smooth exponential one; beyond
    # u_max the exponential factor of r is below e^{-60}
    u_max = max(math.log(60.0 / (model._decay_rate() * t)), 0.0) + 2.0
    v, _ = integrate.quad(lambda u: (t * math.exp(u)) ** (beta + 1.0) * r(t * math.exp(u)),
                          0.0, u_max, epsabs=0.0, epsrel=_EPS, limit=200)
    return v


@lru_cache(maxsize=65536)
def _itail_quad(model: SubordinatorModel, x: float) -> float:
    beta, r = model._density_form()
    # I(x) = int_0^x z nu(z) dz + x nu_inf(x)
    v, _ = integrate.quad(r, 0.0, x, weight="alg", wvar=(beta + 1.0, 0.0),
                          epsabs=0.0, epsrel=_EPS, limit=200)
    return v + x * _tail_quad(model, x)


@lru_cache(maxsize=65536)
def _jtail_quad(model: SubordinatorModel, x: float) -> float:
    beta, r = model._density_form()
    # J(x) = int_0^x nu(z) (x z - z^2/2) dz + x^2 nu_inf(x) / 2
    v, _ = integrate.quad(lambda z: r(z) * (x - 0.5 * z), 0.0, x, weight="alg",
                          wvar=(beta + 1.0, 0.0), epsabs=0.0, epsrel=_EPS, limit=200)
    return v + 0.5 * x * x * _tail_quad(model, x)


# ---------------------------------------------------------------------------
# model strings
# ---------------------------------------------------------------------------

def parse_model(spec: str) -> SubordinatorModel:
    """Parse ``stable:A``, ``tempered:A:M``, ``gamma:A:B`` or ``identity``."""
    if isinstance(spec, SubordinatorModel):
        return spec
    parts = [p.strip() for p in str(spec).strip().split(":")]
    name = parts[0].lower()
    try:
        args = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise ValidationError(f"bad model string {spec!r}: {exc}") from None
    arity = {"stable": 1, "tempered": 2, "gamma": 2, "identity": 0}
    if name not in arity:
        raise ValidationError(f"unknown model {name!r}; expected one of {sorted(arity)}")
    if len(args) != arity[name]:
        raise ValidationError(f"model {name!r} takes {arity[name]} parameter(s), got {len(args)}")
    try:
        if name == "stable":
            return SubordinatorModel.stable(*args)
        if name == "tempered":
            return SubordinatorModel.tempered(*args)
        if name == "gamma":
            return SubordinatorModel.gamma(*args)
        return SubordinatorModel.identity()
    except DomainError as exc:
        raise ValidationError(str(exc)) from None


# ---------------------------------------------------------------------------
# functional API
# ---------------------------------------------------------------------------

def laplace_exponent(model: SubordinatorModel, lam):
    """``Psi(lam)`` for ``Re(lam) >= 0``."""
    return model.psi(lam)


def laplace_exponent_derivative(model: SubordinatorModel, lam):
    """``Psi'(lam)``."""
    return model.dpsi(lam)


def inverse_laplace_exponent(model: SubordinatorModel, value: float, xtol: float = 1e-12) -> float:
    """Solve ``Psi(lam) = value`` for real ``lam >= 0`` by bracketed root finding."""
    value = float(value)
    if value < 0:
        raise DomainError("Psi takes nonnegative values on the positive axis")
    if value == 0:
        return 0.0
    k = model.kind
    if k is Kind.STABLE:
        return value ** (1.0 / model.alpha)
    if k is Kind.IDENTITY:
        return value
    if k is Kind.GAMMA and value >= model.shape * 700:
        raise DomainError("value exceeds the representable range of the gamma exponent")
    hi = 1.0
    while float(model.psi(hi)) < value:
        hi *= 2.0
    return optimize.brentq(lambda s: float(model.psi(s)) - value, 0.0, hi, xtol=xtol * max(1.0, hi),
                           rtol=4 * np.finfo(float).eps)


def levy_tail(model: SubordinatorModel, t):
    """``nu_inf(t)``."""
    return model.levy_tail(t)


def integrated_tail(model: SubordinatorModel, x):
    """``I(x)``."""
    return model.integrated_tail(x)


def caputo_kernel_transform(model: SubordinatorModel, lam):
    """Laplace transform of the Caputo kernel, ``Psi(lam)/lam``, for ``Re(lam) > 0``."""
    lam = np.asarray(lam)
    if np.any(np.real(lam) <= 0):
        raise DomainError("kernel transform needs Re(lambda) > 0")
    out = model.psi(lam) / lam
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# conjugate exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugateModel:
    """The conjugate exponent ``Psi*(lam) = lam / Psi(lam)``.

    All catalog models are complete Bernstein functions, hence special, so
    ``Psi*`` is again a Bernstein function.  Its tail ``nu*_inf`` has Laplace
    transform ``1/Psi`` and its integrated tail ``I*`` has transform
    ``1/(lam Psi)``; for stable bases both are closed forms, otherwise they
    are obtained by Talbot inversion.
    """

    base: SubordinatorModel
    # there is no increment sampler for conjugate subordinators
    has_sampler = False

    def psi(self, lam):
        lam = np.asarray(lam)
        p = self.base.psi(lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(lam == 0, self._at_zero(), lam / np.where(lam == 0, 1.0, p))
        return out[()] if np.ndim(out) == 0 else out

    def _at_zero(self) -> float:
        d = self.base.mean_jump_rate() if not self.base.is_identity else 1.0
        return 0.0 if math.isinf(d) else 1.0 / d

    def levy_tail(self, t):
        return self._transformed(t, 0)

    def integrated_tail(self, x):
        return self._transformed(x, 1)

    def integrated_tail2(self, x):
        return self._transformed(x, 2, allow_zero=True)

    def _transformed(self, t, k, allow_zero=False):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or (not allow_zero and np.any(t == 0)):
            raise DomainError("conjugate tails need t > 0")
        b = self.base
        if b.kind is Kind.STABLE:
            # 1/(lam^{alpha} lam^k) inverts to t^{alpha+k-1}/Gamma(alpha+k)
            a = b.alpha
            out = t ** (a + k - 1.0) / float(gamma_fn(a + k))
        elif b.is_identity:
            # 1/lam^{k+1}
            out = t ** k / math.factorial(k)
        else:
            out = np.array([_conj_talbot(b, float(s), k) if s > 0 else 0.0 for s in t.ravel()])
            out = out.reshape(t.shape)
        return out[()] if np.ndim(out) == 0 else out


@lru_cache(maxsize=65536)
def _conj_talbot(base: SubordinatorModel, t: float, k: int) -> float:
    from .laplace_num import invert_talbot

    return invert_talbot(lambda s: 1.0 / (base._psi(s) * s ** k), t, rtol=1e-8).value


# ---------------------------------------------------------------------------
# product-integration convolutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaputoResult:
    """Sampled output of a kernel operator on the grid ``t_k = k dt``.

    ``order`` documents the expected accuracy of the discretization.
    """

    t: np.ndarray
    values: np.ndarray
    convolution: np.ndarray
    dt: float
    order: str = "O(dt) for Lipschitz input; exact for piecewise-linear input up to differencing"


def tail_convolution(I, J, values: np.ndarray, dt: float) -> np.ndarray:
    """``w_k = int_0^{t_k} K(t_k - s) v(s) ds`` for piecewise-linear ``v``.

    ``I`` and ``J`` are the first and second primitives of the kernel ``K``
    (vectorized callables with ``I(0) = J(0) = 0``).  On each cell
    ``[t_j, t_j + dt]`` the interpolant is integrated against ``K`` exactly.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    grid = dt * np.arange(n + 1)
    Ig = np.concatenate(([0.0], np.asarray(I(grid[1:]), dtype=float)))
    Jg = np.concatenate(([0.0], np.asarray(J(grid[1:]), dtype=float)))
    # cell j covers kernel arguments u in (a, b) = ((m-1) dt, m dt), m = k - j, and
    # there v = v_j + dv_j (b - u) / dt, so the cell contributes
    # v_j int_a^b K + (dv_j/dt) int_a^b (b - u) K(u) du
    dI = np.diff(Ig)[: n - 1]
    dJ = (np.diff(Jg) - dt * Ig[:-1])[: n - 1]
    dv = np.diff(v)
    w = np.zeros(n)
    w[1:] = np.convolve(v[:-1], dI)[: n - 1] + np.convolve(dv, dJ)[: n - 1] / dt
    return w


def _check_grid(values, dt):
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise GridError("need a 1-D sample with at least 3 points")
    if not dt > 0:
        raise GridError("grid step must be positive")
    T = dt * (v.size - 1)
    if dt >= T:
        raise GridError("grid step must be smaller than the horizon")
    return v, T


def generalized_caputo(
    model: SubordinatorModel,
    values: np.ndarray,
    dt: float,
    v0: float | None = None,
    *,
    steep_threshold: float = 1e3,
    method: str = "central",
) -> CaputoResult:
    """Generalized Caputo derivative ``d/dt int_0^t nu_inf(t-s)(v(s)-v(0)) ds``.

    Parameters
    ----------
    model : SubordinatorModel
        For the identity model the result is the ordinary derivative of ``v``.
    values : ndarray
        Samples ``v(k dt)``, ``k = 0..n``.
    dt : float
        Grid step.
    v0 : float, optional
        ``v(0)``; defaults to ``values[0]``.
    steep_threshold : float
        Emit :class:`SingularKernelWarning` when ``I(dt)/dt`` exceeds it.
    method : {"central", "slopes"}
        ``"central"`` differentiates the convolution by second-order central
        differences (one-sided at the ends); its error is ``O(dt^2)`` in the
        interior but grows near ``t = 0`` where the convolution is not smooth.
        ``"slopes"`` uses ``int_0^t nu_inf(u) v'(t-u) du`` with the cell
        slopes of the interpolant, which is exact for piecewise-linear input.

    Notes
    -----
    The convolution uses product integration: the piecewise-linear
    interpolant of ``v - v(0)`` is integrated exactly against ``nu_inf``
    through its primitives ``I`` and ``J``.
    """
    v, _ = _check_grid(values, dt)
    t = dt * np.arange(v.size)
    v0 = v[0] if v0 is None else float(v0)
    if model.is_identity:
        d = np.gradient(v, dt, edge_order=2)
        return CaputoResult(t, d, v - v0, dt)
    ratio = float(model.integrated_tail(dt)) / dt
    if ratio > steep_threshold:
        warnings.warn(f"kernel average over one step is {ratio:.3g}; refine the grid",
                      SingularKernelWarning, stacklevel=2)
    w = tail_convolution(model.integrated_tail, model.integrated_tail2, v - v0, dt)
    if method == "central":
        d = np.gradient(w, dt, edge_order=2)
    elif method == "slopes":
        n = v.size
        Ig = np.concatenate(([0.0], np.asarray(model.integrated_tail(dt * np.arange(1, n)))))
        d = np.zeros(n)
        d[1:] = np.convolve(np.diff(v) / dt, np.diff(Ig))[: n - 1]
    else:
        raise ValueError("method must be 'central' or 'slopes'")
    return CaputoResult(t, d, w, dt)


def conjugate_integral(model: SubordinatorModel, values: np.ndarray, dt: float) -> CaputoResult:
    """``int_0^t nu*_inf(t-s) u(s) ds``, the inverse of the generalized Caputo derivative."""
    u, _ = _check_grid(values, dt)
    t = dt * np.arange(u.size)
    conj = ConjugateModel(model)
    w = tail_convolution(conj.integrated_tail, conj.integrated_tail2, u, dt)
    return CaputoResult(t, w, w, dt)
