"""Monte Carlo engine for fBm, fOU, subordinators and their composition.

Every path ``p`` draws from its own random stream derived from
``(seed, p, tag)`` with :class:`numpy.random.SeedSequence`, where ``tag``
separates the fBm/fOU noise from the subordinator noise.  Results are
therefore bit-identical for any split of the paths across workers.

Schemes
-------
fBm
    Davies-Harte circulant embedding of fractional Gaussian noise (exact
    increment covariance).  A Cholesky factor of the Toeplitz covariance is
    used instead when the embedding has negative eigenvalues and the grid
    has at most 2048 points.
fOU
    Left-point Riemann-Stieltjes sum
    ``U(t_k) = e^{-t_k/theta} sum_{j<k} e^{t_j/theta} (B(t_{j+1}) - B(t_j))``,
    computed by the recursion ``U_{k+1} = e^{-dt/theta} (U_k + dB_k)``.
    The exact variance of this discrete scheme is available through
    :func:`scheme_variance`, so the O(dt) bias can be bounded exactly.
Subordinators
    i.i.d. increments over a uniform operational-time grid of step ``dy``:
    positive stable via Kanter's representation
    ``S = (A(U) / W)^{(1-alpha)/alpha}`` with ``U ~ Unif(0, pi)``,
    ``W ~ Exp(1)`` and
    ``A(u) = (sin(alpha u) / sin u)^{1/(1-alpha)} sin((1-alpha) u) / sin(alpha u)``,
    so that ``E exp(-lam S) = exp(-lam**alpha)``; tempered stable by
    accepting a stable draw ``X`` with probability ``exp(-m X)``; gamma
    increments ``Gamma(a dy, 1/b)``.
Inverse subordinator
    ``E(t)`` is bracketed by the grid points ``[y_k, y_{k+1}]`` with
    ``sigma(y_k) <= t < sigma(y_{k+1})``; the lower end is reported and the
    bracket is kept alongside.
Time change
    ``U_H`` is sampled on a grid ``fine_factor`` times finer than ``dy`` and
    read at the grid point nearest to ``E(t)``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, signal

from . import fou_analytic as fa
from .bernstein import Kind, SubordinatorModel
from .errors import DomainError, NonConvergenceError, UnsupportedModelError
from .fou_analytic import FouParams

__all__ = [
    "SimulationConfig",
    "PathGrid",
    "Estimate",
    "HorizonExhaustedError",
    "path_rng",
    "worker_count",
    "fgn_autocovariance",
    "sample_fbm",
    "sample_fou",
    "scheme_variance",
    "sample_subordinator",
    "invert_path",
    "sample_inverse",
    "sample_timechanged",
    "estimate_moments",
    "estimate_fou",
    "estimate_timechanged",
    "estimate_neg_moment",
    "neg_moment_resolution_ratio",
    "stable_increments",
]

_TAGS = {"fbm": 1, "sub": 2}
#: increments are drawn in blocks of this size so that extending a horizon
#: reproduces the prefix of the shorter path exactly
BLOCK = 1024
MAX_EXTENSIONS = 10
_CHOLESKY_MAX = 2048


class HorizonExhaustedError(NonConvergenceError):
    """A subordinator path did not cross the target level within the horizon budget."""


@dataclass(frozen=True)
class SimulationConfig:
    """Discretization and sampling settings.

    Attributes
    ----------
    dt : float
        Grid step.  For fBm/fOU sampling it is the time step; for
        subordinators it is the operational-time step ``dy``.
    horizon : float
        Length of the grid; ``horizon / dt`` must be an integer.
    paths : int
        Number of independent paths.
    seed : int
        Root seed (64 bit).
    fine_factor : int
        Refinement of the fOU grid relative to ``dt`` in time-changed runs.
    workers : int or None
        Thread count; ``None`` reads ``TCFOU_THREADS`` (default 1).
    """

    dt: float
    horizon: float
    paths: int
    seed: int = 0
    fine_factor: int = 16
    workers: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be positive")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise DomainError("horizon / dt must be a positive integer")
        if int(self.paths) < 1:
            raise DomainError("paths must be at least 1")
        if int(self.fine_factor) < 1:
            raise DomainError("fine_factor must be at least 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


@dataclass
class PathGrid:
    """Sampled trajectories on a uniform grid, one row per path.

    ``meta`` records the scheme and any bracket information; for inverse
    subordinators ``meta["upper"]`` holds the upper bracket ends.
    """

    times: np.ndarray
    values: np.ndarray
    tag: str
    meta: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Estimate:
    """Sample statistics at one time point.

    ``var`` is the unbiased sample variance, ``m4`` the raw fourth moment,
    ``se_var`` and ``se_m4`` their standard errors, and ``bias`` a bound on
    the discretization bias of ``var``.
    """

    t: float
    mean: float
    var: float
    m4: float
    se_mean: float
    se_var: float
    se_m4: float
    paths: int
    bias: float = 0.0


def worker_count(workers: int | None = None) -> int:
    """Resolve the thread count, honoring ``TCFOU_THREADS`` when unspecified."""
    if workers is None:
        env = os.environ.get("TCFOU_THREADS", "")
        workers = int(env) if env.strip() else 1
    return max(1, int(workers))


def path_rng(seed: int, p: int, tag: str) -> np.random.Generator:
    """Generator for path ``p``; independent across paths and tags."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(p), _TAGS[tag]))
    return np.random.Generator(np.random.PCG64(ss))


def _map_paths(func, paths: int, workers: int | None, chunk: int = 512):
    """Apply ``func(path_ids)`` on contiguous chunks and concatenate in order."""
    ids = np.arange(int(paths))
    parts = [ids[i:i + chunk] for i in range(0, len(ids), chunk)]
    w = worker_count(workers)
    if w == 1 or len(parts) == 1:
        out = [func(c) for c in parts]
    else:
        with ThreadPoolExecutor(max_workers=w) as ex:
            out = list(ex.map(func, parts))
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# fBm and fOU
# ---------------------------------------------------------------------------

def _check_hurst(H):
    H = float(H)
    if not (0.5 < H < 1.0):
        raise DomainError(f"Hurst index must lie in (1/2, 1), got {H}")
    return H


def fgn_autocovariance(H: float, dt: float, n: int) -> np.ndarray:
    """Autocovariance ``gamma(k)``, ``k = 0..n-1``, of fGn with step ``dt``."""
    k = np.arange(n, dtype=float)
    g = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    return dt ** (2 * H) * g


@lru_cache(maxsize=32)
def _embedding(H: float, dt: float, n: int):
    """Square-root eigenvalues of the circulant embedding, or ``None``."""
    g = fgn_autocovariance(H, dt, n + 1)
    c = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -1e-10 * lam.max():
        return None
    return np.sqrt(np.clip(lam, 0.0, None) / c.size)


@lru_cache(maxsize=8)
def _cholesky(H: float, dt: float, n: int):
    return linalg.cholesky(linalg.toeplitz(fgn_autocovariance(H, dt, n)), lower=True)


def _fgn_path(H, dt, n, rng, method):
    """One fGn sample of length ``n``; returns (increments, method used)."""
    if method in ("auto", "davies-harte"):
        root = _embedding(H, dt, n)
        if root is not None:
            m = root.size
            xi = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            return np.fft.fft(root * xi).real[:n], "davies-harte"
        if method == "davies-harte" or n + 1 > _CHOLESKY_MAX:
            raise NonConvergenceError("circulant embedding is not nonnegative definite")
    if n + 1 > _CHOLESKY_MAX:
        raise DomainError(f"Cholesky synthesis limited to {_CHOLESKY_MAX} grid points")
    return _cholesky(H, dt, n) @ rng.standard_normal(n), "cholesky"


def _fgn_rows(H, dt, n, seed, ids, method):
    out = np.empty((len(ids), n))
    used = set()
    for r, p in enumerate(ids):
        out[r], m = _fgn_path(H, dt, n, path_rng(seed, p, "fbm"), method)
        used.add(m)
    return out, used


def _fbm_rows(H, dt, n, seed, ids, method):
    inc, used = _fgn_rows(H, dt, n, seed, ids, method)
    out = np.zeros((len(ids), n + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out, used


def sample_fbm(hurst: float, config: SimulationConfig, method: str = "auto") -> PathGrid:
    """Fractional Brownian motion on ``config.times`` with ``B(0) = 0``.

    Parameters
    ----------
    hurst : float
        Hurst index in (1/2, 1).
    config : SimulationConfig
    method : {"auto", "davies-harte", "cholesky"}
        ``auto`` falls back to Cholesky when the embedding fails.
    """
    H = _check_hurst(hurst)
    n = config.steps
    used = set()

    def work(ids):
        rows, m = _fbm_rows(H, config.dt, n, config.seed, ids, method)
        used.update(m)
        return rows

    vals = _map_paths(work, config.paths, config.workers)
    return PathGrid(config.times, vals, "fBm", {"hurst": H, "method": sorted(used), "seed": config.seed})


def _fou_filter(inc: np.ndarray, a: float) -> np.ndarray:
    """``U_0 = 0``, ``U_{k+1} = a (U_k + inc_k)`` along the last axis."""
    z = np.zeros(inc.shape[:-1] + (1,))
    x = np.concatenate([inc, z], axis=-1)
    y = signal.lfilter([0.0, a], [1.0, -a], x, axis=-1)
    return y


def _fou_rows(params, dt, n, seed, ids, method="auto"):
    inc, _ = _fgn_rows(params.hurst, dt, n, seed, ids, method)
    return _fou_filter(inc, math.exp(-dt / params.theta))


def sample_fou(params: FouParams, config: SimulationConfig, method: str = "auto") -> PathGrid:
    """fOU paths started at zero, driven by the fBm of :func:`sample_fbm`.

    The fBm noise of path ``p`` is the same as in :func:`sample_fbm` with the
    same config, so both outputs can be compared path by path.
    """
    n = config.steps
    vals = _map_paths(lambda ids: _fou_rows(params, config.dt, n, config.seed, ids, method),
                      config.paths, config.workers)
    return PathGrid(config.times, vals, "fOU",
                    {"hurst": params.hurst, "theta": params.theta, "scheme": "left-riemann-stieltjes",
                     "seed": config.seed})


def scheme_variance(params: FouParams, dt: float, n: int) -> np.ndarray:
    """Exact variance of the discrete fOU scheme at steps ``0..n``.

    With ``a = exp(-dt/theta)`` and fGn covariance ``gamma``,
    ``Var U_{k+1} = a^2 (Var U_k + 2 c_k + gamma(0))`` where
    ``c_k = sum_{m=1}^k a^m gamma(m)``.
    """
    a = math.exp(-dt / params.theta)
    g = fgn_autocovariance(params.hurst, dt, n + 1)
    c = np.concatenate([[0.0], np.cumsum(a ** np.arange(1, n + 1) * g[1:n + 1])])
    v = np.zeros(n + 1)
    for k in range(n):
        v[k + 1] = a * a * (v[k] + 2.0 * c[k] + g[0])
    return v


# ---------------------------------------------------------------------------
# Subordinators
# ---------------------------------------------------------------------------

def stable_increments(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Positive ``alpha``-stable draws with ``E exp(-lam S) = exp(-lam**alpha)``."""
    u = np.pi * rng.random(size)
    w = rng.standard_exponential(size)
    a = alpha
    A = (np.sin(a * u) / np.sin(u)) ** (1.0 / (1.0 - a)) * np.sin((1.0 - a) * u) / np.sin(a * u)
    return (A / w) ** ((1.0 - a) / a)


def _increment_block(model: SubordinatorModel, dy: float, rng) -> np.ndarray:
    k = model.kind
    if k is Kind.STABLE:
        return dy ** (1.0 / model.alpha) * stable_increments(model.alpha, BLOCK, rng)
    if k is Kind.TEMPERED:
        out = np.empty(BLOCK)
        filled = 0
        scale = dy ** (1.0 / model.alpha)
        while filled < BLOCK:
            x = scale * stable_increments(model.alpha, BLOCK, rng)
            keep = x[rng.random(BLOCK) < np.exp(-model.tempering * x)]
            take = min(keep.size, BLOCK - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out
    if k is Kind.GAMMA:
        return rng.gamma(model.shape * dy, 1.0 / model.rate, BLOCK)
    if k is Kind.IDENTITY:
        return np.full(BLOCK, dy)
    raise UnsupportedModelError(f"no increment sampler for {model}")


def _subordinator_path(model, dy, steps, rng_state):
    """Extend a path (list of blocks, generator) until it has ``steps`` increments."""
    blocks, rng = rng_state
    while sum(b.size for b in blocks) < steps:
        blocks.append(_increment_block(model, dy, rng))
    inc = np.concatenate(blocks)[:steps]
    return np.concatenate([[0.0], np.cumsum(inc)])


def _check_sampler(model):
    if not model.has_sampler:
        raise UnsupportedModelError(f"no increment sampler for {model}")


def sample_subordinator(model: SubordinatorModel, config: SimulationConfig) -> PathGrid:
    """Subordinator paths ``sigma(y)`` on the operational-time grid ``config.times``."""
    _check_sampler(model)
    n = config.steps

    def work(ids):
        return np.stack([_subordinator_path(model, config.dt, n, ([], path_rng(config.seed, p, "sub")))
                         for p in ids])

    vals = _map_paths(work, config.paths, config.workers)
    return PathGrid(config.times, vals, "subordinator",
                    {"model": model.spec(), "seed": config.seed, "dy": config.dt, "block": BLOCK,
                     "path_ids": np.arange(config.paths)})


def _first_passage(sig, dy, targets):
    k = np.searchsorted(sig, targets, side="right") - 1
    return k * dy, (k + 1) * dy


def _inverse_one(model, dy, steps, seed, p, targets):
    """Lower and upper brackets of ``E(targets)`` for path ``p`` with horizon doubling."""
    tmax = float(np.max(targets))
    if model.kind is Kind.IDENTITY:
        t = np.asarray(targets, dtype=float)
        return t.copy(), t.copy(), 0
    state = ([], path_rng(seed, p, "sub"))
    for ext in range(MAX_EXTENSIONS + 1):
        sig = _subordinator_path(model, dy, steps, state)
        if sig[-1] > tmax:
            lo, hi = _first_passage(sig, dy, targets)
            return lo, hi, ext
        steps *= 2
    raise HorizonExhaustedError(
        f"path {p}: subordinator stayed below t={tmax} after {MAX_EXTENSIONS} horizon doublings")


def invert_path(sub: PathGrid, targets) -> PathGrid:
    """Inverse subordinator ``E(t) = inf{y : sigma(y) > t}`` at ``targets``.

    Paths whose horizon ends below ``max(targets)`` are regenerated from
    their own stream with doubled horizon (at most ``MAX_EXTENSIONS`` times).
    """
    from .bernstein import parse_model

    targets = np.asarray(targets, dtype=float)
    if np.any(targets < 0):
        raise DomainError("target times must be nonnegative")
    model = parse_model(sub.meta["model"])
    dy, seed = sub.meta["dy"], sub.meta["seed"]
    steps = sub.values.shape[1] - 1
    lo = np.empty((sub.paths, targets.size))
    hi = np.empty_like(lo)
    extended = 0
    for r, p in enumerate(sub.meta["path_ids"]):
        sig = sub.values[r]
        if sig[-1] > targets.max() or model.is_identity:
            lo[r], hi[r] = (_first_passage(sig, dy, targets) if not model.is_identity
                            else (targets, targets))
        else:
            lo[r], hi[r], _ = _inverse_one(model, dy, 2 * steps, seed, p, targets)
            extended += 1
    return PathGrid(targets, lo, "inverse", {"upper": hi, "bracket": dy, "extended": extended,
                                             "model": sub.meta["model"], "seed": seed})


def sample_inverse(model: SubordinatorModel, targets, config: SimulationConfig) -> PathGrid:
    """``E(targets)`` brackets without storing subordinator paths.

    ``config.dt`` is the operational step and ``config.horizon`` the initial
    operational horizon (doubled per path as needed).
    """
    _check_sampler(model)
    targets = np.asarray(targets, dtype=float)
    if np.any(targets < 0):
        raise DomainError("target times must be nonnegative")
    ext = []

    def work(ids):
        rows = []
        for p in ids:
            lo, hi, e = _inverse_one(model, config.dt, config.steps, config.seed, p, targets)
            rows.append(np.stack([lo, hi]))
            ext.append(e)
        return np.stack(rows)

    both = _map_paths(work, config.paths, config.workers)
    return PathGrid(targets, both[:, 0], "inverse",
                    {"upper": both[:, 1], "bracket": config.dt, "extended": int(sum(e > 0 for e in ext)),
                     "model": model.spec(), "seed": config.seed})


# ---------------------------------------------------------------------------
# Time change
# ---------------------------------------------------------------------------

def _fine_steps(ymax: float, dt: float) -> int:
    """Fine-grid step count covering ``[0, ymax]``, rounded up to a power of two."""
    n = max(1, int(math.ceil(ymax / dt - 1e-12)))
    return 1 << (n - 1).bit_length()


def sample_timechanged(params: FouParams, model: SubordinatorModel, targets,
                       config: SimulationConfig) -> PathGrid:
    """Samples of ``U_H(E(t))`` at ``targets``, with ``E`` independent of ``U_H``.

    Per path: the brackets of ``E(t_i)`` are sampled on the operational grid
    of step ``config.dt``; ``U_H`` is sampled on the grid of step
    ``config.dt / config.fine_factor`` covering ``max_i E(t_i)`` and read at
    the point nearest to the bracket midpoint.  ``meta`` carries the
    ``E`` brackets and the fine-grid indices used.
    """
    _check_sampler(model)
    targets = np.asarray(targets, dtype=float)
    dyf = config.dt / config.fine_factor
    a = math.exp(-dyf / params.theta)

    def work(ids):
        rows = []
        for p in ids:
            lo, hi, _ = _inverse_one(model, config.dt, config.steps, config.seed, p, targets)
            mid = 0.5 * (lo + hi)
            idx = np.rint(mid / dyf).astype(int)
            n = _fine_steps(max(float(idx.max()) * dyf, dyf), dyf)
            inc, _ = _fgn_path(params.hurst, dyf, n, path_rng(config.seed, p, "fbm"), "auto")
            u = _fou_filter(inc, a)
            rows.append(np.stack([u[idx], lo, hi, idx.astype(float)]))
        return np.stack(rows)

    out = _map_paths(work, config.paths, config.workers)
    return PathGrid(targets, out[:, 0], "time-changed",
                    {"lower": out[:, 1], "upper": out[:, 2], "index": out[:, 3].astype(int),
                     "fine_dt": dyf, "model": model.spec(), "seed": config.seed,
                     "scheme": "nearest-fine-grid-point"})


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def estimate_moments(samples: np.ndarray, t: float, bias: float = 0.0) -> Estimate:
    """Sample mean, variance and fourth moment of ``samples`` with standard errors."""
    x = np.asarray(samples, dtype=float)
    P = x.size
    mean = float(x.mean())
    c = x - mean
    s2 = float(c @ c / (P - 1)) if P > 1 else 0.0
    m4c = float(np.mean(c ** 4))
    x4 = x ** 4
    return Estimate(
        t=float(t), mean=mean, var=s2, m4=float(x4.mean()),
        se_mean=math.sqrt(s2 / P),
        se_var=math.sqrt(max(m4c - s2 * s2, 0.0) / P),
        se_m4=float(x4.std(ddof=1) / math.sqrt(P)) if P > 1 else 0.0,
        paths=P, bias=float(bias))


def estimate_fou(params: FouParams, config: SimulationConfig, times) -> list[Estimate]:
    """Moments of the fOU scheme at ``times`` without storing whole paths.

    ``bias`` is the exact gap between the discrete-scheme variance and
    ``V(t)`` at the grid point nearest to ``t``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n = config.steps
    idx = np.rint(times / config.dt).astype(int)
    if np.any(idx > n) or np.any(idx < 0):
        raise DomainError("requested times lie outside the grid")
    vals = _map_paths(lambda ids: _fou_rows(params, config.dt, n, config.seed, ids)[:, idx],
                      config.paths, config.workers)
    sv = scheme_variance(params, config.dt, int(idx.max()))
    exact = fa.variance(params, times)
    return [estimate_moments(vals[:, i], t, abs(sv[k] - float(np.atleast_1d(exact)[i])))
            for i, (t, k) in enumerate(zip(times, idx))]


def estimate_timechanged(params: FouParams, model: SubordinatorModel, targets,
                         config: SimulationConfig) -> list[Estimate]:
    """Moments of ``U_H(E(t))`` with a discretization bias band.

    The band is the mean over paths of the exact scheme-variance error at
    the used fine-grid point plus half the variation of ``V`` across each
    ``E`` bracket.
    """
    g = sample_timechanged(params, model, targets, config)
    idx, lo, hi = g.meta["index"], g.meta["lower"], g.meta["upper"]
    dyf = g.meta["fine_dt"]
    sv = scheme_variance(params, dyf, int(idx.max()))
    out = []
    for i, t in enumerate(g.times):
        k = idx[:, i]
        scheme = np.abs(sv[k] - fa.variance(params, k * dyf))
        spread = 0.5 * np.abs(fa.variance(params, hi[:, i]) - fa.variance(params, lo[:, i]))
        near = np.abs(fa.variance(params, k * dyf) - fa.variance(params, 0.5 * (lo[:, i] + hi[:, i])))
        out.append(estimate_moments(g.values[:, i], t, float(np.mean(scheme + spread + near))))
    return out


def estimate_neg_moment(model: SubordinatorModel, targets, p: float, config: SimulationConfig,
                        small_y: float | None = 0.05, grid: PathGrid | None = None):
    """Monte Carlo ``E[E(t)^{-p}]`` for ``0 < p < 1``.

    Within each grid bracket ``[lo, hi]`` the power ``y^{-p}`` is replaced
    by its bracket average ``(hi^{1-p} - lo^{1-p}) / ((1-p)(hi - lo))``,
    which stays finite when ``lo = 0``.

    ``y^{-p}`` has infinite variance under ``E(t)`` when ``p >= 1/2``, so the
    plain sample mean converges slowly and is skewed low.  With ``small_y``
    set, all samples below ``delta = small_y * median(E(t))`` are pooled into
    one coarse bracket ``[0, delta]`` on which ``E(t)`` is treated as
    uniform (``f_E(t, .)`` is finite and continuous at ``0+``), giving the
    contribution ``delta^{-p} / (1-p)`` each.  Returns ``(means,
    standard_errors)``.  A precomputed :func:`sample_inverse` result may be
    passed as ``grid``.
    """
    if not (0.0 < p < 1.0):
        raise DomainError("bracket-averaged estimator needs 0 < p < 1")
    g = sample_inverse(model, targets, config) if grid is None else grid
    lo, hi = g.values, g.meta["upper"]
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = np.where(hi > lo, (hi ** (1 - p) - lo ** (1 - p)) / ((1 - p) * (hi - lo)),
                       np.where(lo > 0, lo, 1.0) ** (-p))
    if small_y is not None:
        mid = 0.5 * (lo + hi)
        delta = float(small_y) * np.median(mid, axis=0)
        pooled = delta ** (-p) / (1 - p)
        avg = np.where(mid < delta, pooled, avg)
    P = avg.shape[0]
    return avg.mean(axis=0), avg.std(axis=0, ddof=1) / math.sqrt(P)


def neg_moment_resolution_ratio(fine: PathGrid, coarse: PathGrid, p: float) -> np.ndarray:
    """Ratio of midpoint estimates of ``E[E(t)^{-p}]`` on two operational grids.

    ``E[mid^{-p}]`` picks up the mass of ``y^{-p} f_E(t, y)`` down to the
    first bracket, so for a divergent moment (``p >= 1``) it grows like
    ``dy^{1-p}`` as the grid is refined, while for a finite one the ratio
    tends to 1.
    """
    def est(g):
        mid = 0.5 * (g.values + g.meta["upper"])
        return np.mean(mid ** (-float(p)), axis=0)

    return est(fine) / est(coarse)
