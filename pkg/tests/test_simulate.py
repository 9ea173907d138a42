import math

import numpy as np
import pytest
from scipy import special, stats

from tcfou.bernstein import SubordinatorModel
from tcfou.errors import DomainError, UnsupportedModelError
from tcfou.fou_analytic import FouParams, variance, variance_limit
from tcfou.simulate import (
    SimulationConfig,
    estimate_fou,
    estimate_moments,
    estimate_neg_moment,
    estimate_timechanged,
    fgn_autocovariance,
    invert_path,
    neg_moment_resolution_ratio,
    path_rng,
    sample_fbm,
    sample_fou,
    sample_inverse,
    sample_subordinator,
    sample_timechanged,
    scheme_variance,
    stable_increments,
)

P = FouParams(0.75, 1.0)
LEVY_MEDIAN = 1.0990546691588662020  # 1 / (4 erfcinv(1/2)^2), median of the alpha = 1/2 law


# configuration -----------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(DomainError):
        SimulationConfig(dt=0.0, horizon=1.0, paths=1)
    with pytest.raises(DomainError):
        SimulationConfig(dt=0.3, horizon=1.0, paths=1)
    with pytest.raises(DomainError):
        SimulationConfig(dt=0.5, horizon=1.0, paths=0)
    with pytest.raises(DomainError):
        SimulationConfig(dt=0.5, horizon=1.0, paths=1, seed=-1)
    c = SimulationConfig(dt=0.25, horizon=1.0, paths=2)
    assert c.steps == 4 and np.array_equal(c.times, [0, 0.25, 0.5, 0.75, 1.0])


def test_path_streams_are_distinct():
    a = path_rng(7, 0, "fbm").random(4)
    assert not np.array_equal(a, path_rng(7, 1, "fbm").random(4))
    assert not np.array_equal(a, path_rng(7, 0, "sub").random(4))
    assert np.array_equal(a, path_rng(7, 0, "fbm").random(4))


# fBm and fOU -------------------------------------------------------------------------

def test_fgn_autocovariance_sums_to_fbm_variance():
    # Var B(n dt) = sum_{i,j} gamma(|i-j|) = (n dt)^{2H}
    H, dt, n = 0.7, 0.1, 50
    g = fgn_autocovariance(H, dt, n)
    total = n * g[0] + 2 * sum((n - k) * g[k] for k in range(1, n))
    assert total == pytest.approx((n * dt) ** (2 * H), rel=1e-12)


def test_fbm_rejects_hurst_at_most_half():
    c = SimulationConfig(dt=0.1, horizon=1.0, paths=2)
    for H in (0.5, 0.3, 1.0):
        with pytest.raises(DomainError):
            sample_fbm(H, c)


def test_fbm_starts_at_zero_and_has_fbm_covariance():
    H = 0.75
    g = sample_fbm(H, SimulationConfig(dt=1 / 64, horizon=1.0, paths=20000, seed=3))
    assert np.all(g.values[:, 0] == 0.0)
    b1, bh = g.values[:, -1], g.values[:, 32]
    e = estimate_moments(b1, 1.0)
    assert abs(e.var - 1.0) <= 3 * e.se_var
    ref = 0.5 * (1 + 0.5 ** (2 * H) - 0.5 ** (2 * H))
    prod = bh * b1
    assert abs(prod.mean() - ref) <= 3 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_fbm_cholesky_and_davies_harte_share_the_law():
    c = SimulationConfig(dt=1 / 32, horizon=1.0, paths=4000, seed=5)
    a = sample_fbm(0.8, c, method="cholesky")
    assert a.meta["method"] == ["cholesky"]
    e = estimate_moments(a.values[:, -1], 1.0)
    assert abs(e.var - 1.0) <= 3 * e.se_var


def test_fou_is_driven_by_the_fbm_noise():
    c = SimulationConfig(dt=1 / 16, horizon=1.0, paths=3, seed=11)
    b, u = sample_fbm(P.hurst, c), sample_fou(P, c)
    a = math.exp(-c.dt / P.theta)
    rec = np.zeros_like(b.values)
    for k in range(c.steps):
        rec[:, k + 1] = a * (rec[:, k] + b.values[:, k + 1] - b.values[:, k])
    assert np.allclose(u.values, rec, rtol=0, atol=1e-13)
    assert np.all(u.values[:, 0] == 0.0)


def test_scheme_variance_converges_to_exact_variance():
    gaps = [abs(scheme_variance(P, 2.0 ** -k, 2 ** k)[-1] - variance(P, 1.0)) for k in (6, 8, 10)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 2e-3


def test_fou_variance_at_one_within_error_band():
    c = SimulationConfig(dt=2.0 ** -10, horizon=1.0, paths=100000, seed=2024)
    (e,) = estimate_fou(P, c, [1.0])
    V = variance(P, 1.0)
    assert abs(e.var - V) <= 3 * e.se_var + e.bias
    sv = scheme_variance(P, c.dt, c.steps)[-1]
    # Gaussian marginal: E U^4 = 3 (Var U)^2 for the scheme variance
    assert abs(e.m4 - 3 * sv ** 2) <= 3 * e.se_m4


def test_estimates_report_exact_bias():
    c = SimulationConfig(dt=0.25, horizon=1.0, paths=2, seed=1)
    (e,) = estimate_fou(P, c, [1.0])
    assert e.bias == pytest.approx(abs(scheme_variance(P, 0.25, 4)[-1] - variance(P, 1.0)), rel=1e-12)
    with pytest.raises(DomainError):
        estimate_fou(P, c, [2.0])


# subordinators -----------------------------------------------------------------------

def test_stable_increments_laplace_transform():
    rng = np.random.default_rng(9)
    x = stable_increments(0.7, 200000, rng)
    v = np.exp(-x)
    assert abs(v.mean() - math.exp(-1.0)) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


@pytest.mark.parametrize("model", [SubordinatorModel.tempered(0.7, 1.5), SubordinatorModel.gamma(1.0, 1.0)],
                         ids=str)
def test_subordinator_laplace_transform(model):
    g = sample_subordinator(model, SimulationConfig(dt=1 / 64, horizon=1.0, paths=20000, seed=4))
    v = np.exp(-g.values[:, -1])
    assert abs(v.mean() - math.exp(-float(model.psi(1.0)))) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_levy_median_rank_band():
    rng = np.random.default_rng(12)
    n = 40000
    x = stable_increments(0.5, n, rng)
    below = int(np.sum(x < LEVY_MEDIAN))
    # binomial(n, 1/2) count within 4 standard deviations
    assert abs(below - n / 2) <= 4 * math.sqrt(n) / 2


def test_subordinator_paths_nondecreasing():
    for m in (SubordinatorModel.stable(0.6), SubordinatorModel.gamma(2.0, 1.0)):
        g = sample_subordinator(m, SimulationConfig(dt=1 / 128, horizon=2.0, paths=50, seed=1))
        assert np.all(np.diff(g.values, axis=1) >= 0) and np.all(g.values[:, 0] == 0)


def test_inverse_of_half_stable_is_half_normal():
    # f_E(1, y) = exp(-y^2/4) / sqrt(pi), i.e. E(1) ~ |N(0, 2)|
    g = sample_inverse(SubordinatorModel.stable(0.5), [1.0],
                       SimulationConfig(dt=2.0 ** -10, horizon=4.0, paths=10000, seed=8))
    mid = 0.5 * (g.values[:, 0] + g.meta["upper"][:, 0])
    assert stats.kstest(mid, lambda y: special.erf(y / 2)).pvalue > 1e-3


def test_inverse_brackets_and_horizon_extension():
    m = SubordinatorModel.stable(0.7)
    sub = sample_subordinator(m, SimulationConfig(dt=0.01, horizon=0.05, paths=20, seed=6))
    inv = invert_path(sub, [0.5, 2.0])
    assert np.all(inv.meta["upper"] - inv.values == pytest.approx(0.01))
    assert inv.meta["extended"] > 0
    assert np.all(np.diff(inv.values, axis=1) >= 0)
    direct = sample_inverse(m, [0.5, 2.0], SimulationConfig(dt=0.01, horizon=0.05, paths=20, seed=6))
    assert np.array_equal(direct.values, inv.values)


def test_identity_model_time_change_is_plain_fou():
    c = SimulationConfig(dt=1 / 64, horizon=1.0, paths=500, seed=21, fine_factor=1)
    g = sample_timechanged(P, SubordinatorModel.identity(), [1.0], c)
    assert np.array_equal(g.meta["lower"], np.ones((500, 1)))
    plain = sample_fou(P, SimulationConfig(dt=1 / 64, horizon=1.0, paths=500, seed=21))
    assert np.allclose(g.values[:, 0], plain.values[:, -1], rtol=0, atol=1e-12)


def test_conjugate_model_has_no_sampler():
    from tcfou.bernstein import ConjugateModel
    with pytest.raises(UnsupportedModelError):
        sample_subordinator(ConjugateModel(SubordinatorModel.stable(0.5)),
                            SimulationConfig(dt=0.1, horizon=1.0, paths=1))


# reproducibility ---------------------------------------------------------------------

def test_runs_are_deterministic():
    c = SimulationConfig(dt=1 / 32, horizon=1.0, paths=40, seed=99)
    m = SubordinatorModel.tempered(0.7, 1.5)
    a = sample_timechanged(P, m, [0.5, 1.0], c)
    b = sample_timechanged(P, m, [0.5, 1.0], c)
    assert np.array_equal(a.values, b.values)


def test_results_do_not_depend_on_worker_count():
    m = SubordinatorModel.stable(0.7)
    base = dict(dt=1 / 32, horizon=1.0, paths=1100, seed=5)
    one = sample_timechanged(P, m, [1.0], SimulationConfig(**base, workers=1))
    three = sample_timechanged(P, m, [1.0], SimulationConfig(**base, workers=3))
    assert np.array_equal(one.values, three.values)
    f1 = sample_fbm(0.7, SimulationConfig(**base, workers=1))
    f3 = sample_fbm(0.7, SimulationConfig(**base, workers=3))
    assert np.array_equal(f1.values, f3.values)


def test_seeds_give_uncorrelated_samples():
    c = dict(dt=1 / 32, horizon=1.0, paths=20000)
    a = sample_fbm(0.7, SimulationConfig(**c, seed=1)).values[:, -1]
    b = sample_fbm(0.7, SimulationConfig(**c, seed=2)).values[:, -1]
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) <= 4 / math.sqrt(a.size)
    # neighbouring paths of one run are uncorrelated too
    r1 = np.corrcoef(a[:-1], a[1:])[0, 1]
    assert abs(r1) <= 4 / math.sqrt(a.size)


# time-changed process ----------------------------------------------------------------

def test_timechanged_variance_against_mixture():
    from tcfou.subordination import InverseSubordinatorKernel, tc_moment
    m = SubordinatorModel.stable(0.7)
    targets = [0.5, 2.0]
    est = estimate_timechanged(P, m, targets, SimulationConfig(dt=1 / 64, horizon=2.0, paths=20000,
                                                               seed=17))
    ref = tc_moment(InverseSubordinatorKernel(m), P, 1, np.array(targets))
    for e, r in zip(est, ref):
        assert abs(e.var - r) <= 3 * e.se_var + e.bias


def test_timechanged_variance_empirically_increasing():
    m = SubordinatorModel.gamma(1.0, 1.0)
    t = [0.25, 1.0, 4.0]
    est = estimate_timechanged(P, m, t, SimulationConfig(dt=1 / 32, horizon=4.0, paths=5000, seed=3))
    for a, b in zip(est[:-1], est[1:]):
        assert b.var >= a.var - 2 * math.hypot(a.se_var, b.se_var)
    assert all(e.var <= variance_limit(P) + 3 * e.se_var for e in est)


def test_negative_moment_of_stable_inverse():
    # E(t) = t^alpha S^-alpha, so E[E(1)^-p] = Gamma(1 - p) / Gamma(1 - alpha p)
    a, p = 0.7, 0.4
    m = SubordinatorModel.stable(a)
    means, ses = estimate_neg_moment(m, [1.0], p, SimulationConfig(dt=2.0 ** -10, horizon=2.0,
                                                                   paths=20000, seed=31))
    ref = math.gamma(1 - p) / math.gamma(1 - a * p)
    assert abs(means[0] - ref) <= 0.1 * ref
    assert ses[0] < 0.05 * ref


def test_negative_moment_rejects_p_outside_unit_interval():
    with pytest.raises(DomainError):
        estimate_neg_moment(SubordinatorModel.stable(0.5), [1.0], 1.0,
                            SimulationConfig(dt=0.1, horizon=1.0, paths=2))


def test_resolution_ratio_separates_finite_and_divergent_moments():
    m = SubordinatorModel.stable(0.5)
    cfg = lambda dt: SimulationConfig(dt=dt, horizon=4.0, paths=4000, seed=13)
    fine, coarse = sample_inverse(m, [1.0], cfg(2.0 ** -12)), sample_inverse(m, [1.0], cfg(2.0 ** -6))
    finite = neg_moment_resolution_ratio(fine, coarse, 0.3)[0]
    divergent = neg_moment_resolution_ratio(fine, coarse, 1.5)[0]
    assert abs(finite - 1) < 0.1
    assert divergent > 2.0
