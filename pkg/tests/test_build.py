import itertools
import math

import numpy as np
import pytest
from scipy import integrate, optimize, special, stats

from confdist import build, core, statkit
from confdist.errors import (
    DegenerateSampleError,
    InsufficientDataError,
    ParameterDomainError,
    TailRuleError,
)
from confdist.statkit import ScalarLaw

# root of P(X < Y + theta) = 1/2 for X ~ t5, Y ~ noncentral t5(1), by quadrature + brentq
MW_TRUE_SHIFT = -1.1036064904354759


# -- normal mean -----------------------------------------------------------------------

def test_normal_mean_examples():
    cd = build.normal_mean_cd(np.array([-1.0, 1.0, -0.5, 0.5]))
    assert abs(cd.cdf(0.98) - 0.9750021048517798) < 1e-12
    y = np.random.default_rng(0).normal(2.0, 1.0, 17)
    assert build.normal_mean_cd(y).median() == pytest.approx(y.mean(), abs=1e-12)
    with pytest.raises(InsufficientDataError):
        build.normal_mean_cd([])


def test_normal_likelihood_is_cd_density():
    y = np.random.default_rng(1).normal(0.4, 1.0, 30)
    cd = build.normal_mean_cd(y)
    grid = np.linspace(y.mean() - 1.5, y.mean() + 1.5, 4001)
    lik = build.normalized_likelihood_cd(lambda t: -0.5 * ((y[None, :] - np.atleast_1d(t)[:, None]) ** 2).sum(1),
                                         grid)
    np.testing.assert_allclose(lik.grid_density, cd.density(grid), atol=1e-6)
    np.testing.assert_allclose(lik.cdf(grid), cd.cdf(grid), atol=1e-6)


def test_normalized_likelihood_constant_shift_invariance():
    y = np.random.default_rng(2).gamma(3.0, 1.0, 50)
    ll = build.gamma_profile_loglik(y)
    grid = np.linspace(0.5, 8, 1501)
    a = build.normalized_likelihood_cd(ll, grid)
    b = build.normalized_likelihood_cd(lambda t: ll(t) + 123.456, grid)
    np.testing.assert_allclose(a.H, b.H, atol=1e-10)


def test_normalized_likelihood_widening_and_failure():
    y = np.random.default_rng(3).normal(0.0, 1.0, 40)
    ll = lambda t: -0.5 * ((y[None, :] - np.atleast_1d(t)[:, None]) ** 2).sum(1)
    cd = build.normalized_likelihood_cd(ll, np.linspace(-0.1, 0.1, 401))
    assert "widened" in cd.flags
    assert cd.cdf(y.mean()) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(TailRuleError):
        build.normalized_likelihood_cd(lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                                       np.linspace(-1, 1, 101))


# -- Neyman-Scott ------------------------------------------------------------------------

def test_neyman_scott_limits_and_median():
    pairs = np.random.default_rng(4).normal(size=(10, 2))
    cd = build.neyman_scott_cd(pairs)
    assert cd.cdf(1e-12) < 1e-12 and cd.cdf(1e12) > 1 - 1e-12
    s2 = build.PairedSample(pairs).sigma2_hat
    # scipy.stats.chi2.ppf(0.5, 10)
    assert cd.median() == pytest.approx(20 * s2 / 9.34181777, rel=1e-6)
    with pytest.raises(DegenerateSampleError):
        build.neyman_scott_cd(np.ones((5, 2)))


def test_neyman_scott_density_matches_derivative():
    cd = build.neyman_scott_cd(np.random.default_rng(5).normal(size=(25, 2)))
    v = np.linspace(0.3, 3.0, 40)
    h = 1e-6
    fd = (cd.cdf(v + h) - cd.cdf(v - h)) / (2 * h)
    np.testing.assert_allclose(cd.density(v), fd, rtol=1e-5, atol=1e-9)


def test_neyman_scott_pivot_uniformity():
    rng = statkit.make_rng(2024)
    vals = np.empty(2000)
    for i in range(vals.size):
        mu = rng.uniform(0, 10, 100)
        pairs = mu[:, None] + rng.standard_normal((100, 2))
        vals[i] = build.neyman_scott_cd(pairs).cdf(1.0)
    assert statkit.ks_distance(vals, lambda u: u) < 0.031


# -- binomial ----------------------------------------------------------------------------

def test_binomial_single_trial_forms():
    pair = build.binomial_cd_pair(1, 0)
    half = build.half_corrected_cd(1, 0)
    for p in np.linspace(0, 1, 11):
        assert pair.upper(p, 0) == pytest.approx(p, abs=1e-15)
        assert pair.lower(p, 0) == 1.0
        assert half.cdf(p) == pytest.approx((1 + p) / 2, abs=1e-12)
    assert "boundary-mass" in half.flags


def test_binomial_all_successes():
    pair = build.binomial_cd_pair(10, 10)
    assert all(pair.upper(p, 10) == 0.0 for p in np.linspace(0, 1, 11))


def test_binomial_upper_matches_beta_identity():
    # Pr(Y > y) = I_p(y + 1, n - y)
    pair = build.binomial_cd_pair(12, 4)
    p = np.linspace(0.01, 0.99, 25)
    np.testing.assert_allclose([pair.upper(v, 4) for v in p], special.betainc(5, 8, p), atol=1e-13)


def test_binomial_range():
    with pytest.raises(ParameterDomainError):
        build.binomial_cd_pair(5, 6)


def test_binomial_dominance_p03():
    t, p_up, _ = core.dominance_check(build.binomial_cd_pair(10, 0), 0.3)
    assert np.all(p_up >= t)


# -- Gamma shape profile ------------------------------------------------------------------

def test_gamma_profile_normalization_and_mode():
    y = np.random.default_rng(6).gamma(2.0, 1.0, 80)
    cd = build.gamma_profile_cd(y)
    assert np.all(np.diff(cd.H) >= 0)
    assert cd.H[-1] == pytest.approx(1.0, abs=1e-9)
    ll = build.gamma_profile_loglik(y)
    # independent maximiser of the profile log-likelihood
    res = optimize.minimize_scalar(lambda t: -float(ll(t)), bounds=(0.1, 10), method="bounded",
                                   options={"xatol": 1e-10})
    mode = cd.theta[np.argmax(cd.grid_density)]
    assert abs(mode - res.x) <= (cd.theta[1] - cd.theta[0]) + 1e-9


def test_gamma_profile_loglik_formula():
    y = np.array([0.5, 1.2, 2.2, 3.1])
    t = 1.7
    n, ybar = y.size, y.mean()
    expected = -n * math.lgamma(t) + n * t * math.log(t / ybar) + (t - 1) * np.log(y).sum() - n * t
    assert float(build.gamma_profile_loglik(y)(t)) == pytest.approx(expected, abs=1e-12)
    # equals the full log-likelihood at rate = t / ybar, up to the free constant
    full = stats.gamma.logpdf(y, t, scale=ybar / t).sum()
    assert float(build.gamma_profile_loglik(y)(t)) - full == pytest.approx(np.log(y).sum() * 0 + n * 0 + (
        float(build.gamma_profile_loglik(y)(2.3)) - stats.gamma.logpdf(y, 2.3, scale=ybar / 2.3).sum()), abs=1e-9)


def test_gamma_profile_consistency():
    y = np.random.default_rng(7).gamma(2.0, 1.0, 200)
    assert abs(build.gamma_profile_cd(y).median() - 2.0) < 0.2


def test_gamma_profile_errors():
    with pytest.raises(ParameterDomainError):
        build.gamma_profile_cd([1.0, -2.0, 3.0])


# -- Mann-Whitney ---------------------------------------------------------------------

@pytest.mark.parametrize("n1,n2", [(1, 1), (2, 3), (3, 4), (5, 2), (4, 4)])
def test_mann_whitney_null_by_enumeration(n1, n2):
    counts = np.zeros(n1 * n2 + 1)
    for pos in itertools.combinations(range(n1 + n2), n1):
        xs = set(pos)
        # U = number of (x, y) pairs with x ranked below y
        u = sum(1 for i in xs for j in range(n1 + n2) if j not in xs and i < j)
        counts[u] += 1
    np.testing.assert_allclose(build.mann_whitney_null_pmf(n1, n2), counts / counts.sum(), atol=1e-15)


def test_mann_whitney_two_point_example():
    # x = {0}, y = {1}: below theta = -1 no pair has x < y + theta, so U = 0 and H = A(0)
    x, y = np.array([0.0]), np.array([1.0])
    A = np.cumsum(build.mann_whitney_null_pmf(1, 1))
    u = np.sum(x[:, None] < y[None, :] - 2.0)
    assert A[u] == 0.5
    with pytest.raises(InsufficientDataError):
        build.mann_whitney_cd(build.TwoSample(x, y))


def test_mann_whitney_smallest_allowed_sample():
    cd = build.mann_whitney_cd(build.TwoSample([0.0, 2.0], [1.0, 5.0]), theta_grid=np.linspace(-7, 3, 11))
    assert cd.H[0] == pytest.approx(1 / 6) and cd.H[-1] == pytest.approx(1.0, abs=1e-12)
    assert "tail-rule-unattainable" in cd.flags


def test_mann_whitney_step_monotone():
    rng = np.random.default_rng(8)
    cd = build.mann_whitney_cd(build.TwoSample(rng.normal(size=8), rng.normal(size=7)))
    assert np.all(np.diff(cd.H) >= 0)
    assert set(np.round(np.diff(cd.H)[np.diff(cd.H) > 0] * math.comb(15, 8), 8)) <= set(range(0, 10_000))
    assert "right-continuous" in cd.flags and "exact-null" in cd.flags


def test_mann_whitney_normal_branch():
    rng = np.random.default_rng(9)
    cd = build.mann_whitney_cd(build.TwoSample(rng.normal(size=25), rng.normal(size=20)))
    assert "normal-null" in cd.flags
    exact = np.cumsum(build.mann_whitney_null_pmf(25, 20))
    approx = statkit.cdf(ScalarLaw.normal(), (np.arange(501) + 0.5 - 250) / math.sqrt(500 * 46 / 12))
    assert np.max(np.abs(exact - approx)) < 0.005


def test_mann_whitney_coverage_and_calibration():
    rng = statkit.make_rng(123)
    covered = p_above = 0
    for _ in range(500):
        x = statkit.sample(ScalarLaw.student_t(5), rng, 10)
        y = statkit.sample(ScalarLaw.student_t(5, 1.0), rng, 9)
        cd = build.mann_whitney_cd(build.TwoSample(x, y))
        iv = core.cd_interval(cd, 0.95)
        covered += iv.lo <= MW_TRUE_SHIFT <= iv.hi
        p_above += core.cd_pvalue(cd, MW_TRUE_SHIFT, "two-sided") > 0.05
    assert covered / 500 >= 0.92
    assert 0.93 <= p_above / 500 <= 0.97


# -- correlation -------------------------------------------------------------------------

def bivariate(rho, n, seed):
    return np.random.default_rng(seed).multivariate_normal([1.0, -2.0], [[2.0, rho * 1.2], [rho * 1.2, 0.72]], n)


def test_fisher_z_properties():
    rows = bivariate(0.6, 60, 10)
    s = build.BivariateSample(rows)
    cd = build.fisher_z_cd(s)
    assert cd.cdf(s.r) == pytest.approx(0.5, abs=1e-14)
    rho = np.linspace(-0.2, 0.8, 1001)
    assert np.all(np.diff(cd.cdf(rho)) > 0)
    assert np.all(np.diff(cd.cdf(np.linspace(-0.999, 0.999, 1001))) >= 0)
    h = 1e-6
    g = np.linspace(-0.5, 0.9, 15)
    np.testing.assert_allclose(cd.density(g), (cd.cdf(g + h) - cd.cdf(g - h)) / (2 * h), rtol=1e-5, atol=1e-8)
    expected = 1 - stats.norm.cdf(math.sqrt(57) / 2 * (math.log((1 + s.r) / (1 - s.r)) - math.log(1.5 / 0.5)))
    assert cd.cdf(0.5) == pytest.approx(expected, abs=1e-12)


def test_bivariate_sample_validation():
    with pytest.raises(InsufficientDataError):
        build.BivariateSample(np.zeros((3, 2)) + np.arange(3)[:, None])
    with pytest.raises(DegenerateSampleError):
        build.fisher_z_cd(np.column_stack([np.arange(6.0), 2 * np.arange(6.0)]))


def test_bca_percentile_reduction():
    rows = bivariate(0.7, 80, 11)
    cd = build.bca_bootstrap_cd(rows, 2000, statkit.make_rng(1), z0=0.0, accel=0.0)
    G = np.searchsorted(cd.r_star, cd.theta, side="right") / cd.r_star.size
    assert np.max(np.abs(cd.H - G)) <= 1.0 / 2000 + 1e-12


def test_bca_interval_matches_percentile_formula():
    rows = bivariate(0.7, 80, 12)
    cd = build.bca_bootstrap_cd(rows, 4000, statkit.make_rng(2))
    z0, a, r_star = cd.z0, cd.accel, cd.r_star
    r = build.BivariateSample(rows).r
    assert z0 == pytest.approx(stats.norm.ppf(np.mean(r_star < r)), abs=1e-12)
    iv = core.cd_interval(cd, 0.90)
    step = cd.theta[1] - cd.theta[0]
    for alpha, end in ((0.05, iv.lo), (0.95, iv.hi)):
        z = stats.norm.ppf(alpha)
        adj = stats.norm.cdf(z0 + (z0 + z) / (1 - a * (z0 + z)))
        k = int(np.ceil(adj * r_star.size)) - 1
        gap = r_star[min(k + 1, r_star.size - 1)] - r_star[max(k - 1, 0)]
        assert abs(end - r_star[k]) <= max(gap, 2 * step)


def test_bca_jackknife_acceleration_oracle():
    rows = bivariate(0.5, 40, 13)
    jack = np.array([np.corrcoef(np.delete(rows, i, 0).T)[0, 1] for i in range(40)])
    d = jack.mean() - jack
    a_ref = np.sum(d ** 3) / (6 * np.sum(d ** 2) ** 1.5)
    _, a, _ = build.bca_constants(rows, np.array([0.1, 0.9]))
    assert a == pytest.approx(a_ref, abs=1e-12)


def test_bca_requires_b():
    with pytest.raises(ParameterDomainError):
        build.bca_bootstrap_cd(bivariate(0.5, 30, 1), 999, statkit.make_rng(0))


def test_correlation_profile_loglik_vs_optimizer():
    rows = bivariate(0.4, 30, 14)
    x, y = rows[:, 0], rows[:, 1]
    s = build.BivariateSample(rows)
    prof = build.correlation_profile_loglik(s.r, s.n)

    def max_over_nuisance(rho):
        def neg(p):
            m1, m2, ls1, ls2 = p
            cov = [[np.exp(2 * ls1), rho * np.exp(ls1 + ls2)], [rho * np.exp(ls1 + ls2), np.exp(2 * ls2)]]
            return -stats.multivariate_normal([m1, m2], cov).logpdf(rows).sum()
        start = [x.mean(), y.mean(), np.log(x.std()), np.log(y.std())]
        return -optimize.minimize(neg, start, method="BFGS", options={"gtol": 1e-9}).fun

    rhos = [-0.3, 0.1, 0.4, 0.7]
    diffs = [max_over_nuisance(r) - float(prof(r)) for r in rhos]
    assert np.ptp(diffs) < 1e-5


def test_correlation_flat_prior_vs_quadrature():
    # p(rho | data) proportional to (1 - rho^2)^((n-1)/2) * int_0^inf (cosh w - rho r)^(-(n-1)) dw
    n, r = 15, 0.35
    ll = build.correlation_flat_prior_loglik(r, n)

    def oracle(rho):
        inner = integrate.quad(lambda w: (np.cosh(w) - rho * r) ** (-(n - 1)), 0, 40)[0]
        return 0.5 * (n - 1) * np.log1p(-rho * rho) + np.log(inner)

    rhos = [-0.6, -0.1, 0.3, 0.6, 0.9]
    diffs = [float(ll(p)) - oracle(p) for p in rhos]
    assert np.ptp(diffs) < 1e-8


def test_cauchy_posterior():
    y = np.random.default_rng(15).standard_cauchy(40) + 10
    cd = build.normalized_likelihood_cd(build.cauchy_loglik(y), np.linspace(9, 11, 2001))
    grid = np.linspace(cd.theta[0], cd.theta[-1], 20001)
    dens = np.exp([-np.log1p((y - t) ** 2).sum() for t in grid])
    ref = integrate.cumulative_trapezoid(dens, grid, initial=0)
    ref /= ref[-1]
    np.testing.assert_allclose(cd.cdf(grid), ref, atol=1e-6)


def test_binomial_flat_prior_is_beta():
    cd = build.binomial_flat_prior_cd(5, 14)
    p = np.linspace(0, 1, 1001)
    np.testing.assert_allclose(cd.cdf(p), stats.beta.cdf(p, 6, 10), atol=1e-6)
    assert cd.mean() == pytest.approx(0.375, abs=1e-6)
