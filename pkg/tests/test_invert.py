import math

import numpy as np
import pytest
from scipy import stats

from confdist import build, core, harness, invert, statkit
from confdist.errors import (
    DegenerateSampleError,
    EpsilonTooSmallError,
    InsufficientDataError,
    ParameterDomainError,
)
from confdist.statkit import ScalarLaw


def normal_data(n, seed, theta=0.0):
    return np.random.default_rng(seed).normal(theta, 1.0, n)


# -- bootstrap --------------------------------------------------------------------------

def test_bootstrap_constant_data():
    d = invert.bootstrap_draws(np.full(30, 2.5), np.mean, 500, statkit.make_rng(0))
    assert np.all(d.draws == 2.5)
    assert d.engine == "bootstrap" and d.acceptance_rate == 1.0


def test_bootstrap_clt_against_plugin_normal():
    y = normal_data(100, 1)
    d = invert.bootstrap_draws(y, np.mean, 2000, statkit.make_rng(1))
    s = y.std(ddof=1)
    ks = statkit.ks_distance(d.draws - y.mean(), lambda t: stats.norm.cdf(t, 0, s / 10))
    assert ks < 0.08


def test_bootstrap_determinism_and_minimum():
    y = normal_data(40, 2)
    a = invert.bootstrap_draws(y, np.median, 600, statkit.make_rng(5))
    b = invert.bootstrap_draws(y, np.median, 600, statkit.make_rng(5))
    assert a.draws.tobytes() == b.draws.tobytes()
    with pytest.raises(ParameterDomainError):
        invert.bootstrap_draws(y, np.mean, 499, statkit.make_rng(5))


def test_bootstrap_redraws_failed_statistics():
    # fails when a resample holds 5 or more zeros: about 5% of resamples for 2 zeros in 40
    def picky(x):
        return x.mean() if np.sum(x == 0) < 5 else math.nan

    d = invert.bootstrap_draws(np.r_[np.zeros(2), np.ones(38)], picky, 500, statkit.make_rng(3))
    assert np.all(np.isfinite(d.draws))
    assert d.flags and d.flags[0].startswith("redrawn=") and d.attempts > 500
    with pytest.raises(InsufficientDataError):
        invert.bootstrap_draws(np.r_[np.zeros(20), np.ones(20)], picky, 500, statkit.make_rng(3))


def test_bootstrap_rows_of_bivariate_data():
    rows = np.random.default_rng(4).multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], 80)
    d = invert.bootstrap_draws(rows, lambda r: np.corrcoef(r.T)[0, 1], 500, statkit.make_rng(4))
    assert d.center == pytest.approx(np.corrcoef(rows.T)[0, 1])
    assert np.all(np.abs(d.draws) < 1)


# -- generalized fiducial -----------------------------------------------------------------

def test_gfi_structural_solve_is_algebraic_inverse():
    n, ybar = 25, 0.37
    model = invert.structural_mean_model(n, (ybar - 3, ybar + 3))
    u = model.noise(statkit.make_rng(6), 200)
    theta, resid = invert.gfi_solve(model, [ybar], u)
    np.testing.assert_allclose(theta, ybar - u[:, 0] / math.sqrt(n), atol=1e-6)
    assert np.max(resid) < 1e-12


def test_gfi_full_location_model_argmin():
    # argmin of sum (y_i - theta - u_i)^2 is mean(y - u)
    y = normal_data(12, 7)
    model = invert.location_model(12, theta_space=(-6.0, 6.0))
    u = model.noise(statkit.make_rng(7), 100)
    theta, _ = invert.gfi_solve(model, y, u)
    np.testing.assert_allclose(theta, (y[None, :] - u).mean(axis=1), atol=1e-6)


def test_gfi_large_epsilon_accepts_everything():
    model = invert.structural_mean_model(50, (-2.0, 2.0))
    d = invert.gfi_draws(model, [0.1], 500, 1.0, statkit.make_rng(8))
    assert d.acceptance_rate == 1.0 and d.attempts == 500 and d.engine == "gfi"


def test_gfi_draws_law():
    n = 100
    ybar = float(normal_data(n, 9).mean())
    model = invert.structural_mean_model(n, (ybar - 1, ybar + 1))
    d = invert.gfi_draws(model, [ybar], 2000, 1e-10, statkit.make_rng(9))
    assert statkit.ks_distance(d.draws, lambda t: stats.norm.cdf(t, ybar, 0.1)) < 0.03


def test_gfi_epsilon_too_small(monkeypatch):
    # the full location model cannot fit the data exactly: the residual is bounded below
    monkeypatch.setattr(invert, "GFI_ATTEMPT_CAP", 20_000)
    y = normal_data(10, 10)
    model = invert.location_model(10, theta_space=(-5.0, 5.0))
    with pytest.raises(EpsilonTooSmallError) as err:
        invert.gfi_draws(model, y, 100, 1e-6, statkit.make_rng(10))
    assert err.value.min_residual > 1e-6


def test_gfi_needs_bounded_space():
    with pytest.raises(ParameterDomainError):
        invert.gfi_draws(invert.structural_mean_model(10), [0.0], 10, 1.0, statkit.make_rng(0))


def test_gfi_determinism():
    model = invert.structural_mean_model(30, (-2.0, 2.0))
    a = invert.gfi_draws(model, [0.2], 700, 1e-9, statkit.make_rng(11))
    b = invert.gfi_draws(model, [0.2], 700, 1e-9, statkit.make_rng(11))
    assert a.draws.tobytes() == b.draws.tobytes()


# -- ABC ----------------------------------------------------------------------------------

def test_abc_cauchy_mean_summary():
    n = 40
    y = statkit.sample(ScalarLaw.cauchy(10.0, 1.0), statkit.make_rng(12), n)
    mean_model, _ = harness.cauchy_models(n)
    ybar = float(y.mean())
    d = invert.abc_draws(mean_model, y, invert.flat_prior(y, ybar), 2000, 0.05, statkit.make_rng(13))
    assert statkit.ks_distance(d.draws, lambda t: stats.cauchy.cdf(t, ybar, 1.0)) < 0.05
    assert d.engine == "abc" and 0 < d.acceptance_rate < 1


def test_abc_cauchy_median_summary():
    n = 40
    y = statkit.sample(ScalarLaw.cauchy(10.0, 1.0), statkit.make_rng(14), n)
    _, median_model = harness.cauchy_models(n)
    ymed = float(np.median(y))
    d = invert.abc_draws(median_model, y, invert.flat_prior(y, ymed), 2000, 0.05, statkit.make_rng(15))
    sd = math.pi / (2 * math.sqrt(n))
    assert statkit.ks_distance(d.draws, lambda t: stats.norm.cdf(t, ymed, sd)) < 0.07


def test_abc_sufficient_summary_matches_law_and_converges():
    n = 100
    y = normal_data(n, 16)
    ybar = float(y.mean())
    prior = invert.flat_prior(y, ybar)
    lo, hi = prior.support
    model = invert.structural_mean_model(n)
    post = lambda t: stats.norm.cdf(t, ybar, 1 / math.sqrt(n))
    grid = np.linspace(ybar - 0.6, ybar + 0.6, 1201)
    law_ks = []
    for i, scale in enumerate((0.4, 0.2, 0.1, 0.05)):
        eps = scale / math.sqrt(n)
        d = invert.abc_draws(model, [ybar], prior, 2000, eps, statkit.make_rng(100 + i))
        # the engine samples the exact ABC law (prior times acceptance probability)
        engine_ks = statkit.ks_distance(d.draws, lambda t: harness.abc_law_cdf(t, ybar, n, eps, lo, hi))
        assert engine_ks < 1.36 / math.sqrt(2000)
        law_ks.append(np.max(np.abs(harness.abc_law_cdf(grid, ybar, n, eps, lo, hi) - post(grid))))
    assert all(a > b for a, b in zip(law_ks, law_ks[1:]))


def test_abc_epsilon_too_small():
    y = normal_data(100, 17)
    model = invert.structural_mean_model(100)
    with pytest.raises(EpsilonTooSmallError):
        invert.abc_draws(model, [y.mean()], invert.flat_prior(y), 100, 1e-9, statkit.make_rng(0),
                         attempt_cap=200_000)


def test_abc_requires_proper_prior():
    with pytest.raises(ParameterDomainError):
        invert.abc_draws(invert.structural_mean_model(10), [0.0], ScalarLaw.normal(), 10, 0.1,
                         statkit.make_rng(0))


def test_abc_determinism():
    y = normal_data(30, 18)
    model = invert.structural_mean_model(30)
    prior = invert.flat_prior(y)
    a = invert.abc_draws(model, [y.mean()], prior, 300, 0.02, statkit.make_rng(19))
    b = invert.abc_draws(model, [y.mean()], prior, 300, 0.02, statkit.make_rng(19))
    assert a.draws.tobytes() == b.draws.tobytes() and a.attempts == b.attempts


def test_flat_prior_and_default_epsilon():
    y = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
    s = 1.4826 * 1.0
    assert invert.robust_scale(y) == pytest.approx(s)
    assert invert.flat_prior(y).support == pytest.approx((3 - 20 * s, 3 + 20 * s))
    assert invert.default_epsilon(y) == pytest.approx(0.05 * s / math.sqrt(5))
    with pytest.raises(ParameterDomainError):
        invert.flat_prior(np.ones(5))


# -- matching diagnostics and conversion ---------------------------------------------------

def test_matching_cd_rv_exact():
    n = 100
    y = normal_data(n, 20)
    d = invert.cd_rv_draws(build.normal_mean_cd(y), 2000, statkit.make_rng(21), center=float(y.mean()))
    rep = invert.matching_diagnostic(d, invert.location_model(n), 0.0, 2000, statkit.make_rng(22))
    assert rep.passes(0.04) and rep.engine == "cd-rv" and rep.n == n
    assert "theta_hat - theta0" in rep.reference


def test_matching_gfi():
    n = 100
    ybar = float(normal_data(n, 23).mean())
    model = invert.structural_mean_model(n, (ybar - 1, ybar + 1))
    d = invert.gfi_draws(model, [ybar], 2000, 1e-10, statkit.make_rng(24))
    assert invert.matching_diagnostic(d, model, 0.0, 2000, statkit.make_rng(25)).passes(0.05)


def test_matching_bootstrap():
    y = normal_data(200, 26)
    d = invert.bootstrap_draws(y, np.mean, 2000, statkit.make_rng(27))
    assert invert.matching_diagnostic(d, invert.location_model(200), 0.0, 2000, statkit.make_rng(28)).passes(0.06)


def test_matching_requires_center_and_r():
    d = invert.InversionDraws(np.zeros(10), "cd-rv")
    with pytest.raises(ParameterDomainError):
        invert.matching_diagnostic(d, invert.location_model(5), 0.0, 1000, statkit.make_rng(0))
    d.center = 0.0
    with pytest.raises(ParameterDomainError):
        invert.matching_diagnostic(d, invert.location_model(5), 0.0, 100, statkit.make_rng(0))


def test_draws_to_cd_median():
    # 2 / sqrt(M n) is 1.6 standard errors of the sample median of N(ybar, 1/n) draws,
    # so it holds with probability 2 Phi(2 / sqrt(pi / 2)) - 1 = 0.889 per draw set
    n, M, reps = 100, 2000, 300
    rng = statkit.make_rng(30)
    inside = 0
    for _ in range(reps):
        ybar = float(rng.normal(0.0, 0.1))
        model = invert.structural_mean_model(n, (ybar - 1, ybar + 1))
        cd = invert.draws_to_cd(invert.gfi_draws(model, [ybar], M, 1e-10, rng))
        inside += abs(cd.median() - ybar) < 2 / math.sqrt(M) / math.sqrt(n)
    p = 2 * stats.norm.cdf(2 / math.sqrt(math.pi / 2)) - 1
    assert abs(inside / reps - p) < 3 * math.sqrt(p * (1 - p) / reps)


def test_draws_to_cd_rejects_constant_draws():
    d = invert.bootstrap_draws(np.full(20, 1.0), np.mean, 500, statkit.make_rng(0))
    with pytest.raises(DegenerateSampleError):
        invert.draws_to_cd(d)


def test_abc_median_interval_width():
    # average over datasets: the ABC-median law is close to N(median, pi^2 / (4n))
    n = 40
    _, model = harness.cauchy_models(n)
    widths = []
    for i in range(15):
        y = statkit.sample(ScalarLaw.cauchy(10.0, 1.0), statkit.make_rng(200 + i), n)
        d = invert.abc_draws(model, y, invert.flat_prior(y), 500, invert.default_epsilon(y),
                             statkit.make_rng(300 + i))
        widths.append(core.cd_interval(invert.draws_to_cd(d), 0.95).length)
    assert np.mean(widths) == pytest.approx(0.974, rel=0.08)


def test_inversion_draws_validation():
    with pytest.raises(InsufficientDataError):
        invert.InversionDraws(np.array([]), "abc")
    with pytest.raises(ParameterDomainError):
        invert.InversionDraws(np.ones(3), "mcmc")
    with pytest.raises(ParameterDomainError):
        invert.InversionDraws(np.ones(3), "abc", acceptance_rate=0.0)


def test_write_read_draws(tmp_path):
    y = normal_data(20, 31)
    d = invert.abc_draws(invert.structural_mean_model(20), [y.mean()], invert.flat_prior(y), 50, 0.05,
                         statkit.make_rng(32))
    csv_path, meta_path = invert.write_draws(d, tmp_path / "draws.csv")
    assert open(csv_path).readline().strip() == "theta_star"
    meta = open(meta_path).read()
    for key in ("engine=abc", "seed=", "epsilon=0.05", "acceptance_rate="):
        assert key in meta
    back = invert.read_draws(csv_path)
    assert np.array_equal(back.draws, d.draws)
    assert back.acceptance_rate == d.acceptance_rate and back.engine == "abc"
