"""Constructors that turn data into confidence distributions.

Pivot-based (normal mean, Neyman-Scott variance, Fisher's z), p-value
function based (Mann-Whitney shift, binomial upper/lower), likelihood based
(normalised and profile likelihoods, flat-prior posteriors) and bootstrap
based (BCa for a correlation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import cumulative_simpson

from . import statkit
from .core import AnalyticCD, DiscreteCDPair, GriddedCD
from .errors import (
    DegenerateSampleError,
    InsufficientDataError,
    ParameterDomainError,
    TailRuleError,
)
from .statkit import ScalarLaw

__all__ = [
    "PairedSample",
    "TwoSample",
    "BivariateSample",
    "normal_mean_cd",
    "neyman_scott_cd",
    "binomial_cd_pair",
    "half_corrected_cd",
    "gamma_profile_loglik",
    "gamma_profile_cd",
    "mann_whitney_null_pmf",
    "mann_whitney_cd",
    "fisher_z_cd",
    "bootstrap_correlations",
    "bca_constants",
    "bca_bootstrap_cd",
    "normalized_likelihood_cd",
    "correlation_profile_loglik",
    "correlation_flat_prior_loglik",
    "cauchy_loglik",
    "binomial_flat_prior_cd",
]

_NORMAL = ScalarLaw.normal()
DEFAULT_GRID = 2001
MAX_WIDENINGS = 5
# relative likelihood at a window edge below which the outside mass is negligible
EDGE_REL_DENSITY = 1e-7


@dataclass(frozen=True)
class PairedSample:
    """``n`` independent pairs sharing a variance but not a mean."""

    pairs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pairs, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ParameterDomainError("pairs must have shape (n, 2)")
        if a.shape[0] < 2:
            raise InsufficientDataError("need at least 2 pairs")
        object.__setattr__(self, "pairs", a)

    @property
    def n(self):
        return self.pairs.shape[0]

    @property
    def sigma2_hat(self):
        """Maximum likelihood estimate, the within-pair sum of squares over ``2n``.

        This is the normalisation under which ``2 n sigma2_hat / sigma2`` is
        chi-square(n); it converges to ``sigma2 / 2``.
        """
        d = self.pairs[:, 0] - self.pairs[:, 1]
        # (y1 - ybar)^2 + (y2 - ybar)^2 = (y1 - y2)^2 / 2
        return float(np.mean(d * d) / 4.0)


@dataclass(frozen=True)
class TwoSample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size < 1 or y.size < 1:
            raise InsufficientDataError("both samples need at least one observation")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class BivariateSample:
    """Rows of ``(y1, y2)`` pairs; the target is their correlation."""

    rows: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.rows, dtype=float)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ParameterDomainError("rows must have shape (n, 2)")
        if a.shape[0] < 4:
            raise InsufficientDataError("Fisher's z needs n > 3")
        object.__setattr__(self, "rows", a)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def r(self):
        return float(_correlation(self.rows[:, 0], self.rows[:, 1]))


def _correlation(x, y, axis=-1):
    xc = x - x.mean(axis=axis, keepdims=True)
    yc = y - y.mean(axis=axis, keepdims=True)
    sxy = (xc * yc).sum(axis=axis)
    sxx = (xc * xc).sum(axis=axis)
    syy = (yc * yc).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sxy / np.sqrt(sxx * syy)


def normal_mean_cd(sample):
    """CD ``Phi(sqrt(n) (theta - ybar))`` for a N(theta, 1) sample."""
    y = np.asarray(sample, dtype=float).ravel()
    if y.size == 0:
        raise InsufficientDataError("empty sample")
    n, ybar = y.size, float(y.mean())
    rn = math.sqrt(n)
    return AnalyticCD(
        cdf=lambda t: statkit.cdf(_NORMAL, rn * (t - ybar)),
        density=lambda t: rn * statkit.pdf(_NORMAL, rn * (t - ybar)),
        ppf=lambda u: ybar + statkit.quantile(_NORMAL, u) / rn,
        label=f"normal mean (n={n}, ybar={ybar:.6g})",
        provenance="normal_mean_cd",
    )


def neyman_scott_cd(sample):
    """CD for the common variance of paired normal data with free means.

    ``H(s2) = 1 - C_n(2 n sigma2_hat / s2)`` with ``C_n`` the chi-square(n)
    CDF.
    """
    if not isinstance(sample, PairedSample):
        sample = PairedSample(sample)
    n, s2 = sample.n, sample.sigma2_hat
    if not s2 > 0:
        raise DegenerateSampleError("all pairs have identical members; sigma2_hat = 0")
    chi = ScalarLaw.chi2(n)
    k = 2.0 * n * s2

    def cdf(v):
        with np.errstate(divide="ignore"):
            return 1.0 - statkit.cdf(chi, k / v)

    def density(v):
        return k / (v * v) * statkit.pdf(chi, k / v)

    return AnalyticCD(
        cdf=cdf,
        density=density,
        ppf=lambda u: k / statkit.quantile(chi, 1.0 - np.asarray(u)),
        support=(0.0, math.inf),
        label=f"Neyman-Scott variance (n={n}, sigma2_hat={s2:.6g})",
        provenance="neyman_scott_cd",
    )


def _binom_sf(p, n, y):
    """``Pr(Y > y)`` for Y ~ Bin(n, p), by exact pmf summation."""
    if y < 0:
        return 1.0
    if y >= n:
        return 0.0
    return 1.0 - float(statkit.cdf(ScalarLaw.binomial(n, float(p)), y))


def binomial_cd_pair(n, y):
    """Upper/lower CDs ``Pr(Y > y)`` and ``Pr(Y > y - 1)`` for a binomial count.

    The returned pair's callables accept any count, so exact enumeration over
    the sample space works on the same objects.
    """
    n = int(n)
    if not 0 <= y <= n:
        raise ParameterDomainError(f"y={y} outside 0..{n}")
    return DiscreteCDPair(
        upper=lambda p, yy: _binom_sf(p, n, int(yy)),
        lower=lambda p, yy: _binom_sf(p, n, int(yy) - 1),
        model=lambda p: ScalarLaw.binomial(n, p),
        theta_space=(0.0, 1.0),
        label=f"binomial(n={n}, y={y})",
    )


def half_corrected_cd(n, y, grid_size=DEFAULT_GRID):
    """Average of the binomial upper and lower CDs, gridded on p in [0, 1].

    Boundary observations leave half a unit of mass at p = 0 or 1, so the
    tail rule is not enforced here.
    """
    pair = binomial_cd_pair(n, y)
    p = np.linspace(0.0, 1.0, grid_size)
    H = np.array([0.5 * (pair.upper(v, y) + pair.lower(v, y)) for v in p])
    flags = ("boundary-mass",) if (H[0] > 1e-3 or H[-1] < 1 - 1e-3) else ()
    return GriddedCD(p, H, label=f"half-corrected binomial (n={n}, y={y})",
                     provenance="half_corrected_cd", flags=flags, enforce_tails=False)


def _likelihood_on_grid(loglik, grid):
    ll = np.asarray(loglik(grid), dtype=float)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    top = ll.max()
    if not np.isfinite(top):
        raise ParameterDomainError("log-likelihood is -inf on the whole grid")
    return np.exp(ll - top)


def _edges_ok(rel, grid, bounds):
    lo_ok = rel[0] <= EDGE_REL_DENSITY or grid[0] <= bounds[0]
    hi_ok = rel[-1] <= EDGE_REL_DENSITY or grid[-1] >= bounds[1]
    return lo_ok and hi_ok


def _widen(grid, bounds):
    c = 0.5 * (grid[0] + grid[-1])
    w = grid[-1] - grid[0]
    lo = max(c - w, bounds[0])
    hi = min(c + w, bounds[1])
    return np.linspace(lo, hi, grid.size)


def normalized_likelihood_cd(loglik, theta_grid, bounds=(-math.inf, math.inf),
                             label="normalized likelihood", provenance="normalized_likelihood_cd"):
    """CD whose density is the likelihood normalised over the parameter.

    ``exp(loglik - max)`` is integrated by Simpson's rule; the CDF is the
    cumulative Simpson integral divided by the total.  A window whose edge
    likelihood is not negligible is doubled around its centre (clipped to
    ``bounds``) up to five times.

    With a flat prior the result is also the Bayesian posterior.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ParameterDomainError("theta_grid must be strictly increasing with >= 3 points")
    for attempt in range(MAX_WIDENINGS + 1):
        rel = _likelihood_on_grid(loglik, grid)
        if _edges_ok(rel, grid, bounds):
            break
        if attempt == MAX_WIDENINGS:
            raise TailRuleError(
                f"likelihood not negligible at window edges after {MAX_WIDENINGS} widenings"
            )
        grid = _widen(grid, bounds)
    cum = cumulative_simpson(rel, x=grid, initial=0.0)
    cum = np.maximum.accumulate(np.maximum(cum, 0.0))
    total = cum[-1]
    if not total > 0:
        raise DegenerateSampleError("likelihood integrates to zero on the grid")
    flags = ("widened",) if attempt else ()
    return GriddedCD(grid, cum / total, density=rel / total, label=label,
                     provenance=provenance, flags=flags, enforce_tails=True)


def gamma_profile_loglik(sample):
    """Profile log-likelihood of the Gamma shape with ``rate = shape / ybar``."""
    y = np.asarray(sample, dtype=float).ravel()
    if y.size == 0:
        raise InsufficientDataError("empty sample")
    if np.any(y <= 0):
        raise ParameterDomainError("gamma data must be positive")
    n, ybar, slog = y.size, float(y.mean()), float(np.log(y).sum())

    def loglik(theta):
        t = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -n * special.gammaln(t) + n * t * np.log(t / ybar) + (t - 1) * slog - n * t
        return np.where(t > 0, val, -np.inf)

    return loglik


def gamma_profile_cd(sample, theta_grid=None, grid_size=DEFAULT_GRID):
    """Normalised profile-likelihood CD for the shape of a Gamma sample."""
    y = np.asarray(sample, dtype=float).ravel()
    loglik = gamma_profile_loglik(y)
    if theta_grid is None:
        v = y.var()
        shape_mom = y.mean() ** 2 / v if v > 0 else 1.0
        half = 4.0 * shape_mom * math.sqrt(2.0 / y.size) + 1.0
        theta_grid = np.linspace(max(shape_mom - half, shape_mom * 1e-3), shape_mom + half, grid_size)
    return normalized_likelihood_cd(loglik, theta_grid, bounds=(1e-9, math.inf),
                                    label=f"gamma shape profile (n={y.size})",
                                    provenance="gamma_profile_cd")


def mann_whitney_null_pmf(n1, n2):
    """Exact null pmf of U (number of pairs with x < y) for sizes n1, n2.

    Uses the count recursion ``c(i, j, u) = c(i-1, j, u-j) + c(i, j-1, u)``
    on the number of arrangements, normalised by ``C(n1 + n2, n1)``.
    """
    n1, n2 = int(n1), int(n2)
    # prev[j] holds the counts for (i - 1, j)
    prev = [np.ones(1) for _ in range(n2 + 1)]
    for i in range(1, n1 + 1):
        cur = [np.ones(1)]
        for j in range(1, n2 + 1):
            out = np.zeros(i * j + 1)
            a = prev[j]
            out[:a.size] += a
            b = cur[j - 1]
            out[i:i + b.size] += b
            cur.append(out)
        prev = cur
    counts = prev[n2]
    return counts / counts.sum()


def mann_whitney_cd(data, theta_grid=None, grid_size=DEFAULT_GRID, exact_limit=400):
    """Shift CD ``H(theta) = A(u_theta)`` from the Mann-Whitney p-value function.

    ``u_theta = n1 n2 + n1 (n1 + 1) / 2 - R_theta`` counts pairs with
    ``x_i < y_j + theta``; ``A`` is its null CDF, exact for
    ``n1 * n2 <= exact_limit`` and continuity-corrected normal otherwise.
    The step function is reported as is, right-continuous at its jumps.
    """
    if not isinstance(data, TwoSample):
        data = TwoSample(*data)
    x, y = data.x, data.y
    n1, n2 = x.size, y.size
    if n1 + n2 < 4:
        raise InsufficientDataError("Mann-Whitney CD needs n1 + n2 >= 4")
    diffs = np.sort((x[:, None] - y[None, :]).ravel())
    if theta_grid is None:
        span = diffs[-1] - diffs[0]
        pad = 0.05 * span if span > 0 else 1.0
        theta_grid = np.linspace(diffs[0] - pad, diffs[-1] + pad, grid_size)
    grid = np.asarray(theta_grid, dtype=float)
    u = np.searchsorted(diffs, grid, side="right")
    flags = ["right-continuous"]
    if np.any(np.searchsorted(diffs, grid, side="left") != u):
        flags.append("tie-at-grid")
    m = n1 * n2
    if m <= exact_limit:
        A = np.minimum(np.cumsum(mann_whitney_null_pmf(n1, n2)), 1.0)
        H = A[u]
        flags.append("exact-null")
    else:
        sd = math.sqrt(m * (n1 + n2 + 1) / 12.0)
        H = statkit.cdf(_NORMAL, (u + 0.5 - m / 2.0) / sd)
        flags.append("normal-null")
    tails = H[0] <= 1e-3 and H[-1] >= 1 - 1e-3
    if not tails:
        flags.append("tail-rule-unattainable")
    return GriddedCD(grid, H, label=f"Mann-Whitney shift (n1={n1}, n2={n2})",
                     provenance="mann_whitney_cd", flags=flags, enforce_tails=tails)


def fisher_z_cd(data):
    """Asymptotic CD for a correlation from Fisher's z transform."""
    if not isinstance(data, BivariateSample):
        data = BivariateSample(data)
    n, r = data.n, data.r
    if not abs(r) < 1:
        raise DegenerateSampleError("|r| = 1")
    c = math.sqrt(n - 3)
    zr = math.atanh(r)

    def cdf(rho):
        return 1.0 - statkit.cdf(_NORMAL, c * (zr - np.arctanh(rho)))

    def density(rho):
        rho = np.asarray(rho, dtype=float)
        return c / (1.0 - rho * rho) * statkit.pdf(_NORMAL, c * (zr - np.arctanh(rho)))

    return AnalyticCD(
        cdf=cdf,
        density=density,
        ppf=lambda u: np.tanh(zr + statkit.quantile(_NORMAL, u) / c),
        support=(-1.0, 1.0),
        label=f"Fisher z (n={n}, r={r:.4f})",
        provenance="fisher_z_cd",
    )


def bootstrap_correlations(rows, B, rng):
    """Correlations of ``B`` row-resamples (with replacement) of ``rows``."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    out = np.empty(B)
    chunk = max(1, 2_000_000 // max(n, 1))
    for s in range(0, B, chunk):
        m = min(chunk, B - s)
        idx = rng.integers(0, n, size=(m, n))
        out[s:s + m] = _correlation(rows[idx, 0], rows[idx, 1])
    return out


def bca_constants(rows, r_star):
    """Bias constant ``z0`` and jackknife acceleration ``a`` for a correlation.

    Returns ``(z0, a, flags)``; ``z0`` is clamped when every replicate falls
    on one side of the observed ``r``.
    """
    rows = np.asarray(rows, dtype=float)
    r = float(_correlation(rows[:, 0], rows[:, 1]))
    B = r_star.size
    below = int(np.sum(r_star < r))
    flags = []
    if below in (0, B):
        below = min(max(below, 0.5), B - 0.5)
        flags.append("z0-clamped")
    z0 = float(statkit.quantile(_NORMAL, below / B))
    n = rows.shape[0]
    x, y = rows[:, 0], rows[:, 1]
    sx, sy, sxx, syy, sxy = x.sum(), y.sum(), (x * x).sum(), (y * y).sum(), (x * y).sum()
    m = n - 1
    # leave-one-out sums
    lx, ly = sx - x, sy - y
    lxx, lyy, lxy = sxx - x * x, syy - y * y, sxy - x * y
    cov = lxy - lx * ly / m
    vx = lxx - lx * lx / m
    vy = lyy - ly * ly / m
    jack = cov / np.sqrt(vx * vy)
    d = jack.mean() - jack
    denom = 6.0 * (np.sum(d * d)) ** 1.5
    a = float(np.sum(d ** 3) / denom) if denom > 0 else 0.0
    return z0, a, flags


def bca_bootstrap_cd(data, B, rng, grid_size=DEFAULT_GRID, z0=None, accel=None):
    """BCa bootstrap CD for a correlation, gridded over the bootstrap range.

    ``H(rho) = Phi((w - z0) / (1 + a (w - z0)) - z0)`` with
    ``w = Phi^-1(G(rho))`` and ``G`` the bootstrap ECDF.  This is the
    monotone inverse of the BCa endpoint map, so its quantiles are the BCa
    interval endpoints.  Passing ``z0=0, accel=0`` gives the percentile CD.
    """
    if not isinstance(data, BivariateSample):
        data = BivariateSample(data)
    if B < 1000:
        raise ParameterDomainError("BCa needs B >= 1000")
    r_star = bootstrap_correlations(data.rows, B, rng)
    r_star = r_star[np.isfinite(r_star)]
    if r_star.size < B:
        raise DegenerateSampleError("bootstrap produced undefined correlations")
    if r_star.min() == r_star.max():
        raise DegenerateSampleError("all bootstrap correlations identical")
    z0_hat, a_hat, flags = bca_constants(data.rows, r_star)
    z0 = z0_hat if z0 is None else float(z0)
    a = a_hat if accel is None else float(accel)
    return _bca_grid_cd(r_star, z0, a, grid_size, flags)


def _bca_grid_cd(r_star, z0, a, grid_size, flags=()):
    srt = np.sort(r_star)
    B = srt.size
    span = srt[-1] - srt[0]
    lo = max(srt[0] - 0.05 * span, -1.0)
    hi = min(srt[-1] + 0.05 * span, 1.0)
    grid = np.linspace(lo, hi, grid_size)
    G = np.searchsorted(srt, grid, side="right") / B
    G = np.clip(G, 1e-12, 1 - 1e-12)
    w = statkit.quantile(_NORMAL, G) - z0
    den = 1.0 + a * w
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(den > 0, w / den - z0, np.where(w < 0, -np.inf, np.inf))
    H = statkit.cdf(_NORMAL, arg)
    H = np.maximum.accumulate(H)
    out = GriddedCD(grid, H, label=f"BCa bootstrap (B={B}, z0={z0:.4f}, a={a:.4f})",
                    provenance="bca_bootstrap_cd", flags=tuple(flags))
    out.z0, out.accel, out.r_star = z0, a, srt
    return out


def correlation_profile_loglik(r, n):
    """Bivariate-normal profile log-likelihood of rho.

    Means and variances are maximised out in closed form, leaving
    ``n [log(1 - rho^2) / 2 - log(1 - rho r)]``.
    """
    def loglik(rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return n * (0.5 * np.log1p(-rho * rho) - np.log1p(-rho * r))

    return loglik


def correlation_flat_prior_loglik(r, n):
    """Log marginal likelihood of rho with means and log-scales integrated out.

    Flat prior on the means and on ``log sigma1, log sigma2``; then
    ``p(rho | data) ∝ (1 - rho^2)^((n-1)/2) (1 - rho r)^(3/2 - n)
    2F1(1/2, 1/2; n - 1/2; (1 + rho r) / 2)``.  Combined with a uniform prior
    on rho this is the flat-prior posterior for the correlation.
    """
    def loglik(rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (
                0.5 * (n - 1) * np.log1p(-rho * rho)
                - (n - 1.5) * np.log1p(-rho * r)
                + np.log(special.hyp2f1(0.5, 0.5, n - 0.5, 0.5 * (1 + rho * r)))
            )

    return loglik


def cauchy_loglik(sample, scale=1.0):
    """Location log-likelihood of a Cauchy(theta, scale) sample."""
    y = np.asarray(sample, dtype=float).ravel()

    def loglik(theta):
        t = np.asarray(theta, dtype=float)
        z = (y[None, :] - np.atleast_1d(t)[:, None]) / scale
        out = -np.log1p(z * z).sum(axis=1)
        return out.reshape(t.shape)

    return loglik


def binomial_flat_prior_cd(y, n, grid_size=DEFAULT_GRID):
    """Flat-prior posterior of a binomial success rate as a gridded CD.

    The normalised binomial likelihood on [0, 1]; analytically Beta(y+1, n-y+1).
    """
    n = int(n)
    if not 0 <= y <= n:
        raise ParameterDomainError(f"y={y} outside 0..{n}")

    def loglik(p):
        p = np.asarray(p, dtype=float)
        return special.xlogy(y, p) + special.xlog1py(n - y, -p)

    return normalized_likelihood_cd(loglik, np.linspace(0.0, 1.0, grid_size), bounds=(0.0, 1.0),
                                    label=f"binomial flat-prior posterior (y={y}, n={n})",
                                    provenance="binomial_flat_prior_cd")
