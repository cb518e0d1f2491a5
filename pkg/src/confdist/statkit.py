"""Scalar distribution kernels, special functions and seeded streams.

Every other module draws its normal, chi-square, Laplace, Cauchy and binomial
arithmetic from here.  Evaluators are pure functions of a :class:`ScalarLaw`;
samplers always take an explicit :class:`numpy.random.Generator`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ParameterDomainError, UnsupportedOperationError

__all__ = [
    "ScalarLaw",
    "cdf",
    "pdf",
    "quantile",
    "sample",
    "log_gamma",
    "make_rng",
    "spawn",
    "invert_monotone",
    "ks_distance",
    "ks_two_sample",
]

_KINDS = (
    "std-normal",
    "chi-square",
    "gamma",
    "binomial",
    "cauchy",
    "laplace-std",
    "uniform",
    "student-t",
)
_NPARAMS = {
    "std-normal": 0,
    "chi-square": 1,
    "gamma": 2,
    "binomial": 2,
    "cauchy": 2,
    "laplace-std": 0,
    "uniform": 2,
    "student-t": 2,
}


@dataclass(frozen=True)
class ScalarLaw:
    """A named univariate law with its parameters.

    Use the classmethod constructors rather than building instances by hand;
    they validate the parameter domain.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterDomainError(f"unknown law kind {self.kind!r}")
        if len(self.params) != _NPARAMS[self.kind]:
            raise ParameterDomainError(
                f"{self.kind} takes {_NPARAMS[self.kind]} parameters, got {len(self.params)}"
            )
        p = self.params
        if any(not math.isfinite(v) for v in p):
            raise ParameterDomainError(f"non-finite parameter in {self}")
        if self.kind == "chi-square" and not p[0] > 0:
            raise ParameterDomainError("chi-square degrees of freedom must be > 0")
        if self.kind == "gamma" and not (p[0] > 0 and p[1] > 0):
            raise ParameterDomainError("gamma shape and rate must be > 0")
        if self.kind == "binomial":
            if p[0] < 0 or int(p[0]) != p[0]:
                raise ParameterDomainError("binomial n must be a nonnegative integer")
            if not 0.0 <= p[1] <= 1.0:
                raise ParameterDomainError("binomial p must lie in [0, 1]")
        if self.kind == "cauchy" and not p[1] > 0:
            raise ParameterDomainError("cauchy scale must be > 0")
        if self.kind == "uniform" and not p[0] < p[1]:
            raise ParameterDomainError("uniform requires a < b")
        if self.kind == "student-t" and not p[0] > 0:
            raise ParameterDomainError("student-t degrees of freedom must be > 0")

    @classmethod
    def normal(cls):
        return cls("std-normal")

    @classmethod
    def chi2(cls, df):
        return cls("chi-square", (float(df),))

    @classmethod
    def gamma(cls, shape, rate=1.0):
        return cls("gamma", (float(shape), float(rate)))

    @classmethod
    def binomial(cls, n, p):
        return cls("binomial", (int(n), float(p)))

    @classmethod
    def cauchy(cls, loc=0.0, scale=1.0):
        return cls("cauchy", (float(loc), float(scale)))

    @classmethod
    def laplace(cls):
        return cls("laplace-std")

    @classmethod
    def uniform(cls, a=0.0, b=1.0):
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def student_t(cls, df, noncentrality=0.0):
        return cls("student-t", (float(df), float(noncentrality)))

    @property
    def is_discrete(self):
        return self.kind == "binomial"

    @property
    def support(self):
        """Closed support interval ``(lo, hi)``."""
        if self.kind in ("chi-square", "gamma"):
            return (0.0, math.inf)
        if self.kind == "uniform":
            return self.params
        if self.kind == "binomial":
            return (0.0, float(self.params[0]))
        return (-math.inf, math.inf)


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def _binomial_pmf_table(n, p):
    k = np.arange(n + 1)
    if p == 0.0:
        return (k == 0).astype(float)
    if p == 1.0:
        return (k == n).astype(float)
    logc = special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
    return np.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def cdf(law, x):
    """Evaluate the cumulative distribution function of ``law`` at ``x``."""
    xa = np.asarray(x, dtype=float)
    kind, p = law.kind, law.params
    if kind == "std-normal":
        out = special.ndtr(xa)
    elif kind == "chi-square":
        out = special.chdtr(p[0], np.maximum(xa, 0.0))
    elif kind == "gamma":
        out = special.gammainc(p[0], p[1] * np.maximum(xa, 0.0))
    elif kind == "binomial":
        n = int(p[0])
        csum = np.minimum(np.cumsum(_binomial_pmf_table(n, p[1])), 1.0)
        k = np.floor(xa)
        idx = np.clip(k, 0, n).astype(int)
        out = np.where(k < 0, 0.0, np.where(k >= n, 1.0, csum[idx]))
    elif kind == "cauchy":
        out = 0.5 + np.arctan((xa - p[0]) / p[1]) / math.pi
    elif kind == "laplace-std":
        out = np.where(xa < 0, 0.5 * np.exp(np.minimum(xa, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(xa, 0.0)))
    elif kind == "uniform":
        out = np.clip((xa - p[0]) / (p[1] - p[0]), 0.0, 1.0)
    elif kind == "student-t":
        if p[1] != 0.0:
            raise UnsupportedOperationError("noncentral Student-t supports sampling only")
        out = special.stdtr(p[0], xa)
    return _scalar_or_array(x, out)


def pdf(law, x):
    """Density (or probability mass, for the binomial) of ``law`` at ``x``."""
    xa = np.asarray(x, dtype=float)
    kind, p = law.kind, law.params
    if kind == "std-normal":
        out = np.exp(-0.5 * xa * xa) / math.sqrt(2 * math.pi)
    elif kind == "chi-square":
        nu = p[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (nu / 2 - 1) * np.log(xa) - xa / 2 - nu / 2 * math.log(2) - special.gammaln(nu / 2)
            out = np.where(xa > 0, np.exp(logf), 0.0)
    elif kind == "gamma":
        a, b = p
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = a * math.log(b) + (a - 1) * np.log(xa) - b * xa - special.gammaln(a)
            out = np.where(xa > 0, np.exp(logf), 0.0)
    elif kind == "binomial":
        n = int(p[0])
        table = _binomial_pmf_table(n, p[1])
        k = np.rint(xa)
        ok = (k == xa) & (k >= 0) & (k <= n)
        out = np.where(ok, table[np.clip(k, 0, n).astype(int)], 0.0)
    elif kind == "cauchy":
        z = (xa - p[0]) / p[1]
        out = 1.0 / (math.pi * p[1] * (1 + z * z))
    elif kind == "laplace-std":
        out = 0.5 * np.exp(-np.abs(xa))
    elif kind == "uniform":
        out = np.where((xa >= p[0]) & (xa <= p[1]), 1.0 / (p[1] - p[0]), 0.0)
    elif kind == "student-t":
        if p[1] != 0.0:
            raise UnsupportedOperationError("noncentral Student-t supports sampling only")
        nu = p[0]
        logc = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
        out = np.exp(logc - (nu + 1) / 2 * np.log1p(xa * xa / nu))
    return _scalar_or_array(x, out)


def invert_monotone(f, u, lo, hi, fprime=None, tol=1e-12, maxiter=200):
    """Solve ``f(x) = u`` elementwise for a nondecreasing ``f``.

    Bisection on a bracket that is first expanded outward until it contains
    the root, with Newton steps taken whenever they stay inside the bracket.

    Parameters
    ----------
    f : callable
        Vectorised nondecreasing function.
    u : array_like
        Target values.
    lo, hi : float
        Initial bracket; infinite ends are replaced by an expanding search.
    fprime : callable, optional
        Derivative of ``f``; enables the Newton refinement.
    tol : float
        Stop once ``|f(x) - u| <= tol`` or the bracket collapses.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    a = np.full(u.shape, lo if math.isfinite(lo) else -1.0)
    b = np.full(u.shape, hi if math.isfinite(hi) else 1.0)
    if not math.isfinite(lo):
        step = np.maximum(np.abs(a), 1.0)
        for _ in range(2000):
            bad = f(a) > u
            if not bad.any():
                break
            a = np.where(bad, a - step, a)
            step = np.where(bad, 2 * step, step)
    if not math.isfinite(hi):
        step = np.maximum(np.abs(b), 1.0)
        for _ in range(2000):
            bad = f(b) < u
            if not bad.any():
                break
            b = np.where(bad, b + step, b)
            step = np.where(bad, 2 * step, step)
    x = 0.5 * (a + b)
    for _ in range(maxiter):
        fx = f(x)
        resid = fx - u
        # relative collapse test so that tiny quantiles (small-df chi-square) resolve
        done = (np.abs(resid) <= tol) | (b - a <= 4e-16 * np.maximum(np.abs(a), np.abs(b)))
        if done.all():
            break
        a = np.where(resid < 0, x, a)
        b = np.where(resid > 0, x, b)
        mid = 0.5 * (a + b)
        if fprime is not None:
            d = fprime(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = x - resid / d
            ok = np.isfinite(newton) & (newton > a) & (newton < b) & (d > 0)
            nxt = np.where(ok, newton, mid)
        else:
            nxt = mid
        x = np.where(done, x, nxt)
    return x


def quantile(law, u):
    """Inverse CDF of a continuous ``law`` at probability ``u`` in (0, 1)."""
    ua = np.asarray(u, dtype=float)
    if np.any(~((ua > 0) & (ua < 1))):
        raise ParameterDomainError("quantile requires u in the open interval (0, 1)")
    if law.is_discrete:
        raise UnsupportedOperationError("quantile is defined for continuous laws only")
    return _scalar_or_array(u, _quantile_checked(law, ua))


def _quantile_checked(law, ua):
    kind, p = law.kind, law.params
    if kind == "std-normal":
        out = special.ndtri(ua)
    elif kind == "cauchy":
        out = p[0] + p[1] * np.tan(math.pi * (ua - 0.5))
    elif kind == "laplace-std":
        out = np.where(ua < 0.5, np.log(2 * ua), -np.log(2 * (1 - ua)))
    elif kind == "uniform":
        out = p[0] + ua * (p[1] - p[0])
    elif kind == "student-t" and p[1] != 0.0:
        raise UnsupportedOperationError("noncentral Student-t supports sampling only")
    else:
        lo, hi = law.support
        out = invert_monotone(
            lambda x: cdf(law, x), ua, lo, hi, fprime=lambda x: pdf(law, x), tol=1e-13
        ).reshape(ua.shape)
    return out


def _open_uniform(rng, count):
    # (0, 1): exclude the zero that Generator.random can return
    u = rng.random(count)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def sample(law, rng, count):
    """Draw ``count`` variates from ``law`` using the stream ``rng``.

    Continuous laws are sampled by inverse-CDF transform, the binomial by
    table lookup on its exact cumulative pmf and the noncentral Student-t by
    the ``(Z + delta) / sqrt(chi2 / df)`` composition.
    """
    count = int(count)
    if count < 1:
        raise ParameterDomainError("count must be >= 1")
    kind, p = law.kind, law.params
    if kind == "binomial":
        n = int(p[0])
        csum = np.cumsum(_binomial_pmf_table(n, p[1]))
        csum[-1] = 1.0
        return np.searchsorted(csum, rng.random(count), side="right").astype(float)
    if kind == "student-t" and p[1] != 0.0:
        z = sample(ScalarLaw.normal(), rng, count)
        v = sample(ScalarLaw.chi2(p[0]), rng, count)
        return (z + p[1]) / np.sqrt(v / p[0])
    return np.asarray(_quantile_checked(law, _open_uniform(rng, count)), dtype=float)


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ParameterDomainError("log_gamma requires x > 0")
    return _scalar_or_array(x, special.gammaln(xa))


def make_rng(seed):
    """A PCG64 stream seeded through :class:`numpy.random.SeedSequence`."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn(rng_or_seed, k):
    """``k`` independent child streams derived from a seed or a stream.

    Children depend only on the parent state and their index, so work split
    across any number of workers reproduces the same draws.
    """
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed.spawn(k)
    return [np.random.default_rng(s) for s in np.random.SeedSequence(rng_or_seed).spawn(k)]


def ks_distance(draws, cdf_fn):
    """One-sample Kolmogorov-Smirnov distance between draws and a CDF."""
    x = np.sort(np.asarray(draws, dtype=float))
    m = x.size
    f = np.asarray(cdf_fn(x), dtype=float)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
