"""Confidence distributions and the inference derived from them.

A confidence distribution (CD) is a sample-dependent distribution function on
the parameter space.  Three representations are supported:

* :class:`AnalyticCD` -- an evaluable ``H(theta)``, optional density and
  closed-form quantile;
* :class:`GriddedCD` -- CDF values on a sorted grid, interpolated with a
  monotone PCHIP spline;
* :class:`EmpiricalCD` -- sorted draws of a CD random variable.

The module-level functions (``cd_eval``, ``cd_interval``, ...) accept any of
them.  Discrete models get :class:`DiscreteCDPair`, an upper/lower CD pair
whose intervals carry guaranteed coverage but need not nest.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from . import statkit
from .errors import (
    DegenerateSampleError,
    InsufficientDataError,
    ParameterDomainError,
    TailRuleError,
)

__all__ = [
    "ConfDist",
    "AnalyticCD",
    "GriddedCD",
    "EmpiricalCD",
    "Interval",
    "CDRandomVariable",
    "DiscreteCDPair",
    "cd_eval",
    "cd_density",
    "confidence_curve",
    "cd_quantile",
    "cd_interval",
    "cd_pvalue",
    "cd_rv_draw",
    "discrete_interval",
    "dominance_check",
    "write_gridded_csv",
    "read_gridded_csv",
    "write_curve_csv",
]

MIN_EMPIRICAL_DRAWS = 500
TAIL_LO = 1e-3
TAIL_HI = 1 - 1e-3


@dataclass(frozen=True)
class Interval:
    """A confidence interval ``[lo, hi]`` at confidence ``level``."""

    lo: float
    hi: float
    level: float
    flags: tuple = ()

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ParameterDomainError("interval level must lie in (0, 1)")
        if self.lo > self.hi:
            raise ParameterDomainError(f"interval has lo > hi: {self.lo} > {self.hi}")

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def is_empty(self):
        return math.isnan(self.lo)

    def contains(self, theta):
        return self.lo <= theta <= self.hi

    def __contains__(self, theta):
        return self.contains(theta)


def _check_u(u):
    ua = np.asarray(u, dtype=float)
    if np.any(~((ua > 0) & (ua < 1))):
        raise ParameterDomainError("probability must lie in the open interval (0, 1)")
    return ua


class ConfDist:
    """Common interface of the three CD representations.

    Instances are immutable after construction and safe to share.
    """

    representation = "abstract"

    def __init__(self, label="", provenance="", flags=()):
        self.label = label
        self.provenance = provenance
        self.flags = tuple(flags)

    @property
    def support(self):
        raise NotImplementedError

    def cdf(self, theta):
        raise NotImplementedError

    def density(self, theta):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def _fd_step(self):
        return 1e-5

    def _fd_density(self, theta):
        t = np.asarray(theta, dtype=float)
        h = self._fd_step()
        out = (np.asarray(self.cdf(t + h)) - np.asarray(self.cdf(t - h))) / (2 * h)
        return np.maximum(out, 0.0)

    def median(self):
        return self.quantile(0.5)

    def mean(self):
        """Mean of the CD, ``integral of H^{-1}(u) du`` over (0, 1)."""
        val, _ = integrate.quad(lambda u: float(self.quantile(u)), 0.0, 1.0, limit=200)
        return val

    def __repr__(self):
        lo, hi = self.support
        return f"<{type(self).__name__} {self.label!r} support=({lo:.6g}, {hi:.6g}) from {self.provenance!r}>"


class AnalyticCD(ConfDist):
    """A CD given by an evaluable distribution function.

    Parameters
    ----------
    cdf : callable
        Vectorised ``H(theta)``.
    density : callable, optional
        Vectorised ``h(theta)``; finite differences of ``cdf`` otherwise.
    ppf : callable, optional
        Closed-form quantile; a bracketing Newton solve otherwise.
    support : tuple of float
        ``(lo, hi)``, possibly infinite.
    """

    representation = "analytic"

    def __init__(self, cdf, density=None, ppf=None, support=(-math.inf, math.inf),
                 label="", provenance="", flags=()):
        super().__init__(label, provenance, flags)
        self._cdf = cdf
        self._density = density
        self._ppf = ppf
        self._support = (float(support[0]), float(support[1]))

    @property
    def support(self):
        return self._support

    def cdf(self, theta):
        t = np.asarray(theta, dtype=float)
        lo, hi = self._support
        with np.errstate(all="ignore"):
            inside = np.clip(np.asarray(self._cdf(np.clip(t, lo, hi)), dtype=float), 0.0, 1.0)
        out = np.where(t <= lo, 0.0, np.where(t >= hi, 1.0, inside))
        return float(out) if np.ndim(theta) == 0 else out

    def density(self, theta):
        if self._density is None:
            return self._fd_density(theta)
        t = np.asarray(theta, dtype=float)
        lo, hi = self._support
        with np.errstate(all="ignore"):
            val = np.asarray(self._density(np.clip(t, lo, hi)), dtype=float)
        out = np.where((t <= lo) | (t >= hi), 0.0, val)
        return float(out) if np.ndim(theta) == 0 else out

    def quantile(self, u):
        ua = _check_u(u)
        if self._ppf is not None:
            out = np.asarray(self._ppf(ua), dtype=float)
        else:
            lo, hi = self._support
            fprime = self.density if self._density is not None else None
            out = statkit.invert_monotone(self.cdf, ua, lo, hi, fprime=fprime, tol=1e-13).reshape(ua.shape)
        return float(out) if np.ndim(u) == 0 else out

    def shifted(self, c):
        """The CD of ``theta + c``, i.e. ``H(theta - c)``."""
        ppf = None if self._ppf is None else (lambda u: self._ppf(u) + c)
        dens = None if self._density is None else (lambda t: self._density(t - c))
        lo, hi = self._support
        return AnalyticCD(lambda t: self._cdf(t - c), dens, ppf, (lo + c, hi + c),
                          label=self.label, provenance=f"{self.provenance}+shift({c})", flags=self.flags)


class GriddedCD(ConfDist):
    """A CD tabulated on a strictly increasing parameter grid.

    Values between grid points come from a monotone PCHIP interpolant; outside
    the grid the end values are held constant.  Unless ``enforce_tails`` is
    false the grid must cover the mass: ``H[0] <= 0.001`` and
    ``H[-1] >= 0.999``.
    """

    representation = "gridded"

    def __init__(self, theta, H, density=None, label="", provenance="", flags=(),
                 enforce_tails=True):
        super().__init__(label, provenance, flags)
        theta = np.asarray(theta, dtype=float)
        H = np.asarray(H, dtype=float)
        if theta.ndim != 1 or theta.size < 2 or theta.shape != H.shape:
            raise ParameterDomainError("grid and CDF values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(theta) <= 0):
            raise ParameterDomainError("grid must be strictly increasing")
        if np.any(~np.isfinite(H)) or H.min() < -1e-9 or H.max() > 1 + 1e-9:
            raise ParameterDomainError("CDF values must lie in [0, 1]")
        if np.any(np.diff(H) < -1e-12):
            raise ParameterDomainError("CDF values must be nondecreasing")
        H = np.maximum.accumulate(np.clip(H, 0.0, 1.0))
        if enforce_tails and (H[0] > TAIL_LO or H[-1] < TAIL_HI):
            raise TailRuleError(
                f"grid [{theta[0]:.6g}, {theta[-1]:.6g}] leaves H in [{H[0]:.4g}, {H[-1]:.4g}]"
            )
        self.theta = theta
        self.H = H
        self.grid_density = None if density is None else np.asarray(density, dtype=float)
        self._interp = PchipInterpolator(theta, H, extrapolate=False)
        self._spacing = float(np.min(np.diff(theta)))

    @property
    def support(self):
        return (float(self.theta[0]), float(self.theta[-1]))

    def cdf(self, theta):
        t = np.asarray(theta, dtype=float)
        inner = self._interp(np.clip(t, self.theta[0], self.theta[-1]))
        out = np.clip(np.where(t <= self.theta[0], self.H[0], np.where(t >= self.theta[-1], self.H[-1], inner)), 0.0, 1.0)
        return float(out) if np.ndim(theta) == 0 else out

    def _fd_step(self):
        return max(1e-5, 1e-4 * self._spacing)

    def mean(self):
        # end values are atoms at the grid edges, so mean = lo + int (1 - H)
        lo, hi = self.support
        return lo + (hi - lo) - float(self._interp.integrate(lo, hi))

    def density(self, theta):
        if self.grid_density is None:
            return self._fd_density(theta)
        out = np.interp(theta, self.theta, self.grid_density, left=0.0, right=0.0)
        return float(out) if np.ndim(theta) == 0 else out

    def _quantile_one(self, u):
        H, th = self.H, self.theta
        if u <= H[0]:
            return float(th[0])
        if u > H[-1]:
            return float(th[-1])
        j = int(np.searchsorted(H, u, side="left"))
        a, b = th[j - 1], th[j]
        if H[j] == u:
            return float(b)
        fa = self._interp(a) - u
        # bisection inside one monotone spline piece
        tol = 1e-10 * (th[-1] - th[0])
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = self._interp(m) - u
            if fm == 0 or b - a <= tol:
                return float(m)
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
        return float(0.5 * (a + b))

    def quantile(self, u):
        ua = _check_u(u)
        out = np.array([self._quantile_one(v) for v in np.atleast_1d(ua)]).reshape(ua.shape)
        return float(out) if np.ndim(u) == 0 else out


class EmpiricalCD(ConfDist):
    """A CD represented by sorted draws of a CD random variable.

    The CDF is the right-continuous empirical CDF; quantiles interpolate the
    order statistics (Hyndman-Fan type 7).
    """

    representation = "empirical"

    def __init__(self, draws, label="", provenance="", flags=()):
        super().__init__(label, provenance, flags)
        x = np.sort(np.asarray(draws, dtype=float).ravel())
        if x.size < MIN_EMPIRICAL_DRAWS:
            raise InsufficientDataError(
                f"empirical CD needs >= {MIN_EMPIRICAL_DRAWS} draws, got {x.size}"
            )
        if not np.all(np.isfinite(x)):
            raise ParameterDomainError("draws must be finite")
        if x[0] == x[-1]:
            raise DegenerateSampleError("all draws are identical")
        self.draws = x

    @property
    def support(self):
        return (float(self.draws[0]), float(self.draws[-1]))

    def cdf(self, theta):
        out = np.searchsorted(self.draws, np.asarray(theta, dtype=float), side="right") / self.draws.size
        return float(out) if np.ndim(theta) == 0 else out

    def _fd_step(self):
        # Silverman-type bandwidth; the difference quotient is then a
        # box-kernel density estimate
        x = self.draws
        q75, q25 = np.quantile(x, [0.75, 0.25])
        spread = min(np.std(x, ddof=1), (q75 - q25) / 1.349) or np.std(x, ddof=1)
        return float(0.9 * spread * x.size ** (-0.2))

    def density(self, theta):
        if self.draws.size < MIN_EMPIRICAL_DRAWS:
            raise InsufficientDataError("density needs at least 500 draws")
        return self._fd_density(theta)

    def quantile(self, u):
        ua = _check_u(u)
        out = np.quantile(self.draws, ua, method="linear")
        return float(out) if np.ndim(u) == 0 else out

    def mean(self):
        return float(self.draws.mean())


def cd_eval(cd, theta):
    """``H(theta)`` clamped to [0, 1]."""
    return cd.cdf(theta)


def cd_density(cd, theta):
    """Confidence density ``h(theta)``."""
    return cd.density(theta)


def confidence_curve(cd, theta):
    """``CV(theta) = 2 min{H(theta), 1 - H(theta)}``."""
    H = np.asarray(cd.cdf(theta))
    out = 2.0 * np.minimum(H, 1.0 - H)
    return float(out) if np.ndim(theta) == 0 else out


def cd_quantile(cd, u):
    return cd.quantile(u)


def cd_interval(cd, level=0.95):
    """Equal-tailed interval between the alpha/2 and 1 - alpha/2 quantiles."""
    if not 0 < level < 1:
        raise ParameterDomainError("level must lie in (0, 1)")
    alpha = 1.0 - level
    lo, hi = cd.quantile(np.array([alpha / 2, 1 - alpha / 2]))
    return Interval(float(lo), float(hi), level)


def cd_pvalue(cd, b, alternative="less"):
    """p-value read off the CD at the boundary value ``b``.

    ``alternative="less"`` tests ``K0: theta >= b`` and returns the tail mass
    ``1 - H(b)``; ``"greater"`` tests ``K0: theta <= b`` and returns
    ``H(b)``; ``"two-sided"`` returns the confidence curve at ``b``.
    """
    if alternative == "less":
        return 1.0 - cd.cdf(b)
    if alternative == "greater":
        return cd.cdf(b)
    if alternative == "two-sided":
        return confidence_curve(cd, b)
    raise ParameterDomainError(f"unknown alternative {alternative!r}")


class CDRandomVariable:
    """Draws of ``theta*`` distributed per a CD, given the data behind it.

    Owns its stream; not meant to be shared between consumers.
    """

    def __init__(self, source, rng):
        self.source = source
        self.rng = rng

    def draw(self, count):
        count = int(count)
        if count < 1:
            raise ParameterDomainError("count must be >= 1")
        u = self.rng.random(count)
        u = np.clip(u, 1e-16, 1 - 1e-16)
        return np.asarray(self.source.quantile(u), dtype=float)


def cd_rv_draw(v, count):
    return v.draw(count)


@dataclass(frozen=True)
class DiscreteCDPair:
    """Upper and lower CDs for a discrete model indexed by a scalar parameter.

    ``upper(theta, y)`` is stochastically no larger than U(0,1) at the true
    parameter, ``lower(theta, y)`` no smaller; hence ``upper <= lower``.
    ``model(theta)`` returns the data law used for exact enumeration.
    """

    upper: Callable
    lower: Callable
    model: Callable
    theta_space: tuple = (0.0, 1.0)
    label: str = ""


def _refine_edge(member, inside, outside, iters=80):
    for _ in range(iters):
        mid = 0.5 * (inside + outside)
        if member(mid):
            inside = mid
        else:
            outside = mid
    return inside


def discrete_interval(pair, y, level=0.95, grid_size=4001):
    """Hull of ``{theta : H+(theta; y) <= 1 - alpha/2, H-(theta; y) >= alpha/2}``.

    The set is located on a dense grid over ``pair.theta_space`` and its
    edges refined by bisection.  A non-contiguous set is returned as its hull
    with the ``"non-nesting"`` flag; an empty set gives NaN endpoints with the
    ``"empty"`` flag.
    """
    if not 0 < level < 1:
        raise ParameterDomainError("level must lie in (0, 1)")
    alpha = 1.0 - level
    lo, hi = pair.theta_space

    def member(t):
        return bool(pair.upper(t, y) <= 1 - alpha / 2 and pair.lower(t, y) >= alpha / 2)

    grid = np.linspace(lo, hi, grid_size)
    mask = np.array([member(t) for t in grid])
    if not mask.any():
        return Interval(math.nan, math.nan, level, flags=("empty",))
    idx = np.flatnonzero(mask)
    flags = ()
    if idx[-1] - idx[0] + 1 != idx.size:
        flags = ("non-nesting",)
    a, b = idx[0], idx[-1]
    left = grid[a] if a == 0 else _refine_edge(member, grid[a], grid[a - 1])
    right = grid[b] if b == grid_size - 1 else _refine_edge(member, grid[b], grid[b + 1])
    return Interval(float(left), float(right), level, flags=flags)


def dominance_check(pair, theta0, t_grid=None):
    """Exact dominance probabilities by enumeration over the data support.

    Returns ``(t, P(H+ <= t), P(H- <= t))`` arrays; a valid pair has the
    middle column ``>= t`` and the last ``<= t``.
    """
    if t_grid is None:
        t_grid = np.round(np.arange(0.05, 0.951, 0.05), 10)
    law = pair.model(theta0)
    lo, hi = law.support
    ys = np.arange(int(lo), int(hi) + 1)
    pmf = statkit.pdf(law, ys.astype(float))
    up = np.array([pair.upper(theta0, y) for y in ys])
    low = np.array([pair.lower(theta0, y) for y in ys])
    t = np.asarray(t_grid, dtype=float)
    p_up = np.array([pmf[up <= s + 1e-12].sum() for s in t])
    p_low = np.array([pmf[low <= s + 1e-12].sum() for s in t])
    return t, p_up, p_low


def write_gridded_csv(cd, path, grid=None):
    """Write ``theta,H`` rows; gridded CDs use their own grid by default."""
    if grid is None:
        if not isinstance(cd, GriddedCD):
            raise ParameterDomainError("a grid is required for non-gridded CDs")
        grid = cd.theta
    grid = np.asarray(grid, dtype=float)
    _write_two_column(path, ("theta", "H"), grid, np.asarray(cd.cdf(grid)))


def write_curve_csv(cd, path, grid):
    grid = np.asarray(grid, dtype=float)
    _write_two_column(path, ("theta", "CV"), grid, np.asarray(confidence_curve(cd, grid)))


def _write_two_column(path, header, a, b):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, y in zip(a, b):
            w.writerow((repr(float(x)), repr(float(y))))


def read_gridded_csv(path, label="", enforce_tails=True):
    """Read a ``theta,H`` CSV into a :class:`GriddedCD`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["theta", "H"]:
        raise ParameterDomainError(f"{path}: expected header 'theta,H'")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ParameterDomainError(f"{path}: expected two numeric columns")
    return GriddedCD(data[:, 0], data[:, 1], label=label or str(path),
                     provenance=f"csv:{path}", enforce_tails=enforce_tails)
