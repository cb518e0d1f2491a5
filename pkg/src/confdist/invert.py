"""Simulation-based inversion of a structural model ``Y = G(theta, U)``.

Three engines produce artificial parameter draws ``theta*`` whose spread
around the point estimate mimics the sampling spread of the estimator:

* ``bootstrap_draws`` resamples the observed rows,
* ``gfi_draws`` solves ``argmin_theta ||y - G(theta, u*)||^2`` for fresh noise,
* ``abc_draws`` keeps prior draws whose simulated summary lands within
  ``epsilon`` of the observed one.

``matching_diagnostic`` compares the centred draws with the law of
``theta_hat - theta0`` simulated at a known ``theta0``.

Models work on batches: ``forward(theta, u)`` receives ``theta`` of shape
``(m, 1)`` and noise of shape ``(m, noise_size)`` and returns datasets of
shape ``(m, n)``; ``summary`` and ``estimator`` reduce the last axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import statkit
from .core import EmpiricalCD
from .errors import (
    EpsilonTooSmallError,
    InsufficientDataError,
    ParameterDomainError,
)
from .statkit import ScalarLaw

__all__ = [
    "GenerativeModel",
    "InversionDraws",
    "MatchingReport",
    "location_model",
    "structural_mean_model",
    "robust_scale",
    "flat_prior",
    "default_epsilon",
    "bootstrap_draws",
    "gfi_draws",
    "abc_draws",
    "cd_rv_draws",
    "matching_diagnostic",
    "draws_to_cd",
    "write_draws",
    "read_draws",
]

MIN_BOOTSTRAP = 500
GFI_ATTEMPT_CAP = 1_000_000
GFI_MIN_RATE = 1e-4
ABC_ATTEMPT_CAP = 10_000_000
ABC_MIN_RATE = 1e-5
GFI_TOL = 1e-8
GFI_STARTS = 5
PRIOR_HALF_WIDTH = 20.0
# rows of noise simulated per vectorised batch (bounded by memory)
_MAX_BATCH_CELLS = 4_000_000
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _abs_distance(a, b):
    return np.abs(a - b)


def _mean_last(y):
    return np.mean(y, axis=-1)


def _median_last(y):
    # sorting short rows is several times faster than np.median's partition
    y = np.sort(y, axis=-1)
    k = y.shape[-1]
    return 0.5 * (y[..., (k - 1) // 2] + y[..., k // 2])


@dataclass(frozen=True)
class GenerativeModel:
    """Structural model ``Y = G(theta, U)`` with ``U`` iid from ``noise_law``.

    Parameters
    ----------
    forward : callable
        ``forward(theta, u)``; broadcasting over a leading batch axis.
    noise_law : ScalarLaw
        Law of each noise coordinate.
    noise_size : int
        Number of noise coordinates per dataset.
    theta_space : tuple of float
        Parameter range searched by the fiducial solver.
    summary, estimator : callable
        Reduce a dataset (last axis) to a scalar.
    distance : callable
        Discrepancy between two summaries, absolute difference by default.
    sample_size : int
        Observations per dataset the model stands for (``noise_size`` if 0).
    """

    forward: Callable
    noise_law: ScalarLaw
    noise_size: int
    theta_space: tuple = (-math.inf, math.inf)
    summary: Callable = _mean_last
    estimator: Callable = _mean_last
    distance: Callable = _abs_distance
    label: str = ""
    sample_size: int = 0

    def __post_init__(self):
        if int(self.noise_size) < 1:
            raise ParameterDomainError("noise_size must be >= 1")
        if not self.sample_size:
            object.__setattr__(self, "sample_size", int(self.noise_size))
        lo, hi = self.theta_space
        if not lo < hi:
            raise ParameterDomainError("theta_space must satisfy lo < hi")

    def noise(self, rng, m):
        u = statkit.sample(self.noise_law, rng, m * self.noise_size)
        return u.reshape(m, self.noise_size)

    def simulate(self, theta, rng, m):
        """``m`` datasets at a common ``theta`` (or one per row of ``theta``)."""
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (m,))
        return self.forward(theta[:, None], self.noise(rng, m))


def _shift(theta, u):
    return theta + u


def location_model(n, noise_law=None, summary="mean", estimator=None,
                   theta_space=(-math.inf, math.inf)):
    """``y_i = theta + u_i`` for ``i = 1..n``.

    ``summary`` and ``estimator`` accept ``"mean"``, ``"median"`` or a
    callable; the estimator defaults to the summary.
    """
    noise_law = ScalarLaw.normal() if noise_law is None else noise_law
    reducers = {"mean": _mean_last, "median": _median_last}
    s = reducers[summary] if isinstance(summary, str) else summary
    if estimator is None:
        e = s
    else:
        e = reducers[estimator] if isinstance(estimator, str) else estimator
    name = summary if isinstance(summary, str) else getattr(summary, "__name__", "t")
    return GenerativeModel(_shift, noise_law, int(n), tuple(theta_space), s, e,
                           label=f"location[{noise_law.kind}, n={n}, t={name}]")


def structural_mean_model(n, theta_space=(-math.inf, math.inf)):
    """N(theta, 1) location model of size ``n`` reduced to its sufficient statistic.

    The dataset is the single value ``ybar = theta + ubar`` where
    ``ubar = u / sqrt(n)`` has the law of the mean of ``n`` standard normals.
    Fiducial inversion is then exact: ``theta* = ybar - ubar*``.
    """
    rn = math.sqrt(n)

    def forward(theta, u):
        return theta + u / rn

    return GenerativeModel(forward, ScalarLaw.normal(), 1, tuple(theta_space),
                           _mean_last, _mean_last, label=f"normal-mean structural, n={n}",
                           sample_size=int(n))


def robust_scale(y):
    """Median absolute deviation times 1.4826 (0 for constant data)."""
    y = np.asarray(y, dtype=float).ravel()
    return 1.4826 * float(np.median(np.abs(y - np.median(y))))


def flat_prior(y, center=None, half_width=PRIOR_HALF_WIDTH):
    """Proper stand-in for a flat prior: uniform on ``center -/+ half_width * scale``.

    ``center`` defaults to the sample median and ``scale`` is
    :func:`robust_scale` of the data.
    """
    y = np.asarray(y, dtype=float).ravel()
    c = float(np.median(y)) if center is None else float(center)
    s = robust_scale(y)
    if s <= 0:
        raise ParameterDomainError("flat prior needs data with positive spread")
    return ScalarLaw.uniform(c - half_width * s, c + half_width * s)


def default_epsilon(y):
    """``0.05 * scale / sqrt(n)`` with the robust scale of the data."""
    y = np.asarray(y, dtype=float).ravel()
    return 0.05 * robust_scale(y) / math.sqrt(y.size)


def _seed_record(rng):
    seq = getattr(rng.bit_generator, "seed_seq", None)
    if seq is None:
        return ""
    key = ",".join(str(k) for k in seq.spawn_key)
    return f"{seq.entropy}" + (f"/{key}" if key else "")


@dataclass
class InversionDraws:
    """Retained artificial draws ``theta*`` from one engine."""

    draws: np.ndarray
    engine: str
    acceptance_rate: float = 1.0
    epsilon: float = math.nan
    seed: str = ""
    attempts: int = 0
    center: float = math.nan
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float).ravel()
        if self.draws.size == 0:
            raise InsufficientDataError("no draws retained")
        if self.engine not in ("bootstrap", "gfi", "abc", "cd-rv"):
            raise ParameterDomainError(f"unknown engine {self.engine!r}")
        if not 0.0 < self.acceptance_rate <= 1.0:
            raise ParameterDomainError("acceptance_rate must lie in (0, 1]")

    def __len__(self):
        return self.draws.size

    def metadata(self):
        return {
            "engine": self.engine,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "acceptance_rate": self.acceptance_rate,
            "attempts": self.attempts,
            "center": self.center,
            "count": self.draws.size,
            "flags": "|".join(self.flags),
        }


@dataclass(frozen=True)
class MatchingReport:
    """Two-sample comparison of ``theta* - theta_hat`` with ``theta_hat - theta0``."""

    engine: str
    n: int
    ks_distance: float
    reference: str
    artificial: str
    replications: dict

    def __post_init__(self):
        if not 0.0 <= self.ks_distance <= 1.0:
            raise ParameterDomainError("ks_distance must lie in [0, 1]")

    def passes(self, bound):
        return self.ks_distance < bound


# -- bootstrap ---------------------------------------------------------------

def bootstrap_draws(data, statistic, B, rng):
    """Nonparametric bootstrap of ``statistic`` over the rows of ``data``.

    A resample on which ``statistic`` raises or returns a non-finite value is
    redrawn; more than ``0.1 * B`` such failures raise ``InsufficientDataError``.
    """
    if B < MIN_BOOTSTRAP:
        raise ParameterDomainError(f"bootstrap needs B >= {MIN_BOOTSTRAP}")
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n < 2:
        raise InsufficientDataError("bootstrap needs at least two rows")
    seed = _seed_record(rng)
    out = np.empty(B)
    failures = 0
    cap = int(0.1 * B)
    i = 0
    while i < B:
        idx = rng.integers(0, n, size=n)
        try:
            value = float(statistic(data[idx]))
        except (ArithmeticError, ValueError):
            value = math.nan
        if not math.isfinite(value):
            failures += 1
            if failures > cap:
                raise InsufficientDataError(f"statistic failed on {failures} resamples")
            continue
        out[i] = value
        i += 1
    center = float(statistic(data))
    flags = (f"redrawn={failures}",) if failures else ()
    return InversionDraws(out, "bootstrap", 1.0, math.nan, seed, B + failures, center, flags)


# -- generalized fiducial ----------------------------------------------------

def _residual(model, y_obs, theta, u):
    fitted = model.forward(theta[:, None], u)
    return np.sum((y_obs - fitted) ** 2, axis=-1)


def _golden(model, y_obs, u, lo, hi, tol):
    """Vectorised golden-section search on ``[lo, hi]`` (arrays over rows)."""
    a, b = lo.copy(), hi.copy()
    width = float(np.max(b - a))
    iters = max(1, math.ceil(math.log(tol / width) / math.log(_INV_PHI))) if width > tol else 0
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = _residual(model, y_obs, c, u)
    fd = _residual(model, y_obs, d, u)
    for _ in range(iters):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _INV_PHI * (b - a)
        new_d = a + _INV_PHI * (b - a)
        c_eval = np.where(left, new_c, d)
        d_eval = np.where(left, c, new_d)
        f_new = _residual(model, y_obs, np.where(left, new_c, new_d), u)
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_eval, d_eval
    x = 0.5 * (a + b)
    return x, _residual(model, y_obs, x, u), a, b


def _quadratic_polish(model, y_obs, u, x, fx, lo, hi, h):
    """One parabola step through ``x - h, x, x + h``; kept only if it helps."""
    xl, xr = np.maximum(x - h, lo), np.minimum(x + h, hi)
    fl = _residual(model, y_obs, xl, u)
    fr = _residual(model, y_obs, xr, u)
    num = (x - xl) ** 2 * (fx - fr) - (x - xr) ** 2 * (fx - fl)
    den = (x - xl) * (fx - fr) - (x - xr) * (fx - fl)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(np.abs(den) > 0, 0.5 * num / den, 0.0)
    cand = np.clip(x - step, lo, hi)
    fcand = _residual(model, y_obs, cand, u)
    better = np.isfinite(fcand) & (fcand < fx)
    return np.where(better, cand, x), np.where(better, fcand, fx)


def gfi_solve(model, y_obs, u, theta_space=None, tol=GFI_TOL, starts=GFI_STARTS):
    """Minimise ``||y_obs - G(theta, u_j)||^2`` over ``theta`` for each noise row.

    The range is cut into ``starts`` equal pieces, each searched by golden
    section; the best piece is polished by a quadratic step.
    Returns ``(theta_star, residual)``.
    """
    lo, hi = model.theta_space if theta_space is None else theta_space
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ParameterDomainError("fiducial search needs a bounded theta_space")
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m = u.shape[0]
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    edges = np.linspace(lo, hi, starts + 1)
    best_x = np.full(m, math.nan)
    best_f = np.full(m, math.inf)
    best_a = np.empty(m)
    best_b = np.empty(m)
    for j in range(starts):
        a0 = np.full(m, edges[j])
        b0 = np.full(m, edges[j + 1])
        x, fx, a, b = _golden(model, y_obs, u, a0, b0, tol)
        take = fx < best_f
        best_x = np.where(take, x, best_x)
        best_f = np.where(take, fx, best_f)
        best_a = np.where(take, a, best_a)
        best_b = np.where(take, b, best_b)
    h = np.maximum(best_b - best_a, tol)
    return _quadratic_polish(model, y_obs, u, best_x, best_f, lo, hi, h)


def _batch_rows(model, remaining, rate, cap_left):
    per_row = max(1, model.noise_size)
    limit = max(1, _MAX_BATCH_CELLS // per_row)
    want = int(1.2 * remaining / max(rate, 1e-9)) + 64
    return int(min(limit, want, cap_left))


def gfi_draws(model, y_obs, M, epsilon, rng, theta_space=None):
    """Generalized fiducial draws: keep the argmin when its residual is ``<= epsilon``.

    Raises ``EpsilonTooSmallError`` when fewer than a ``1e-4`` fraction of
    ``10^6`` attempts is accepted; the error carries the smallest residual
    seen.
    """
    if not epsilon > 0:
        raise ParameterDomainError("epsilon must be > 0")
    if M < 1:
        raise ParameterDomainError("M must be >= 1")
    seed = _seed_record(rng)
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    kept, attempts, min_resid = [], 0, math.inf
    total_kept, rate = 0, 1.0
    while total_kept < M and attempts < GFI_ATTEMPT_CAP:
        m = _batch_rows(model, M - total_kept, rate, GFI_ATTEMPT_CAP - attempts)
        u = model.noise(rng, m)
        theta, resid = gfi_solve(model, y_obs, u, theta_space)
        ok = resid <= epsilon
        min_resid = min(min_resid, float(np.min(resid)))
        accepted = theta[ok]
        need = M - total_kept
        if accepted.size >= need:
            # attempts counted up to the draw that completes the set
            attempts += int(np.flatnonzero(ok)[need - 1]) + 1
            accepted = accepted[:need]
        else:
            attempts += m
        kept.append(accepted)
        total_kept += accepted.size
        rate = max(total_kept / attempts, 1.0 / attempts)
    rate = total_kept / attempts
    if total_kept == 0 or (total_kept < M and rate < GFI_MIN_RATE):
        raise EpsilonTooSmallError(
            f"fiducial acceptance {rate:.2e} after {attempts} attempts; smallest residual {min_resid:.3g}",
            min_residual=min_resid, attempts=attempts)
    flags = () if total_kept == M else ("attempt-cap",)
    center = float(model.estimator(y_obs))
    return InversionDraws(np.concatenate(kept), "gfi", rate, float(epsilon), seed, attempts,
                          center, flags, {"min_residual": min_resid})


# -- approximate Bayesian computation ----------------------------------------

def abc_draws(model, y_obs, prior, M, epsilon, rng, attempt_cap=ABC_ATTEMPT_CAP):
    """Rejection ABC: draw ``theta*`` from ``prior`` and ``u*`` from the noise law,
    keep ``theta*`` when ``d(t(G(theta*, u*)), t(y_obs)) < epsilon``.

    Draws are simulated in vectorised batches and retained in attempt order.
    Raises ``EpsilonTooSmallError`` if the acceptance rate over the attempt
    cap is below ``1e-5``.
    """
    if not epsilon > 0:
        raise ParameterDomainError("epsilon must be > 0")
    if M < 1:
        raise ParameterDomainError("M must be >= 1")
    lo, hi = prior.support
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ParameterDomainError("prior must be proper with bounded support")
    seed = _seed_record(rng)
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    t_obs = float(model.summary(y_obs))
    kept, attempts, total_kept, rate = [], 0, 0, 1e-3
    min_dist = math.inf
    while total_kept < M and attempts < attempt_cap:
        m = _batch_rows(model, M - total_kept, rate, attempt_cap - attempts)
        theta = statkit.sample(prior, rng, m)
        t_sim = model.summary(model.forward(theta[:, None], model.noise(rng, m)))
        dist = model.distance(t_sim, t_obs)
        min_dist = min(min_dist, float(np.min(dist)))
        ok = dist < epsilon
        accepted = theta[ok]
        need = M - total_kept
        if accepted.size >= need:
            attempts += int(np.flatnonzero(ok)[need - 1]) + 1
            accepted = accepted[:need]
        else:
            attempts += m
        kept.append(accepted)
        total_kept += accepted.size
        rate = max(total_kept, 1) / attempts
    rate = total_kept / attempts
    if total_kept < M and rate < ABC_MIN_RATE:
        raise EpsilonTooSmallError(
            f"ABC acceptance {rate:.2e} after {attempts} attempts; smallest distance {min_dist:.3g}",
            min_residual=min_dist, attempts=attempts)
    flags = () if total_kept == M else ("attempt-cap",)
    center = float(model.estimator(y_obs))
    return InversionDraws(np.concatenate(kept), "abc", rate, float(epsilon), seed, attempts,
                          center, flags, {"prior": f"{prior.kind}{prior.params}", "min_distance": min_dist})


def cd_rv_draws(cd, M, rng, center=math.nan):
    """Wrap ``M`` CD random-variable draws ``H^{-1}(U)`` as InversionDraws."""
    draws = np.asarray(cd.quantile(statkit.sample(ScalarLaw.uniform(), rng, M)), dtype=float)
    return InversionDraws(draws, "cd-rv", 1.0, math.nan, _seed_record(rng), M, float(center))


# -- diagnostics ---------------------------------------------------------------

def _describe(x):
    q = np.quantile(x, [0.025, 0.25, 0.5, 0.75, 0.975])
    return ("median={:.4g}, IQR=[{:.4g}, {:.4g}], 95% range=[{:.4g}, {:.4g}]"
            .format(q[2], q[1], q[3], q[0], q[4]))


def matching_diagnostic(engine_draws, model, theta0, R, rng):
    """KS distance between ``theta* - theta_hat(y_obs)`` and ``theta_hat - theta0``.

    The reference law is simulated from ``R`` fresh datasets of ``model`` at
    ``theta0``.  ``engine_draws.center`` must hold ``theta_hat(y_obs)``.
    """
    if R < 500:
        raise ParameterDomainError("matching diagnostic needs R >= 500")
    center = engine_draws.center
    if not math.isfinite(center):
        raise ParameterDomainError("draws carry no point estimate to centre on")
    datasets = model.simulate(theta0, rng, R)
    reference = np.asarray(model.estimator(datasets), dtype=float) - theta0
    artificial = engine_draws.draws - center
    ks = statkit.ks_two_sample(artificial, reference)
    return MatchingReport(
        engine=engine_draws.engine,
        n=int(model.sample_size),
        ks_distance=float(ks),
        reference=f"theta_hat - theta0 over {R} datasets of {model.label or 'model'} "
                  f"at theta0={theta0:g}: " + _describe(reference),
        artificial=f"theta* - theta_hat ({engine_draws.engine}, {artificial.size} draws): "
                   + _describe(artificial),
        replications={"R": int(R), "M": int(artificial.size)},
    )


def draws_to_cd(draws, label=""):
    """Empirical CD over the retained draws (at least 500)."""
    extra = [f"engine={draws.engine}"]
    if math.isfinite(draws.epsilon):
        extra.append(f"epsilon={draws.epsilon:g}")
    return EmpiricalCD(draws.draws, label=label or f"{draws.engine} draws",
                       provenance=", ".join(extra), flags=draws.flags)


# -- export --------------------------------------------------------------------

def write_draws(draws, path):
    """Write ``theta_star`` CSV at ``path`` and ``key=value`` metadata at ``path + '.meta'``."""
    path = str(path)
    np.savetxt(path, draws.draws, fmt="%.17g", header="theta_star", comments="")
    with open(path + ".meta", "w") as fh:
        for k, v in draws.metadata().items():
            fh.write(f"{k}={v}\n")
    return path, path + ".meta"


def read_draws(path):
    """Inverse of :func:`write_draws`."""
    path = str(path)
    values = np.loadtxt(path, skiprows=1, ndmin=1)
    meta = {}
    with open(path + ".meta") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.rstrip("\n").split("=", 1)
                meta[k] = v
    flags = tuple(f for f in meta.get("flags", "").split("|") if f)
    return InversionDraws(values, meta["engine"], float(meta["acceptance_rate"]),
                          float(meta["epsilon"]), meta.get("seed", ""), int(meta.get("attempts", 0)),
                          float(meta.get("center", "nan")), flags)
