"""Coverage studies, the billiard vignette and validity suites.

Every replicate draws its own generator from ``master_seed`` and its index,
so a report does not depend on how replicates are spread over workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import build, core, invert, statkit
from .combine import CombinerSpec, combine, gc_map, gc_reference
from .errors import ConfDistError, ParameterDomainError, ReplicationFailureError
from .statkit import ScalarLaw

__all__ = [
    "StudyConfig",
    "MethodSummary",
    "CoverageReport",
    "SuiteRow",
    "BIVARIATE_PARAMS",
    "replicate_rng",
    "binomial_band",
    "run_bivariate_meta",
    "run_cauchy_abc",
    "run_billiard",
    "run_study",
    "run_uniformity_suite",
    "run_dominance_suite",
    "run_matching_suite",
    "abc_law_cdf",
]

STUDIES = ("bivariate-meta", "cauchy-abc", "billiard", "custom")
BIVARIATE_PARAMS = {"mu1": 3.288, "mu2": 4.093, "sigma1_sq": 0.657, "sigma2_sq": 1.346, "rho": 0.723}
BIVARIATE_METHODS = ("fisher-z", "bca-bootstrap", "profile-likelihood", "bayes-flat-prior", "combined")
CAUCHY_PARAMS = {"theta": 10.0}
CAUCHY_METHODS = ("abc-mean", "abc-median", "posterior")
FULL_SCALE_REPS = 1000
MAX_FAILURE_FRACTION = 0.01
COMBINER_RANGE = (-0.999, 0.999)

# bivariate meta-analysis knobs; the bootstrap size and combiner grid are doubled at full scale
BIVARIATE_DEFAULTS = {
    "bootstrap_B": 1000,
    "combiner_grid": 2001,
    "likelihood_grid": 2001,
    "gc_draws": 2_000_000,
}
# Cauchy ABC knobs; epsilon=None means the 0.05 * scale / sqrt(n) rule
CAUCHY_DEFAULTS = {
    "abc_draws_mean": 1000,
    "abc_draws_median": 500,
    "epsilon": None,
    "epsilon_mean_scale": 1.0,
    "prior_half_width": 20.0,
    "prior_half_width_mean": 1000.0,
    "posterior_grid": 2001,
}


@dataclass(frozen=True)
class StudyConfig:
    """What to simulate and how.

    ``options`` overrides the study-specific defaults (bootstrap size,
    grids, ABC draws and tolerances).
    """

    study: str
    replications: int = 500
    n: int = 200
    true_params: dict = field(default_factory=dict)
    level: float = 0.95
    master_seed: int = 20210611
    engines: tuple = ()
    output_dir: str = ""
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ParameterDomainError(f"unknown study {self.study!r}")
        if self.replications < 100:
            raise ParameterDomainError("replications must be >= 100")
        if not 0 < self.level < 1:
            raise ParameterDomainError("level must lie in (0, 1)")
        if self.n < 4:
            raise ParameterDomainError("n must be >= 4")
        if self.workers < 1:
            raise ParameterDomainError("workers must be >= 1")

    @property
    def full_scale(self):
        return self.replications >= FULL_SCALE_REPS

    def resolved_options(self):
        if self.study == "bivariate-meta":
            out = dict(BIVARIATE_DEFAULTS)
            if self.full_scale:
                out["bootstrap_B"], out["combiner_grid"] = 2000, 4001
        elif self.study == "cauchy-abc":
            out = dict(CAUCHY_DEFAULTS)
        else:
            out = {}
        out.update(self.options)
        return out

    def resolved_params(self):
        base = {"bivariate-meta": BIVARIATE_PARAMS, "cauchy-abc": CAUCHY_PARAMS}.get(self.study, {})
        return {**base, **self.true_params}


@dataclass(frozen=True)
class MethodSummary:
    method: str
    coverage: float
    mean_length: float
    length_sd: float


@dataclass
class CoverageReport:
    """Per-method coverage and interval length over the replicates."""

    rows: list
    replications: int
    seed: int
    runtime: float = 0.0
    failures: int = 0
    study: str = ""
    metadata: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        for r in self.rows:
            if not 0 <= r.coverage <= 1:
                raise ParameterDomainError("coverage must lie in [0, 1]")
            if not r.mean_length > 0:
                raise ParameterDomainError("mean length must be positive")

    def __getitem__(self, method):
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    @property
    def methods(self):
        return [r.method for r in self.rows]

    def head(self, k):
        """Report over the first ``k`` replicates only.

        Replicates are seeded by index, so this equals a fresh run with
        ``replications=k`` and the same master seed.
        """
        if not 2 <= k <= len(self.records):
            raise ParameterDomainError(f"need 2 <= k <= {len(self.records)} recorded replicates")
        return _summarize(self.records[:k], self.methods, k, self.seed, self.study)

    def to_csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("method", "coverage", "mean_length", "length_sd"))
        for r in self.rows:
            w.writerow((r.method, f"{r.coverage:.3f}", f"{r.mean_length:.3f}", f"{r.length_sd:.3f}"))
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())
        return path

    def metadata_json(self):
        meta = {
            "study": self.study,
            "seed": self.seed,
            "replications": self.replications,
            "failures": self.failures,
            "runtime_seconds": round(self.runtime, 3),
            "versions": _versions(),
        }
        meta.update(self.metadata)
        return json.dumps(meta, indent=2, sort_keys=True, default=str)

    def write_outputs(self, output_dir, stem):
        os.makedirs(output_dir, exist_ok=True)
        csv_path = os.path.join(output_dir, f"{stem}.csv")
        json_path = os.path.join(output_dir, f"{stem}.json")
        self.write_csv(csv_path)
        with open(json_path, "w") as fh:
            fh.write(self.metadata_json() + "\n")
        return csv_path, json_path


def _versions():
    from . import __version__

    return {"confdist": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def replicate_rng(master_seed, index):
    """Generator of replicate ``index``; equal to the ``index``-th spawned child."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(seq))


def binomial_band(p, trials, level=0.99):
    """Central binomial band for a proportion: ``(lo, hi)`` with ``level`` coverage."""
    law = ScalarLaw.binomial(int(trials), float(p))
    k = np.arange(trials + 1, dtype=float)
    c = np.asarray(statkit.cdf(law, k))
    tail = (1 - level) / 2
    lo = int(np.searchsorted(c, tail, side="left"))
    hi = int(np.searchsorted(c, 1 - tail, side="left"))
    return lo / trials, hi / trials


# -- replicate machinery -----------------------------------------------------

def _run_replicates(task, cfg, methods):
    """Run ``task(cfg, index)`` for every replicate and summarise by method."""
    start = time.perf_counter()
    indices = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_safe_task, [task] * cfg.replications, [cfg] * cfg.replications,
                                    indices, chunksize=max(1, cfg.replications // (4 * cfg.workers))))
    else:
        results = [_safe_task(task, cfg, i) for i in indices]
    report = _summarize(results, methods, cfg.replications, cfg.master_seed, cfg.study)
    report.runtime = time.perf_counter() - start
    report.metadata.update({
        "n": cfg.n,
        "level": cfg.level,
        "params": cfg.resolved_params(),
        "options": cfg.resolved_options(),
        "failed_replicates": [r for r in results if isinstance(r, str)],
    })
    return report


def _summarize(results, methods, replications, seed, study):
    failed = [r for r in results if isinstance(r, str)]
    cap = math.floor(MAX_FAILURE_FRACTION * replications)
    if len(failed) > cap:
        raise ReplicationFailureError(
            f"{len(failed)} of {replications} replicates failed (cap {cap}); first: {failed[0]}")
    good = [r for r in results if not isinstance(r, str)]
    rows = []
    for m in methods:
        covered = np.array([g[m][0] for g in good], dtype=float)
        length = np.array([g[m][1] for g in good], dtype=float)
        rows.append(MethodSummary(m, float(covered.mean()), float(length.mean()),
                                  float(length.std(ddof=1))))
    return CoverageReport(rows, replications, seed, failures=len(failed), study=study,
                          records=list(results))


def _safe_task(task, cfg, index):
    try:
        return task(cfg, index)
    except (ConfDistError, ArithmeticError, ValueError) as exc:
        return f"replicate {index}: {type(exc).__name__}: {exc}"


def _record(interval, truth):
    return (bool(interval.lo <= truth <= interval.hi), float(interval.length))


# -- bivariate-normal meta-analysis ------------------------------------------

def simulate_bivariate(params, n, rng):
    """``n`` rows from the bivariate normal with the given moments."""
    s1, s2 = math.sqrt(params["sigma1_sq"]), math.sqrt(params["sigma2_sq"])
    rho = params["rho"]
    z = rng.standard_normal((2, n))
    x = params["mu1"] + s1 * z[0]
    y = params["mu2"] + s2 * (rho * z[0] + math.sqrt(1 - rho * rho) * z[1])
    return np.column_stack([x, y])


def _rho_window(r, n, size):
    half = 8.0 * (1.0 - r * r) / math.sqrt(n) + 1e-3
    lo = max(r - half, -1.0 + 1e-9)
    hi = min(r + half, 1.0 - 1e-9)
    return np.linspace(lo, hi, size)


def bivariate_study_cds(samples, rng, opts):
    """The four per-study CDs: Fisher z, BCa bootstrap, profile likelihood, flat-prior posterior."""
    s1, s2, s3, s4 = (build.BivariateSample(s) for s in samples)
    fz = build.fisher_z_cd(s1)
    bca = build.bca_bootstrap_cd(s2, opts["bootstrap_B"], rng, grid_size=opts["likelihood_grid"])
    prof = build.normalized_likelihood_cd(
        build.correlation_profile_loglik(s3.r, s3.n), _rho_window(s3.r, s3.n, opts["likelihood_grid"]),
        bounds=(-1.0, 1.0), label="profile likelihood (rho)")
    bayes = build.normalized_likelihood_cd(
        build.correlation_flat_prior_loglik(s4.r, s4.n), _rho_window(s4.r, s4.n, opts["likelihood_grid"]),
        bounds=(-1.0, 1.0), label="flat-prior posterior (rho)")
    return fz, bca, prof, bayes


def combiner_spec(opts, k=4):
    return CombinerSpec(k=k, grid=np.linspace(*COMBINER_RANGE, opts["combiner_grid"]),
                             mc_draws=opts["gc_draws"])


def _bivariate_task(cfg, index):
    params = cfg.resolved_params()
    opts = cfg.resolved_options()
    rng = replicate_rng(cfg.master_seed, index)
    samples = [simulate_bivariate(params, cfg.n, rng) for _ in range(4)]
    cds = bivariate_study_cds(samples, rng, opts)
    combined = combine(cds, combiner_spec(opts))
    rho = params["rho"]
    out = {m: _record(core.cd_interval(cd, cfg.level), rho) for m, cd in zip(BIVARIATE_METHODS, cds)}
    out["combined"] = _record(core.cd_interval(combined, cfg.level), rho)
    return out


def run_bivariate_meta(cfg):
    """Coverage of the four single-study CDs and their combination for ``rho``."""
    if cfg.study != "bivariate-meta":
        raise ParameterDomainError("run_bivariate_meta needs study='bivariate-meta'")
    return _run_replicates(_bivariate_task, cfg, BIVARIATE_METHODS)


# -- Cauchy location ABC -------------------------------------------------------

def cauchy_models(n):
    law = ScalarLaw.cauchy()
    return (invert.location_model(n, law, "mean"), invert.location_model(n, law, "median"))


def _cauchy_task(cfg, index):
    theta0 = cfg.resolved_params()["theta"]
    opts = cfg.resolved_options()
    rng = replicate_rng(cfg.master_seed, index)
    n = cfg.n
    y = statkit.sample(ScalarLaw.cauchy(theta0, 1.0), rng, n)
    mean_model, median_model = cauchy_models(n)
    scale = invert.robust_scale(y)
    eps_med = invert.default_epsilon(y) if opts["epsilon"] is None else float(opts["epsilon"])
    eps_mean = opts["epsilon_mean_scale"] * scale if opts["epsilon"] is None else float(opts["epsilon"])
    ybar, ymed = float(y.mean()), float(np.median(y))
    d_mean = invert.abc_draws(mean_model, y, invert.flat_prior(y, ybar, opts["prior_half_width_mean"]),
                              opts["abc_draws_mean"], eps_mean, rng)
    d_med = invert.abc_draws(median_model, y, invert.flat_prior(y, ymed, opts["prior_half_width"]),
                             opts["abc_draws_median"], eps_med, rng)
    grid = np.linspace(ymed - 2.0, ymed + 2.0, opts["posterior_grid"])
    post = build.normalized_likelihood_cd(build.cauchy_loglik(y), grid, label="flat-prior posterior")
    return {
        "abc-mean": _record(core.cd_interval(invert.draws_to_cd(d_mean), cfg.level), theta0),
        "abc-median": _record(core.cd_interval(invert.draws_to_cd(d_med), cfg.level), theta0),
        "posterior": _record(core.cd_interval(post, cfg.level), theta0),
    }


def run_cauchy_abc(cfg):
    """Coverage of ABC with mean and median summaries and the exact posterior."""
    if cfg.study != "cauchy-abc":
        raise ParameterDomainError("run_cauchy_abc needs study='cauchy-abc'")
    return _run_replicates(_cauchy_task, cfg, CAUCHY_METHODS)


def run_study(cfg):
    if cfg.study == "bivariate-meta":
        return run_bivariate_meta(cfg)
    if cfg.study == "cauchy-abc":
        return run_cauchy_abc(cfg)
    raise ParameterDomainError(f"study {cfg.study!r} is not a coverage study")


# -- billiard ----------------------------------------------------------------

def run_billiard(y=5, n=14, grid_size=2001):
    """Flat-prior posterior of the success rate after ``y`` of ``n`` rolls."""
    if not (0 <= int(y) <= int(n)) or int(n) < 1:
        raise ParameterDomainError(f"need 0 <= y <= n and n >= 1, got y={y}, n={n}")
    return build.binomial_flat_prior_cd(int(y), int(n), grid_size)


# -- validity suites -----------------------------------------------------------

@dataclass(frozen=True)
class SuiteRow:
    """One check of a suite: statistic against a bound."""

    name: str
    statistic: float
    bound: float
    passed: bool
    detail: str = ""

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.statistic:.4f} (bound {self.bound:.4f}) {self.detail}".rstrip()


def _uniformity_value(constructor, theta0, n, rng):
    if constructor == "normal-mean":
        y = rng.normal(theta0, 1.0, n)
        return build.normal_mean_cd(y).cdf(theta0)
    if constructor == "neyman-scott":
        means = np.arange(n, dtype=float)
        pairs = means[:, None] + math.sqrt(theta0) * rng.standard_normal((n, 2))
        return build.neyman_scott_cd(pairs).cdf(theta0)
    if constructor == "fisher-z":
        params = {"mu1": 0.0, "mu2": 0.0, "sigma1_sq": 1.0, "sigma2_sq": 1.0, "rho": theta0}
        return build.fisher_z_cd(simulate_bivariate(params, n, rng)).cdf(theta0)
    if constructor == "combined-normal-mean":
        spec = CombinerSpec(k=4, grid=np.array([theta0 - 1.0, theta0 + 1.0]))
        u = [build.normal_mean_cd(rng.normal(theta0, 1.0, n)).cdf(theta0) for _ in range(4)]
        return gc_reference(spec, gc_map(np.array(u), spec.mapping)[0])
    raise ParameterDomainError(f"unknown constructor {constructor!r}")


UNIFORMITY_CONSTRUCTORS = {
    # name: (default n, exact)
    "normal-mean": (50, True),
    "neyman-scott": (20, True),
    "fisher-z": (200, False),
    "combined-normal-mean": (50, True),
}


def run_uniformity_suite(constructor, theta0, R, rng, n=None):
    """KS distance of ``H(data; theta0)`` over ``R`` datasets from U(0, 1).

    Exact constructors are held to the 95% band ``1.36 / sqrt(R)``; the
    asymptotic Fisher z CD to ``2.0 / sqrt(R)`` (0.045 at ``R = 2000``).
    """
    if constructor not in UNIFORMITY_CONSTRUCTORS:
        raise ParameterDomainError(f"unknown constructor {constructor!r}")
    default_n, exact = UNIFORMITY_CONSTRUCTORS[constructor]
    n = default_n if n is None else int(n)
    rng = statkit.make_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    values = np.array([_uniformity_value(constructor, theta0, n, rng) for _ in range(R)])
    ks = statkit.ks_distance(values, lambda u: np.clip(u, 0.0, 1.0))
    bound = (1.36 if exact else 2.0) / math.sqrt(R)
    return SuiteRow(f"uniformity[{constructor}, n={n}, theta0={theta0:g}, R={R}]", float(ks), bound,
                    bool(ks < bound), "exact band" if exact else "asymptotic band")


def run_dominance_suite(n=10, p0s=(0.1, 0.3, 0.5, 0.7, 0.9)):
    """Exact dominance of the binomial upper/lower CDs at each ``p0``.

    At the true ``p0``: ``P(H+ <= t) >= t >= P(H- <= t)`` on a grid of t.
    The statistic is the worst violation (0 when valid).
    """
    rows = []
    for p0 in p0s:
        pair = build.binomial_cd_pair(n, 0)
        t, p_up, p_low = core.dominance_check(pair, p0)
        worst = float(max(0.0, np.max(t - p_up), np.max(p_low - t)))
        rows.append(SuiteRow(f"dominance[binomial n={n}, p0={p0:g}]", worst, 0.0, worst <= 1e-12,
                             "max violation of P(H+<=t) >= t >= P(H-<=t)"))
    return rows


def abc_law_cdf(theta, ybar, n, epsilon, lo, hi):
    """CDF of the exact ABC draw law for the normal-mean model with summary ``ybar``.

    Uniform prior on ``[lo, hi]`` times the acceptance probability
    ``Phi(sqrt(n)(ybar - theta + eps)) - Phi(sqrt(n)(ybar - theta - eps))``.
    """
    from scipy import integrate

    rn = math.sqrt(n)

    def accept(t):
        return statkit.cdf(_N01, rn * (ybar - t + epsilon)) - statkit.cdf(_N01, rn * (ybar - t - epsilon))

    pts = [ybar]
    total = integrate.quad(accept, lo, hi, points=pts, limit=400)[0]
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.array([integrate.quad(accept, lo, min(max(t, lo), hi), limit=400,
                                   points=[ybar] if lo < ybar < t else None)[0] for t in theta]) / total
    return out


_N01 = ScalarLaw.normal()


def run_matching_suite(seed=20210611, M=2000, R=2000):
    """Matching diagnostics and draw-law checks for every engine.

    Returns a list of :class:`SuiteRow`; bounds follow the two-sample KS
    95% band at ``M = R = 2000`` (about 0.043) with the allowances noted
    in each row.
    """
    rngs = statkit.spawn(seed, 10)
    rows = []
    theta0 = 0.0

    # CD random variable, normal mean, n=100 (exact matching)
    n = 100
    y = rngs[0].normal(theta0, 1.0, n)
    model = invert.location_model(n)
    d = invert.cd_rv_draws(build.normal_mean_cd(y), M, rngs[1], center=float(y.mean()))
    rep = invert.matching_diagnostic(d, model, theta0, R, rngs[2])
    rows.append(SuiteRow("matching[cd-rv, normal mean, n=100]", rep.ks_distance, 0.04,
                         rep.passes(0.04)))

    # bootstrap, normal mean, n=200 (approximate matching)
    n = 200
    y = rngs[3].normal(theta0, 1.0, n)
    d = invert.bootstrap_draws(y, np.mean, M, rngs[4])
    rep = invert.matching_diagnostic(d, invert.location_model(n), theta0, R, rngs[5])
    rows.append(SuiteRow("matching[bootstrap, normal mean, n=200]", rep.ks_distance, 0.06,
                         rep.passes(0.06)))

    # generalized fiducial, structural normal mean, n=100
    n = 100
    g = rngs[6]
    ybar = float(g.normal(theta0, 1.0, n).mean())
    model = invert.structural_mean_model(n, (ybar - 1.0, ybar + 1.0))
    d = invert.gfi_draws(model, [ybar], M, 1e-10, g)
    rep = invert.matching_diagnostic(d, model, theta0, R, g)
    rows.append(SuiteRow("matching[gfi, normal mean, n=100]", rep.ks_distance, 0.05, rep.passes(0.05)))
    ks = statkit.ks_distance(d.draws, lambda t: statkit.cdf(_N01, math.sqrt(n) * (t - ybar)))
    rows.append(SuiteRow("gfi draws vs N(ybar, 1/n), n=100", ks, 0.03, bool(ks < 0.03)))

    # ABC, Cauchy location, n=40, summary mean and median
    n = 40
    c = rngs[7]
    theta_c = 10.0
    y = statkit.sample(ScalarLaw.cauchy(theta_c, 1.0), c, n)
    mean_model, median_model = cauchy_models(n)
    ybar, ymed = float(y.mean()), float(np.median(y))
    d = invert.abc_draws(mean_model, y, invert.flat_prior(y, ybar), M, 0.05, c)
    ks = statkit.ks_distance(d.draws, lambda t: statkit.cdf(ScalarLaw.cauchy(ybar, 1.0), t))
    rows.append(SuiteRow("abc[mean] draws vs Cauchy(ybar, 1), n=40", ks, 0.05, bool(ks < 0.05),
                         f"acceptance={d.acceptance_rate:.2e}"))
    rep = invert.matching_diagnostic(d, mean_model, theta_c, R, c)
    # the uniform prior truncates the Cauchy tails at +-20 robust scales (about 1% mass each side)
    rows.append(SuiteRow("matching[abc mean, Cauchy, n=40] vs Cauchy reference", rep.ks_distance, 0.06,
                         rep.passes(0.06), "two-sample band plus prior truncation"))
    d = invert.abc_draws(median_model, y, invert.flat_prior(y, ymed), M, 0.05, c)
    sd = math.pi / (2.0 * math.sqrt(n))
    ks = statkit.ks_distance(d.draws, lambda t: statkit.cdf(_N01, (t - ymed) / sd))
    rows.append(SuiteRow("abc[median] draws vs N(median, pi^2/(4n)), n=40", ks, 0.07, bool(ks < 0.07),
                         f"acceptance={d.acceptance_rate:.2e}"))

    # ABC with a sufficient summary on the normal mean, n=100, eps = 0.01/sqrt(n)
    n = 100
    a = rngs[8]
    y = a.normal(theta0, 1.0, n)
    ybar = float(y.mean())
    model = invert.structural_mean_model(n)
    d = invert.abc_draws(model, [ybar], invert.flat_prior(y, ybar), M, 0.01 / math.sqrt(n), a,
                         attempt_cap=100_000_000)
    ks = statkit.ks_distance(d.draws, lambda t: statkit.cdf(_N01, math.sqrt(n) * (t - ybar)))
    rows.append(SuiteRow("abc[sufficient mean] draws vs N(ybar, 1/n), n=100", ks, 0.05, bool(ks < 0.05),
                         f"acceptance={d.acceptance_rate:.2e}"))
    return rows
