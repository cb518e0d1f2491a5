"""Combining k independent confidence distributions into one.

``H_c(theta) = G_c(g_c(H_1(theta), ..., H_k(theta)))`` where ``g_c`` sums a
quantile transform of each study's CD value and ``G_c`` is the law of
``g_c`` applied to k independent uniforms.  The default transform is the
standard Laplace quantile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import statkit
from .core import ConfDist, GriddedCD
from .errors import NonMonotoneInputError, ParameterDomainError
from .statkit import ScalarLaw

__all__ = [
    "CombinerSpec",
    "StudyInput",
    "gc_map",
    "gc_reference",
    "combine",
    "CLAMP",
]

CLAMP = 1e-12
MAPPINGS = ("laplace-quantile-sum", "normal-quantile-sum")
GC_METHODS = ("monte-carlo", "closed-form")
_GC_SEED = 20210611
_LAWS = {"laplace-quantile-sum": ScalarLaw.laplace(), "normal-quantile-sum": ScalarLaw.normal()}


@dataclass(frozen=True)
class CombinerSpec:
    """How k study CDs are merged and where the result is tabulated.

    ``gc_method="closed-form"`` is available for the normal-quantile sum
    only (``G_c(t) = Phi(t / sqrt(k))``).
    """

    k: int
    grid: np.ndarray
    mapping: str = "laplace-quantile-sum"
    gc_method: str = "monte-carlo"
    mc_draws: int = 2_000_000
    mc_seed: int = _GC_SEED

    def __post_init__(self):
        if self.k < 2:
            raise ParameterDomainError("combining needs k >= 2 studies")
        if self.mapping not in MAPPINGS:
            raise ParameterDomainError(f"unknown mapping {self.mapping!r}")
        if self.gc_method not in GC_METHODS:
            raise ParameterDomainError(f"unknown G_c method {self.gc_method!r}")
        if self.gc_method == "closed-form" and self.mapping != "normal-quantile-sum":
            raise ParameterDomainError("closed-form G_c exists only for the normal-quantile sum")
        if self.gc_method == "monte-carlo" and self.mc_draws < 1_000_000:
            raise ParameterDomainError("Monte-Carlo G_c needs at least 10^6 draws")
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ParameterDomainError("combiner grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class StudyInput:
    cd: ConfDist
    label: str = ""
    weight: float = field(default=1.0, init=False)


def _clamp(u):
    u = np.asarray(u, dtype=float)
    clamped = bool(np.any((u < CLAMP) | (u > 1 - CLAMP)))
    return np.clip(u, CLAMP, 1 - CLAMP), clamped


def _transformed(u, mapping):
    u, clamped = _clamp(u)
    return np.asarray(statkit.quantile(_LAWS[mapping], u)), clamped


def gc_map(u, mapping="laplace-quantile-sum"):
    """``g_c(u) = sum_i Q(u_i)``; returns ``(value, clamped)``.

    ``u`` may be a 1-d vector of k probabilities or an array whose last axis
    indexes studies.  The terms are summed in sorted order so that the
    result does not depend on study order.
    """
    q, clamped = _transformed(u, mapping)
    q = np.sort(q, axis=-1)
    return q.sum(axis=-1), clamped


@lru_cache(maxsize=8)
def _mc_reference(k, mapping, draws, seed):
    rng = statkit.make_rng(seed)
    total = np.zeros(draws)
    for _ in range(k):
        total += statkit.sample(_LAWS[mapping], rng, draws)
    total.sort()
    total.flags.writeable = False
    return total


def gc_reference(spec, t):
    """``G_c(t) = P(g_c(U_1, ..., U_k) <= t)`` for independent uniforms."""
    t = np.asarray(t, dtype=float)
    if spec.gc_method == "closed-form":
        out = statkit.cdf(ScalarLaw.normal(), t / math.sqrt(spec.k))
    else:
        ref = _mc_reference(spec.k, spec.mapping, spec.mc_draws, spec.mc_seed)
        out = np.searchsorted(ref, t, side="right") / ref.size
    return float(out) if np.ndim(t) == 0 else np.asarray(out, dtype=float)


def combine(studies, spec, label="combined CD"):
    """Combined CD of independent studies, tabulated on ``spec.grid``.

    Every study CD must be nondecreasing on the grid.  Probabilities at 0 or
    1 are clamped to ``[1e-12, 1 - 1e-12]`` before the quantile map and the
    result carries a ``"clamped"`` flag when that happened.  The grid must
    cover the combined mass (``H[0] <= 0.001``, ``H[-1] >= 0.999``).
    """
    studies = [s if isinstance(s, StudyInput) else StudyInput(s) for s in studies]
    if len(studies) != spec.k:
        raise ParameterDomainError(f"spec expects k={spec.k} studies, got {len(studies)}")
    grid = spec.grid
    U = np.empty((grid.size, spec.k))
    for i, s in enumerate(studies):
        col = np.asarray(s.cd.cdf(grid), dtype=float)
        if np.any(np.diff(col) < -1e-12):
            raise NonMonotoneInputError(f"study {i} ({s.label or s.cd.label}) is not monotone on the grid")
        U[:, i] = col
    t, clamped = gc_map(U, spec.mapping)
    H = np.maximum.accumulate(gc_reference(spec, t))
    flags = ("clamped",) if clamped else ()
    # a grid that misses combined mass fails the gridded tail rule (TailRuleError)
    return GriddedCD(grid, H, label=label, provenance=f"combine[{spec.mapping},{spec.gc_method}]",
                     flags=flags)
