"""Normal-mean CD: interval, p-value and confidence curve from one sample.

Run: python demos/normal_mean.py
"""
import numpy as np

from confdist import build, core

rng = np.random.default_rng(1)
y = rng.normal(loc=0.4, scale=1.0, size=25)
cd = build.normal_mean_cd(y)

print(f"n = {y.size}, ybar = {y.mean():.4f}")
print(f"CD median (point estimate): {cd.median():.4f}")
for level in (0.80, 0.90, 0.95):
    iv = core.cd_interval(cd, level)
    print(f"{level:.0%} interval: [{iv.lo:.4f}, {iv.hi:.4f}]")

# one-sided test of K0: theta >= 0 is the CD mass to the right of 0
print(f"p-value for theta >= 0: {core.cd_pvalue(cd, 0.0, 'less'):.4f}")
print(f"two-sided p-value at 0 (confidence curve): {float(core.confidence_curve(cd, 0.0)):.4f}")

# the same CD from the normalized likelihood
grid = np.linspace(y.mean() - 1.5, y.mean() + 1.5, 3001)
lik = build.normalized_likelihood_cd(
    lambda t: -0.5 * ((y[None, :] - np.atleast_1d(t)[:, None]) ** 2).sum(axis=1), grid)
print(f"max |H_lik - H| on the grid: {np.max(np.abs(lik.H - cd.cdf(grid))):.2e}")
