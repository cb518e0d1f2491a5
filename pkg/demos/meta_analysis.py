"""Four studies of a correlation, each with its own CD, combined into one.

Run: python demos/meta_analysis.py
"""
import numpy as np

from confdist import core, harness, statkit
from confdist.combine import combine

rng = statkit.make_rng(2021)
params = harness.BIVARIATE_PARAMS
opts = harness.StudyConfig("bivariate-meta").resolved_options()

samples = [harness.simulate_bivariate(params, 200, rng) for _ in range(4)]
cds = harness.bivariate_study_cds(samples, rng, opts)
combined = combine(cds, harness.combiner_spec(opts))

print(f"true rho = {params['rho']}")
for name, cd in zip(harness.BIVARIATE_METHODS, cds):
    iv = core.cd_interval(cd, 0.95)
    print(f"{name:>20}: [{iv.lo:.4f}, {iv.hi:.4f}]  length {iv.length:.4f}")
iv = core.cd_interval(combined, 0.95)
print(f"{'combined':>20}: [{iv.lo:.4f}, {iv.hi:.4f}]  length {iv.length:.4f}")

# plot data for the combined density and confidence curve
grid = np.linspace(iv.lo - 0.05, iv.hi + 0.05, 9)
for t, cv in zip(grid, core.confidence_curve(combined, grid)):
    print(f"rho={t:.4f}  CV={cv:.4f}")
