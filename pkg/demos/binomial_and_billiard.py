"""Discrete data: upper/lower binomial CDs, the half-corrected CD, and the billiard posterior.

Run: python demos/binomial_and_billiard.py
"""
from confdist import build, core, harness

n, y = 14, 5
pair = build.binomial_cd_pair(n, y)
iv = core.discrete_interval(pair, y, 0.95)
print(f"exact 95% interval from the upper/lower pair: [{iv.lo:.4f}, {iv.hi:.4f}]")
half = build.half_corrected_cd(n, y)
iv = core.cd_interval(half, 0.95)
print(f"half-corrected CD interval:                  [{iv.lo:.4f}, {iv.hi:.4f}]")

post = harness.run_billiard(y, n)
iv = core.cd_interval(post, 0.95)
print(f"flat-prior posterior Beta({y + 1}, {n - y + 1}): mean {post.mean():.4f}, "
      f"95% interval [{iv.lo:.4f}, {iv.hi:.4f}]")
