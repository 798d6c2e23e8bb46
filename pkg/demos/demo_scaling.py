"""
Cost of one optimizer step
==========================

A T-CorEx step touches every sample, factor and variable once, so its cost
grows linearly with the number of variables. Time a few steps at growing
p and fit the slope on a log-log scale.
"""

from tempcov import experiments

ps = [256, 512, 1024, 2048]
seconds = []
for p in ps:
    per_step, _ = experiments.time_steps(p, m=64, T=10, s=16, steps=5)
    seconds.append(per_step)
    print(f"p = {p:>5d}: {1e3 * per_step:7.1f} ms per step")

print(f"log-log slope {experiments.scaling_slope(ps, seconds):.2f}")
