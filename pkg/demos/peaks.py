"""Turning the dip into a peak by re-orienting the analyzers.

The compensated inputs are kept fixed and both analyzer axes are searched
for the largest zero-delay coincidence relative to the baseline. When the
two amplitudes arrive equal and in phase, coincidences double at zero delay.
"""
import numpy as np

from homsim import (
    baseline_probability,
    compensation_angle,
    dip_scan,
    peak_visibility,
    search_peak,
)

star = compensation_angle(0.1, 0.9)
res = search_peak(0.1, star)
cfg = res.config
print(f"analyzers: p1={cfg.polarizer_1.degrees:.2f} deg, p2={cfg.polarizer_2.degrees:.2f} deg")
print(f"zero-delay / baseline = {res.ratio:.4f}, peak visibility {peak_visibility(cfg):.4f}")
print(f"baseline coincidence probability {baseline_probability(cfg):.5f}")

curve = dip_scan(cfg, np.linspace(-250, 250, 11))
for d, p in zip(curve.delays, curve.values):
    print(f"{d:7.1f} fs  {p:.5f}")
