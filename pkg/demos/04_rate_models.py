"""Entropy models versus the actual range coder.

Keyframe attributes get a KDE-smoothed PMF, inter-frame residuals a fitted
discretized normal; both should predict the range coder's output length
closely. Loss assemblies combine the rates with photometric terms.

Run:  python3 demos/04_rate_models.py
"""

import numpy as np

from gsv.codec import encode_symbols_with_pmf
from gsv.rate import (LossWeights, SymbolSamples, gaussian_pmf_table,
                      inter_loss, kde_pmf, keyframe_loss, rate_inter, rate_key,
                      silverman_bandwidth)

rng = np.random.default_rng(0)
n = 30_000

print(f"{'fixture':<14} {'model':<9} {'est b/sym':>10} {'coded b/sym':>12}")
for name, data in (
    ("uniform-256", rng.integers(0, 256, n).astype(float)),
    ("gauss s=1", np.rint(rng.normal(0, 1, n))),
    ("gauss s=4", np.rint(rng.normal(0, 4, n))),
    ("gauss s=16", np.rint(rng.normal(0, 16, n))),
    ("constant", np.full(n, 9.0)),
):
    kde_est = rate_key({"scale": SymbolSamples(data, "scale")})
    table = kde_pmf(SymbolSamples(data, "scale"))
    coded = len(encode_symbols_with_pmf(data, table)) * 8 / n
    print(f"{name:<14} {'kde':<9} {kde_est:10.4f} {coded:12.4f}")

    g_est = rate_inter({"d_scale": SymbolSamples(data, "d_scale")})
    g_table = gaussian_pmf_table(float(data.mean()), float(data.std()),
                                 int(data.min()), int(data.max()))
    g_coded = len(encode_symbols_with_pmf(data, g_table)) * 8 / n
    print(f"{name:<14} {'gaussian':<9} {g_est:10.4f} {g_coded:12.4f}")

h = silverman_bandwidth(SymbolSamples(rng.normal(0, 4, 1000), "scale"))
print(f"\nSilverman bandwidth on 1000 N(0,4) samples: {h:.4f} symbol units")

weights = LossWeights()
per_level_key = [(0.05 / l, 6.0) for l in range(1, 7)]
per_level_inter = [(0.04 / l, 3.0, 120.0) for l in range(1, 7)]
print(f"keyframe loss  (color + rate): {keyframe_loss(per_level_key, weights):.6f}")
print(f"inter loss (color+rate+reg):  {inter_loss(per_level_inter, weights):.6f}")
print(f"layer weights: {[round(w, 4) for w in weights.per_level]}")
