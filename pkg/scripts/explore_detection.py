#!/usr/bin/env python3
"""Empirical calibration of the detection-threshold statistics.

Runs paper-scale ensembles (2000 datasets x 20.48 ms) at several
injected fractions and prints fitted amplitudes under both
normalization modes, plus the null-ensemble floor.  Used to freeze the
defaults baked into the acceptance configuration.
"""

import sys
import time

import numpy as np

from jumpcorr.covariance import (
    EnsembleSpec,
    default_lags,
    fit_covariance_decay,
    normalized_covariance,
    simulate_ensemble,
)
from jumpcorr.telegraph import CorrelationInjection, TelegraphConfig

DATASETS = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
ALIGN = True if len(sys.argv) < 3 else sys.argv[2] == "align"

cfg_a = TelegraphConfig(t1=100.0, p_e=0.205)
cfg_b = TelegraphConfig(t1=100.0, p_e=0.248)
lags = default_lags(5.0, 2000.0)


def run(fraction, seed):
    inj = CorrelationInjection(fraction=fraction, epoch_mean_length=500.0,
                               correlated_t1=100.0, align_boundaries=ALIGN)
    spec = EnsembleSpec(cfg_a, cfg_b, inj, DATASETS, lags)
    t0 = time.time()
    ens = simulate_ensemble(spec, seed)
    out = {}
    for mode, win in (("per_dataset", True), ("grand", True), ("per_dataset", False)):
        curve = fit_covariance_decay(normalized_covariance(ens, lags, mode, windowed=win))
        mid = len(lags) // 2
        out[f"{mode[:5]}/{'w' if win else 'f'}"] = (curve.fit.amplitude, curve.fit.decay_time,
                     curve.c[mid], curve.stderr[mid])
    print(f"  f={fraction:<6} seed={seed:<6} [{time.time()-t0:5.1f}s] "
          + "  ".join(f"{m}: A={v[0]:+.5f} tau={v[1]:8.1f} C0={v[2]:+.5f} se={v[3]:.5f}"
                      for m, v in out.items()))
    return out


print(f"datasets={DATASETS} align_boundaries={ALIGN}")
print("null ensembles:")
null_amps = {"per_d/w": [], "grand/w": [], "per_d/f": []}
for i in range(6):
    out = run(0.0, 1000 + i)
    for m in null_amps:
        null_amps[m].append(out[m][0])
for m, amps in null_amps.items():
    print(f"  null {m}: amps={[f'{a:+.5f}' for a in amps]}  floor95={np.percentile(np.abs(amps), 95):.5f}")

for fraction in (0.005, 0.01, 0.03):
    print(f"fraction {fraction}:")
    for i in range(3):
        run(fraction, 2000 + 10 * int(fraction * 1000) + i)
