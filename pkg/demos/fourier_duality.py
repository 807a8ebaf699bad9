"""The frequency/delay duality that the two encoder branches look at.

Both views carry identical information; the point of the contrastive stage
is that the two encoders must agree on WHICH channel they are seeing, not
on how it is parameterized.

    python3 demos/fourier_duality.py
"""

import numpy as np

from mimoclr.chanmodel import ScenarioConfig, generate_scenario, synthesize_cir, synthesize_csi
from mimoclr.sigproc import cir_to_csi, csi_to_cir, fit_norm_stats, normalize, shape_input

cfg = ScenarioConfig(scenario_id=0, n_ue=32)
samples = generate_scenario(cfg, seed=4)
s = samples[0]

cir = synthesize_cir(s, cfg.tx_geometry, cfg.rx_geometry, cfg.n_taps)
csi = synthesize_csi(s, cfg.tx_geometry, cfg.rx_geometry, cfg.n_subcarriers)
print(f"CIR {cir.shape} (delay domain)  <->  CSI {csi.shape} (frequency domain)")

# direct frequency-domain synthesis equals the DFT of the delay response
err = np.max(np.abs(csi - cir_to_csi(cir, cfg.n_subcarriers)))
print(f"max |direct CSI - DFT(CIR)|      : {err:.3e}")

# and the transform inverts exactly (delays are quantized to the tap grid)
back = csi_to_cir(csi, cfg.n_taps)
print(f"max |CIR - IDFT(CSI)|            : {np.max(np.abs(cir - back)):.3e}")

# energy bookkeeping: the unnormalized DFT scales energy by K
ratio = np.sum(np.abs(csi) ** 2) / np.sum(np.abs(cir) ** 2)
print(f"energy ratio CSI/CIR             : {ratio:.9f}  (K = {cfg.n_subcarriers})")
print()

# from complex tensors to encoder food: stack re/im as channels over a
# (antenna pair) x (subcarrier) image, then normalize with dataset statistics
x = shape_input(csi, cfg.n_subcarriers)
print(f"encoder input {x.shape}: [re/im, rx*tx antenna pair, subcarrier]")

batch = np.stack([
    shape_input(synthesize_csi(t, cfg.tx_geometry, cfg.rx_geometry,
                               cfg.n_subcarriers), cfg.n_subcarriers)
    for t in samples])
stats = fit_norm_stats(batch)
z = normalize(batch, stats)
print(f"after min-max + standardization  : mean {z.mean():+.3e}, std {z.std():.3f}")
print(f"fitted stats: vmin {stats.vmin:.4f}, vmax {stats.vmax:.4f}, "
      f"mean {stats.mean:.4f}, std {stats.std:.4f}")
