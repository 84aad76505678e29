"""
The estimator at full size
==========================

Build the default configuration, count its parameters and push a 5 s
waveform through the shared trunk, the three metric branches and the
reconstruction decoder. Takes several seconds on one CPU core.
"""

import time

from squim import autodiff as ad
from squim.model import ModelConfig, init_params, model_forward
from squim.signal import synth_signal

cfg = ModelConfig()
params = init_params(cfg, seed=0)
print(cfg)
print(f"{params.num_values():,} trainable values in {len(params)} tensors")

y = synth_signal("speech-like-am-noise", 5.0, seed=0)
print("frames L =", cfg.frames(len(y)), " chunks S =", cfg.chunks(len(y)), " chunk size R =", cfg.R)

t0 = time.perf_counter()
with ad.no_grad():
    out = model_forward(y, cfg, params, with_mtl=True)
print(f"forward pass: {time.perf_counter() - t0:.1f} s")
print("Z:", out.z.shape, " zhat:", out.zhat.shape)
print("untrained scores:", out.triples()[0])
