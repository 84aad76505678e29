"""
A reverse-mode autodiff engine
==============================

Every layer of the estimator is built from a small set of differentiable
numpy primitives. Here we differentiate a few of them and compare the
result with central finite differences.
"""

import numpy as np

from squim import autodiff as ad
from squim.autodiff import Tensor

rng = np.random.default_rng(0)

# y = sum(tanh(x W)) has gradient W^T (1 - tanh^2) with respect to x
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
W = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
y = ad.sum_(ad.tanh(ad.matmul(x, W)))
y.backward()
closed_form = (1 - np.tanh(x.data @ W.data) ** 2) @ W.data.T
print("matmul+tanh gradient matches closed form:", np.allclose(x.grad, closed_form))

# a bidirectional LSTM over a short sequence, checked numerically
H = 3
seq = Tensor(rng.standard_normal((6, 2)), requires_grad=True)
fwd = [Tensor(rng.standard_normal(s) * 0.5, requires_grad=True) for s in ((2, 4 * H), (H, 4 * H), (4 * H,))]
bwd = [Tensor(rng.standard_normal(s) * 0.5, requires_grad=True) for s in ((2, 4 * H), (H, 4 * H), (4 * H,))]
probe = Tensor(rng.standard_normal((6, 2 * H)))
err = ad.grad_check(lambda: ad.sum_(ad.mul(ad.blstm(seq, fwd, bwd), probe)), [seq, *fwd, *bwd])
print(f"BLSTM max relative gradient error: {err:.2e}")

# auto-pooling: alpha = 0 is a mean, large alpha approaches a max
frames = Tensor(np.array([[[0.0], [1.0], [4.0]]]))
for a in (0.0, 1.0, 20.0):
    print(f"auto_pool alpha={a:5.1f}:", ad.auto_pool(frames, Tensor(a)).data.ravel())

# chunking into half-overlapping windows and overlap-adding them back
seqs = Tensor(np.arange(10.0)[None, None, :])
chunks, pad = ad.chunk(seqs, 4, 2)
print("chunks:", chunks.shape, "padding:", pad)
print("overlap-add / counts:", (ad.unchunk(chunks, 2, 10).data / ad.overlap_counts(10, 4, 2)).ravel())
