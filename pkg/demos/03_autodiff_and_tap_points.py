"""The reverse-mode engine, repeated-block nets, and entropy tap points.

Shows gradients flowing through the elementary ops and through the
channels-as-samples entropy estimate, then builds a 3-block net and
captures tap points without perturbing the forward computation.

Run:  python demos/03_autodiff_and_tap_points.py
"""

import numpy as np

import eloss.autodiff as ad
from eloss import RepeatedBlockNet, Tensor, channel_entropy, profile_from_taps

print("== 1. Scalar chain rule ===============================================")
x = Tensor(np.array(3.0), requires_grad=True)
y = ad.add(ad.mul(x, x), ad.scale(x, 2.0))  # x^2 + 2x
ad.backward(y)
print(f"d/dx (x^2 + 2x) at x=3: {float(x.grad)} (expected 8)")

print()
print("== 2. Finite-difference check of a composite ==========================")
rng = np.random.default_rng(0)
w = rng.normal(size=(4, 4))
xv = rng.normal(size=(2, 4))


def f(values):
    t = Tensor(values, requires_grad=True)
    out = ad.sum_(ad.relu(ad.matmul(t, Tensor(w))))
    return t, out


t, out = f(xv)
ad.backward(out)
h = 1e-6
fd = np.zeros_like(xv)
for i in range(xv.shape[0]):
    for j in range(xv.shape[1]):
        up, down = xv.copy(), xv.copy()
        up[i, j] += h
        down[i, j] -= h
        fd[i, j] = (float(f(up)[1].values) - float(f(down)[1].values)) / (2 * h)
print(f"max |autodiff - finite difference| = {np.max(np.abs(t.grad - fd)):.2e}")

print()
print("== 3. Differentiable channel entropy ==================================")
feat = Tensor(rng.normal(size=(2, 8, 5, 5)), requires_grad=True)
H = channel_entropy(feat, k=1)
print(f"per-sample entropies: {np.round(H.values, 3).tolist()}")
ad.backward(ad.mean(H))
print(f"gradient shape {feat.grad.shape}, norm {np.linalg.norm(feat.grad):.4f}")

print()
print("== 4. A repeated-block network with taps ==============================")
net = RepeatedBlockNet("conv", in_shape=(3, 16, 16), n_classes=4, blocks=3,
                       width=16, eloss_coverage=3, seed=0)
batch = rng.normal(size=(4, 3, 16, 16))
logits, taps = net.forward(batch)
print(f"logits shape: {logits.values.shape}")
print(f"tap points:   {[(t.name, t.block_index) for t in taps]}")

out_without, _ = net.forward(batch, coverage=0)
print(f"taps change the forward values by "
      f"{np.max(np.abs(out_without.values - logits.values)):.1f} (transparency)")

print()
print("== 5. Entropy profile of one input ====================================")
_, taps1 = net.forward(batch[:1])
profile = profile_from_taps(taps1, k=1)
print(f"taps:   {[round(t, 2) for t in profile.taps]}")
print(f"deltas: {[round(d, 2) for d in profile.deltas]}")
print("(an untrained net compresses unevenly; training with the entropy")
print(" loss pushes these deltas toward a common value)")
