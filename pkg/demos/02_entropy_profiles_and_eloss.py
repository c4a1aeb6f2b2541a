"""From per-block entropy values to the L1/L2 regularizer and the anomaly score.

A forward pass through repeated blocks yields one entropy value per tap;
their successive differences describe how the network compresses
information block by block.  Steady compression means equal deltas:
L1 (the variance of the deltas) is zero, and the instability score used
for anomaly detection is zero too.

Run:  python demos/02_entropy_profiles_and_eloss.py
"""

import numpy as np

from eloss import build_profile, eloss, eloss_metric, l1, l2

print("== 1. Profiles ========================================================")
steady = build_profile([8.0, 7.0, 6.0, 5.0], names=["input", "b1", "b2", "b3"])
ragged = build_profile([8.0, 7.5, 4.0, 5.0], names=["input", "b1", "b2", "b3"])
print(f"steady taps  {steady.taps} -> deltas {steady.deltas}")
print(f"ragged taps  {ragged.taps} -> deltas {ragged.deltas}")

print()
print("== 2. The two loss terms ==============================================")
print("L1 is the population variance of the deltas (>= 0, zero when steady);")
print("L2 is minus the sum of squared deltas (<= 0).")
for name, p in (("steady", steady), ("ragged", ragged)):
    print(f"{name}: L1 = {l1(p):.4f}   L2 = {l2(p):.4f}")

print()
print("== 3. Weighted combination ============================================")
v = eloss(ragged, lambda1=1.0, lambda2=0.1)
print(f"eloss(ragged, l1 weight 1.0, l2 weight 0.1)")
print(f"  combined = 1.0 * {v.l1:.4f} + 0.1 * ({v.l2:.4f}) = {v.combined:.4f}")
print(f"  mean delta = {v.mean_delta:.4f}")

print()
print("== 4. Metric mode =====================================================")
print("As a per-input anomaly score, only the non-negative L1 is used:")
print(f"  steady profile -> {eloss_metric(steady):.4f}")
print(f"  ragged profile -> {eloss_metric(ragged):.4f}")

print()
print("== 5. Invariances =====================================================")
shifted = build_profile([t + 100.0 for t in ragged.taps])
print(f"adding 100 to every tap leaves L1 at {l1(shifted):.4f} (deltas unchanged)")
flipped = build_profile([8.0, 8.5, 12.0, 11.0])
print(f"reversing the sign of every delta: L1 {l1(flipped):.4f}, L2 {l2(flipped):.4f}")

print()
print("== 6. Random profiles stay consistent =================================")
rng = np.random.default_rng(0)
for _ in range(3):
    taps = rng.normal(size=5).cumsum()
    p = build_profile(taps)
    v = eloss(p, 0.7, 0.2)
    assert v.combined == 0.7 * v.l1 + 0.2 * v.l2
    print(f"taps {np.round(taps, 2).tolist()} -> combined {v.combined:+.4f}")
print("combined is exactly linear in (L1, L2) with the configured weights.")
