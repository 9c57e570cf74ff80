"""The three losses behind the engine, and why their gradients can be trusted.

The linear head turns an l2-normalized feature into class scores; a masked
softmax restricts probability to the classes still admissible for a sample.
Cross-entropy pulls a known class up, the negative-label loss pushes a
known wrong class down, and the entropy penalty sharpens whatever
distribution remains.
"""

import math

import numpy as np

from musicfsl import (
    ce_loss_grad,
    entropy_loss_grad,
    masked_softmax,
    negce_loss_grad,
)

# A 5-class score vector with one class already excluded.
z = np.array([1.2, 0.4, -0.3, 0.8, -1.0])
mask = np.array([True, True, True, True, False])
p = masked_softmax(z, mask)
print("probs:", np.round(p.probs, 4), " sum:", p.probs.sum())
print("excluded class carries exactly zero:", p.probs[4] == 0.0)

# Cross-entropy on the true class.
loss, grad = ce_loss_grad(p, 0)
print(f"\nCE(y=0):     loss {loss:.4f}  grad {np.round(grad, 4)}")

# Negative-label loss: 'this sample is NOT class 2'. Its loss is small
# whenever the model already assigns class 2 little probability.
loss, grad = negce_loss_grad(p, 2)
print(f"NegCE(y̅=2):  loss {loss:.4f}  grad {np.round(grad, 4)}")

# Entropy penalty: log(#admissible) at uniform, zero at one-hot.
uniform = masked_softmax(np.zeros(4), np.ones(4, dtype=bool))
print(f"\nH(uniform over 4) = {entropy_loss_grad(uniform)[0]:.4f} "
      f"(log 4 = {math.log(4):.4f})")
loss, grad = entropy_loss_grad(p)
print(f"H(p) = {loss:.4f}, grad {np.round(grad, 4)}")

# Each analytic gradient matches central finite differences of the composed
# logits -> masked softmax -> loss map. This is the check the test suite
# runs over hundreds of random instances.
h = 1e-6
fd = np.zeros_like(z)
for j in range(len(z)):
    zp, zm = z.copy(), z.copy()
    zp[j] += h
    zm[j] -= h
    fd[j] = (ce_loss_grad(masked_softmax(zp, mask), 0)[0]
             - ce_loss_grad(masked_softmax(zm, mask), 0)[0]) / (2 * h)
analytic = ce_loss_grad(p, 0)[1]
print(f"\nCE gradient vs finite differences: max abs diff "
      f"{np.abs(analytic - fd).max():.2e}")
