"""
A tour of the differentiation engine
====================================

Everything the trainer does runs on a small reverse-mode autodiff core
over dense 2-D float64 arrays.  This script builds a few graphs by hand,
checks a gradient against central differences, and shows the one odd op
that makes the adversarial objective work: gradient reversal.

    python3 demos/gradient_machinery.py
"""

import numpy as np

from malkit import tensorcore as tc

rng = np.random.default_rng(0)

# ---------------------------------------------------------------
# 1. Forward pass: nodes wrap values, ops record how to push gradients
#    back.  The root must be a 1x1 scalar; backward() fills .grad on
#    every node that asked for it.

w = tc.DiffNode(rng.normal(size=(3, 2)), requires_grad=True, op="param")
x = tc.constant(rng.normal(size=(4, 3)))
y = tc.total(tc.sigmoid(tc.matmul(x, w)))
tc.backward(y)
print(f"scalar value {y.item():.6f}, gradient shape {w.grad.shape}")

# ---------------------------------------------------------------
# 2. The same gradient, measured numerically.  Central differences
#    displace one weight entry at a time; agreement to ~1e-8 relative
#    error is what the test suite enforces everywhere (at 1e-4).

h = 1e-5
numeric = np.zeros_like(w.value)
flat = w.value.ravel()
for i in range(flat.size):
    keep = flat[i]
    flat[i] = keep + h
    f_plus = tc.total(tc.sigmoid(tc.matmul(x, w))).item()
    flat[i] = keep - h
    f_minus = tc.total(tc.sigmoid(tc.matmul(x, w))).item()
    flat[i] = keep
    numeric.ravel()[i] = (f_plus - f_minus) / (2 * h)
rel = np.max(np.abs(w.grad - numeric) / (1e-3 + np.abs(numeric)))
print(f"worst relative disagreement with central differences: {rel:.2e}")

# ---------------------------------------------------------------
# 3. Gradient reversal: identity going forward, times -lambda coming
#    back.  Descending a single scalar therefore moves two parameter
#    groups in opposite directions, which is the whole minimax trick:
#    the classifier ascends the entropy of unlabeled predictions while
#    the encoder descends it.

for lam in (0.0, 0.5, 2.0):
    w.zero_grad()
    plain = tc.total(tc.sigmoid(tc.matmul(x, w)))
    tc.backward(plain)
    g_plain = w.grad.copy()

    w.zero_grad()
    reversed_ = tc.total(tc.sigmoid(tc.grad_reverse(tc.matmul(x, w), lam)))
    tc.backward(reversed_)
    print(f"lambda={lam}: forward value unchanged "
          f"({plain.item():.6f} == {reversed_.item():.6f}), "
          f"grad equals {-lam:+.1f} x plain: "
          f"{np.allclose(w.grad, -lam * g_plain)}")

# ---------------------------------------------------------------
# 4. Where it is used for real: the adversarial entropy scalar.  One
#    backward pass hands the classifier the raw entropy gradient and
#    the encoder its negation.

from malkit.networks import init_classifier, init_encoder
from malkit.objectives import minimax_entropy_term

enc = init_encoder(0, 3, hidden=(8,), latent_dim=4)
clf = init_classifier(1, 4, 3)
loss = minimax_entropy_term(enc, clf, rng.normal(size=(16, 3)), lam=1.0)
tc.backward(loss.objective)
enc_norm = sum(float(np.abs(p.grad).sum()) for p in enc.parameters())
clf_norm = sum(float(np.abs(p.grad).sum()) for p in clf.parameters())
print(f"\nentropy scalar {loss.entropy:.4f}: one backward pass filled "
      f"encoder grads (L1 {enc_norm:.3f}) and classifier grads (L1 {clf_norm:.3f})")
