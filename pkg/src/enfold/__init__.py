"""Transformer layers as unfolded descent steps on explicit energy functions.

The library is organized around three layers of machinery:

* ``energy`` defines the scalar objectives (pairwise attraction energies,
  quadratic feed-forward energies, the nonnegativity penalty) together with
  their majorizers and analytic gradients.
* ``unfold`` implements the update rules whose fixed-step iteration realizes
  a transformer forward pass: softmax averaging, the alternating
  attention/feed-forward step, proximal ReLU, and the multi-layer stack
  runner.
* ``aim`` analyzes alternating minimization as noisy gradient descent:
  noise terms, certified-descent constants, and the geometric regions on
  which descent is guaranteed.

``grad`` differentiates a meta loss through the unrolled stack, ``harness``
turns all of it into seeded, reproducible experiments emitting CSV tables,
and ``cli`` is the command-line front door.
"""

from enfold import aim, energy, grad, harness, numerics, unfold

__all__ = ["aim", "energy", "grad", "harness", "numerics", "unfold"]
__version__ = "0.1.0"
