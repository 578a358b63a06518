"""Two federations that look the same to the server.

Clients in the hidden set share f(theta) = (L/2)||theta||^2.  In the second
instance the others use g(theta) = (L/2)||theta + u/L||^2.  If the adversary
always silences the g clients, every message the server sees is identical
in both worlds, so one output cannot be accurate for both.

Run:  python3 demos/02_lower_bound.py
"""

import numpy as np

from advfl import lower_bound_pair, minimax_gap, verify

for variant in ("static", "random"):
    for eps in (0.25, 0.5):
        pair = lower_bound_pair(variant, 8, eps, G=1.0, sigma=1.0)
        rep = verify.indistinguishability_harness(pair, T=40, seed=0)
        d = rep.details[0]
        print(f"{variant:6s} eps={eps:.2f} |u|={d['uNorm']:.3f}  identical streams: "
              f"{not d['divergedRounds'] and d['identicalOutputs']}  "
              f"err1+err2={d['err1'] + d['err2']:.3f} >= {d['triangleFloor']:.3f}")

print()
for eps in (0.1, 0.25, 0.5, 0.8):
    print(f"eps={eps:.2f}  unavoidable error eps/(8(1-eps))(G^2+sigma^2) = {minimax_gap(eps, 1.0, 1.0):.4f}")

# the minimizers of the two objectives differ by eps |u| / L
pair = lower_bound_pair("static", 8, 0.25, G=1.0)
print("\nminimizer gap", np.linalg.norm(pair.homogeneous.optimum - pair.heterogeneous.optimum),
      "=", pair.minimizer_gap)
