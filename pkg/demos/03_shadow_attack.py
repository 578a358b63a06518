"""Shadow-run adversary against softmax regression on Synthetic(1, 1).

The adversary first runs its own full-participation FedAvg and cclip
experiments with private seeds.  It marks the clients whose gradients or
momenta change the most, then silences them whenever the budget allows.

Run:  python3 demos/03_shadow_attack.py   (about a minute)
"""

import numpy as np

from advfl import AdversaryConfig, RunConfig, Schedule, ShadowConfig, run, synthetic_ab

inst = synthetic_ab(1.0, 1.0, 30, np.random.default_rng(200))
print(f"M={inst.M} d={inst.d}  volumes min/median/max = "
      f"{inst.sizes.min()}/{int(np.median(inst.sizes))}/{inst.sizes.max()}")

adv = AdversaryConfig("shadow", 0.7, shadow=ShadowConfig(T1=5, T2=100, K1=8, K2=3))
for algo, beta in (("fedavg", 1.0), ("fedavg", 3.0), ("mifa", 1.0), ("cclip", 1.0)):
    s = 10 if algo in ("fedavg", "mifa") else 1
    res = run(RunConfig(inst, algo, beta=beta, s=s, schedule=Schedule("constant", 0.01), T=300, K=10,
                        seed=0, adversary=adv))
    eps_t = res.metric("eps_realized")
    print(f"{algo:6s} beta={beta:.0f}  final loss {inst.global_value(res.theta_final):.4f}  "
          f"max eps_t {eps_t.max():.3f}  mean |S_t| "
          f"{np.mean([len(r.participating_set) for r in res.trajectory]):.1f}")
print("silenced candidates:", sorted(res.candidates.C))
