"""Adversarial dropout strategies under the per-round data-volume budget.

Every round the server samples S~_t; a strategy then names which sampled
clients to silence.  ``select_dropouts`` enforces, for every strategy, that

    sum of n_i over silenced clients <= eps * K * N / M   and   |S_t| >= 1.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import aggregation, client, objectives, seeding

# relative slack on the budget comparison so eps*K*N/M round-off cannot flip it
_BUDGET_RTOL = 1e-12


class BudgetViolation(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class DropoutBudget:
    eps: float
    K: int
    sizes: np.ndarray

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=float))

    @property
    def M(self):
        return len(self.sizes)

    @property
    def N(self):
        return float(self.sizes.sum())

    @property
    def threshold(self):
        return self.eps * self.K * self.N / self.M

    def volume(self, ids):
        return float(self.sizes[np.asarray(list(ids), dtype=int)].sum()) if len(ids) else 0.0

    def allows(self, volume):
        return volume <= self.threshold * (1 + _BUDGET_RTOL)

    def realized(self, dropped):
        """Realized dropout fraction eps_t of a drop-set."""
        return self.volume(dropped) / (self.K * self.N / self.M)


@dataclass(eq=False)
class RoundContext:
    """What the adversary may look at in round t: everything up to now."""

    t: int
    theta: np.ndarray
    sampled: np.ndarray
    losses: dict
    weights: np.ndarray
    history: list = field(default_factory=list)

    def gradients(self):
        """Round-loss gradients at theta_t of the sampled clients, in sampled order."""
        return np.array([objectives.gradient(self.losses[i], self.theta) for i in self.sampled])


def _greedy(order, eligible, budget, n_sampled):
    """Scan ``order``; drop eligible clients while the budget holds and at
    least one participant would remain."""
    dropped, vol = [], 0.0
    remaining = n_sampled
    for i in order:
        if remaining == 1:
            break
        if i not in eligible:
            continue
        v = vol + budget.sizes[i]
        if budget.allows(v):
            dropped.append(int(i))
            vol = v
            remaining -= 1
    return dropped


class NoDropout:
    kind = "none"

    def drop(self, sampled, budget, context, rng):
        return []


class StaticSet:
    """Silences sampled members of a fixed blocked set, in ``blocked`` order
    (earlier entries take priority when the budget binds)."""

    kind = "static"

    def __init__(self, blocked):
        self.blocked = [int(i) for i in blocked]
        self._blocked = set(self.blocked)

    @classmethod
    def from_hidden_set(cls, hidden, M):
        hidden = set(int(i) for i in hidden)
        return cls([i for i in range(M) if i not in hidden])

    def drop(self, sampled, budget, context, rng):
        in_round = set(int(i) for i in sampled)
        order = [i for i in self.blocked if i in in_round]
        return _greedy(order, self._blocked, budget, len(sampled))


class RandomSet:
    """Each round keeps a fresh uniform subset S'_t of size ``keep_size`` and
    silences the sampled clients outside it.

    With ``mask_seed`` set, S'_t is ``seeding.round_subset(mask_seed, t, ...)``,
    i.e. exactly the subset a RandomSwitchQuadratic instance with that seed
    uses; otherwise it is drawn from the adversary stream.
    """

    kind = "random"

    def __init__(self, keep_size, M, mask_seed=None):
        self.keep_size = keep_size
        self.M = M
        self.mask_seed = mask_seed

    def keep_set(self, t, rng):
        if self.mask_seed is not None:
            return seeding.round_subset(self.mask_seed, t, self.M, self.keep_size)
        return np.sort(rng.choice(self.M, size=self.keep_size, replace=False))

    def drop(self, sampled, budget, context, rng):
        keep = set(self.keep_set(context.t, rng).tolist())
        outside = {int(i) for i in sampled if int(i) not in keep}
        return _greedy(sorted(outside), outside, budget, len(sampled))


@dataclass(frozen=True)
class ShadowCandidates:
    C1: tuple
    C2: tuple
    T1: int
    T2: int

    def __post_init__(self):
        if set(self.C1) & set(self.C2):
            raise ValueError("C1 and C2 must be disjoint")

    @property
    def C(self):
        return frozenset(self.C1) | frozenset(self.C2)


class Shadow:
    kind = "shadow"

    def __init__(self, candidates):
        self.candidates = candidates

    def drop(self, sampled, budget, context, rng):
        kept = shadow_select(sampled, self.candidates, budget, rng)
        return sorted(set(int(i) for i in sampled) - set(kept.tolist()))


class Oracle:
    """Silences the budget-feasible subset with the largest weighted gradient sum."""

    kind = "oracle"

    def drop(self, sampled, budget, context, rng):
        return worst_case_subset(sampled, context.gradients(), context.weights, budget)


def select_dropouts(strategy, sampled, budget, context, rng):
    """Participating set S_t (sorted) after the strategy silences some of S~_t."""
    sampled = np.asarray(sampled, dtype=int)
    dropped = set(int(i) for i in strategy.drop(sampled, budget, context, rng))
    if not dropped <= set(sampled.tolist()):
        raise BudgetViolation(f"strategy {strategy.kind} dropped unsampled clients")
    if not budget.allows(budget.volume(sorted(dropped))):
        raise BudgetViolation(
            f"round {context.t}: dropped volume {budget.volume(sorted(dropped))} exceeds "
            f"threshold {budget.threshold}")
    participating = np.array([i for i in sampled if i not in dropped], dtype=int)
    if participating.size == 0:
        raise BudgetViolation(f"round {context.t}: strategy {strategy.kind} silenced everyone")
    return np.sort(participating)


def shadow_select(sampled, candidates, budget, rng):
    """Permute S~_t, then silence candidates in that order while the cumulative
    dropped volume stays within budget; never silence the last participant."""
    sampled = np.asarray(sampled, dtype=int)
    order = rng.permutation(sampled)
    dropped = _greedy(order.tolist(), candidates.C, budget, len(sampled))
    return np.sort(np.setdiff1d(sampled, dropped))


@lru_cache(maxsize=8)
def _subset_masks(k):
    ints = np.arange(2 ** k, dtype=np.int64)
    return ((ints[:, None] >> np.arange(k)) & 1).astype(float)


def worst_case_subset(sampled, gradients, weights, budget):
    """Exhaustive search for the feasible drop-set maximizing
    ||sum_{i in D} w_i grad_i||; ``gradients`` is aligned with ``sampled``."""
    sampled = np.asarray(sampled, dtype=int)
    k = len(sampled)
    if k > 20:
        raise ValueError("exhaustive worst-case search is limited to 20 sampled clients")
    masks = _subset_masks(k)
    W = np.asarray(weights)[sampled][:, None] * np.asarray(gradients, dtype=float)
    norms = np.linalg.norm(masks @ W, axis=1)
    vol = masks @ budget.sizes[sampled]
    feasible = (vol <= budget.threshold * (1 + _BUDGET_RTOL)) & (masks.sum(axis=1) <= k - 1)
    norms[~feasible] = -1.0
    best = int(np.argmax(norms))
    return sorted(sampled[masks[best] > 0].tolist())


# ---------------------------------------------------------------------------
# Shadow experiments


@dataclass(frozen=True)
class ShadowConfig:
    T1: int = 5
    T2: int = 150
    K1: int = 25
    K2: int = 10
    seed_a: int = 1001
    seed_b: int = 1002
    eta: float = 0.01
    s: int = 1
    horizon: int = None
    cclip: aggregation.CClipConfig = aggregation.CClipConfig()


def _top(scores, ids, k):
    order = sorted(ids, key=lambda i: (-scores[i], i))
    return tuple(int(i) for i in order[:k])


def build_shadow_candidates(instance, config, regular_seed=None):
    """Pick the clients whose gradients (FedAvg-shadow) or momenta
    (cclip-shadow) change the most between rounds T1 and T2 of independent
    full-participation runs seeded with their own seeds."""
    if config.seed_a == config.seed_b:
        raise ValueError("the two shadow runs need different seeds")
    if regular_seed is not None and regular_seed in (config.seed_a, config.seed_b):
        raise ValueError("shadow seeds must differ from the regular run's seed")
    horizon = config.horizon if config.horizon is not None else config.T2 + 1
    if not 0 <= config.T1 < config.T2:
        raise ValueError("need 0 <= T1 < T2")
    if config.T2 >= horizon:
        raise ValueError(f"T2={config.T2} is beyond the shadow horizon {horizon}")
    M, w = instance.M, instance.weights
    ids = list(range(M))

    # FedAvg-shadow: norm of the summed local gradients of each client
    theta = np.zeros(instance.d)
    grad_norm = {config.T1: np.zeros(M), config.T2: np.zeros(M)}
    for t in range(config.T2 + 1):
        updates = []
        for c in instance.clients:
            loss = objectives.draw_round_loss(
                c.objective, t, seeding.stream(config.seed_a, "data", c.id, t), c.id)
            u = client.fedavg_local(loss, theta, config.eta, config.s)
            updates.append(u)
            if t in grad_norm:
                grad_norm[t][c.id] = np.linalg.norm(u.delta) / config.eta
        theta = aggregation.amplified_mean(theta, updates, w, 1.0)
    delta1 = np.abs(grad_norm[config.T2] - grad_norm[config.T1])
    C1 = _top(delta1, ids, config.K1)

    # cclip-shadow: momentum-norm change of the remaining clients
    cc = config.cclip
    theta = np.zeros(instance.d)
    mom = np.zeros((M, instance.d))
    v = np.zeros(instance.d)
    mom_norm = {config.T1: np.zeros(M), config.T2: np.zeros(M)}
    for t in range(config.T2 + 1):
        for c in instance.clients:
            loss = objectives.draw_round_loss(
                c.objective, t, seeding.stream(config.seed_b, "data", c.id, t), c.id)
            mom[c.id] = client.momentum_step(loss, theta, mom[c.id], cc.beta0, config.eta).momentum
        if t in mom_norm:
            mom_norm[t] = np.linalg.norm(mom, axis=1)
        v = aggregation.cclip(mom, w, v, cc.tau, cc.iters)
        theta = theta - config.eta * v
    delta2 = np.abs(mom_norm[config.T2] - mom_norm[config.T1])
    rest = [i for i in ids if i not in set(C1)]
    C2 = _top(delta2, rest, config.K2)
    return ShadowCandidates(C1, C2, config.T1, config.T2)
