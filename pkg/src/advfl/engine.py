"""Round loop: sample -> local compute -> adversary -> aggregate -> log."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import adversary, aggregation, client, objectives, seeding
from .aggregation import CClipConfig, GMConfig
from .client import DivergenceError
from .objectives import InnerSolver

log = logging.getLogger(__name__)

ALGORITHMS = ("fedavg", "fedprox", "mifa", "cclip", "gm", "cclip-bucket", "gm-bucket")
# algorithms that reuse stale per-client state and so need everyone at t = 0
_STALE = {"mifa", "cclip", "gm", "cclip-bucket", "gm-bucket"}
_ONE_STEP = {"fedprox", "cclip", "gm", "cclip-bucket", "gm-bucket"}


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule.

    constant:   eta_t = eta0
    inv_sqrt:   eta_t = eta0 / sqrt(t + 1)
    inv_linear: eta_t = eta0 / (t + gamma)
    """

    kind: str = "constant"
    eta0: float = 0.01
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "inv_sqrt", "inv_linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.eta0 <= 0 or self.gamma <= 0:
            raise ValueError("schedule parameters must be positive")


def learning_rate(schedule, t):
    if schedule.kind == "constant":
        return schedule.eta0
    if schedule.kind == "inv_sqrt":
        return schedule.eta0 / math.sqrt(t + 1)
    return schedule.eta0 / (t + schedule.gamma)


def nonconvex_eta0(profile, beta, s, p, T=None):
    """Largest step size allowed by the non-convex rate analysis.

    With ``T`` given this is the constant rate for a horizon of T rounds,
    otherwise the eta0 of the eta0 / sqrt(t+1) schedule.  The first cap carries
    the factor s required for s local steps.
    """
    cap = 1.0 / (10 * beta * s * profile.L * profile.B ** 2)
    noise = profile.G + profile.sigma
    if noise == 0:
        return cap
    horizon = 1 if T is None else T
    return min(cap, 1.0 / (beta * math.sqrt(p * horizon * profile.L) * noise))


def strongly_convex_schedule(profile, beta, s, theta=1.0):
    """eta_t = theta / (t + gamma) with gamma chosen so every eta_t respects
    eta_t <= mu / (10 beta s L^2 B^2)."""
    if profile.mu <= 0:
        raise ValueError("the O(1/t) schedule needs mu > 0")
    cap = profile.mu / (10 * beta * s * profile.L ** 2 * profile.B ** 2)
    return Schedule("inv_linear", theta, theta / cap)


@dataclass(frozen=True)
class AdversaryConfig:
    """``kind`` is one of none, static, random, shadow, oracle.

    static: ``blocked`` lists the silenced clients in priority order; if unset
    the round(eps * M) clients whose local optimum is farthest from the global
    one are blocked, farthest first.
    random: ``keep_size`` defaults to floor((1 - eps) M).
    """

    kind: str = "none"
    eps: float = 0.0
    blocked: tuple = None
    keep_size: int = None
    mask_seed: int = None
    shadow: adversary.ShadowConfig = adversary.ShadowConfig()

    def __post_init__(self):
        if self.kind not in ("none", "static", "random", "shadow", "oracle"):
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if not 0 <= self.eps < 1:
            raise ValueError(f"adversary eps must lie in [0, 1), got {self.eps}")


@dataclass(frozen=True, eq=False)
class RunConfig:
    instance: object
    algorithm: str = "fedavg"
    beta: float = 1.0
    s: int = 1
    schedule: Schedule = Schedule()
    T: int = 100
    K: int = 10
    adversary: AdversaryConfig = AdversaryConfig()
    seed: int = 0
    cclip: CClipConfig = CClipConfig()
    gm: GMConfig = GMConfig()
    buckets: int = 2
    inner: InnerSolver = InnerSolver()
    theta0: np.ndarray = None
    record_observations: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not 1 <= self.K <= self.instance.M:
            raise ValueError(f"need 1 <= K <= M={self.instance.M}, got K={self.K}")
        if self.T < 1 or self.beta <= 0 or self.s < 1:
            raise ValueError("need T >= 1, beta > 0 and s >= 1")
        if self.algorithm in _ONE_STEP and self.s != 1:
            object.__setattr__(self, "s", 1)


@dataclass
class RoundLog:
    t: int
    grad_norm_sq: float
    dist_sq: float
    eps_realized: float
    sampled_set: list
    participating_set: list
    train_loss: float
    eta: float

    def to_dict(self):
        return {
            "t": self.t,
            "grad_norm_sq": self.grad_norm_sq,
            "dist_sq": self.dist_sq,
            "eps_realized": self.eps_realized,
            "sampled_set": self.sampled_set,
            "participating_set": self.participating_set,
            "train_loss": self.train_loss,
            "eta": self.eta,
        }


@dataclass(eq=False)
class RunResult:
    trajectory: list
    theta_final: np.ndarray
    theta_R: np.ndarray
    R: int
    iterates: np.ndarray
    observations: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    candidates: object = None

    def metric(self, name):
        return np.array([getattr(r, name) for r in self.trajectory], dtype=float)


def sample_clients(M, K, rng):
    """K distinct clients, uniformly over all C(M, K) subsets (sorted)."""
    if not 1 <= K <= M:
        raise ValueError(f"need 1 <= K <= M, got K={K}, M={M}")
    return np.sort(rng.choice(M, size=K, replace=False))


def random_stop(schedule, T, rng):
    """R in {0..T} with P[R = k] proportional to eta_k."""
    if T == 0:
        return 0
    etas = np.array([learning_rate(schedule, k) for k in range(T + 1)])
    return int(rng.choice(T + 1, p=etas / etas.sum()))


def population_metrics(instance, theta):
    """(||grad F(theta)||^2, ||theta - theta*||^2 or None)."""
    g = instance.global_gradient(theta)
    dist = None
    if instance.optimum is not None:
        r = theta - instance.optimum
        dist = float(r @ r)
    return float(g @ g), dist


def farthest_first(instance):
    """Clients ordered by how far their local optimum sits from the global one,
    measured by ||grad F_i(theta*)|| (ties by id)."""
    ref = instance.optimum if instance.optimum is not None else np.zeros(instance.d)
    g = instance.global_gradient(ref)
    score = [np.linalg.norm(c.objective.population_gradient(ref) - g) for c in instance.clients]
    return sorted(range(instance.M), key=lambda i: (-score[i], i))


def make_strategy(config):
    adv, inst = config.adversary, config.instance
    if adv.kind == "none":
        return adversary.NoDropout(), None
    if adv.kind == "static":
        blocked = adv.blocked
        if blocked is None:
            blocked = farthest_first(inst)[: round(adv.eps * inst.M)]
        return adversary.StaticSet(blocked), None
    if adv.kind == "random":
        keep = adv.keep_size if adv.keep_size is not None else math.floor((1 - adv.eps) * inst.M)
        return adversary.RandomSet(max(keep, 1), inst.M, adv.mask_seed), None
    if adv.kind == "oracle":
        return adversary.Oracle(), None
    cands = adversary.build_shadow_candidates(inst, adv.shadow, regular_seed=config.seed)
    return adversary.Shadow(cands), cands


def run(config):
    inst = config.instance
    M, d, w = inst.M, inst.d, inst.weights
    algo = config.algorithm
    theta = np.zeros(d) if config.theta0 is None else np.array(config.theta0, dtype=float)
    budget = adversary.DropoutBudget(config.adversary.eps, config.K, inst.sizes)
    strategy, candidates = make_strategy(config)
    sampling_rng = seeding.stream(config.seed, "sampling")
    adversary_rng = seeding.stream(config.seed, "adversary")
    stopping_rng = seeding.stream(config.seed, "stopping")
    server_rng = seeding.stream(config.seed, "trial")

    mifa_cache = aggregation.MIFA(M, d) if algo == "mifa" else None
    robust = algo in ("cclip", "gm", "cclip-bucket", "gm-bucket")
    client_mom = np.zeros((M, d))
    mom_cache = aggregation.UpdateCache(M, d)
    center = np.zeros(d)

    result = RunResult([], None, None, 0, None, candidates=candidates)
    iterates = [theta.copy()]
    history = []
    for t in range(config.T):
        eta = learning_rate(config.schedule, t)
        full = algo in _STALE and t == 0
        sampled = np.arange(M) if full else sample_clients(M, config.K, sampling_rng)

        losses, updates = {}, {}
        for i in sampled:
            i = int(i)
            obj = inst.clients[i].objective
            losses[i] = objectives.draw_round_loss(obj, t, seeding.stream(config.seed, "data", i, t), i)
            loss = losses[i]
            if algo in ("fedavg", "mifa"):
                updates[i] = client.fedavg_local(loss, theta, eta, config.s)
            elif algo == "fedprox":
                updates[i] = client.fedprox_local(loss, theta, eta, config.inner)
            else:
                updates[i] = client.momentum_step(loss, theta, client_mom[i], config.cclip.beta0, eta)

        ctx = adversary.RoundContext(t, theta, sampled, losses, w, history)
        if full:
            participating = sampled
            if t == 0:
                result.notes.append(f"{algo}: adversary disabled at t=0 to initialize per-client caches")
                log.info(result.notes[-1])
        else:
            participating = adversary.select_dropouts(strategy, sampled, budget, ctx, adversary_rng)
        dropped = sorted(set(sampled.tolist()) - set(participating.tolist()))

        gn, dist = population_metrics(inst, theta)
        result.trajectory.append(RoundLog(
            t, gn, dist, 0.0 if full else budget.realized(dropped),
            sampled.tolist(), participating.tolist(), inst.global_value(theta), eta))

        active = [updates[int(i)] for i in participating]
        if config.record_observations:
            received = np.array([u.momentum if robust else u.delta for u in active])
            result.observations.append((participating.tolist(), received))

        if algo in ("fedavg", "fedprox"):
            theta = aggregation.amplified_mean(theta, active, w, config.beta)
        elif algo == "mifa":
            theta = aggregation.mifa_update(theta, mifa_cache, active, eta, w)
        else:
            for u in active:
                client_mom[u.client_id] = u.momentum
                mom_cache.write(u.client_id, u.momentum)
            points, pw = mom_cache.read_all(), w
            if algo.endswith("-bucket"):
                points, pw = aggregation.bucketize(points, w, config.buckets, server_rng)
            if algo.startswith("cclip"):
                center = aggregation.cclip(points, pw, center, config.cclip.tau, config.cclip.iters)
            else:
                gm = config.gm
                center = aggregation.geometric_median(points, pw, gm.smoothing, gm.tol, gm.max_iter).point
            theta = theta - eta * center

        if not np.all(np.isfinite(theta)):
            raise DivergenceError(f"global model became non-finite after round {t}")
        history.append(participating.tolist())
        iterates.append(theta.copy())

    result.iterates = np.array(iterates)
    result.theta_final = theta
    result.R = random_stop(config.schedule, config.T, stopping_rng)
    result.theta_R = result.iterates[result.R]
    return result

