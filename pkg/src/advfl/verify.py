"""Numerical checks of the inequalities and constructions behind the analysis.

Each ``check_*`` returns a :class:`Report`.  A lemma violation is counted when
the left side exceeds the right side by more than a relative ``RTOL`` of float
round-off; anything beyond that is an implementation bug.
"""

import json
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import adversary, client, datagen, engine, objectives
from .objectives import DiagonalQuadraticLoss, EmpiricalBatch, InnerSolver, QuadraticLoss

RTOL = 1e-9
MC_BAND = 4.0


@dataclass
class Report:
    suite: str
    trials: int
    violations: int
    max_ratio: float
    details: list = field(default_factory=list)

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"suite": self.suite, "trials": self.trials, "violations": self.violations,
                "maxRatio": self.max_ratio, "passed": self.passed, "details": self.details}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# random round losses for the lemma suites


def _softmax_pool(rng, size=12, n=24):
    inst = datagen.synthetic_ab(1.0, 1.0, size, rng, volumes=[n] * size)
    return [c.objective.draw(0, rng) for c in inst.clients]


def _random_loss(kind, rng, d, pool, nonconvex=True):
    if kind == "quadratic":
        return QuadraticLoss(10 ** rng.uniform(-1, 1), rng.standard_normal(d))
    if kind == "diagonal":
        L = 10 ** rng.uniform(-1, 1)
        lo = -L if nonconvex else 0.0
        h = rng.uniform(lo, L, size=d)
        h[rng.integers(d)] = L
        return DiagonalQuadraticLoss(h, rng.standard_normal(d))
    return pool[rng.integers(len(pool))]


def _random_theta(loss, rng):
    scale = 10 ** rng.uniform(-2, 1)
    if isinstance(loss, EmpiricalBatch):
        return scale * 0.1 * rng.standard_normal(loss.dim)
    return loss.center + scale * rng.standard_normal(loss.dim)


KINDS = ("quadratic", "diagonal", "softmax")


def s_step_deviation(loss, theta, eta, s):
    """(lhs, rhs) of ||theta - G^s(theta) - s eta grad(theta)|| <= kappa eta^2 C(s,2) L ||grad(theta)||.

    The left side is accumulated as eta * ||sum_tau (grad(theta^tau) - grad(theta))||,
    which is exactly zero for s = 1.
    """
    g0 = objectives.gradient(loss, theta)
    z = theta
    acc = np.zeros_like(theta)
    for tau in range(s):
        g = g0 if tau == 0 else objectives.gradient(loss, z)
        acc += g - g0
        z = z - eta * g
    lhs = eta * float(np.linalg.norm(acc))
    L = loss.smoothness()
    rhs = client.kappa(s, eta, L) * eta ** 2 * comb(s, 2) * L * float(np.linalg.norm(g0))
    return lhs, rhs


def prox_deviation(loss, theta, eta, inner=None):
    """(lhs, rhs) of ||theta - P(theta) - eta grad(theta)|| <= eta^2 L ||grad(theta)|| / (1 - eta L_-)."""
    g0 = objectives.gradient(loss, theta)
    p = objectives.prox(loss, theta, eta, inner)
    lhs = float(np.linalg.norm(theta - p - eta * g0))
    rhs = eta ** 2 * loss.smoothness() * float(np.linalg.norm(g0)) / (1 - eta * loss.curvature_floor())
    return lhs, rhs


def _lemma_suite(name, trials, rng, one_trial):
    pool = _softmax_pool(rng)
    stats = {k: {"kind": k, "trials": 0, "violations": 0, "maxRatio": 0.0} for k in KINDS}
    violations, max_ratio = 0, 0.0
    for _ in range(trials):
        kind = KINDS[rng.integers(len(KINDS))]
        lhs, rhs = one_trial(kind, pool)
        bad = lhs > rhs * (1 + RTOL)
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        st = stats[kind]
        st["trials"] += 1
        st["violations"] += int(bad)
        st["maxRatio"] = max(st["maxRatio"], ratio)
        violations += int(bad)
        max_ratio = max(max_ratio, ratio)
    return Report(name, trials, violations, max_ratio, list(stats.values()))


def check_s_step_lemma(trials, rng, d=8):
    """Random losses, theta, s in 1..8 and eta <= 0.1/(sL)."""

    def one(kind, pool):
        loss = _random_loss(kind, rng, d, pool)
        s = int(rng.integers(1, 9))
        eta = 0.1 / (s * loss.smoothness()) * 10 ** rng.uniform(-2, 0)
        return s_step_deviation(loss, _random_theta(loss, rng), eta, s)

    return _lemma_suite("s-step", trials, rng, one)


def check_prox_lemma(trials, rng, d=8):
    """Random losses and theta with eta < 1/L_- (exact prox for quadratics,
    a converged inner gradient solve for softmax batches)."""
    inner = InnerSolver(steps=80, momentum=0.0)

    def one(kind, pool):
        loss = _random_loss(kind, rng, d, pool)
        L, Lm = loss.smoothness(), loss.curvature_floor()
        if kind == "softmax":
            eta = 10 ** rng.uniform(-3, -1) / L
        else:
            eta = 10 ** rng.uniform(-3, 0.5) / L
            if Lm > 0:
                eta = min(eta, rng.uniform(0.05, 0.95) / Lm)
        return prox_deviation(loss, _random_theta(loss, rng), eta, inner)

    return _lemma_suite("prox", trials, rng, one)


# ---------------------------------------------------------------------------
# sampling identities


def check_unbiased_sampling(instance, theta, draws, rng, K):
    """Monte-Carlo mean of sum_{i in S~} w_i grad l_i(theta) against p grad F(theta)."""
    M, w = instance.M, instance.weights
    p = K / M
    target = p * instance.global_gradient(theta)
    sums = np.empty((draws, instance.d))
    for j in range(draws):
        S = engine.sample_clients(M, K, rng)
        acc = np.zeros(instance.d)
        for i in S:
            loss = objectives.draw_round_loss(instance.clients[i].objective, j, rng, int(i))
            acc += w[i] * loss.gradient(theta)
        sums[j] = acc
    mean = sums.mean(axis=0)
    se = sums.std(axis=0, ddof=1) / math.sqrt(draws) if draws > 1 else np.zeros(instance.d)
    diff = mean - target
    # differences at round-off level count as exact agreement
    exact = np.abs(diff) <= 1e-12 * (1 + np.abs(target))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(exact, 0.0, np.where(se > 0, diff / se, np.inf))
    bad = int(np.sum(np.abs(z) > MC_BAND))
    return Report("unbiased", draws, bad, float(np.max(np.abs(z))),
                  [{"p": p, "meanNorm": float(np.linalg.norm(mean)),
                    "targetNorm": float(np.linalg.norm(target)), "z": z.tolist()}])


def selection_bias_bound(instance, theta, K, eps):
    prof = instance.profile
    p = K / instance.M
    gF = float(np.linalg.norm(instance.global_gradient(theta)))
    return p * math.sqrt(eps) * (prof.B * gF + prof.G + prof.sigma)


def check_selection_bias(instance, probes, draws, rng, K, eps):
    """For each probe theta: Monte-Carlo mean over S~ of the worst budget-feasible
    ||sum_{dropped} w_i grad l_i(theta)||, compared with p sqrt(eps)(B||grad F|| + G + sigma)."""
    if K > 20:
        raise ValueError("exhaustive drop-set search needs K <= 20")
    M, w = instance.M, instance.weights
    budget = adversary.DropoutBudget(eps, K, instance.sizes)
    details, bad, worst = [], 0, 0.0
    for theta in probes:
        vals = np.empty(draws)
        for j in range(draws):
            S = engine.sample_clients(M, K, rng)
            grads = np.array([
                objectives.draw_round_loss(instance.clients[i].objective, j, rng, int(i)).gradient(theta)
                for i in S])
            D = adversary.worst_case_subset(S, grads, w, budget)
            if D:
                idx = np.searchsorted(S, D)
                vals[j] = np.linalg.norm(w[D] @ grads[idx])
            else:
                vals[j] = 0.0
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
        bound = selection_bias_bound(instance, theta, K, eps)
        ok = mean <= bound + MC_BAND * se
        bad += int(not ok)
        ratio = mean / bound if bound > 0 else (0.0 if mean == 0 else math.inf)
        worst = max(worst, ratio)
        details.append({"mean": mean, "se": se, "bound": bound, "ratio": ratio, "pass": ok})
    return Report("selection-bias", draws * len(details), bad, worst, details)


# ---------------------------------------------------------------------------
# lower bound


def minimax_gap(eps, G, sigma):
    """eps / (8 (1 - eps)) * (G^2 + sigma^2)."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    return eps / (8 * (1 - eps)) * (G * G + sigma * sigma)


def harness_adversary(pair):
    if pair.variant == datagen.STATIC_HETERO:
        M = pair.homogeneous.M
        blocked = tuple(i for i in range(M) if i not in set(pair.hidden_set))
        return engine.AdversaryConfig("static", pair.eps, blocked=blocked)
    return engine.AdversaryConfig("random", pair.eps, keep_size=len(pair.hidden_set),
                                  mask_seed=pair.mask_seed)


def fedavg_closure(instance, adversary_config, seed, T):
    """Full-sampling FedAvg used by the harness by default."""
    cfg = engine.RunConfig(instance, "fedavg", beta=1.0, s=2, schedule=engine.Schedule("constant", 0.1),
                           T=T, K=instance.M, adversary=adversary_config, seed=seed,
                           record_observations=True)
    return engine.run(cfg)


def indistinguishability_harness(pair, algorithm=None, T=30, seed=0):
    """Run one algorithm on both instances of a lower-bound pair with the same seed
    and the matching adversary; the observed streams must match bit for bit."""
    algorithm = algorithm or fedavg_closure
    adv = harness_adversary(pair)
    r1 = algorithm(pair.homogeneous, adv, seed, T)
    r2 = algorithm(pair.heterogeneous, adv, seed, T)

    diverged = []
    if len(r1.observations) != len(r2.observations):
        diverged.append("length")
    for t, ((s1, x1), (s2, x2)) in enumerate(zip(r1.observations, r2.observations)):
        if s1 != s2 or x1.shape != x2.shape or x1.tobytes() != x2.tobytes():
            diverged.append(t)
    same_output = (r1.theta_final.tobytes() == r2.theta_final.tobytes()
                   and r1.theta_R.tobytes() == r2.theta_R.tobytes())
    theta_hat = r1.theta_final
    err1 = float(np.linalg.norm(pair.homogeneous.global_gradient(theta_hat)))
    err2 = float(np.linalg.norm(pair.heterogeneous.global_gradient(theta_hat)))
    unorm = float(np.linalg.norm(pair.u))
    floor = pair.eps * unorm
    triangle_ok = err1 + err2 >= floor * (1 - RTOL)
    half_sq = (floor / 2) ** 2
    G, sigma = pair.heterogeneous.profile.G, pair.heterogeneous.profile.sigma
    gap = minimax_gap(pair.eps, G, sigma)
    gap_ok = max(err1, err2) ** 2 >= half_sq * (1 - RTOL) and half_sq >= gap * (1 - RTOL)
    violations = len(diverged) + int(not same_output) + int(not triangle_ok) + int(not gap_ok)
    details = [{
        "variant": pair.variant, "eps": pair.eps, "uNorm": unorm, "T": T,
        "divergedRounds": diverged, "identicalOutputs": same_output,
        "err1": err1, "err2": err2, "triangleFloor": floor, "maxErrSq": max(err1, err2) ** 2,
        "halfGapSq": half_sq, "minimaxGap": gap,
        "minimizerGap": float(np.linalg.norm(pair.homogeneous.optimum - pair.heterogeneous.optimum)),
    }]
    return Report("lower-bound", T, violations, floor / (err1 + err2) if err1 + err2 > 0 else math.inf,
                  details)


# ---------------------------------------------------------------------------
# rates


def convergence_slope(metric, tail_fraction=0.5, times=None):
    """Least-squares slope of log(metric) against log(time) over the tail.

    ``metric`` is a sequence of values (or RoundLog-like records with the
    chosen attribute already extracted); ``times`` defaults to 1, 2, ..., n.
    """
    m = np.asarray(metric, dtype=float)
    n = m.shape[0]
    t = np.arange(1, n + 1, dtype=float) if times is None else np.asarray(times, dtype=float)
    start = n - max(int(round(tail_fraction * n)), 0)
    tail_m, tail_t = m[start:], t[start:]
    if tail_m.shape[0] < 20:
        raise ValueError("the tail needs at least 20 points")
    if np.any(tail_m <= 0):
        raise ValueError("metric must be strictly positive on the tail")
    slope, _ = np.polyfit(np.log(tail_t), np.log(tail_m), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# named suites (shared by the CLI and the acceptance tests)

SUITES = ("s-step", "prox", "unbiased", "selection-bias", "lower-bound")


def probe_points(instance, count, rng, scale=1.0):
    """``count`` points scattered around the optimum (or the origin)."""
    ref = instance.optimum if instance.optimum is not None else np.zeros(instance.d)
    return [ref + scale * rng.standard_normal(instance.d) for _ in range(count)]


def lower_bound_clients(eps, minimum=8):
    """Smallest M >= minimum with eps * M an integer."""
    from fractions import Fraction

    q = Fraction(str(eps)).limit_denominator(10_000).denominator
    return q * max(1, -(-minimum // q))


def run_suite(name, trials, seed=0, eps=None, G=1.0, sigma=1.0):
    """Reports for one named suite.

    Sizes follow the reference settings: M=20, K=5 for ``unbiased``;
    M=20, K=10, eps=0.4 and 10 probes for ``selection-bias``; both lower-bound
    variants at eps in {0.25, 0.5} (or just ``eps``) for ``lower-bound``.
    ``trials`` counts trials, Monte-Carlo draws or harness rounds respectively.
    """
    from . import seeding

    rng = seeding.stream(seed, "trial")
    if name == "s-step":
        return [check_s_step_lemma(trials, rng)]
    if name == "prox":
        return [check_prox_lemma(trials, rng)]
    if name == "unbiased":
        inst = datagen.quadratic_family(20, 1.0, 1.0, 0.5, rng)
        return [check_unbiased_sampling(inst, probe_points(inst, 1, rng)[0], trials, rng, K=5)]
    if name == "selection-bias":
        e = 0.4 if eps is None else eps
        inst = datagen.quadratic_family(20, 1.0, 1.0, 0.5, rng)
        return [check_selection_bias(inst, probe_points(inst, 10, rng), trials, rng, K=10, eps=e)]
    if name == "lower-bound":
        reports = []
        for e in ((0.25, 0.5) if eps is None else (eps,)):
            M = lower_bound_clients(e)
            for variant in (datagen.STATIC_HETERO, datagen.RANDOM_NOISY):
                pair = datagen.lower_bound_pair(variant, M, e, G=G, sigma=sigma, mask_seed=seed)
                reports.append(indistinguishability_harness(pair, T=max(1, min(trials, 200)), seed=seed))
        return reports
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
