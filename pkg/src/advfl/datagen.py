"""Experiment instances: Synthetic(alpha, beta), controlled quadratic families,
and the paired hard instances behind the minimax lower bound."""

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .objectives import (
    ClientSpec,
    HeterogeneityProfile,
    IsotropicQuadratic,
    RandomSwitchQuadratic,
    ShiftedQuadratic,
    SoftmaxRegression,
    measure_BG,
    objective_from_dict,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class FederationInstance:
    clients: tuple
    profile: HeterogeneityProfile
    optimum: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        if not self.clients:
            raise ValueError("an instance needs at least one client")
        if any(c.n < 1 for c in self.clients):
            raise ValueError("every client needs n_i >= 1")
        if abs(sum(c.weight for c in self.clients) - 1.0) > 1e-12:
            raise ValueError("client weights must sum to 1")
        if [c.id for c in self.clients] != list(range(len(self.clients))):
            raise ValueError("client ids must be 0..M-1 in order")
        if self.optimum is not None:
            opt = np.array(self.optimum, dtype=float)
            opt.flags.writeable = False
            object.__setattr__(self, "optimum", opt)
            g = self.global_gradient(opt)
            if np.linalg.norm(g) > 1e-9:
                raise ValueError(f"declared optimum has gradient norm {np.linalg.norm(g):.3e}")

    @property
    def M(self):
        return len(self.clients)

    @property
    def N(self):
        return sum(c.n for c in self.clients)

    @property
    def d(self):
        return self.clients[0].objective.dim

    @property
    def weights(self):
        return np.array([c.weight for c in self.clients])

    @property
    def sizes(self):
        return np.array([c.n for c in self.clients])

    def global_gradient(self, theta):
        out = np.zeros(self.d)
        for c in self.clients:
            out += c.weight * c.objective.population_gradient(theta)
        return out

    def global_value(self, theta):
        return float(sum(c.weight * c.objective.population_value(theta) for c in self.clients))

    def to_dict(self):
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "M": self.M,
            "d": self.d,
            "profile": vars(self.profile).copy(),
            "optimum": None if self.optimum is None else self.optimum.tolist(),
            "clients": [
                {"id": c.id, "n": c.n, "sigma": c.sigma, "objective": c.objective.to_dict()}
                for c in self.clients
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported instance schema version {doc.get('version')!r}")
        objs = [objective_from_dict(c["objective"]) for c in doc["clients"]]
        sizes = [int(c["n"]) for c in doc["clients"]]
        opt = doc.get("optimum")
        return cls(make_clients(objs, sizes), HeterogeneityProfile(**doc["profile"]),
                   None if opt is None else np.asarray(opt), doc.get("name", ""))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_clients(objectives, sizes):
    N = sum(sizes)
    return tuple(ClientSpec(i, int(n), n / N, obj) for i, (obj, n) in enumerate(zip(objectives, sizes)))


def sizes_from_weights(weights):
    """Smallest integer volumes n_i with n_i / N equal to the given weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must be positive and sum to 1")
    fr = [Fraction(float(x)).limit_denominator(10_000) for x in w]
    den = math.lcm(*(f.denominator for f in fr))
    sizes = [int(f * den) for f in fr]
    N = sum(sizes)
    if any(abs(n / N - x) > 1e-9 for n, x in zip(sizes, w)):
        raise ValueError("weights are not representable as n_i / N with small integers")
    return sizes


def pareto_volumes(M, rng, shape=1.5, scale=10.0, low=10, high=1000):
    x = (rng.pareto(shape, size=M) + 1.0) * scale
    return np.clip(np.ceil(x), low, high).astype(int)


def synthetic_ab(alpha, beta, M, rng, num_features=60, num_classes=10, volumes=None):
    """Synthetic(alpha, beta) federated softmax-regression instance.

    ``volumes`` overrides the Pareto power-law draw of n_i.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    sizes = pareto_volumes(M, rng) if volumes is None else np.asarray(volumes, dtype=int)
    objs = []
    for i in range(M):
        u = rng.normal(0.0, math.sqrt(alpha))
        W = rng.normal(u, 1.0, size=(num_classes, num_features))
        b = rng.normal(u, 1.0, size=num_classes)
        Bi = rng.normal(0.0, math.sqrt(beta))
        v = rng.normal(Bi, 1.0, size=num_features)
        objs.append(SoftmaxRegression(W, b, v, int(sizes[i]), eval_seed=int(rng.integers(2**63))))
    clients = make_clients(objs, [int(n) for n in sizes])
    L = max(o.eval_batch.smoothness() for o in objs)
    d = objs[0].dim
    probes = [np.zeros(d), 0.01 * rng.standard_normal(d)]
    _, G = measure_BG(clients, probes)
    profile = HeterogeneityProfile(B=1.0, G=G, sigma=0.0, L=L, mu=0.0)
    return FederationInstance(clients, profile, None, f"synthetic({alpha:g},{beta:g})")


def quadratic_family(M, L, G, sigma, rng, weights=None, sizes=None, d=20):
    """Isotropic quadratics with common curvature L whose centers have weighted
    spread sum_i w_i ||c_i - c_bar||^2 = G^2 / L^2, so (B, G) = (1, G) holds with
    equality.  The optimum is c_bar."""
    if L <= 0 or G < 0 or sigma < 0:
        raise ValueError("need L > 0, G >= 0, sigma >= 0")
    if sizes is None:
        sizes = [1] * M if weights is None else sizes_from_weights(weights)
    if len(sizes) != M:
        raise ValueError("need one volume per client")
    w = np.asarray(sizes, dtype=float) / sum(sizes)
    c_bar = rng.standard_normal(d)
    z = rng.standard_normal((M, d))
    z -= w @ z
    spread = float(w @ np.sum(z * z, axis=1))
    if G > 0:
        if spread <= 0:
            raise ValueError("G > 0 is infeasible with a single client")
        z *= (G / L) / math.sqrt(spread)
    else:
        z[:] = 0.0
    centers = c_bar + z
    objs = [IsotropicQuadratic(L, centers[i], sigma) for i in range(M)]
    clients = make_clients(objs, sizes)
    optimum = w @ centers
    profile = HeterogeneityProfile(B=1.0, G=G, sigma=sigma, L=L, mu=L)
    return FederationInstance(clients, profile, optimum, "quadratic")


STATIC_HETERO = "static"
RANDOM_NOISY = "random"


@dataclass(frozen=True, eq=False)
class LowerBoundPair:
    homogeneous: FederationInstance
    heterogeneous: FederationInstance
    hidden_set: tuple
    variant: str
    u: np.ndarray
    L: float
    eps: float
    mask_seed: int = 0

    @property
    def minimizer_gap(self):
        return self.eps * float(np.linalg.norm(self.u)) / self.L


def lower_bound_pair(variant, M, eps, G=0.0, sigma=0.0, L=1.0, d=5, mask_seed=0):
    """Two instances no algorithm can tell apart under the matching adversary.

    ``variant`` is ``"static"`` (fixed hidden set, ||u||^2 = G^2/(eps - eps^2)) or
    ``"random"`` (hidden set redrawn every round, ||u||^2 = sigma^2/(eps(1-eps))).
    eps * M must be an integer so the g-client fraction is exactly eps.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    m_out = round(eps * M)
    if abs(eps * M - m_out) > 1e-9 or m_out == 0:
        raise ValueError(f"eps * M = {eps * M} must be a positive integer")
    keep = M - m_out
    u = np.zeros(d)
    f = IsotropicQuadratic(L, np.zeros(d))
    homogeneous = FederationInstance(make_clients([f] * M, [1] * M),
                                     HeterogeneityProfile(1.0, 0.0, 0.0, L, L), np.zeros(d),
                                     f"lower-bound-{variant}-homogeneous")
    if variant == STATIC_HETERO:
        if G <= 0:
            raise ValueError("the static variant needs G > 0")
        u[0] = math.sqrt(G * G / (eps - eps * eps))
        g = ShiftedQuadratic(L, u)
        objs = [f] * keep + [g] * m_out
        profile = HeterogeneityProfile(1.0, G, 0.0, L, L)
    elif variant == RANDOM_NOISY:
        if sigma <= 0:
            raise ValueError("the random variant needs sigma > 0")
        u[0] = math.sqrt(sigma * sigma / (eps * (1 - eps)))
        objs = [RandomSwitchQuadratic(L, u, i, M, keep, mask_seed) for i in range(M)]
        profile = HeterogeneityProfile(1.0, 0.0, sigma, L, L)
    else:
        raise ValueError(f"unknown lower-bound variant {variant!r}")
    heterogeneous = FederationInstance(make_clients(objs, [1] * M), profile, -eps * u / L,
                                       f"lower-bound-{variant}-heterogeneous")
    return LowerBoundPair(homogeneous, heterogeneous, tuple(range(keep)), variant, u, L, eps,
                          mask_seed)
