"""Local objectives, their per-round stochastic realizations, and prox steps.

A *client objective* describes the population function F_i of one client and
knows how to draw the loss realized in one round (``draw_round_loss``).  A
*round loss* is the frozen empirical function l_{i,t} that every local step
of that round acts on.

Model vectors are plain 1-D float64 numpy arrays.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import seeding

log = logging.getLogger(__name__)

NUM_CLASSES = 10
NUM_FEATURES = 60


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _check_dim(theta, d):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"model vector has shape {theta.shape}, expected ({d},)")
    return theta


@dataclass(frozen=True)
class HeterogeneityProfile:
    """Constants of the (B, G)-dissimilarity, noise and smoothness conditions."""

    B: float = 1.0
    G: float = 0.0
    sigma: float = 0.0
    L: float = 1.0
    mu: float = 0.0
    L_minus: float = 0.0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.G < 0 or self.sigma < 0 or self.L_minus < 0 or self.mu < 0:
            raise ValueError("G, sigma, mu and L_minus must be non-negative")
        if self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.mu > self.L:
            raise ValueError(f"mu={self.mu} exceeds L={self.L}")


# ---------------------------------------------------------------------------
# Round losses


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """(L/2)||theta - center||^2 with the round's noise already folded into center."""

    curvature: float
    center: np.ndarray
    client_id: int = -1
    round: int = -1

    def __post_init__(self):
        if self.curvature <= 0:
            raise ValueError("curvature must be positive")
        object.__setattr__(self, "center", _frozen(self.center))

    @property
    def dim(self):
        return self.center.shape[0]

    def value(self, theta):
        r = theta - self.center
        return 0.5 * self.curvature * float(r @ r)

    def gradient(self, theta):
        return self.curvature * (theta - self.center)

    def smoothness(self):
        return self.curvature

    def curvature_floor(self):
        return 0.0

    def prox(self, theta, eta, inner=None):
        eL = eta * self.curvature
        return (theta + eL * self.center) / (1.0 + eL)


@dataclass(frozen=True, eq=False)
class DiagonalQuadraticLoss:
    """0.5 * sum_j h_j (theta_j - c_j)^2; h may be negative (non-convex)."""

    hessian: np.ndarray
    center: np.ndarray
    client_id: int = -1
    round: int = -1

    def __post_init__(self):
        object.__setattr__(self, "hessian", _frozen(self.hessian))
        object.__setattr__(self, "center", _frozen(self.center))
        if self.hessian.shape != self.center.shape:
            raise ValueError("hessian diagonal and center must have equal length")

    @property
    def dim(self):
        return self.center.shape[0]

    def value(self, theta):
        r = theta - self.center
        return 0.5 * float(np.sum(self.hessian * r * r))

    def gradient(self, theta):
        return self.hessian * (theta - self.center)

    def smoothness(self):
        return float(np.max(np.abs(self.hessian)))

    def curvature_floor(self):
        return max(0.0, -float(np.min(self.hessian)))

    def prox(self, theta, eta, inner=None):
        return (theta / eta + self.hessian * self.center) / (1.0 / eta + self.hessian)


@dataclass(frozen=True, eq=False)
class EmpiricalBatch:
    """Mean softmax cross-entropy over a fixed batch.

    The model vector packs the 10 x p weight matrix row-major followed by the
    10 biases.
    """

    features: np.ndarray
    labels: np.ndarray
    client_id: int = -1
    round: int = -1
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        X = _frozen(np.atleast_2d(self.features))
        y = np.array(self.labels, dtype=np.int64)
        y.flags.writeable = False
        if X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError("features and labels must be non-empty and aligned")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError("labels out of range")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def dim(self):
        return self.num_classes * (self.features.shape[1] + 1)

    def unpack(self, theta):
        p = self.features.shape[1]
        k = self.num_classes
        return theta[: k * p].reshape(k, p), theta[k * p:]

    def _logits(self, theta):
        W, b = self.unpack(theta)
        return self.features @ W.T + b

    def value(self, theta):
        z = self._logits(theta)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        return float(np.mean(lse - z[np.arange(len(self.labels)), self.labels]))

    def gradient(self, theta):
        z = self._logits(theta)
        z -= z.max(axis=1, keepdims=True)
        P = np.exp(z)
        P /= P.sum(axis=1, keepdims=True)
        P[np.arange(len(self.labels)), self.labels] -= 1.0
        P /= len(self.labels)
        return np.concatenate([(P.T @ self.features).ravel(), P.sum(axis=0)])

    @cached_property
    def _smoothness(self):
        # Hessian <= (1/2) I_k (x) mean(x~ x~^T), x~ = [x, 1]
        Xt = np.hstack([self.features, np.ones((self.features.shape[0], 1))])
        return 0.5 * float(np.linalg.eigvalsh(Xt.T @ Xt / Xt.shape[0])[-1])

    def smoothness(self):
        return self._smoothness

    def curvature_floor(self):
        return 0.0

    def prox(self, theta, eta, inner=None):
        inner = inner or InnerSolver()
        lr = inner.lr if inner.lr is not None else 1.0 / (self.smoothness() + 1.0 / eta)
        z = theta.copy()
        v = np.zeros_like(theta)
        for _ in range(inner.steps):
            g = self.gradient(z) + (z - theta) / eta
            v = inner.momentum * v + g
            z = z - lr * v
        if log.isEnabledFor(logging.DEBUG):
            res = np.linalg.norm(self.gradient(z) + (z - theta) / eta)
            log.debug("inexact prox client=%d round=%d residual=%.3e",
                      self.client_id, self.round, res)
        return z


@dataclass(frozen=True)
class InnerSolver:
    """Heavy-ball inner loop for prox steps without a closed form.

    ``lr=None`` picks 1 / (L + 1/eta) from the loss's smoothness bound.
    """

    steps: int = 100
    momentum: float = 0.9
    lr: float = None


# ---------------------------------------------------------------------------
# Client objectives


class _QuadraticObjective:
    def population_gradient(self, theta):
        return self.curvature * (theta - self.center)

    def population_value(self, theta):
        r = theta - self.center
        return 0.5 * self.curvature * float(r @ r)

    @property
    def dim(self):
        return self.center.shape[0]

    def draw(self, round, rng, client_id=-1):
        if self.sigma == 0:
            center = self.center
        else:
            zeta = rng.normal(0.0, self.sigma / np.sqrt(self.dim), size=self.dim)
            center = self.center + zeta / self.curvature
        return QuadraticLoss(self.curvature, center, client_id, round)


@dataclass(frozen=True, eq=False)
class IsotropicQuadratic(_QuadraticObjective):
    curvature: float
    center: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        if self.curvature <= 0 or self.sigma < 0:
            raise ValueError("need curvature > 0 and sigma >= 0")
        object.__setattr__(self, "center", _frozen(self.center))

    def to_dict(self):
        return {"kind": "isotropic_quadratic", "curvature": self.curvature,
                "center": self.center.tolist(), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class ShiftedQuadratic(_QuadraticObjective):
    """g(theta) = (L/2)||theta + u/L||^2."""

    curvature: float
    shift: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        if self.curvature <= 0 or self.sigma < 0:
            raise ValueError("need curvature > 0 and sigma >= 0")
        object.__setattr__(self, "shift", _frozen(self.shift))

    @property
    def center(self):
        return -self.shift / self.curvature

    def to_dict(self):
        return {"kind": "shifted_quadratic", "curvature": self.curvature,
                "shift": self.shift.tolist(), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class RandomSwitchQuadratic:
    """Per round, f(theta) = (L/2)||theta||^2 if the client falls in that round's
    uniformly random keep-set of size ``keep_size``, else g = f shifted by u.

    The keep-set of round t is ``seeding.round_subset(mask_seed, t, M, keep_size)``
    and is shared by all clients (and by any adversary given the same seed).
    """

    curvature: float
    shift: np.ndarray
    client_id: int
    num_clients: int
    keep_size: int
    mask_seed: int

    def __post_init__(self):
        object.__setattr__(self, "shift", _frozen(self.shift))
        if not 0 < self.keep_size <= self.num_clients:
            raise ValueError("keep_size must lie in [1, num_clients]")

    @property
    def dim(self):
        return self.shift.shape[0]

    @property
    def switch_prob(self):
        return 1.0 - self.keep_size / self.num_clients

    @property
    def sigma(self):
        q = self.switch_prob
        return float(np.sqrt(q * (1 - q)) * np.linalg.norm(self.shift))

    def population_gradient(self, theta):
        return self.curvature * theta + self.switch_prob * self.shift

    def population_value(self, theta):
        q = self.switch_prob
        f = 0.5 * self.curvature * float(theta @ theta)
        r = theta + self.shift / self.curvature
        return (1 - q) * f + q * 0.5 * self.curvature * float(r @ r)

    def draw(self, round, rng, client_id=-1):
        keep = seeding.round_subset(self.mask_seed, round, self.num_clients, self.keep_size)
        if self.client_id in keep:
            center = np.zeros(self.dim)
        else:
            center = -self.shift / self.curvature
        return QuadraticLoss(self.curvature, center, client_id, round)

    def to_dict(self):
        return {"kind": "random_switch_quadratic", "curvature": self.curvature,
                "shift": self.shift.tolist(), "client_id": self.client_id,
                "num_clients": self.num_clients, "keep_size": self.keep_size,
                "mask_seed": self.mask_seed}


def feature_cov_diag(p=NUM_FEATURES):
    return np.arange(1, p + 1, dtype=float) ** -1.2


@dataclass(frozen=True, eq=False)
class SoftmaxRegression:
    """Generative model of one Synthetic(alpha, beta) client.

    x ~ N(feature_mean, diag(j^-1.2)), y = argmax(W x + b).  The population
    quantities are evaluated on a fixed evaluation batch of ``n`` points drawn
    from ``eval_seed``.
    """

    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    n: int
    eval_seed: int = 0
    sigma: float = 0.0
    cov_diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))
        object.__setattr__(self, "feature_mean", _frozen(self.feature_mean))
        object.__setattr__(self, "cov_diag", _frozen(feature_cov_diag(self.feature_mean.shape[0])))
        if self.weights.shape != (self.bias.shape[0], self.feature_mean.shape[0]):
            raise ValueError("weights must be (classes, features)")

    @property
    def dim(self):
        return self.bias.shape[0] * (self.feature_mean.shape[0] + 1)

    def sample(self, n, rng):
        p = self.feature_mean.shape[0]
        X = self.feature_mean + rng.standard_normal((n, p)) * np.sqrt(self.cov_diag)
        y = np.argmax(X @ self.weights.T + self.bias, axis=1)
        return X, y

    def draw(self, round, rng, client_id=-1):
        X, y = self.sample(self.n, rng)
        return EmpiricalBatch(X, y, client_id, round, self.bias.shape[0])

    @cached_property
    def eval_batch(self):
        X, y = self.sample(self.n, np.random.default_rng(self.eval_seed))
        return EmpiricalBatch(X, y, num_classes=self.bias.shape[0])

    def population_gradient(self, theta):
        return self.eval_batch.gradient(theta)

    def population_value(self, theta):
        return self.eval_batch.value(theta)

    def to_dict(self):
        return {"kind": "softmax_regression", "weights": self.weights.tolist(),
                "bias": self.bias.tolist(), "feature_mean": self.feature_mean.tolist(),
                "n": self.n, "eval_seed": self.eval_seed}


def objective_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    cls = {
        "isotropic_quadratic": IsotropicQuadratic,
        "shifted_quadratic": ShiftedQuadratic,
        "random_switch_quadratic": RandomSwitchQuadratic,
        "softmax_regression": SoftmaxRegression,
    }.get(kind)
    if cls is None:
        raise ValueError(f"unknown objective kind {kind!r}")
    for k in ("center", "shift", "weights", "bias", "feature_mean"):
        if k in d:
            d[k] = np.asarray(d[k], dtype=float)
    return cls(**d)


@dataclass(frozen=True, eq=False)
class ClientSpec:
    id: int
    n: int
    weight: float
    objective: object

    @property
    def sigma(self):
        return self.objective.sigma


# ---------------------------------------------------------------------------
# Functional surface


def value(loss, theta):
    return loss.value(_check_dim(theta, loss.dim))


def gradient(loss, theta):
    return loss.gradient(_check_dim(theta, loss.dim))


def draw_round_loss(obj, round, rng, client_id=-1):
    """Draw the frozen loss l_{i,t} of one client in one round.

    ``rng`` should be the client-and-round scoped stream, e.g.
    ``seeding.stream(seed, "data", client_id, round)``.
    """
    return obj.draw(round, rng, client_id)


def prox(loss, theta, eta, inner=None):
    """argmin_z l(z) + ||z - theta||^2 / (2 eta); exact for quadratics."""
    if eta <= 0:
        raise ValueError(f"prox step size must be positive, got {eta}")
    theta = _check_dim(theta, loss.dim)
    return loss.prox(theta, eta, inner)


def measure_BG(clients, probes):
    """Smallest G with B pinned at 1 such that
    sum_i w_i ||grad F_i||^2 <= ||grad F||^2 + G^2 at every probe point."""
    probes = list(probes)
    if not probes:
        raise ValueError("measure_BG needs at least one probe point")
    g2 = 0.0
    for theta in probes:
        grads = np.array([c.objective.population_gradient(theta) for c in clients])
        w = np.array([c.weight for c in clients])
        full = w @ grads
        gap = float(w @ np.sum(grads * grads, axis=1) - full @ full)
        g2 = max(g2, gap)
    return 1.0, float(np.sqrt(g2))
