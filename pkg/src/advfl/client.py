"""Per-round local computation of a participating client."""

from dataclasses import dataclass
from math import comb

import numpy as np

from . import objectives


class DivergenceError(RuntimeError):
    """A local or global iterate stopped being finite."""


@dataclass(frozen=True, eq=False)
class LocalUpdate:
    client_id: int
    new_model: np.ndarray
    delta: np.ndarray
    momentum: np.ndarray = None


def _update(loss, theta, new, momentum=None):
    return LocalUpdate(loss.client_id, new, new - theta, momentum)


def _guard(z, loss, step):
    if not np.all(np.isfinite(z)):
        raise DivergenceError(
            f"non-finite local iterate: client {loss.client_id}, round {loss.round}, step {step}")


def fedavg_local(loss, theta, eta, s):
    """s gradient steps on the same round loss, starting from ``theta``."""
    if s < 1 or eta <= 0:
        raise ValueError("need s >= 1 and eta > 0")
    theta = np.asarray(theta, dtype=float)
    z = theta
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(s):
            z = z - eta * objectives.gradient(loss, z)
            _guard(z, loss, step)
    return _update(loss, theta, z)


def fedprox_local(loss, theta, eta, inner=None):
    if eta * loss.curvature_floor() >= 1:
        raise ValueError(
            f"eta * L_minus = {eta * loss.curvature_floor():g} >= 1: prox objective is not "
            "strongly convex")
    theta = np.asarray(theta, dtype=float)
    z = objectives.prox(loss, theta, eta, inner)
    _guard(z, loss, 0)
    return _update(loss, theta, z)


def momentum_step(loss, theta, m_prev, beta0=0.9, eta=1.0):
    """One heavy-ball worker step; returns the new momentum alongside the model."""
    if not 0 <= beta0 < 1:
        raise ValueError("momentum coefficient must lie in [0, 1)")
    theta = np.asarray(theta, dtype=float)
    m = beta0 * np.asarray(m_prev, dtype=float) + (1 - beta0) * objectives.gradient(loss, theta)
    z = theta - eta * m
    _guard(z, loss, 0)
    return _update(loss, theta, z, m)


def kappa(s, eta, L):
    """Ratio ((1+x)^s - 1 - s x) / (C(s,2) x^2) with x = eta L; zero when s = 1."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if s == 1:
        return 0.0
    x = eta * L
    # sum_{k>=2} C(s,k) x^(k-2) / C(s,2): all terms positive, no cancellation
    c2 = comb(s, 2)
    return float(sum(comb(s, k) / c2 * x ** (k - 2) for k in range(2, s + 1)))
