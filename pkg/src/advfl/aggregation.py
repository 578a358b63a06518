"""Server-side aggregation rules."""

from dataclasses import dataclass

import numpy as np


def amplified_mean(theta, updates, weights, beta):
    """theta + beta * sum_{i in S_t} w_i delta_i, with the *global* weights w_i.

    Weights are deliberately not renormalized over the participants; beta is
    what compensates for the missing mass.
    """
    if not updates:
        raise ValueError("cannot aggregate an empty participant set")
    acc = np.zeros_like(np.asarray(theta, dtype=float))
    for u in sorted(updates, key=lambda u: u.client_id):
        acc += weights[u.client_id] * u.delta
    return theta + beta * acc


class UpdateCache:
    """One slot per client holding its most recently delivered vector."""

    def __init__(self, M, d):
        self.slots = np.zeros((M, d))
        self.filled = np.zeros(M, dtype=bool)

    def write(self, client_id, vec):
        self.slots[client_id] = vec
        self.filled[client_id] = True

    def read(self, client_id):
        if not self.filled[client_id]:
            raise LookupError(f"cache slot of client {client_id} read before first write")
        return self.slots[client_id]

    def read_all(self):
        if not self.filled.all():
            missing = np.flatnonzero(~self.filled)
            raise LookupError(f"cache slots {missing.tolist()} read before first write")
        return self.slots


class MIFA(UpdateCache):
    """Stores G^i = (theta_t - theta_{i,t+1}) / eta_t, the client's update direction."""


def mifa_update(theta, state, active, eta, weights):
    """theta - eta * sum_{i=1}^M w_i G^i, refreshing the active clients' slots first."""
    for u in sorted(active, key=lambda u: u.client_id):
        state.write(u.client_id, -u.delta / eta)
    return theta - eta * (weights @ state.read_all())


@dataclass(frozen=True)
class CClipConfig:
    tau: float = 100.0  # 10 / (1 - beta0) with beta0 = 0.9
    iters: int = 1
    beta0: float = 0.9


@dataclass(frozen=True)
class GMConfig:
    smoothing: float = 1e-6
    tol: float = 1e-7
    max_iter: int = 200


def cclip(points, weights, v0, tau, iters=1):
    """Centered clipping with unnormalized weights:
    v <- v + sum_i w_i (x_i - v) min(1, tau / ||x_i - v||)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if tau <= 0:
        raise ValueError("tau must be positive")
    P = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    v = np.array(v0, dtype=float)
    for _ in range(iters):
        diff = P - v
        norms = np.linalg.norm(diff, axis=1)
        factor = np.ones_like(norms)
        far = norms > tau
        factor[far] = tau / norms[far]
        v = v + (w * factor) @ diff
    return v


@dataclass(frozen=True, eq=False)
class MedianResult:
    point: np.ndarray
    iterations: int
    converged: bool


def geometric_median(points, weights, smoothing=1e-6, tol=1e-7, max_iter=200):
    """Smoothed Weiszfeld iteration started from the weighted mean.

    Distances are floored at ``smoothing`` so an iterate sitting on a data
    point stays well defined.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("need at least one point")
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    w = np.asarray(weights, dtype=float)
    v = (w @ P) / w.sum()
    for k in range(1, max_iter + 1):
        dist = np.maximum(np.linalg.norm(P - v, axis=1), smoothing)
        c = w / dist
        v_new = (c @ P) / c.sum()
        if np.linalg.norm(v_new - v) <= tol:
            return MedianResult(v_new, k, True)
        v = v_new
    return MedianResult(v, max_iter, False)


def bucketize(points, weights, num_buckets, rng):
    """Randomly permute the points, split into contiguous buckets and reduce
    each bucket to its weight-normalized mean carrying the bucket's total weight."""
    P = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not 1 <= num_buckets <= P.shape[0]:
        raise ValueError(f"need 1 <= num_buckets <= {P.shape[0]}, got {num_buckets}")
    perm = rng.permutation(P.shape[0])
    means, bw = [], []
    for idx in np.array_split(perm, num_buckets):
        m = w[idx].sum()
        bw.append(m)
        means.append((w[idx] @ P[idx]) / m)
    return np.array(means), np.array(bw)
