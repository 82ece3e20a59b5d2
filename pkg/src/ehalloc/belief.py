"""Information state over error covariances and its acknowledgment update.

A belief is a finitely supported distribution over covariance matrices.
Updates follow the acknowledgment-conditioned two-branch recursion: each
atom spawns the no-reception and reception Riccati images, reweighted by
the likelihood of the observed acknowledgment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBelief, ZeroLikelihood
from .model import (
    DropoutChannel,
    FeedbackChannel,
    SystemModel,
    packet_success_prob,
    riccati_step,
    riccati_traces,
)

__all__ = ["Belief", "CovGrid", "belief_update", "belief_expected_cost", "compress"]

_WEIGHT_TOL = 1e-10
_PRUNE_TOL = 1e-8


@dataclass(frozen=True)
class Belief:
    """Weighted particle representation of the covariance distribution."""

    mats: np.ndarray      # (m, n, n)
    weights: np.ndarray   # (m,)
    support_cap: int = 50

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim == 1:
            mats = mats.reshape(-1, 1, 1)
        w = np.asarray(self.weights, dtype=float)
        if mats.shape[0] != w.shape[0] or mats.shape[0] == 0:
            raise ValueError("mats and weights must be non-empty and aligned")
        if np.any(w < -1e-15):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        if self.support_cap < 1:
            raise ValueError("support_cap must be positive")
        for P in mats:
            if not np.allclose(P, P.T, atol=1e-9):
                raise ValueError("belief atoms must be symmetric")
            if np.linalg.eigvalsh(P).min() < -1e-10:
                raise ValueError("belief atoms must be PSD")
        mats.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "mats", mats)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, P, support_cap: int = 50) -> "Belief":
        return cls(np.asarray(P, dtype=float)[None, ...], np.array([1.0]), support_cap)

    @property
    def n_atoms(self) -> int:
        return self.mats.shape[0]

    @property
    def traces(self) -> np.ndarray:
        return np.trace(self.mats, axis1=1, axis2=2)

    @property
    def is_dirac(self) -> bool:
        return self.n_atoms == 1

    def mean_trace(self) -> float:
        return float(self.weights @ self.traces)

    def to_records(self) -> list[tuple[float, float]]:
        """Flat (trace, weight) pairs for CSV dumps."""
        return [(float(t), float(w)) for t, w in zip(self.traces, self.weights)]


@dataclass(frozen=True)
class CovGrid:
    """Ordered covariance grid; lookups use trace distance."""

    mats: np.ndarray     # (m, n, n)
    traces: np.ndarray   # (m,), strictly increasing

    def __init__(self, mats):
        mats = np.asarray(mats, dtype=float)
        if mats.ndim == 1:
            mats = mats.reshape(-1, 1, 1)
        traces = np.trace(mats, axis1=1, axis2=2)
        if np.any(np.diff(traces) <= 0):
            raise ValueError("grid points must be strictly increasing in trace")
        mats.setflags(write=False)
        traces.setflags(write=False)
        object.__setattr__(self, "mats", mats)
        object.__setattr__(self, "traces", traces)

    @property
    def size(self) -> int:
        return self.traces.size

    def nearest(self, trace: float) -> int:
        """Index of the grid point closest in trace (ties to the lower one)."""
        t = self.traces
        j = int(np.searchsorted(t, trace))
        if j == 0:
            return 0
        if j == t.size:
            return t.size - 1
        return j - 1 if trace - t[j - 1] <= t[j] - trace else j

    @classmethod
    def for_scalar_model(cls, model: SystemModel, n_points: int = 50,
                         trace_cap: float = 1e6, expand_steps: int = 60) -> "CovGrid":
        """Log-spaced scalar grid spanning [min(Q, P0), P_cap], containing P0.

        P_cap is found by iterating the no-reception Riccati map from P0
        until the trace exceeds the cap (then clipped) or for expand_steps.
        """
        if not model.is_scalar:
            raise ValueError("scalar covariance grids require a scalar model")
        p0 = float(model.P0[0, 0])
        lo = max(min(float(model.Q[0, 0]), p0), 1e-8)
        p = np.array([[p0]])
        for _ in range(expand_steps):
            p = riccati_step(p, 0, model)
            if float(p[0, 0]) > trace_cap:
                break
        hi = min(float(p[0, 0]), trace_cap)
        pts = np.geomspace(lo, max(hi, lo * (1 + 1e-6)), n_points)
        pts = np.unique(np.concatenate([pts, [p0]]))
        return cls(pts)


def belief_update(pi: Belief, gamma_hat: int, g: float, u: float,
                  model: SystemModel, ch: DropoutChannel, fb: FeedbackChannel) -> Belief:
    """Acknowledgment-conditioned belief recursion.

    Each atom (P, w) spawns its two Riccati branches weighted by
    c_gamma = P(gamma_hat|gamma) P(gamma|g,u) / Z; Z = 0 signals an
    acknowledgment that is impossible under the feedback model.
    """
    if gamma_hat not in (0, 1, 2):
        raise ValueError("gamma_hat must be in {0, 1, 2}")
    if u < 0:
        raise ValueError("energy must be non-negative")
    h = packet_success_prob(g, u, ch)
    like0 = fb.ack_prob(gamma_hat, 0) * (1.0 - h)
    like1 = fb.ack_prob(gamma_hat, 1) * h
    z = like0 + like1
    if z <= 0.0:
        raise ZeroLikelihood(
            f"acknowledgment {gamma_hat} has zero likelihood (eta={fb.eta}, h={h})"
        )
    c0, c1 = like0 / z, like1 / z
    mats, weights = [], []
    for P, w in zip(pi.mats, pi.weights):
        if c0 > 0.0:
            mats.append(riccati_step(P, 0, model))
            weights.append(w * c0)
        if c1 > 0.0:
            mats.append(riccati_step(P, 1, model))
            weights.append(w * c1)
    return _normalize(np.array(mats), np.array(weights), pi.support_cap)


def belief_expected_cost(pi: Belief, g: float, u: float,
                         model: SystemModel, ch: DropoutChannel) -> float:
    """Expected trace of the next error covariance under belief pi."""
    h = packet_success_prob(g, u, ch)
    total = 0.0
    for P, w in zip(pi.mats, pi.weights):
        pred, corr = riccati_traces(P, model)
        total += w * (pred - h * corr)
    return total


def compress(pi: Belief, grid: CovGrid) -> Belief:
    """Project every atom onto its nearest grid point in trace distance."""
    w_grid = np.zeros(grid.size)
    for t, w in zip(pi.traces, pi.weights):
        w_grid[grid.nearest(float(t))] += w
    keep = w_grid >= _PRUNE_TOL
    if not np.any(keep):
        raise EmptyBelief("all belief mass pruned during compression")
    w_grid = w_grid[keep] / w_grid[keep].sum()
    return Belief(grid.mats[keep], w_grid, pi.support_cap)


def grid_weights(pi: Belief, grid: CovGrid) -> np.ndarray:
    """Belief as a weight vector over the grid (no pruning)."""
    w = np.zeros(grid.size)
    for t, wt in zip(pi.traces, pi.weights):
        w[grid.nearest(float(t))] += wt
    return w


def _normalize(mats: np.ndarray, weights: np.ndarray, cap: int) -> Belief:
    keep = weights >= _PRUNE_TOL
    if not np.any(keep):
        raise EmptyBelief("all belief mass pruned")
    mats, weights = mats[keep], weights[keep]
    # Merge atoms with (numerically) identical traces, then enforce the cap
    # by agglomerating the closest-trace pair; the merged atom is the
    # weighted average, which stays PSD.
    order = np.argsort(np.trace(mats, axis1=1, axis2=2))
    mats, weights = list(mats[order]), list(weights[order])
    i = 0
    while i + 1 < len(mats):
        if abs(np.trace(mats[i + 1]) - np.trace(mats[i])) <= 1e-12:
            w = weights[i] + weights[i + 1]
            mats[i] = (weights[i] * mats[i] + weights[i + 1] * mats[i + 1]) / w
            weights[i] = w
            del mats[i + 1], weights[i + 1]
        else:
            i += 1
    while len(mats) > cap:
        traces = [float(np.trace(m)) for m in mats]
        gaps = np.diff(traces)
        j = int(np.argmin(gaps))
        w = weights[j] + weights[j + 1]
        mats[j] = (weights[j] * mats[j] + weights[j + 1] * mats[j + 1]) / w
        weights[j] = w
        del mats[j + 1], weights[j + 1]
    weights = np.asarray(weights)
    return Belief(np.asarray(mats), weights / weights.sum(),
                  support_cap=cap)
