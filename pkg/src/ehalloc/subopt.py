"""Sensor-side covariance-estimate recursion and its DP solver.

Instead of tracking the full belief, the sensor keeps a single matrix
estimate advanced by an acknowledgment-matched convex combination of the
two Riccati branches; the resulting DP has the same shape as the
perfect-feedback one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dp import solve_average, solve_suboptimal_finite  # noqa: F401  (re-export)
from .errors import ZeroLikelihood
from .model import (
    DropoutChannel,
    FeedbackChannel,
    SystemModel,
    packet_success_prob,
    riccati_step,
)

__all__ = [
    "CovEstimate",
    "p_hat_step",
    "p_hat_expected_step",
    "ack_probabilities",
    "solve_suboptimal_finite",
]


@dataclass(frozen=True)
class CovEstimate:
    """Sensor-side estimate of the receiver's error covariance."""

    P_hat: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.P_hat, dtype=float))
        if not np.allclose(m, m.T, atol=1e-9):
            raise ValueError("covariance estimate must be symmetric")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValueError("covariance estimate must be PSD")
        m.setflags(write=False)
        object.__setattr__(self, "P_hat", m)


def ack_probabilities(h: float, fb: FeedbackChannel) -> np.ndarray:
    """P(gamma_hat | g, u) over {0, 1, 2} with reception probability h."""
    return fb.matrix[0] * (1.0 - h) + fb.matrix[1] * h


def p_hat_step(P_hat, gamma_hat: int, g: float, u: float, model: SystemModel,
               ch: DropoutChannel, fb: FeedbackChannel) -> np.ndarray:
    """Advance the estimate for one acknowledgment.

    The update is the convex combination of the no-reception and reception
    Riccati branches with weights proportional to P(gamma_hat|gamma) P(gamma),
    where P(gamma=1) = h(g u); the erasure case reduces to weights (1-h, h).
    """
    if gamma_hat not in (0, 1, 2):
        raise ValueError("gamma_hat must be in {0, 1, 2}")
    h = packet_success_prob(g, u, ch)
    l0 = fb.ack_prob(gamma_hat, 0) * (1.0 - h)
    l1 = fb.ack_prob(gamma_hat, 1) * h
    z = l0 + l1
    if z <= 0.0:
        raise ZeroLikelihood(
            f"acknowledgment {gamma_hat} has zero likelihood (eta={fb.eta}, h={h})"
        )
    branch0 = riccati_step(P_hat, 0, model)
    branch1 = riccati_step(P_hat, 1, model)
    return (l0 / z) * branch0 + (l1 / z) * branch1


def p_hat_expected_step(P_hat, g: float, u: float, model: SystemModel,
                        ch: DropoutChannel) -> np.ndarray:
    """Acknowledgment-averaged estimate update.

    Equals A P A^T + Q - h(gu) * (reception correction term); identical in
    form to the conditional mean of the true covariance recursion.
    """
    h = packet_success_prob(g, u, ch)
    branch0 = riccati_step(P_hat, 0, model)
    branch1 = riccati_step(P_hat, 1, model)
    return (1.0 - h) * branch0 + h * branch1
