"""Plant, channel, battery and feedback-link primitives.

Everything here is immutable after construction and the sampling helpers
take an explicit numpy Generator, so concurrent use with independent
streams is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleAction, SingularInnovation, UnknownState

__all__ = [
    "SystemModel",
    "DropoutChannel",
    "StochProcessSpec",
    "Battery",
    "FeedbackChannel",
    "PacketOutcome",
    "rng_stream",
    "riccati_step",
    "packet_success_prob",
    "battery_step",
    "sample_feedback",
    "sample_process",
]

_PSD_EIG_FLOOR = -1e-10
_PBH_RANK_TOL = 1e-8


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-seeded generator: (seed, key...) -> independent stream."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _as_matrix(x) -> np.ndarray:
    m = np.atleast_2d(np.asarray(x, dtype=float))
    m.setflags(write=False)
    return m


def _check_psd(name: str, m: np.ndarray, strict: bool = False) -> None:
    if not np.allclose(m, m.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(m)
    if strict:
        if eigs.min() <= 1e-12:
            raise ValueError(f"{name} must be positive definite (min eig {eigs.min():.3e})")
    elif eigs.min() < _PSD_EIG_FLOOR:
        raise ValueError(f"{name} must be positive semi-definite (min eig {eigs.min():.3e})")


def _pbh_rank_ok(blocks: np.ndarray, n: int) -> bool:
    return np.linalg.matrix_rank(blocks, tol=_PBH_RANK_TOL) == n


@dataclass(frozen=True)
class SystemModel:
    """Linear plant x' = A x + w, y = C x + v with noise covariances Q, R.

    P0 is the initial one-step prediction error covariance.  Construction
    verifies symmetry/PSD-ness and the stabilizability/detectability
    rank conditions needed for the covariance recursion to be well posed.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray

    def __init__(self, A, C, Q, R, P0):
        object.__setattr__(self, "A", _as_matrix(A))
        object.__setattr__(self, "C", _as_matrix(C))
        object.__setattr__(self, "Q", _as_matrix(Q))
        object.__setattr__(self, "R", _as_matrix(R))
        object.__setattr__(self, "P0", _as_matrix(P0))
        self._validate()

    def _validate(self) -> None:
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        m = self.C.shape[0]
        if self.C.shape != (m, n):
            raise ValueError(f"C must have {n} columns")
        if self.Q.shape != (n, n) or self.P0.shape != (n, n):
            raise ValueError("Q and P0 must match the state dimension")
        if self.R.shape != (m, m):
            raise ValueError("R must match the observation dimension")
        _check_psd("Q", self.Q, strict=True)
        _check_psd("R", self.R)
        _check_psd("P0", self.P0)
        # PBH rank tests at every unstable eigenvalue of A.
        q_sqrt = _sqrtm_psd(self.Q)
        for lam in np.linalg.eigvals(self.A):
            if abs(lam) < 1.0 - 1e-10:
                continue
            shifted = self.A - lam * np.eye(n)
            if not _pbh_rank_ok(np.hstack([shifted, q_sqrt]), n):
                raise ValueError(f"(A, Q^1/2) not stabilizable at eigenvalue {lam}")
            if not _pbh_rank_ok(np.vstack([shifted, self.C]), n):
                raise ValueError(f"(A, C) not detectable at eigenvalue {lam}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.n == 1 and self.C.shape == (1, 1)


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class DropoutChannel:
    """Packet reception model: P(received | gain g, energy u) = h(g*u).

    kind "bpsk" uses h(x) = Phi(sqrt(x))^bits with Phi the standard normal
    CDF; kind "table" interpolates monotone samples piecewise-linearly and
    holds the end values outside the sampled range.
    """

    kind: str
    bits: int = 4
    x: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "bpsk":
            if self.bits < 1:
                raise ValueError("bits must be a positive integer")
        elif self.kind == "table":
            xs = np.asarray(self.x, dtype=float)
            hs = np.asarray(self.h, dtype=float)
            if xs.ndim != 1 or xs.shape != hs.shape or xs.size < 2:
                raise ValueError("table channel needs matching 1-d x/h samples")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("table x samples must be strictly increasing")
            if np.any(np.diff(hs) < 0):
                raise ValueError("table h samples must be non-decreasing")
            if hs[0] < 0.0 or hs[-1] > 1.0:
                raise ValueError("table h samples must lie in [0, 1]")
            object.__setattr__(self, "x", xs)
            object.__setattr__(self, "h", hs)
        else:
            raise ValueError(f"unknown dropout channel kind {self.kind!r}")

    @classmethod
    def bpsk(cls, bits: int = 4) -> "DropoutChannel":
        return cls(kind="bpsk", bits=bits)

    @classmethod
    def table(cls, x, h) -> "DropoutChannel":
        return cls(kind="table", bits=0, x=x, h=h)

    @classmethod
    def constant(cls, p: float) -> "DropoutChannel":
        """Channel with success probability p regardless of g*u."""
        return cls.table([0.0, 1.0], [p, p])

    @classmethod
    def saturating_exp(cls, scale: float = 1.0, x_max: float = 40.0, n: int = 401) -> "DropoutChannel":
        """Concave table channel h(x) = 1 - exp(-x/scale), sampled."""
        xs = np.linspace(0.0, x_max, n)
        return cls.table(xs, 1.0 - np.exp(-xs / scale))

    def success_prob(self, x) -> np.ndarray | float:
        """Evaluate h at g*u = x (scalar or array)."""
        if self.kind == "bpsk":
            if np.isscalar(x):
                return _bpsk_h(float(x), self.bits)
            xs = np.asarray(x, dtype=float)
            return np.fromiter(
                (_bpsk_h(v, self.bits) for v in xs.ravel()), dtype=float, count=xs.size
            ).reshape(xs.shape)
        out = np.interp(x, self.x, self.h)
        return float(out) if np.isscalar(x) else out


def _bpsk_h(x: float, bits: int) -> float:
    # Phi(sqrt(x)) = erfc(-sqrt(x)/sqrt(2)) / 2
    return (0.5 * math.erfc(-math.sqrt(x) / math.sqrt(2.0))) ** bits


@dataclass(frozen=True)
class StochProcessSpec:
    """Law of an exogenous scalar process ({g_k} gains or {H_k} harvest).

    kind "iid_exponential": i.i.d. exponential with the given mean.
    kind "finite_markov": stationary chain on non-negative states with a
    row-stochastic transition matrix and an initial distribution.
    """

    kind: str
    mean: float = 1.0
    states: np.ndarray | None = None
    transition: np.ndarray | None = None
    initial: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "iid_exponential":
            if not self.mean > 0:
                raise ValueError("exponential mean must be positive")
        elif self.kind == "finite_markov":
            s = np.asarray(self.states, dtype=float)
            t = np.asarray(self.transition, dtype=float)
            if s.ndim != 1 or s.size == 0:
                raise ValueError("states must be a non-empty vector")
            if not np.all(np.isfinite(s)) or np.any(s < 0):
                raise ValueError("states must be finite and non-negative")
            if t.shape != (s.size, s.size):
                raise ValueError("transition matrix shape must match states")
            if np.any(t < 0):
                raise ValueError("transition entries must be non-negative")
            if np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError("transition rows must sum to 1 within 1e-12")
            if self.initial is None:
                init = np.full(s.size, 1.0 / s.size)
            else:
                init = np.asarray(self.initial, dtype=float)
                if init.shape != (s.size,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
                    raise ValueError("initial must be a probability vector over states")
            object.__setattr__(self, "states", s)
            object.__setattr__(self, "transition", t)
            object.__setattr__(self, "initial", init)
        else:
            raise ValueError(f"unknown process kind {self.kind!r}")

    @classmethod
    def iid_exponential(cls, mean: float) -> "StochProcessSpec":
        return cls(kind="iid_exponential", mean=mean)

    @classmethod
    def finite_markov(cls, states, transition, initial=None) -> "StochProcessSpec":
        return cls(kind="finite_markov", mean=0.0, states=states,
                   transition=transition, initial=initial)

    def state_index(self, value: float) -> int:
        idx = int(np.argmin(np.abs(self.states - value)))
        if abs(self.states[idx] - value) > 1e-12:
            raise UnknownState(f"{value} is not a state of the chain")
        return idx


@dataclass(frozen=True)
class Battery:
    """Finite energy store with capacity b_max and initial level b0 (mWh)."""

    b_max: float
    b0: float

    def __post_init__(self):
        if not (0.0 <= self.b0 <= self.b_max):
            raise ValueError("battery requires 0 <= b0 <= b_max")


@dataclass(frozen=True)
class FeedbackChannel:
    """Erasure-with-errors acknowledgment link parameterized by (epsilon, eta).

    The induced 2x3 transition matrix has rows P(gamma_hat | gamma) for
    gamma in {0, 1}; gamma_hat = 2 is the erasure symbol.
    """

    epsilon: float
    eta: float
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0 and 0.0 <= self.eta <= 1.0):
            raise ValueError("epsilon and eta must be probabilities")
        e, n = self.epsilon, self.eta
        m = np.array([
            [(1 - e) * (1 - n), e * (1 - n), n],
            [e * (1 - n), (1 - e) * (1 - n), n],
        ])
        # Row sums are 1 by algebraic identity; guard against bad arithmetic.
        assert np.all(np.abs(m.sum(axis=1) - 1.0) <= 1e-15)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def is_perfect(self) -> bool:
        return self.epsilon == 0.0 and self.eta == 0.0

    def ack_prob(self, gamma_hat: int, gamma: int) -> float:
        return float(self.matrix[gamma, gamma_hat])


@dataclass(frozen=True)
class PacketOutcome:
    """One transmission's true reception flag and its acknowledgment."""

    gamma: int
    gamma_hat: int
    erased: bool = field(init=False)

    def __post_init__(self):
        if self.gamma not in (0, 1) or self.gamma_hat not in (0, 1, 2):
            raise ValueError("gamma must be binary and gamma_hat ternary")
        object.__setattr__(self, "erased", self.gamma_hat == 2)


# ---------------------------------------------------------------------------
# one-step dynamics


def riccati_step(P: np.ndarray, gamma: int, model: SystemModel) -> np.ndarray:
    """Random Riccati operator: A P A^T + Q minus the reception-gated update.

    The output is symmetrized to keep downstream PSD checks meaningful.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, C, Q, R = model.A, model.C, model.Q, model.R
    pred = A @ P @ A.T + Q
    if gamma:
        S = C @ P @ C.T + R
        if np.linalg.cond(S) >= 1e12:
            raise SingularInnovation("C P C^T + R is numerically singular")
        APC = A @ P @ C.T
        pred = pred - APC @ np.linalg.solve(S, APC.T)
    return 0.5 * (pred + pred.T)


def riccati_traces(P: np.ndarray, model: SystemModel) -> tuple[float, float]:
    """(tr(A P A^T + Q), tr of the reception correction term)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, C, Q, R = model.A, model.C, model.Q, model.R
    pred = float(np.trace(A @ P @ A.T + Q))
    S = C @ P @ C.T + R
    if np.linalg.cond(S) >= 1e12:
        raise SingularInnovation("C P C^T + R is numerically singular")
    APC = A @ P @ C.T
    corr = float(np.trace(APC @ np.linalg.solve(S, APC.T)))
    return pred, corr


def packet_success_prob(g: float, u: float, ch: DropoutChannel) -> float:
    """P(packet received | gain g, transmission energy u)."""
    if g < 0 or u < 0:
        raise ValueError("gain and energy must be non-negative")
    return float(ch.success_prob(g * u))


def battery_step(B: float, u: float, H_next: float, bat: Battery) -> float:
    """Battery recursion min{B - u + H', b_max}, clamped to [0, b_max]."""
    if u > B + 1e-12:
        raise InfeasibleAction(f"u={u} exceeds stored energy B={B}")
    if H_next < 0:
        raise ValueError("harvested energy must be non-negative")
    return float(min(max(B - u + H_next, 0.0), bat.b_max))


def sample_feedback(gamma: int, fb: FeedbackChannel, rng: np.random.Generator) -> int:
    """Draw the ternary acknowledgment gamma_hat given the true gamma."""
    row = fb.matrix[gamma]
    v = rng.random()
    if v < row[0]:
        return 0
    if v < row[0] + row[1]:
        return 1
    return 2


def sample_process(spec: StochProcessSpec, prev, rng: np.random.Generator) -> float:
    """Draw the next value of the process given the previous one (or None)."""
    u = rng.random()
    if spec.kind == "iid_exponential":
        return float(-spec.mean * math.log1p(-u))
    if prev is None:
        row = spec.initial
    else:
        row = spec.transition[spec.state_index(float(prev))]
    idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
    idx = min(idx, spec.states.size - 1)
    return float(spec.states[idx])
