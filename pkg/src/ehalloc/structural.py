"""Threshold policies for binary energy levels and structure verifiers.

The gradient-estimate threshold search runs inside relative value
iteration: each sweep does one two-sided-difference update of the battery
threshold per (covariance, gain, harvest) slice, warm-starting between
sweeps, with several restarts from evenly spaced initial thresholds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dp import Policy, StateGrid, q_values, stage_tables
from .errors import NoConvergence

__all__ = [
    "BinaryActionSet",
    "ThresholdPolicy",
    "GradientSchedule",
    "clipped_policy_from_unconstrained",
    "threshold_search",
    "solve_threshold_average",
    "verify_monotone_policy",
    "verify_submodular",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BinaryActionSet:
    """Two transmission energy levels E0 < E1."""

    e0: float
    e1: float

    def __post_init__(self):
        if not (0.0 <= self.e0 < self.e1):
            raise ValueError("binary action set requires 0 <= E0 < E1")


@dataclass
class ThresholdPolicy:
    """Battery-threshold rule: transmit at E0 iff B <= B*(state slice).

    Infeasible picks fall back to E0 (or to idling when even E0 exceeds
    the stored energy); fallbacks are counted and logged.
    """

    b_star: np.ndarray
    actions: BinaryActionSet | None = None
    grid: StateGrid | None = None
    fallback_events: int = 0

    def action(self, s: int, g: int, h: int, B: float) -> float:
        u = self.actions.e0 if B <= self.b_star[s, g, h] else self.actions.e1
        if u > B + 1e-12:
            self.fallback_events += 1
            log.debug("threshold feasibility fallback at slice (%d,%d,%d)", s, g, h)
            u = self.actions.e0 if self.actions.e0 <= B + 1e-12 else 0.0
        return u

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state_index", "gain_index", "harvest_index", "b_star"])
            it = np.ndindex(*self.b_star.shape)
            for idx in it:
                w.writerow([*idx, repr(float(self.b_star[idx]))])


@dataclass(frozen=True)
class GradientSchedule:
    """Decreasing step sizes omega_n = omega/(n+1)^kappa, same for sigma."""

    omega: float = 0.1
    sigma_step: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        if self.omega <= 0 or self.sigma_step <= 0:
            raise ValueError("omega and sigma_step must be positive")
        if not (0.5 < self.kappa <= 1.0):
            raise ValueError("kappa must lie in (0.5, 1]")

    def omega_n(self, n: int) -> float:
        return self.omega / (n + 1) ** self.kappa

    def sigma_n(self, n: int) -> float:
        return self.sigma_step / (n + 1) ** self.kappa

    def step_sums(self) -> tuple[bool, bool]:
        """(sum sigma_n diverges, sum sigma_n^2 converges) -- analytic."""
        return self.kappa <= 1.0, 2.0 * self.kappa > 1.0


def clipped_policy_from_unconstrained(u_star: float, B: float) -> float:
    """Clip the unconstrained minimizer into the feasible interval [0, B]."""
    if u_star <= 0.0:
        return 0.0
    if u_star >= B:
        return B
    return u_star


def threshold_search(initial_b_star, schedule: GradientSchedule, eval_fn,
                     n_iters: int, b_max: float | None = None,
                     actions: BinaryActionSet | None = None,
                     grid: StateGrid | None = None) -> ThresholdPolicy:
    """Two-sided-difference descent on the threshold tensor.

    eval_fn maps a threshold tensor to the stage objective J elementwise.
    Iterates leaving [-b_max, 2 b_max] are clipped back and counted.
    """
    b = np.array(initial_b_star, dtype=float, copy=True)
    lo, hi = (-b_max, 2.0 * b_max) if b_max is not None else (-np.inf, np.inf)
    diverged = 0
    for n in range(n_iters):
        w = schedule.omega_n(n)
        s = schedule.sigma_n(n)
        grad = (eval_fn(b + w) - eval_fn(b - w)) / (2.0 * w)
        b = b - s * np.asarray(grad, dtype=float)
        out = (b < lo) | (b > hi)
        if np.any(out):
            diverged += int(np.count_nonzero(out))
            log.warning("threshold left [-b_max, 2 b_max] at iteration %d; clipped", n)
            b = np.clip(b, lo, hi)
    return ThresholdPolicy(b_star=b, actions=actions, grid=grid,
                           fallback_events=diverged)


def _pick_actions(grid: StateGrid, bs: np.ndarray, acts: BinaryActionSet,
                  idx_zero: int, idx_e0: int, idx_e1: int):
    """Action index per (slice, battery point) under thresholds bs."""
    bgrid = grid.battery
    pick = np.where(bgrid[None, None, None, :] <= bs[..., None], idx_e0, idx_e1)
    fall_e1 = (pick == idx_e1) & (acts.e1 > bgrid + 1e-12)
    pick = np.where(fall_e1, idx_e0, pick)
    fall_e0 = (pick == idx_e0) & (acts.e0 > bgrid + 1e-12)
    pick = np.where(fall_e0, idx_zero, pick)
    return pick, int(np.count_nonzero(fall_e1) + np.count_nonzero(fall_e0))


def _action_indices(grid: StateGrid, acts: BinaryActionSet):
    def locate(v):
        j = int(np.argmin(np.abs(grid.actions - v)))
        if abs(grid.actions[j] - v) > 1e-9:
            raise ValueError(f"action level {v} is not on the grid's action axis")
        return j
    return locate(0.0), locate(acts.e0), locate(acts.e1)


def solve_threshold_average(grid: StateGrid, model, ch, fb, acts: BinaryActionSet,
                            schedule: GradientSchedule | None = None, *,
                            tol: float = 1e-6, max_iters: int = 2000,
                            search_iters: int = 60, restarts: int = 5,
                            ref_state=None):
    """Battery-threshold search inside the binary-action relative value
    iteration.

    The relative value function is iterated to convergence first; the
    per-slice sweep objective J(B*) (battery-grid average of the selected
    stage-plus-continuation values) is then descended with the two-sided
    difference schedule, one pass per iteration, warm-starting between
    passes.  Each evenly spaced restart is scored by policy-evaluation
    average cost and the best wins.

    Returns (ThresholdPolicy, rho, per-restart rhos).
    """
    schedule = schedule or GradientSchedule()
    tables = stage_tables(grid, model, ch, fb, "dirac")
    idx_zero, idx_e0, idx_e1 = _action_indices(grid, acts)
    ref = grid.ref_index(model, "dirac") if ref_state is None else tuple(ref_state)
    shape3 = grid.shape("dirac")[:3]
    fallbacks = 0

    def selected_values(q, bs):
        nonlocal fallbacks
        pick, n_fall = _pick_actions(grid, bs, acts, idx_zero, idx_e0, idx_e1)
        fallbacks += n_fall
        return np.take_along_axis(q, pick[..., None], axis=-1)[..., 0]

    # relative value iterates of the binary-action Bellman equation
    v = np.zeros(grid.shape("dirac"))
    for _ in range(max_iters):
        q = q_values(v, grid, tables)
        tv = np.nanmin(q, axis=-1)
        diff = tv - v
        span = float(diff.max() - diff.min())
        v = tv - tv[ref]
        if span < tol:
            break
    else:
        raise NoConvergence(max_iters, span)
    q = q_values(v, grid, tables)

    def slice_objective(bs):
        return np.nanmean(selected_values(q, bs), axis=-1)

    best = None
    restart_rhos = []
    for b0 in np.linspace(0.0, grid.b_max, restarts):
        searched = threshold_search(np.full(shape3, b0), schedule,
                                    slice_objective, search_iters,
                                    b_max=grid.b_max, actions=acts, grid=grid)
        bs = searched.b_star
        rho = _policy_eval_rho(grid, tables, lambda qq: selected_values(qq, bs),
                               ref, tol, max_iters)
        restart_rhos.append(rho)
        if best is None or rho < best[1]:
            best = (bs, rho)
    policy = ThresholdPolicy(b_star=best[0], actions=acts, grid=grid,
                             fallback_events=fallbacks)
    return policy, best[1], restart_rhos


def _policy_eval_rho(grid, tables, select, ref, tol, max_iters):
    v = np.zeros(grid.shape("dirac"))
    for _ in range(max_iters):
        q = q_values(v, grid, tables)
        tv = select(q)
        diff = tv - v
        span = float(diff.max() - diff.min())
        rho = 0.5 * float(diff.max() + diff.min())
        v = tv - tv[ref]
        if span < tol:
            return rho
    raise NoConvergence(max_iters, span)


@dataclass
class StructureReport:
    """Scan result: list of violating index tuples with their margins."""

    checked: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_monotone_policy(policy: Policy, tol: float = 1e-9) -> StructureReport:
    """Scan every (state, gain, harvest) slice for u decreasing in battery."""
    a = policy.actions
    drops = a[..., 1:] - a[..., :-1]
    bad = np.argwhere(drops < -tol)
    report = StructureReport(checked=int(np.prod(drops.shape)))
    for s, g, h, b in bad:
        report.violations.append(((int(s), int(g), int(h), int(b)),
                                  float(drops[s, g, h, b])))
    return report


def verify_submodular(L: np.ndarray, tol: float = 1e-8) -> StructureReport:
    """Four-point submodularity check on every (B, B') x (u, u') rectangle.

    L has battery and action as its last two axes; NaN marks infeasible
    (u > B) entries, which form a suffix of each battery row.
    """
    arr = np.asarray(L, dtype=float)
    nB, nU = arr.shape[-2], arr.shape[-1]
    flat = arr.reshape(-1, nB, nU)
    b1s, b2s = np.triu_indices(nB, k=1)
    report = StructureReport(checked=0)
    for s in range(flat.shape[0]):
        Ls = flat[s]
        D = Ls[b2s, :] - Ls[b1s, :]                     # (nPairs, nU)
        valid = np.isfinite(Ls[b1s, :])                 # feasible at the smaller B
        report.checked += int(valid.sum())
        Dm = np.where(valid, D, np.inf)
        cmin = np.minimum.accumulate(Dm, axis=1)
        # D must be non-increasing in u: compare to the running minimum
        excess = Dm[:, 1:] - cmin[:, :-1]
        bad = np.argwhere((excess > tol) & valid[:, 1:])
        for pr, u in bad:
            report.violations.append(
                ((s, int(b1s[pr]), int(b2s[pr]), int(u + 1)), float(excess[pr, u])))
    return report
