"""Grid-based dynamic programming over (covariance-or-belief, gain, harvest, battery).

Three state-axis flavours share one backup engine:

* "dirac"  - covariance grid, perfect acknowledgments (two reception branches);
* "subopt" - covariance-estimate grid driven by the ternary acknowledgment;
* "belief" - sampled belief set over the covariance grid, ternary acknowledgment.

Battery lookups interpolate linearly; covariance/belief lookups use nearest
neighbour (trace distance, L1 weight distance respectively).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .belief import CovGrid
from .errors import GridLookupOutOfRange, NoConvergence
from .model import (
    Battery,
    DropoutChannel,
    FeedbackChannel,
    StochProcessSpec,
    SystemModel,
    packet_success_prob,
    riccati_step,
    riccati_traces,
    rng_stream,
    sample_process,
)

__all__ = [
    "discretize_process",
    "StateGrid",
    "ValueTable",
    "Policy",
    "build_grid",
    "attach_belief_axis",
    "bellman_backup_finite",
    "solve_finite",
    "solve_average",
    "solve_noncausal",
    "q_values",
    "table_to_csv",
]

_FEAS_TOL = 1e-9


def discretize_process(spec: StochProcessSpec, n_bins: int):
    """Representatives and probabilities (or transition rows) of a process.

    i.i.d. exponential laws are split into n_bins equal-probability
    quantile bins represented by their conditional means (closed form);
    finite chains pass through unchanged.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if spec.kind == "finite_markov":
        return spec.states.copy(), spec.transition.copy()
    mu = spec.mean
    with np.errstate(divide="ignore"):
        edges = -mu * np.log1p(-np.arange(n_bins + 1) / n_bins)  # last edge = inf
    reps = np.empty(n_bins)
    for i in range(n_bins):
        a, b = edges[i], edges[i + 1]
        if math.isinf(b):
            reps[i] = mu + a
        else:
            ea, eb = math.exp(-a / mu), math.exp(-b / mu)
            reps[i] = mu + (a * ea - b * eb) / (ea - eb)
    return reps, np.full(n_bins, 1.0 / n_bins)


def _nearest_indices(sorted_vals: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the nearest entry of a sorted array (ties to the lower one)."""
    x = np.asarray(x, dtype=float)
    if sorted_vals.size == 1:
        return np.zeros(x.shape, dtype=np.int64)
    j = np.clip(np.searchsorted(sorted_vals, x), 1, sorted_vals.size - 1)
    left, right = sorted_vals[j - 1], sorted_vals[j]
    return np.where(x - left <= right - x, j - 1, j).astype(np.int64)


@dataclass(frozen=True)
class StateGrid:
    """Discretized state space plus tables derived from the model/channel."""

    cov: CovGrid
    gain_values: np.ndarray
    gain_rows: np.ndarray
    harvest_values: np.ndarray
    harvest_rows: np.ndarray
    battery: np.ndarray
    actions: np.ndarray
    b_max: float
    gain_kind: str
    harvest_kind: str
    gain_init: np.ndarray
    harvest_init: np.ndarray
    # derived from the model
    pred_tr: np.ndarray = field(repr=False)
    corr_tr: np.ndarray = field(repr=False)
    idx0: np.ndarray = field(repr=False)
    idx1: np.ndarray = field(repr=False)
    # optional sampled belief axis: weight vectors over the covariance grid
    belief_w: np.ndarray | None = field(default=None, repr=False)
    # battery-residual interpolation caches
    x_values: np.ndarray = field(default=None, repr=False)
    x_index: np.ndarray = field(default=None, repr=False)
    x_ilo: np.ndarray = field(default=None, repr=False)
    x_frac: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if abs(self.battery[0]) > 1e-12 or abs(self.battery[-1] - self.b_max) > 1e-9:
            raise ValueError("battery axis must span [0, b_max]")
        if np.any(np.diff(self.battery) <= 0) or np.any(np.diff(self.actions) <= 0):
            raise ValueError("battery and action axes must be strictly increasing")
        for rows in (self.gain_rows, self.harvest_rows):
            if np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-10):
                raise ValueError("axis probability rows must sum to 1 within 1e-10")
        object.__setattr__(self, "x_values", None)
        self._build_interp_tables()

    def _build_interp_tables(self):
        bgrid, uvals, bmax = self.battery, self.actions, self.b_max
        feas = uvals[None, :] <= bgrid[:, None] + _FEAS_TOL
        diffs = np.maximum(bgrid[:, None] - uvals[None, :], 0.0)
        xv = np.unique(diffs[feas])
        xidx = np.where(feas, np.searchsorted(xv, diffs), -1).astype(np.int64)
        bb = np.minimum(xv[:, None] + self.harvest_values[None, :], bmax)
        if np.any(bb > bmax + _FEAS_TOL):
            raise GridLookupOutOfRange("successor battery exceeds b_max")
        bb = np.clip(bb, 0.0, bmax)
        ilo = np.clip(np.searchsorted(bgrid, bb) - 1, 0, bgrid.size - 2).astype(np.int64)
        frac = np.clip((bb - bgrid[ilo]) / (bgrid[ilo + 1] - bgrid[ilo]), 0.0, 1.0)
        object.__setattr__(self, "x_values", xv)
        object.__setattr__(self, "x_index", xidx)
        object.__setattr__(self, "x_ilo", ilo)
        object.__setattr__(self, "x_frac", frac)

    def n_states(self, kind: str) -> int:
        return self.belief_w.shape[0] if kind == "belief" else self.cov.size

    def shape(self, kind: str):
        return (self.n_states(kind), self.gain_values.size,
                self.harvest_values.size, self.battery.size)

    def state_traces(self, kind: str) -> np.ndarray:
        """Per-state expected trace (grid trace, or belief mean trace)."""
        if kind == "belief":
            return self.belief_w @ self.cov.traces
        return self.cov.traces

    def ref_index(self, model: SystemModel, kind: str):
        """Default reference state: (P0 or its Dirac belief, 0, 0, B_max)."""
        if kind == "belief":
            s = 0  # the Dirac at P0 is always the first sampled belief
        else:
            s = self.cov.nearest(float(np.trace(model.P0)))
        return (s, 0, 0, self.battery.size - 1)


def build_grid(model: SystemModel, ch: DropoutChannel,
               gain_spec: StochProcessSpec, harvest_spec: StochProcessSpec,
               bat: Battery, *, cov_points: int = 50, gain_bins: int = 8,
               harvest_bins: int = 8, battery_points: int = 21,
               action_points: int = 21, trace_cap: float = 1e6,
               cov_grid: CovGrid | None = None,
               actions: np.ndarray | None = None) -> StateGrid:
    """Resolve model + process laws into a solver-ready grid (scalar models)."""
    if not model.is_scalar:
        raise ValueError("the tabular solvers support scalar models only")
    if battery_points < 2:
        raise ValueError("battery axis needs at least 2 points")
    grid = cov_grid or CovGrid.for_scalar_model(model, cov_points, trace_cap)
    gvals, grows = _axis(gain_spec, gain_bins)
    hvals, hrows = _axis(harvest_spec, harvest_bins)
    battery = np.linspace(0.0, bat.b_max, battery_points)
    if actions is None:
        uvals = np.linspace(0.0, bat.b_max, action_points)
    else:
        uvals = np.unique(np.asarray(actions, dtype=float))
        if uvals[0] < 0 or uvals[-1] > bat.b_max + 1e-12:
            raise ValueError("actions must lie in [0, b_max]")
        if uvals[0] > 0:
            uvals = np.concatenate([[0.0], uvals])  # idling is always feasible
    pred_tr = np.empty(grid.size)
    corr_tr = np.empty(grid.size)
    tr0 = np.empty(grid.size)
    tr1 = np.empty(grid.size)
    for i, P in enumerate(grid.mats):
        pred_tr[i], corr_tr[i] = riccati_traces(P, model)
        tr0[i] = pred_tr[i]
        tr1[i] = pred_tr[i] - corr_tr[i]
    idx0 = _nearest_indices(grid.traces, tr0)
    idx1 = _nearest_indices(grid.traces, tr1)
    g_init = gain_spec.initial if gain_spec.kind == "finite_markov" else grows[0]
    h_init = harvest_spec.initial if harvest_spec.kind == "finite_markov" else hrows[0]
    return StateGrid(
        cov=grid, gain_values=gvals, gain_rows=grows,
        harvest_values=hvals, harvest_rows=hrows,
        battery=battery, actions=uvals, b_max=bat.b_max,
        gain_kind=gain_spec.kind, harvest_kind=harvest_spec.kind,
        gain_init=np.asarray(g_init, dtype=float),
        harvest_init=np.asarray(h_init, dtype=float),
        pred_tr=pred_tr, corr_tr=corr_tr, idx0=idx0, idx1=idx1,
    )


def _axis(spec: StochProcessSpec, n_bins: int):
    reps, law = discretize_process(spec, n_bins)
    if law.ndim == 1:
        law = np.tile(law, (reps.size, 1))
    return reps, law


def attach_belief_axis(grid: StateGrid, model: SystemModel, ch: DropoutChannel,
                       fb: FeedbackChannel, gain_spec: StochProcessSpec,
                       harvest_spec: StochProcessSpec, bat: Battery, *,
                       belief_samples: int = 500, traj_len: int = 20,
                       seed: int = 0, belief_set: np.ndarray | None = None) -> StateGrid:
    """Sample reachable beliefs and return a grid carrying the belief axis.

    Beliefs are propagated from the Dirac at P0 under a uniform-random
    feasible policy, kept as weight vectors over the covariance grid and
    deduplicated within Wasserstein-1 trace distance 1e-6; the Dirac at P0
    is always entry 0.
    """
    if belief_set is not None:
        wmat = np.asarray(belief_set, dtype=float)
    else:
        nK = grid.cov.size
        gaps = np.diff(grid.cov.traces)
        p0_idx = grid.cov.nearest(float(np.trace(model.P0)))
        start = np.zeros(nK)
        start[p0_idx] = 1.0
        collected = [start]
        cums = [np.cumsum(start)[:-1]]
        n_traj = max(1, math.ceil(belief_samples / traj_len))
        fb0, fb1 = fb.matrix[0], fb.matrix[1]
        for t in range(n_traj):
            rng = rng_stream(seed, 90, t)
            w = start.copy()
            B = bat.b0
            g = sample_process(gain_spec, None, rng)
            hv = sample_process(harvest_spec, None, rng)
            for _ in range(traj_len):
                u = rng.uniform(0.0, B) if B > 0 else 0.0
                h = packet_success_prob(g, u, ch)
                gam = 1 if rng.random() < h else 0
                r = rng.random()
                row = fb.matrix[gam]
                ghat = 0 if r < row[0] else (1 if r < row[0] + row[1] else 2)
                l0, l1 = fb0[ghat] * (1.0 - h), fb1[ghat] * h
                z = l0 + l1
                wn = np.zeros(nK)
                np.add.at(wn, grid.idx0, (l0 / z) * w)
                np.add.at(wn, grid.idx1, (l1 / z) * w)
                w = wn / wn.sum()
                cw = np.cumsum(w)[:-1]
                if all((np.abs(cw - c) * gaps).sum() > 1e-6 for c in cums):
                    collected.append(w.copy())
                    cums.append(cw)
                g = sample_process(gain_spec, g, rng)
                hv = sample_process(harvest_spec, hv, rng)
                B = min(max(B - u + hv, 0.0), bat.b_max)
        wmat = np.asarray(collected)
    wmat.setflags(write=False)
    return StateGrid(
        cov=grid.cov, gain_values=grid.gain_values, gain_rows=grid.gain_rows,
        harvest_values=grid.harvest_values, harvest_rows=grid.harvest_rows,
        battery=grid.battery, actions=grid.actions, b_max=grid.b_max,
        gain_kind=grid.gain_kind, harvest_kind=grid.harvest_kind,
        gain_init=grid.gain_init, harvest_init=grid.harvest_init,
        pred_tr=grid.pred_tr, corr_tr=grid.corr_tr,
        idx0=grid.idx0, idx1=grid.idx1, belief_w=wmat,
    )


@dataclass
class ValueTable:
    """Tabulated value function over the state grid."""

    values: np.ndarray
    stage: int | str
    rho: float | None = None
    spans: list | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("value table contains non-finite entries")
        _check_battery_monotone(self.values)


@dataclass
class Policy:
    """Energy allocation rule tabulated over the state grid."""

    actions: np.ndarray
    kind: str
    grid: StateGrid
    stage: int | str = "stationary"

    def __post_init__(self):
        b = self.grid.battery[None, None, None, :]
        if np.any(self.actions < -1e-12) or np.any(self.actions > b + 1e-9):
            raise ValueError("policy violates 0 <= u <= B")


def _check_battery_monotone(values: np.ndarray) -> None:
    # more stored energy can never hurt; tolerance scales with magnitude
    slack = 1e-8 * np.maximum(1.0, np.abs(values[..., :-1]))
    if np.any(np.diff(values, axis=-1) > slack):
        raise AssertionError("value table is not non-increasing in battery")


def _h_table(ch: DropoutChannel, grid: StateGrid, second: np.ndarray) -> np.ndarray:
    return np.asarray(ch.success_prob(np.outer(grid.gain_values, second)))


def stage_tables(grid: StateGrid, model: SystemModel, ch: DropoutChannel,
                 fb: FeedbackChannel, kind: str):
    """(stage cost, branch weights, branch successors) for one axis flavour."""
    h_gu = _h_table(ch, grid, grid.actions)  # (nG, nU)
    nG, nU = h_gu.shape
    if kind == "dirac":
        if not fb.is_perfect:
            raise ValueError("the covariance-axis solver requires perfect acknowledgments")
        nS = grid.cov.size
        stage = grid.pred_tr[:, None, None] - h_gu[None] * grid.corr_tr[:, None, None]
        bw = np.empty((nS, nG, nU, 2))
        bw[..., 0] = 1.0 - h_gu[None]
        bw[..., 1] = h_gu[None]
        succ = np.empty((nS, nG, nU, 2), dtype=np.int64)
        succ[..., 0] = grid.idx0[:, None, None]
        succ[..., 1] = grid.idx1[:, None, None]
        return stage, bw, succ
    fb0, fb1 = fb.matrix[0], fb.matrix[1]
    like0 = fb0[None, None, :] * (1.0 - h_gu)[:, :, None]   # (nG, nU, 3)
    like1 = fb1[None, None, :] * h_gu[:, :, None]
    z = like0 + like1
    if kind == "subopt":
        nS = grid.cov.size
        stage = grid.pred_tr[:, None, None] - h_gu[None] * grid.corr_tr[:, None, None]
        tr1 = grid.pred_tr - grid.corr_tr
        with np.errstate(invalid="ignore"):
            w1 = np.where(z > 0, like1 / np.where(z > 0, z, 1.0), 0.0)
        # convex combination of the two reception branches, per acknowledgment
        phat = (grid.pred_tr[:, None, None, None]
                - w1[None] * grid.corr_tr[:, None, None, None])
        succ = _nearest_indices(grid.cov.traces, phat)
        bw = np.broadcast_to(z[None], (nS, nG, nU, 3)).copy()
        succ[np.broadcast_to(z[None] <= 0, succ.shape)] = 0
        return stage, bw, succ
    if kind == "belief":
        if grid.belief_w is None:
            raise ValueError("grid has no belief axis; use attach_belief_axis")
        dot_pred = grid.belief_w @ grid.pred_tr
        dot_corr = grid.belief_w @ grid.corr_tr
        stage = dot_pred[:, None, None] - h_gu[None] * dot_corr[:, None, None]
        succ, bw2 = K.belief_successors(
            np.ascontiguousarray(grid.belief_w), grid.idx0, grid.idx1,
            np.ascontiguousarray(np.diff(grid.cov.traces)),
            h_gu, np.ascontiguousarray(fb0), np.ascontiguousarray(fb1))
        nS = grid.belief_w.shape[0]
        bw = np.broadcast_to(bw2[None], (nS, nG, nU, 3)).copy()
        return stage, bw, np.ascontiguousarray(succ)
    raise ValueError(f"unknown solver kind {kind!r}")


def terminal_tables(grid: StateGrid, ch: DropoutChannel, kind: str):
    """Final-epoch value (all stored energy transmitted) and its policy."""
    h_gb = _h_table(ch, grid, grid.battery)  # (nG, nB)
    if kind == "belief":
        pred = grid.belief_w @ grid.pred_tr
        corr = grid.belief_w @ grid.corr_tr
    else:
        pred, corr = grid.pred_tr, grid.corr_tr
    nH = grid.harvest_values.size
    v = pred[:, None, None, None] - h_gb[None, :, None, :] * corr[:, None, None, None]
    v = np.broadcast_to(v, (pred.size, h_gb.shape[0], nH, grid.battery.size)).copy()
    actions = np.broadcast_to(grid.battery, v.shape).copy()
    return v, actions


def _sweep(v_next: np.ndarray, grid: StateGrid, tables):
    stage, bw, succ = tables
    wx = K.expected_next_value(np.ascontiguousarray(v_next), grid.gain_rows,
                               grid.harvest_rows, grid.x_ilo, grid.x_frac)
    return K.backup(np.ascontiguousarray(stage), np.ascontiguousarray(bw),
                    succ, wx, grid.x_index)


def bellman_backup_finite(v_next: ValueTable, grid: StateGrid, model: SystemModel,
                          ch: DropoutChannel, fb: FeedbackChannel, stage_k: int,
                          kind: str = "dirac") -> tuple[ValueTable, Policy]:
    """One backward Bellman step from the stage-(k+1) table."""
    tables = stage_tables(grid, model, ch, fb, kind)
    v, pol = _sweep(v_next.values, grid, tables)
    return (ValueTable(v, stage_k),
            Policy(grid.actions[pol], kind, grid, stage=stage_k))


def solve_finite(T: int, grid: StateGrid, model: SystemModel, ch: DropoutChannel,
                 fb: FeedbackChannel, kind: str = "dirac"):
    """Backward induction over T transmission epochs.

    The final epoch uses the all-available-energy terminal rule; earlier
    epochs minimize stage cost plus expected continuation.  Returns the
    per-epoch value tables and policies (index 0 first).
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    v_term, a_term = terminal_tables(grid, ch, kind)
    vs = [ValueTable(v_term, T - 1)]
    pols = [Policy(a_term, kind, grid, stage=T - 1)]
    if T > 1:
        tables = stage_tables(grid, model, ch, fb, kind)
        for k in range(T - 2, -1, -1):
            v, pol = _sweep(vs[0].values, grid, tables)
            vs.insert(0, ValueTable(v, k))
            pols.insert(0, Policy(grid.actions[pol], kind, grid, stage=k))
    return vs, pols


def solve_suboptimal_finite(T, grid, model, ch, fb):
    """Finite-horizon DP on the covariance-estimate axis (ternary feedback)."""
    return solve_finite(T, grid, model, ch, fb, kind="subopt")


def solve_average(grid: StateGrid, model: SystemModel, ch: DropoutChannel,
                  fb: FeedbackChannel, kind: str = "dirac", tol: float = 1e-6,
                  max_iters: int = 2000, ref_state=None):
    """Relative value iteration for the long-run average cost.

    Stops when the span of (T V - V) drops below tol; the average cost is
    the midpoint of the final span bracket.  Raises NoConvergence with the
    last span if max_iters is exhausted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    tables = stage_tables(grid, model, ch, fb, kind)
    ref = grid.ref_index(model, kind) if ref_state is None else tuple(ref_state)
    v = np.zeros(grid.shape(kind))
    spans = []
    for it in range(max_iters):
        tv, pol = _sweep(v, grid, tables)
        diff = tv - v
        span = float(diff.max() - diff.min())
        spans.append(span)
        rho = 0.5 * float(diff.max() + diff.min())
        v = tv - tv[ref]
        if span < tol:
            table = ValueTable(v, "stationary", rho=rho, spans=spans)
            return rho, table, Policy(grid.actions[pol], kind, grid)
    raise NoConvergence(max_iters, spans[-1])


def q_values(v: np.ndarray, grid: StateGrid, tables) -> np.ndarray:
    """Stationary stage objective L(B, u) per state; NaN where u > B."""
    stage, bw, succ = tables
    wx = K.expected_next_value(np.ascontiguousarray(v), grid.gain_rows,
                               grid.harvest_rows, grid.x_ilo, grid.x_frac)
    nS, nG, nU = stage.shape
    nH = grid.harvest_values.size
    nB = grid.battery.size
    out = np.full((nS, nG, nH, nB, nU), np.nan)
    g_ix = np.arange(nG)[None, :]
    for u in range(nU):
        cont = np.zeros((nS, nG, nH, nB))
        feas = grid.x_index[:, u] >= 0
        xi = np.clip(grid.x_index[:, u], 0, None)
        for br in range(bw.shape[3]):
            w = bw[:, :, u, br]
            if not np.any(w != 0.0):
                continue
            picked = wx[succ[:, :, u, br][:, :, None], g_ix[:, :, None], :, xi[None, None, :]]
            cont += w[:, :, None, None] * np.moveaxis(picked, 3, 2)
        qv = stage[:, :, u][:, :, None, None] + cont
        qv[:, :, :, ~feas] = np.nan
        out[..., u] = qv
    return out


def solve_noncausal(realization, T: int, model: SystemModel, ch: DropoutChannel,
                    bat: Battery, grid: StateGrid, rng=None):
    """Clairvoyant DP for one known (gain, harvest) path.

    realization supplies (g_k, H_{k+1}) pairs for k = 0..T-1.  Returns the
    expected cost from (P0, b0) plus a representative rollout of the
    chosen energies (reception outcomes drawn from rng).
    """
    g_seq = np.asarray([gv for gv, _ in realization], dtype=float)[:T]
    h_next = np.asarray([hv for _, hv in realization], dtype=float)[:T]
    if g_seq.size < T:
        raise ValueError("realization shorter than the horizon")
    h_gu_seq = np.asarray(ch.success_prob(g_seq[:, None] * grid.actions[None, :]))
    h_term = np.asarray(ch.success_prob(g_seq[T - 1] * grid.battery))
    p0_idx = grid.cov.nearest(float(np.trace(model.P0)))
    value = float(K.noncausal_value(
        grid.pred_tr, grid.corr_tr, grid.idx0, grid.idx1,
        h_gu_seq, h_term, h_next, grid.battery, grid.actions,
        grid.b_max, p0_idx, bat.b0))
    energies = _noncausal_rollout(g_seq, h_next, T, model, ch, bat, grid,
                                  rng or rng_stream(0, 77))
    return value, energies


def _noncausal_rollout(g_seq, h_next, T, model, ch, bat, grid, rng):
    # per-stage tables (value + argmin) via the vectorized fallback sweep
    nB = grid.battery.size
    h_term = np.asarray(ch.success_prob(g_seq[T - 1] * grid.battery))
    v = grid.pred_tr[:, None] - np.outer(grid.corr_tr, h_term)
    act_stages = [None] * T
    act_stages[T - 1] = np.broadcast_to(grid.battery, v.shape).copy()
    val_stages = [None] * T
    val_stages[T - 1] = v
    for k in range(T - 2, -1, -1):
        hn = h_next[k]
        best = np.full(v.shape, np.inf)
        act = np.zeros(v.shape)
        for j in range(grid.actions.size):
            feas = grid.actions[j] <= grid.battery + _FEAS_TOL
            if not np.any(feas):
                continue
            bb = np.clip(grid.battery - grid.actions[j] + hn, 0.0, grid.b_max)
            i0 = np.clip(np.searchsorted(grid.battery, bb) - 1, 0, nB - 2)
            f = np.clip((bb - grid.battery[i0]) / (grid.battery[i0 + 1] - grid.battery[i0]), 0.0, 1.0)
            v0 = (1.0 - f) * v[grid.idx0][:, i0] + f * v[grid.idx0][:, i0 + 1]
            v1 = (1.0 - f) * v[grid.idx1][:, i0] + f * v[grid.idx1][:, i0 + 1]
            h = float(ch.success_prob(g_seq[k] * grid.actions[j]))
            qv = (grid.pred_tr - h * grid.corr_tr)[:, None] + (1.0 - h) * v0 + h * v1
            qv[:, ~feas] = np.inf
            better = qv < best
            best = np.where(better, qv, best)
            act = np.where(better, grid.actions[j], act)
        v = best
        val_stages[k] = v
        act_stages[k] = act
    # rollout
    p_idx = grid.cov.nearest(float(np.trace(model.P0)))
    B = bat.b0
    energies = np.empty(T)
    for k in range(T):
        u = float(np.interp(B, grid.battery, act_stages[k][p_idx]))
        u = min(max(u, 0.0), B)
        energies[k] = u
        h = float(ch.success_prob(g_seq[k] * u))
        gam = 1 if rng.random() < h else 0
        p_idx = int(grid.idx1[p_idx] if gam else grid.idx0[p_idx])
        if k + 1 < T:
            B = min(max(B - u + h_next[k], 0.0), grid.b_max)
    return energies


def table_to_csv(path, grid: StateGrid, value: ValueTable, policy: Policy) -> None:
    """One row per grid state: axis coordinates, value, action."""
    traces = grid.state_traces(policy.kind)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state_index", "state_trace", "gain", "harvest",
                    "battery", "value", "action"])
        nS, nG, nH, nB = value.values.shape
        for s in range(nS):
            for g in range(nG):
                for h in range(nH):
                    for b in range(nB):
                        w.writerow([s, repr(float(traces[s])),
                                    repr(float(grid.gain_values[g])),
                                    repr(float(grid.harvest_values[h])),
                                    repr(float(grid.battery[b])),
                                    repr(float(value.values[s, g, h, b])),
                                    repr(float(policy.actions[s, g, h, b]))])
