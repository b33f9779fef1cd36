"""Average-reward solver for the secondary user's (belief, packet-delay) MDP.

The state is (lambda, l): the belief that the licensed channel is idle and the
delay of the packet in hand.  Three actions are available each slot:

    0  wait            pay the delay penalty, keep the packet
    1  sense, wait     sense; transmit on idle, otherwise wait
    2  sense, fallback  sense; transmit on idle, otherwise use the dedicated channel

Relative value iteration over a belief grid produces the relative value table
V and the average gain per slot.  States at the delay cap are restricted to
the fallback action so every packet leaves the system in bounded time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .channel import ChannelParams, stationary_idle, update_unsensed
from .errors import DegenerateChain, NoConvergence

DEFAULT_L_MAX = 50
DEFAULT_GRID_POINTS = 1001
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
# Weight on the fresh backup in the damped iteration.  Damping keeps the
# iteration convergent when the induced chain has periodic structure.
DEFAULT_DAMPING = 0.5
TIE_TOL = 1e-12


class Action(IntEnum):
    WAIT = 0
    SENSE_WAIT = 1
    SENSE_FALLBACK = 2


@dataclass(frozen=True)
class RewardParams:
    """Per-slot rewards and costs, all in one tradeoff unit.

    phi: bits delivered per transmitted packet
    c_s: energy cost of sensing once
    p_p: price of one transmission over the licensed channel
    p_3g: price of one transmission over the dedicated channel
    gamma: delay-penalty coefficient; the penalty for holding a packet of
        delay l is gamma * log(l) (natural log), zero at l = 1
    penalty_on_transmit: when True the delay penalty is also charged on slots
        where the packet is transmitted (alternative accounting convention;
        the default charges it only on slots where the packet is kept)
    """

    phi: float
    c_s: float
    p_p: float
    p_3g: float
    gamma: float
    penalty_on_transmit: bool = False

    def __post_init__(self):
        if self.c_s < 0:
            raise ValueError(f"c_s={self.c_s} must be >= 0")
        if self.gamma < 0:
            raise ValueError(f"gamma={self.gamma} must be >= 0")
        if self.phi - self.c_s - self.p_p < 0:
            raise ValueError(
                f"phi - c_s - p_p = {self.phi - self.c_s - self.p_p} must be >= 0 "
                "(idle transmission must pay for itself)"
            )
        if not self.p_3g > self.p_p:
            raise ValueError(f"p_3g={self.p_3g} must exceed p_p={self.p_p}")

    @property
    def penalty(self) -> "DelayPenalty":
        return DelayPenalty(self.gamma)


@dataclass(frozen=True)
class DelayPenalty:
    """Increasing penalty gamma * log(l) for holding a packet of delay l >= 1."""

    gamma: float

    def __call__(self, delay) -> float:
        if delay < 1:
            raise ValueError(f"delay={delay} must be >= 1")
        return self.gamma * math.log(delay)

    def table(self, l_max: int) -> np.ndarray:
        return self.gamma * np.log(np.arange(1, l_max + 1, dtype=float))


class BeliefGrid:
    """Sorted belief grid: uniform points with the channel's special beliefs
    (alpha, beta, pi0) present exactly.

    Special values close to a uniform point replace it (keeping spacing nearly
    uniform); otherwise they are inserted.  0 and 1 are always members.
    """

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        if points.ndim != 1 or len(points) < 2:
            raise ValueError("grid needs at least two points")
        if not (np.all(np.diff(points) > 0) and points[0] == 0.0 and points[-1] == 1.0):
            raise ValueError("grid must be strictly increasing from 0 to 1")
        self.points = points

    @classmethod
    def for_channel(cls, p: ChannelParams, n_points: int = DEFAULT_GRID_POINTS) -> "BeliefGrid":
        base = np.linspace(0.0, 1.0, n_points)
        spacing = 1.0 / (n_points - 1)
        pts = list(base)
        moved = set()
        for x in (p.alpha, p.beta, stationary_idle(p)):
            j = int(round(x / spacing))
            j = min(max(j, 0), n_points - 1)
            if pts[j] == x:
                continue
            # Replace the nearest interior uniform point so cells stay near
            # uniform width; fall back to insertion when that point already
            # holds another special value or x abuts an endpoint.
            if 0 < j < n_points - 1 and j not in moved:
                pts[j] = x
                moved.add(j)
            else:
                pts.append(x)
        out = np.unique(np.asarray(sorted(pts), dtype=float))
        return cls(out)

    def __len__(self):
        return len(self.points)

    @property
    def resolution(self) -> float:
        return float(np.max(np.diff(self.points)))

    def index_of(self, x: float) -> int:
        """Index of an exact grid member."""
        i = int(np.searchsorted(self.points, x))
        if i >= len(self.points) or self.points[i] != x:
            raise ValueError(f"{x} is not a grid point")
        return i

    def interp_weights(self, x: np.ndarray):
        """Bracketing indices and left-point weights for linear interpolation."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        hi = np.clip(np.searchsorted(self.points, x, side="left"), 1, len(self.points) - 1)
        lo = hi - 1
        width = self.points[hi] - self.points[lo]
        w_lo = (self.points[hi] - x) / width
        return lo, hi, w_lo


@dataclass
class ValueFunction:
    """Converged relative value table over (belief grid x delay) plus the gain.

    values[i, l-1] is the relative value at grid point i and delay l; the value
    at the reference state (grid point nearest pi0, delay 1) is zero.  actions
    holds the optimal action index per state.
    """

    grid: BeliefGrid
    values: np.ndarray
    actions: np.ndarray
    gain: float
    l_max: int
    channel: ChannelParams
    rewards: RewardParams
    iterations: int = 0
    residual_span: float = float("nan")
    tol: float = DEFAULT_TOL
    reference_index: int = 0

    def value(self, belief: float, delay: int) -> float:
        return interpolate(self, belief, delay)

    def action(self, belief: float, delay: int) -> Action:
        """Optimal action at an arbitrary belief: the action recorded at the
        nearest grid point."""
        delay = min(delay, self.l_max)
        i = int(np.argmin(np.abs(self.grid.points - belief)))
        return Action(int(self.actions[i, delay - 1]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("belief,delay,value,action\n")
            for l in range(1, self.l_max + 1):
                for i, b in enumerate(self.grid.points):
                    fh.write(
                        f"{float(b)!r},{l},{float(self.values[i, l - 1])!r},"
                        f"{int(self.actions[i, l - 1])}\n"
                    )

    def metadata(self) -> dict:
        return {
            "gain": self.gain,
            "l_max": self.l_max,
            "grid_points": len(self.grid),
            "alpha": self.channel.alpha,
            "beta": self.channel.beta,
            "phi": self.rewards.phi,
            "c_s": self.rewards.c_s,
            "p_p": self.rewards.p_p,
            "p_3g": self.rewards.p_3g,
            "gamma": self.rewards.gamma,
            "iterations": self.iterations,
            "residual_span": self.residual_span,
            "tol": self.tol,
            "reference_belief": float(self.grid.points[self.reference_index]),
        }


def interpolate(vf: ValueFunction, belief: float, delay: int) -> float:
    """Piecewise-linear interpolation of the value table in the belief axis.

    Exact at grid points.  Delays above the cap evaluate at the cap.
    """
    delay = min(delay, vf.l_max)
    col = vf.values[:, delay - 1]
    lo, hi, w = vf.grid.interp_weights(np.asarray([belief]))
    return float(w[0] * col[lo[0]] + (1.0 - w[0]) * col[hi[0]])


def q_wait(vf: ValueFunction, belief: float, delay: int) -> float:
    """Action value of waiting: -f(l) + V(unsensed update, l+1)."""
    f = vf.rewards.penalty(delay)
    nxt = update_unsensed(vf.channel, belief)
    return -f + interpolate(vf, nxt, min(delay + 1, vf.l_max))


def q_sense_wait(vf: ValueFunction, belief: float, delay: int) -> float:
    """Action value of sensing with wait on busy.

    -c_s + lambda (phi - p_p + V(alpha, 1)) + (1-lambda)(-f(l) + V(beta, l+1)).
    """
    r = vf.rewards
    f = r.penalty(delay)
    extra = r.penalty(delay) if r.penalty_on_transmit else 0.0
    succeed = r.phi - r.p_p - extra + interpolate(vf, vf.channel.alpha, 1)
    fail = -f + interpolate(vf, vf.channel.beta, min(delay + 1, vf.l_max))
    return -r.c_s + belief * succeed + (1.0 - belief) * fail


def q_sense_fallback(vf: ValueFunction, belief: float, delay: int) -> float:
    """Action value of sensing with dedicated fallback on busy.

    phi - c_s + lambda (-p_p + V(alpha, 1)) + (1-lambda)(-p_3g + V(beta, 1)).
    Independent of the delay under the default accounting convention.
    """
    r = vf.rewards
    extra = r.penalty(delay) if r.penalty_on_transmit else 0.0
    succeed = -r.p_p + interpolate(vf, vf.channel.alpha, 1)
    fail = -r.p_3g + interpolate(vf, vf.channel.beta, 1)
    return r.phi - r.c_s - extra + belief * succeed + (1.0 - belief) * fail


@dataclass
class _Backup:
    """Precomputed index structure for vectorized Bellman backups."""

    f: np.ndarray          # delay penalty per delay column
    lo: np.ndarray         # interpolation of the unsensed belief update
    hi: np.ndarray
    w: np.ndarray
    i_alpha: int
    i_beta: int
    ref: int
    lam: np.ndarray        # grid beliefs as a column


def _prepare(p: ChannelParams, r: RewardParams, grid: BeliefGrid, l_max: int) -> _Backup:
    pts = grid.points
    omega = p.beta + (p.alpha - p.beta) * pts
    lo, hi, w = grid.interp_weights(omega)
    return _Backup(
        f=r.penalty.table(l_max),
        lo=lo,
        hi=hi,
        w=w,
        i_alpha=grid.index_of(p.alpha),
        i_beta=grid.index_of(p.beta),
        ref=grid.index_of(stationary_idle(p)),
        lam=pts[:, None],
    )


def _apply_backup(v: np.ndarray, bk: _Backup, r: RewardParams):
    """One full Bellman operator application.  Returns (q0, q1, q2) stacked."""
    # Continuation table for delay l+1, capped at l_max.
    v_next = np.concatenate([v[:, 1:], v[:, -1:]], axis=1)
    f_row = bk.f[None, :]
    extra = f_row if r.penalty_on_transmit else 0.0

    q0 = -f_row + bk.w[:, None] * v_next[bk.lo, :] + (1.0 - bk.w)[:, None] * v_next[bk.hi, :]

    v_alpha1 = v[bk.i_alpha, 0]
    v_beta_next = v_next[bk.i_beta, :][None, :]
    q1 = (
        -r.c_s
        + bk.lam * (r.phi - r.p_p - extra + v_alpha1)
        + (1.0 - bk.lam) * (-f_row + v_beta_next)
    )

    v_beta1 = v[bk.i_beta, 0]
    q2 = (
        r.phi
        - r.c_s
        - extra
        + bk.lam * (-r.p_p + v_alpha1)
        + (1.0 - bk.lam) * (-r.p_3g + v_beta1)
    ) * np.ones_like(q0)

    # Only the fallback action is admissible at the delay cap.
    q0[:, -1] = -np.inf
    q1[:, -1] = -np.inf
    return q0, q1, q2


def _greedy(q0, q1, q2):
    """Backup value and argmax with ties broken toward the lower action index."""
    w = np.maximum(np.maximum(q0, q1), q2)
    actions = np.full(w.shape, int(Action.SENSE_FALLBACK), dtype=np.int8)
    actions[q1 >= w - TIE_TOL] = int(Action.SENSE_WAIT)
    actions[q0 >= w - TIE_TOL] = int(Action.WAIT)
    return w, actions


def bellman_backup(vf: ValueFunction):
    """One exact backup of a value table.

    Returns (normalized table, gain estimate): the backup values minus the
    backup value at the reference state, and that reference value itself.
    """
    bk = _prepare(vf.channel, vf.rewards, vf.grid, vf.l_max)
    q0, q1, q2 = _apply_backup(vf.values, bk, vf.rewards)
    w, _ = _greedy(q0, q1, q2)
    g = w[bk.ref, 0]
    return w - g, float(g)


def solve_single_channel(
    p: ChannelParams,
    r: RewardParams,
    grid: BeliefGrid | None = None,
    l_max: int = DEFAULT_L_MAX,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = DEFAULT_DAMPING,
) -> ValueFunction:
    """Relative value iteration for the single-channel problem.

    Iterates the damped Bellman operator, renormalizing at the reference state
    (the grid point holding pi0, delay 1), until the span of the Bellman
    residual drops below tol.  Deterministic given identical inputs.

    Raises DegenerateChain when pi0 is 0 or 1 (thresholds are meaningless when
    the channel is never or always idle) and NoConvergence past max_iter.
    """
    pi0 = stationary_idle(p)
    if pi0 == 0.0 or pi0 == 1.0:
        raise DegenerateChain(f"pi0={pi0}: solver requires 0 < pi0 < 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if l_max < 2:
        raise ValueError("l_max must be at least 2")
    if grid is None:
        grid = BeliefGrid.for_channel(p)

    bk = _prepare(p, r, grid, l_max)
    v = np.zeros((len(grid), l_max))
    gain = 0.0
    span = float("inf")
    for it in range(1, max_iter + 1):
        q0, q1, q2 = _apply_backup(v, bk, r)
        w, actions = _greedy(q0, q1, q2)
        resid = w - v
        span = float(resid.max() - resid.min())
        gain = float(w[bk.ref, 0])
        if span <= tol:
            v = w - gain
            break
        v_new = damping * w + (1.0 - damping) * v
        v = v_new - v_new[bk.ref, 0]
    else:
        raise NoConvergence(max_iter, span, tol)

    return ValueFunction(
        grid=grid,
        values=v,
        actions=actions,
        gain=gain,
        l_max=l_max,
        channel=p,
        rewards=r,
        iterations=it,
        residual_span=span,
        tol=tol,
        reference_index=bk.ref,
    )
