"""Online estimation of primary-user activity and the windowed Q-learning of
threshold policies.

The transition rates are estimated from three counters per channel: slots the
channel was sensed, slots it was sensed idle, and slots it was sensed idle
immediately after being sensed idle (consecutive slots only; a sensing gap
breaks the pair).  The policy learner keeps a Q-value per (alpha bin, beta
bin, candidate policy), picks candidates epsilon-greedily, runs each for a
fixed window of slots, and folds the accumulated window reward back into the
table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, stationary_idle
from .errors import InsufficientData
from .policy import ThresholdPolicy
from .solver import Action, RewardParams


@dataclass
class CountingStats:
    """Sensing counters per channel: idle-after-idle pairs, idle slots,
    sensed slots."""

    k: np.ndarray
    i: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, n_channels: int) -> "CountingStats":
        return cls(
            k=np.zeros(n_channels, dtype=np.int64),
            i=np.zeros(n_channels, dtype=np.int64),
            m=np.zeros(n_channels, dtype=np.int64),
        )

    @property
    def n_channels(self) -> int:
        return len(self.m)

    def pooled(self) -> "CountingStats":
        """Counters summed across channels, for symmetric-channel use."""
        return CountingStats(
            k=np.array([self.k.sum()]),
            i=np.array([self.i.sum()]),
            m=np.array([self.m.sum()]),
        )


def update_counts(stats: CountingStats, channel: int, prev_sensed_idle: bool, obs) -> CountingStats:
    """Record one sensing outcome.

    obs is truthy for busy (matches Observation/ChannelState numbering);
    prev_sensed_idle must be True only when this channel was sensed idle in
    the immediately preceding slot.
    """
    idle = int(obs) == 0
    stats.m[channel] += 1
    if idle:
        stats.i[channel] += 1
        if prev_sensed_idle:
            stats.k[channel] += 1
    return stats


@dataclass
class Estimates:
    """Per-channel estimated transition pair and stationary idle probability.

    beta_hat is recovered from alpha_hat and pi0_hat; when a channel has only
    ever been seen idle (pi0_hat = 1) the recovery is undefined and beta_hat
    is clamped to 1 with the degenerate flag set.
    """

    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    pi0_hat: np.ndarray
    degenerate: np.ndarray


def estimate(stats: CountingStats) -> Estimates:
    """Point estimates from the counters: alpha = K/I, pi0 = I/M and
    beta = (1 - alpha) pi0 / (1 - pi0), clamped to [0, 1].

    Raises InsufficientData when any channel has no idle observation yet
    (alpha undefined) or has never been sensed.
    """
    if np.any(stats.m < 1) or np.any(stats.i < 1):
        raise InsufficientData(
            f"need at least one sensed-idle slot per channel: i={stats.i.tolist()}, m={stats.m.tolist()}"
        )
    alpha = stats.k / stats.i
    pi0 = stats.i / stats.m
    degenerate = pi0 >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(degenerate, 1.0, (1.0 - alpha) * pi0 / (1.0 - pi0))
    return Estimates(
        alpha_hat=np.clip(alpha, 0.0, 1.0),
        beta_hat=np.clip(beta, 0.0, 1.0),
        pi0_hat=np.clip(pi0, 0.0, 1.0),
        degenerate=degenerate,
    )


def discretize(value: float, m: int) -> int:
    """Aggregation bin floor(value * m), clamped to m-1 at value = 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return min(int(math.floor(value * m)), m - 1)


def constant_threshold_policy(level: float, switch_delay: int, l_max: int) -> ThresholdPolicy:
    """Candidate policy: wait below a constant belief level while the delay is
    under the switch, then sense with dedicated fallback from the switch on."""
    lam = np.zeros(l_max)
    lam[: switch_delay - 1] = level
    return ThresholdPolicy(lambda_star=lam, l_star=switch_delay, l_max=l_max)


def wait_depth_policy(wait_depth: int, switch_delay: int, l_max: int) -> ThresholdPolicy:
    """Candidate policy: wait unconditionally through the first wait_depth
    delays, then sense every slot, with dedicated fallback from the switch on.

    A delay-indexed threshold curve (1 below the wait depth, 0 after); the
    constant-level family cannot express wait-early/sense-late behavior, which
    is how the solved policies look when waiting is cheap relative to sensing.
    """
    if not 0 <= wait_depth < switch_delay:
        raise ValueError(f"need 0 <= wait_depth < switch_delay, got ({wait_depth}, {switch_delay})")
    lam = np.zeros(l_max)
    lam[:wait_depth] = 1.0
    return ThresholdPolicy(lambda_star=lam, l_star=switch_delay, l_max=l_max)


def default_rho(k: int) -> float:
    """Learning-rate schedule 1/k: summable squares, divergent sum."""
    return 1.0 / k


@dataclass
class LearnerConfig:
    m: int = 10
    nbslot: int = 100
    epsilon: float = 0.1
    eta: float = 0.5
    candidate_levels: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    candidate_switch_delays: tuple = tuple(range(1, 16))
    include_wait_depth: bool = True
    l_max: int = 50
    initial_estimate: tuple = (0.5, 0.5)
    rho_on_old: bool = True  # rho weights the old value; False weights the target
    rho: object = default_rho

    def __post_init__(self):
        if self.m < 1 or self.nbslot < 1:
            raise ValueError("m and nbslot must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")

    def candidates(self):
        cands = [
            constant_threshold_policy(level, sd, self.l_max)
            for level in self.candidate_levels
            for sd in self.candidate_switch_delays
        ]
        if self.include_wait_depth:
            cands += [
                wait_depth_policy(w, sd, self.l_max)
                for sd in self.candidate_switch_delays
                for w in range(1, sd)
            ]
        return cands


@dataclass
class LearnTraceRow:
    iteration: int
    alpha_hat: float
    beta_hat: float
    policy_id: int
    window_reward: float
    q_value: float


def write_learn_trace_csv(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,alpha_hat,beta_hat,policy_id,window_reward,q_value\n")
        for row in trace:
            fh.write(
                f"{row.iteration},{row.alpha_hat!r},{row.beta_hat!r},"
                f"{row.policy_id},{row.window_reward!r},{row.q_value!r}\n"
            )


@dataclass
class LearningResult:
    q_table: np.ndarray
    trace: list
    learned_policy: ThresholdPolicy
    learned_policy_id: int
    candidates: list
    estimates: Estimates


class _SlotEnv:
    """Persistent saturated-source environment the learner transmits through.

    Keeps channel truth, beliefs, packet delay and sensing counters across
    policy windows; one window = nbslot slots under a fixed policy.  Uses the
    same per-channel uniform streams as the episode simulator.
    """

    def __init__(self, channels, rewards: RewardParams, seed: int, l_max: int):
        from .sim import ChannelStreams

        self.channels = channels
        self.rewards = rewards
        self.l_max = l_max
        n = len(channels)
        self.streams = ChannelStreams(seed, n)
        self.idle = [
            self.streams.next_uniform(i) < stationary_idle(channels[i]) for i in range(n)
        ]
        self.beliefs = [stationary_idle(p) for p in channels]
        self.alphas = [p.alpha for p in channels]
        self.betas = [p.beta for p in channels]
        self.delay = 1
        self.stats = CountingStats.zeros(n)
        self.prev_sensed_idle = [False] * n

    def run_window(self, policy, nbslot: int) -> float:
        """Advance nbslot slots under the policy; returns accumulated reward."""
        r = self.rewards
        penalty = r.penalty
        beliefs = self.beliefs
        alphas, betas = self.alphas, self.betas
        n = len(self.channels)
        total = 0.0
        for _ in range(nbslot):
            target = max(range(n), key=beliefs.__getitem__) if n > 1 else 0
            action = policy.act(beliefs[target], self.delay)
            transmitted = False
            obs = -1
            extra = penalty(self.delay) if r.penalty_on_transmit else 0.0
            if action == Action.WAIT:
                reward = -penalty(self.delay)
            else:
                obs = 0 if self.idle[target] else 1
                update_counts(self.stats, target, self.prev_sensed_idle[target], obs)
                if obs == 0:
                    reward = r.phi - r.c_s - r.p_p - extra
                    transmitted = True
                elif action == Action.SENSE_FALLBACK:
                    reward = r.phi - r.c_s - r.p_3g - extra
                    transmitted = True
                else:
                    reward = -r.c_s - penalty(self.delay)
            total += reward

            for i in range(n):
                if action != Action.WAIT and i == target:
                    beliefs[i] = alphas[i] if obs == 0 else betas[i]
                    self.prev_sensed_idle[i] = obs == 0
                else:
                    beliefs[i] = betas[i] + (alphas[i] - betas[i]) * beliefs[i]
                    self.prev_sensed_idle[i] = False
                stay = alphas[i] if self.idle[i] else betas[i]
                self.idle[i] = self.streams.next_uniform(i) < stay
            if transmitted:
                self.delay = 1
            else:
                self.delay = min(self.delay + 1, self.l_max)
        return total


def run_learning(
    cfg: LearnerConfig,
    channels,
    rewards: RewardParams,
    iterations: int,
    seed: int = 0,
) -> LearningResult:
    """Windowed on-policy learning of a threshold policy.

    Per iteration: re-estimate the (pooled) transition rates, pick a candidate
    policy epsilon-greedily for the estimate's bins, transmit for nbslot slots
    accumulating the window reward R, then update
        Q[prev bins, prev candidate] <-
            rho_k Q[prev] + (1 - rho_k) (R + eta Q[new bins, new candidate])
    (the factors swap when cfg.rho_on_old is False).  Deterministic for a
    fixed seed.  Channels are treated as i.i.d.: counters are pooled into a
    single (alpha, beta) estimate for the table index.
    """
    candidates = cfg.candidates()
    n_cand = len(candidates)
    if n_cand == 0:
        raise ValueError("candidate policy set must be non-empty")
    q = np.zeros((cfg.m, cfg.m, n_cand))
    env = _SlotEnv(channels, rewards, seed, cfg.l_max)
    pick_rng = np.random.default_rng([seed, 999_983])

    cur_idx = int(pick_rng.integers(n_cand))
    est_a, est_b = cfg.initial_estimate
    bins = (discretize(est_a, cfg.m), discretize(est_b, cfg.m))
    trace = []
    est = None

    for k in range(1, iterations + 1):
        prev_idx = cur_idx
        prev_bins = bins
        try:
            est = estimate(env.stats.pooled())
            est_a = float(est.alpha_hat[0])
            est_b = float(est.beta_hat[0])
        except InsufficientData:
            est_a, est_b = cfg.initial_estimate
        bins = (discretize(est_a, cfg.m), discretize(est_b, cfg.m))

        if pick_rng.random() < cfg.epsilon:
            cur_idx = int(pick_rng.integers(n_cand))
        else:
            cur_idx = int(np.argmax(q[bins[0], bins[1]]))

        window_reward = env.run_window(candidates[cur_idx], cfg.nbslot)

        rho = cfg.rho(k)
        target = window_reward + cfg.eta * q[bins[0], bins[1], cur_idx]
        old = q[prev_bins[0], prev_bins[1], prev_idx]
        if cfg.rho_on_old:
            new = rho * old + (1.0 - rho) * target
        else:
            new = (1.0 - rho) * old + rho * target
        q[prev_bins[0], prev_bins[1], prev_idx] = new
        trace.append(
            LearnTraceRow(k, est_a, est_b, cur_idx, window_reward, float(new))
        )

    greedy = int(np.argmax(q[bins[0], bins[1]]))
    if est is None:
        est = Estimates(
            alpha_hat=np.array([est_a]),
            beta_hat=np.array([est_b]),
            pi0_hat=np.array([float("nan")]),
            degenerate=np.array([False]),
        )
    return LearningResult(
        q_table=q,
        trace=trace,
        learned_policy=candidates[greedy],
        learned_policy_id=greedy,
        candidates=candidates,
        estimates=est,
    )
