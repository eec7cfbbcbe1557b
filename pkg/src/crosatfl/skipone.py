"""Skip-One straggler scheduling.

Each edge round, a cluster may excuse at most one member from training when
the utility of skipping it (barrier time saved plus energy saved, discounted
by hardware value and recent participation) is positive. Cooldown counters,
a staleness cap, and periodic forced all-participation rounds bound how long
any satellite can sit out, so the schedule stays fair by construction.

Masters are never skip candidates: the cluster model lives with them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .compute import Hardware, SatelliteProfile, TrainingCost

DEFAULT_HW_VALUE = {Hardware.CPU: 0.5, Hardware.GPU: 1.0}


@dataclass(frozen=True)
class SkipWeights:
    theta_t: float = 1.0
    theta_e: float = 1.0
    theta_h: float = 0.5
    theta_f: float = 0.5
    hw_value_cpu: float = DEFAULT_HW_VALUE[Hardware.CPU]
    hw_value_gpu: float = DEFAULT_HW_VALUE[Hardware.GPU]

    def hw_value(self, hardware: Hardware) -> float:
        return self.hw_value_cpu if hardware is Hardware.CPU else self.hw_value_gpu

    def __post_init__(self) -> None:
        if self.hw_value_gpu <= self.hw_value_cpu:
            raise ValueError("GPU hardware value must exceed CPU's")


@dataclass(frozen=True)
class FairnessState:
    """Per-satellite scheduling memory for one cluster.

    cooldown > 0 blocks a satellite from being skipped again; staleness counts
    consecutive skipped rounds and is capped by tau_max; history in [0, 1]
    tracks recent participation (decays toward 0 when skipped, toward 1 when
    participating)."""

    cooldown: dict[int, int]
    staleness: dict[int, int]
    history: dict[int, float]
    tau_max: int = 3
    cooldown_rounds: int = 2
    all_participation_period: int = 10
    history_decay: float = 0.5

    @classmethod
    def fresh(cls, members: list[int] | tuple[int, ...], tau_max: int = 3,
              cooldown_rounds: int = 2, all_participation_period: int = 10,
              history_decay: float = 0.5) -> "FairnessState":
        if tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        if cooldown_rounds < 1:
            raise ValueError("cooldown_rounds must be >= 1")
        if all_participation_period < 1:
            raise ValueError("all_participation_period must be >= 1")
        if not 0.0 < history_decay < 1.0:
            raise ValueError("history_decay must lie in (0, 1)")
        return cls(cooldown={i: 0 for i in members},
                   staleness={i: 0 for i in members},
                   history={i: 0.0 for i in members},
                   tau_max=tau_max, cooldown_rounds=cooldown_rounds,
                   all_participation_period=all_participation_period,
                   history_decay=history_decay)

    def is_all_participation(self, round_idx: int) -> bool:
        return round_idx % self.all_participation_period == 0


@dataclass(frozen=True)
class SkipDecision:
    participants: tuple[int, ...]
    skipped: int | None
    delta_t_s: float
    delta_e_j: float
    psi: float
    forced_full: bool


def admissible_set(cluster: tuple[int, ...], fairness: FairnessState,
                   master: int | None = None) -> list[int]:
    """Members that may be skipped this round: zero cooldown, staleness below
    the cap, and not the master."""
    return [i for i in cluster
            if i != master
            and fairness.cooldown[i] == 0
            and fairness.staleness[i] < fairness.tau_max]


def select_participants(cluster: tuple[int, ...], costs: dict[int, TrainingCost],
                        profiles: dict[int, SatelliteProfile],
                        fairness: FairnessState, weights: SkipWeights,
                        round_idx: int, master: int | None = None) -> SkipDecision:
    """Pick this round's participants, skipping at most one member.

    The barrier is the slowest member's training time; the candidate saving
    the most (counterfactual barrier drop, energy saved, both normalized by
    the per-cluster max this round) is skipped iff its utility is positive.
    Forced all-participation rounds and an empty admissible set keep everyone.
    """
    if round_idx < 1:
        raise ValueError("round_idx is 1-based")
    forced = fairness.is_all_participation(round_idx)
    candidates = admissible_set(cluster, fairness, master)
    if forced or not candidates:
        return SkipDecision(participants=tuple(cluster), skipped=None,
                            delta_t_s=0.0, delta_e_j=0.0, psi=0.0, forced_full=forced)

    barrier = max(costs[i].t_train_s for i in cluster)
    delta_t: dict[int, float] = {}
    delta_e: dict[int, float] = {}
    for i in candidates:
        others = [costs[j].t_train_s for j in cluster if j != i]
        counterfactual = max(others) if others else 0.0
        delta_t[i] = barrier - counterfactual
        delta_e[i] = costs[i].e_train_j
    t_norm = max(delta_t.values())
    e_norm = max(delta_e.values())

    def utility(i: int) -> float:
        dt = delta_t[i] / t_norm if t_norm > 0 else 0.0
        de = delta_e[i] / e_norm if e_norm > 0 else 0.0
        return (weights.theta_t * dt + weights.theta_e * de
                - weights.theta_h * weights.hw_value(profiles[i].hardware)
                - weights.theta_f * fairness.history[i])

    best = min(candidates, key=lambda i: (-utility(i), i))
    psi = utility(best)
    if psi > 0.0:
        participants = tuple(i for i in cluster if i != best)
        return SkipDecision(participants=participants, skipped=best,
                            delta_t_s=delta_t[best], delta_e_j=delta_e[best],
                            psi=psi, forced_full=False)
    return SkipDecision(participants=tuple(cluster), skipped=None,
                        delta_t_s=0.0, delta_e_j=0.0, psi=psi, forced_full=False)


def update_fairness(fairness: FairnessState, decision: SkipDecision,
                    round_idx: int) -> FairnessState:
    """State after the round: the skipped member starts a cooldown, ages its
    staleness, and decays its participation history; participants tick their
    cooldown down, reset staleness, and move history toward 1. An
    all-participation round clears every cooldown."""
    cooldown = dict(fairness.cooldown)
    staleness = dict(fairness.staleness)
    history = dict(fairness.history)
    decay = fairness.history_decay

    for i in decision.participants:
        cooldown[i] = max(cooldown[i] - 1, 0)
        staleness[i] = 0
        history[i] = history[i] + (1.0 - history[i]) * decay
    if decision.skipped is not None:
        i = decision.skipped
        cooldown[i] = fairness.cooldown_rounds
        staleness[i] = staleness[i] + 1
        history[i] = history[i] * decay
    if fairness.is_all_participation(round_idx):
        cooldown = {i: 0 for i in cooldown}
    return replace(fairness, cooldown=cooldown, staleness=staleness, history=history)
