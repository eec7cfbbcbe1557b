"""StarMask: constrained sequential clustering of satellites.

Satellites arrive one at a time; each step either joins an open cluster or
opens a new one. Hard constraints (master capacity, minimum cluster size,
optional hardware homogeneity, cluster-count cap) are enforced by masking
infeasible actions before the policy ever sees them, so a trained or random
policy can only emit valid partitions. A deterministic greedy fallback covers
empty masks and the no-policy path; a brute-force enumerator provides ground
truth at small N.

The terminal reward scores a finished partition on intra-cluster compute-time
spread, total per-epoch cost (compute plus one member-to-master transfer per
member), cluster share imbalance, cluster count, and mixed-hardware clusters;
each term is min-max normalized so the weights compose on a common scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .compute import Hardware, SatelliteProfile, training_cost
from .links import LinkKind, LinkParams, link_delay, link_energy
from .policy import AdamState, MaskedPolicy

LOGGER = logging.getLogger(__name__)

DEFAULT_MODEL_BITS = 16_000_000.0

D_SAT = 6   # satellite feature width
D_SUM = 9   # cluster summary feature width


class InfeasiblePartition(Exception):
    """No partition satisfies the constraints; carries the cluster-count
    lower bound K_min as a diagnostic."""

    def __init__(self, k_min: int, message: str | None = None) -> None:
        self.k_min = k_min
        super().__init__(message or f"no feasible partition; K_min = {k_min}")


class TrainingDiverged(Exception):
    """Policy parameters became non-finite during training."""


@dataclass(frozen=True)
class ClusterConstraints:
    k_max: int = 9
    m_min: int = 2
    homogeneous: bool = True
    l_cpu: int = 4
    l_gpu: int = 10
    k_target: int | None = None

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.m_min < 1:
            raise ValueError("m_min must be >= 1")
        if self.l_cpu < 0 or self.l_gpu < 0:
            raise ValueError("capacity limits must be >= 0")
        if self.k_target is not None and not 1 <= self.k_target <= self.k_max:
            raise ValueError("k_target must lie in [1, k_max]")

    def limit(self, hardware: Hardware) -> int:
        return self.l_cpu if hardware is Hardware.CPU else self.l_gpu


def effective_capacity(profile: SatelliteProfile, constraints: ClusterConstraints) -> int:
    """Members a satellite could serve as master: fan-out minus its own uplink,
    capped by the hardware-specific limit."""
    return min(profile.fan_out - 1, constraints.limit(profile.hardware))


@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint clusters covering all clients, one master per cluster."""

    clusters: tuple[tuple[int, ...], ...]
    masters: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.clusters) != len(self.masters):
            raise ValueError("one master per cluster required")
        for members, master in zip(self.clusters, self.masters):
            if master not in members:
                raise ValueError(f"master {master} not a member of its cluster")

    @property
    def k(self) -> int:
        return len(self.clusters)

    def cluster_of(self, sat_id: int) -> int:
        for idx, members in enumerate(self.clusters):
            if sat_id in members:
                return idx
        raise KeyError(sat_id)


def validate_partition(partition: ClusterPartition, profiles: dict[int, SatelliteProfile],
                       constraints: ClusterConstraints) -> None:
    """Raise ValueError unless the partition satisfies every invariant."""
    seen: set[int] = set()
    for members in partition.clusters:
        if len(members) < constraints.m_min:
            raise ValueError(f"cluster {members} below m_min = {constraints.m_min}")
        overlap = seen.intersection(members)
        if overlap:
            raise ValueError(f"satellites {sorted(overlap)} appear in two clusters")
        seen.update(members)
        max_cap = max(effective_capacity(profiles[i], constraints) for i in members)
        if len(members) - 1 > max_cap:
            raise ValueError(f"cluster of size {len(members)} exceeds master capacity {max_cap}")
        if constraints.homogeneous:
            kinds = {profiles[i].hardware for i in members}
            if len(kinds) > 1:
                raise ValueError(f"mixed-hardware cluster {members} in homogeneous mode")
    if seen != set(profiles):
        raise ValueError("clusters do not cover exactly the client set")
    if partition.k > constraints.k_max:
        raise ValueError(f"{partition.k} clusters exceed k_max = {constraints.k_max}")


def select_master(members: tuple[int, ...] | list[int], profiles: dict[int, SatelliteProfile],
                  constraints: ClusterConstraints) -> int:
    """Master = member with maximal effective capacity; ties break to the
    smallest per-epoch compute time, then the lowest id."""
    def key(i: int) -> tuple[float, float, int]:
        prof = profiles[i]
        return (-effective_capacity(prof, constraints),
                training_cost(prof, 1).t_epoch_s, i)
    return min(members, key=key)


# --- reward ---------------------------------------------------------------


@dataclass(frozen=True)
class NormRanges:
    """Min-max ranges for the five reward terms; (0, 1) leaves a term raw."""

    wait: tuple[float, float] = (0.0, 1.0)
    energy: tuple[float, float] = (0.0, 1.0)
    share_var: tuple[float, float] = (0.0, 1.0)
    k_count: tuple[float, float] = (0.0, 1.0)
    hw_mix: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        for name in ("wait", "energy", "share_var", "k_count", "hw_mix"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"norm range for {name} must have max > min")


@dataclass(frozen=True)
class RewardWeights:
    """Term weights plus optional norm ranges; None means identity ranges for
    direct reward calls and min-max estimation inside train_policy."""

    theta_wait: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    nu_count: float = 0.1
    lambda_mix: float = 1.0
    norm_ranges: NormRanges | None = None


@dataclass(frozen=True)
class RewardBreakdown:
    total: float
    terms: dict[str, float]      # weighted, normalized contributions
    raw: dict[str, float]        # unnormalized term values


_TERM_NAMES = ("wait", "energy", "share_var", "k_count", "hw_mix")


def raw_reward_terms(partition: ClusterPartition, profiles: dict[int, SatelliteProfile],
                     link_params: LinkParams | None = None,
                     model_bits: float = DEFAULT_MODEL_BITS) -> dict[str, float]:
    link_params = link_params or LinkParams()
    total_n = sum(p.n_samples for p in profiles.values())
    upload = link_energy(link_delay(model_bits, LinkKind.INTRA_LISL, link_params),
                         LinkKind.INTRA_LISL, link_params)

    wait = 0.0
    energy = 0.0
    shares = []
    mixed = 0
    for members in partition.clusters:
        times = [training_cost(profiles[i], 1).t_epoch_s for i in members]
        wait += max(times) - min(times)
        energy += sum(training_cost(profiles[i], 1).e_train_j for i in members)
        energy += (len(members) - 1) * upload
        shares.append(sum(profiles[i].n_samples for i in members) / total_n)
        if len({profiles[i].hardware for i in members}) > 1:
            mixed += 1
    shares_arr = np.asarray(shares)
    share_var = float(np.mean((shares_arr - shares_arr.mean()) ** 2))
    return {"wait": wait, "energy": energy, "share_var": share_var,
            "k_count": float(partition.k), "hw_mix": float(mixed)}


def terminal_reward(partition: ClusterPartition, profiles: dict[int, SatelliteProfile],
                    weights: RewardWeights, link_params: LinkParams | None = None,
                    model_bits: float = DEFAULT_MODEL_BITS) -> RewardBreakdown:
    """Negative weighted sum of the normalized partition cost terms."""
    raw = raw_reward_terms(partition, profiles, link_params, model_bits)
    coef = {"wait": weights.theta_wait, "energy": weights.beta,
            "share_var": weights.gamma, "k_count": weights.nu_count,
            "hw_mix": weights.lambda_mix}
    ranges = weights.norm_ranges or NormRanges()
    terms: dict[str, float] = {}
    for name in _TERM_NAMES:
        lo, hi = getattr(ranges, name)
        terms[name] = coef[name] * (raw[name] - lo) / (hi - lo)
    total = -sum(terms.values())
    return RewardBreakdown(total=total, terms=terms, raw=raw)


# --- assignment state and masking ------------------------------------------


@dataclass
class _OpenCluster:
    members: list[int]
    hardware: Hardware
    max_ctilde: int
    t_min: float
    t_max: float
    e_sum: float
    n_sum: int
    n_cpu: int
    n_gpu: int

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def remaining_capacity(self) -> int:
        return max(0, (1 + self.max_ctilde) - self.size)


@dataclass(frozen=True)
class ClusterSummary:
    """Snapshot of one open cluster as seen by the policy."""

    size: int
    t_min_s: float
    t_max_s: float
    energy_sum_j: float
    share_sum: float
    n_cpu: int
    n_gpu: int
    remaining_capacity: int


@dataclass
class AssignmentState:
    """Sequential assignment after `step` satellites have been placed."""

    profiles: tuple[SatelliteProfile, ...]
    constraints: ClusterConstraints
    step: int = 0
    open_clusters: list[_OpenCluster] = field(default_factory=list)

    @property
    def current(self) -> SatelliteProfile:
        return self.profiles[self.step]

    @property
    def remaining_after_current(self) -> int:
        return len(self.profiles) - self.step - 1

    def summaries(self) -> list[ClusterSummary]:
        total_n = sum(p.n_samples for p in self.profiles)
        out = []
        for c in self.open_clusters:
            out.append(ClusterSummary(size=c.size, t_min_s=c.t_min, t_max_s=c.t_max,
                                      energy_sum_j=c.e_sum, share_sum=c.n_sum / total_n,
                                      n_cpu=c.n_cpu, n_gpu=c.n_gpu,
                                      remaining_capacity=c.remaining_capacity))
        return out

    def assign(self, action: int) -> None:
        """Apply a feasible action: join cluster `action` or open a new one
        when action == k_max."""
        prof = self.current
        cost = training_cost(prof, 1)
        ctilde = effective_capacity(prof, self.constraints)
        if action == self.constraints.k_max:
            self.open_clusters.append(_OpenCluster(
                members=[prof.sat_id], hardware=prof.hardware, max_ctilde=ctilde,
                t_min=cost.t_epoch_s, t_max=cost.t_epoch_s, e_sum=cost.e_train_j,
                n_sum=prof.n_samples,
                n_cpu=int(prof.hardware is Hardware.CPU),
                n_gpu=int(prof.hardware is Hardware.GPU)))
        else:
            c = self.open_clusters[action]
            c.members.append(prof.sat_id)
            c.max_ctilde = max(c.max_ctilde, ctilde)
            c.t_min = min(c.t_min, cost.t_epoch_s)
            c.t_max = max(c.t_max, cost.t_epoch_s)
            c.e_sum += cost.e_train_j
            c.n_sum += prof.n_samples
            c.n_cpu += int(prof.hardware is Hardware.CPU)
            c.n_gpu += int(prof.hardware is Hardware.GPU)
        self.step += 1


def _remaining_by_class(state: AssignmentState) -> dict[Hardware, int]:
    counts = {Hardware.CPU: 0, Hardware.GPU: 0}
    for prof in state.profiles[state.step + 1:]:
        counts[prof.hardware] += 1
    return counts


def _deficits_ok(state: AssignmentState, join_idx: int | None, opens_new: bool) -> bool:
    """Conservative reachability: after the hypothetical assignment of the
    current satellite, the remaining ones must be able to fill every open
    cluster up to m_min (per hardware class in homogeneous mode)."""
    m_min = state.constraints.m_min
    homogeneous = state.constraints.homogeneous
    deficit: dict[Hardware | None, int] = {}
    remaining: dict[Hardware | None, int] = {}
    if homogeneous:
        for hw, cnt in _remaining_by_class(state).items():
            remaining[hw] = cnt
            deficit.setdefault(hw, 0)
    else:
        remaining[None] = state.remaining_after_current
        deficit[None] = 0

    def clas(hw: Hardware) -> Hardware | None:
        return hw if homogeneous else None

    for idx, c in enumerate(state.open_clusters):
        size = c.size + (1 if idx == join_idx else 0)
        deficit[clas(c.hardware)] = deficit.get(clas(c.hardware), 0) + max(0, m_min - size)
    if opens_new:
        hw = clas(state.current.hardware)
        deficit[hw] = deficit.get(hw, 0) + max(0, m_min - 1)

    return all(deficit.get(k, 0) <= remaining.get(k, 0) for k in deficit)


def feasible_actions(state: AssignmentState, constraints: ClusterConstraints) -> list[int]:
    """Indices of feasible actions for the current satellite: open-cluster
    joins (by slot index) plus k_max for "open new"."""
    prof = state.current
    ctilde = effective_capacity(prof, constraints)
    actions: list[int] = []
    for idx, c in enumerate(state.open_clusters):
        if constraints.homogeneous and c.hardware is not prof.hardware:
            continue
        if c.size > max(c.max_ctilde, ctilde):
            continue  # size+1 members need master capacity >= size
        if not _deficits_ok(state, join_idx=idx, opens_new=False):
            continue
        actions.append(idx)
    if len(state.open_clusters) < constraints.k_max:
        if _deficits_ok(state, join_idx=None, opens_new=True):
            actions.append(constraints.k_max)
    return actions


# --- featurization ----------------------------------------------------------


@dataclass(frozen=True)
class _Scales:
    total_n: int
    max_t: float
    max_e: float
    max_cap: int


def _instance_scales(profiles: tuple[SatelliteProfile, ...],
                     constraints: ClusterConstraints) -> _Scales:
    costs = [training_cost(p, 1) for p in profiles]
    return _Scales(
        total_n=sum(p.n_samples for p in profiles),
        max_t=max(c.t_epoch_s for c in costs) or 1.0,
        max_e=max(c.e_train_j for c in costs) or 1.0,
        max_cap=max(effective_capacity(p, constraints) for p in profiles) or 1,
    )


def _sat_features(prof: SatelliteProfile, scales: _Scales, n_count: int,
                  constraints: ClusterConstraints) -> np.ndarray:
    cost = training_cost(prof, 1)
    return np.array([
        prof.n_samples / scales.total_n * n_count,  # share on an O(1) scale
        float(prof.hardware is Hardware.CPU),
        float(prof.hardware is Hardware.GPU),
        cost.t_epoch_s / scales.max_t,
        cost.e_train_j / scales.max_e,
        effective_capacity(prof, constraints) / scales.max_cap,
    ])


def _summary_features(state: AssignmentState, scales: _Scales) -> np.ndarray:
    k_max = state.constraints.k_max
    n = len(state.profiles)
    feats = np.zeros((k_max, D_SUM))
    for idx, s in enumerate(state.summaries()):
        feats[idx] = [
            1.0,
            s.size / n,
            s.t_min_s / scales.max_t,
            s.t_max_s / scales.max_t,
            s.energy_sum_j / (scales.max_e * n),
            s.share_sum,
            s.n_cpu / max(s.size, 1),
            s.n_gpu / max(s.size, 1),
            s.remaining_capacity / (scales.max_cap + 1),
        ]
    return feats


def _mask_from_actions(actions: list[int], k_max: int) -> np.ndarray:
    mask = np.zeros(k_max + 1, dtype=bool)
    mask[actions] = True
    return mask


# --- K_min and feasibility ---------------------------------------------------


def _class_groups(profiles: list[SatelliteProfile],
                  constraints: ClusterConstraints) -> dict[Hardware | None, list[SatelliteProfile]]:
    if not constraints.homogeneous:
        return {None: list(profiles)}
    groups: dict[Hardware | None, list[SatelliteProfile]] = {}
    for p in profiles:
        groups.setdefault(p.hardware, []).append(p)
    return groups


def compute_k_min(profiles: list[SatelliteProfile], constraints: ClusterConstraints) -> int:
    """Least cluster count that could cover all satellites under the master
    capacity bound (per hardware class in homogeneous mode)."""
    k_min = 0
    for group in _class_groups(profiles, constraints).values():
        caps = sorted((effective_capacity(p, constraints) for p in group), reverse=True)
        covered, k = 0, 0
        for c in caps:
            if covered >= len(group):
                break
            covered += 1 + c
            k += 1
        if covered < len(group):
            k = len(group) + 1  # even one cluster per satellite cannot cover
        k_min += k
    return k_min


def feasibility_check(profiles: list[SatelliteProfile],
                      constraints: ClusterConstraints) -> int:
    """Return K_min, raising InfeasiblePartition when no K in [K_min, k_max]
    can satisfy capacity and m_min simultaneously."""
    k_min = compute_k_min(profiles, constraints)
    k_cap = 0
    for group in _class_groups(profiles, constraints).values():
        if 0 < len(group) < constraints.m_min:
            raise InfeasiblePartition(k_min, "a hardware class has fewer satellites than m_min")
        caps = sorted((effective_capacity(p, constraints) for p in group), reverse=True)
        covered, k = 0, 0
        for c in caps:
            if covered >= len(group):
                break
            covered += 1 + c
            k += 1
        if covered < len(group) or (1 + max(caps)) < constraints.m_min:
            raise InfeasiblePartition(k_min, "master capacities cannot cover the satellites")
        if k > len(group) // constraints.m_min:
            raise InfeasiblePartition(k_min, "capacity forces clusters below m_min")
        k_cap += len(group) // constraints.m_min
    if k_min > constraints.k_max or k_min > k_cap:
        raise InfeasiblePartition(k_min)
    return k_min


# --- greedy fallback ---------------------------------------------------------


def _class_quotas(profiles: list[SatelliteProfile],
                  constraints: ClusterConstraints) -> dict[Hardware | None, int]:
    """Largest-remainder split of k_target over hardware classes, clamped to
    each class's capacity lower bound and m_min upper bound; all zeros when no
    target is set (open as needed)."""
    groups = _class_groups(profiles, constraints)
    if constraints.k_target is None:
        return {cls: 0 for cls in groups}
    target = constraints.k_target
    n = len(profiles)
    nohom = replace(constraints, homogeneous=False)
    floor_k = {cls: compute_k_min(g, nohom) for cls, g in groups.items()}
    ceil_k = {cls: len(g) // constraints.m_min for cls, g in groups.items()}
    exact = {cls: target * len(g) / n for cls, g in groups.items()}
    quotas = {cls: min(max(int(exact[cls]), floor_k[cls], 1), ceil_k[cls])
              for cls in groups}
    while sum(quotas.values()) < target:
        candidates = [cls for cls in groups if quotas[cls] < ceil_k[cls]]
        if not candidates:
            break
        best = max(candidates, key=lambda cls: (exact[cls] - quotas[cls], str(cls)))
        quotas[best] += 1
    while sum(quotas.values()) > target:
        candidates = [cls for cls in groups if quotas[cls] > max(floor_k[cls], 1)]
        if not candidates:
            break
        worst = min(candidates, key=lambda cls: (exact[cls] - quotas[cls], str(cls)))
        quotas[worst] -= 1
    return quotas


def greedy_fallback(profiles: list[SatelliteProfile],
                    constraints: ClusterConstraints) -> ClusterPartition:
    """Deterministic constructive partition: satellites sorted by descending
    per-epoch compute time join the feasible open cluster with the most
    remaining capacity; clusters open eagerly up to the per-class quota when a
    cluster-count target is set, otherwise only when nothing fits."""
    k_min = feasibility_check(profiles, constraints)
    order = sorted(profiles, key=lambda p: (-training_cost(p, 1).t_epoch_s, p.sat_id))
    state = AssignmentState(profiles=tuple(order), constraints=constraints)
    quotas = _class_quotas(profiles, constraints)

    def cls_of(prof: SatelliteProfile) -> Hardware | None:
        return prof.hardware if constraints.homogeneous else None

    opened: dict[Hardware | None, int] = {cls: 0 for cls in quotas}
    for _ in order:
        prof = state.current
        actions = feasible_actions(state, constraints)
        joins = [a for a in actions if a != constraints.k_max]
        can_open = constraints.k_max in actions
        cls = cls_of(prof)
        if can_open and opened.get(cls, 0) < quotas.get(cls, 0):
            choice = constraints.k_max
        elif joins:
            choice = max(joins, key=lambda a: (state.open_clusters[a].remaining_capacity, -a))
        elif can_open:
            choice = constraints.k_max
        else:
            raise InfeasiblePartition(k_min, "greedy fallback reached a dead end")
        if choice == constraints.k_max:
            opened[cls] = opened.get(cls, 0) + 1
        state.assign(choice)

    profiles_by_id = {p.sat_id: p for p in profiles}
    clusters = tuple(tuple(sorted(c.members)) for c in state.open_clusters)
    masters = tuple(select_master(m, profiles_by_id, constraints) for m in clusters)
    partition = ClusterPartition(clusters=clusters, masters=masters)
    try:
        validate_partition(partition, profiles_by_id, constraints)
    except ValueError as exc:
        raise InfeasiblePartition(k_min, f"greedy fallback produced {exc}") from exc
    return partition


# --- episodes ----------------------------------------------------------------


@dataclass
class EpisodeStep:
    cache: object
    action: int


@dataclass
class EpisodeResult:
    partition: ClusterPartition
    steps: list[EpisodeStep]
    fell_back: bool


def run_clustering_episode(profiles: list[SatelliteProfile], policy: MaskedPolicy | None,
                           constraints: ClusterConstraints, mode: str = "greedy",
                           rng: np.random.Generator | None = None) -> ClusterPartition:
    """Produce a partition. mode "greedy" uses the deterministic fallback
    (policy ignored); "argmax" / "sample" step the policy over masked actions,
    falling back wholesale on a dead end. Raises InfeasiblePartition when no
    valid partition exists."""
    return _episode(profiles, policy, constraints, mode, rng).partition


def _episode(profiles: list[SatelliteProfile], policy: MaskedPolicy | None,
             constraints: ClusterConstraints, mode: str,
             rng: np.random.Generator | None) -> EpisodeResult:
    if mode == "greedy":
        return EpisodeResult(partition=greedy_fallback(profiles, constraints),
                             steps=[], fell_back=False)
    if mode not in ("sample", "argmax", "random"):
        raise ValueError(f"unknown episode mode: {mode!r}")
    if mode in ("sample", "random") and rng is None:
        raise ValueError(f"mode {mode!r} needs an rng")
    if mode in ("sample", "argmax") and policy is None:
        raise ValueError(f"mode {mode!r} needs a policy")

    feasibility_check(profiles, constraints)
    state = AssignmentState(profiles=tuple(profiles), constraints=constraints)
    scales = _instance_scales(state.profiles, constraints)
    steps: list[EpisodeStep] = []
    for _ in profiles:
        actions = feasible_actions(state, constraints)
        if not actions:
            LOGGER.debug("empty mask at step %d; greedy fallback", state.step)
            return EpisodeResult(partition=greedy_fallback(profiles, constraints),
                                 steps=steps, fell_back=True)
        if mode == "random":
            action = int(rng.choice(np.asarray(actions)))
        else:
            x = _sat_features(state.current, scales, len(profiles), constraints)
            summaries = _summary_features(state, scales)
            mask = _mask_from_actions(actions, constraints.k_max)
            cache = policy.forward(x, summaries, mask)
            action = policy.sample(cache, rng) if mode == "sample" else policy.argmax(cache)
            steps.append(EpisodeStep(cache=cache, action=action))
        state.assign(action)

    profiles_by_id = {p.sat_id: p for p in profiles}
    clusters = tuple(tuple(sorted(c.members)) for c in state.open_clusters)
    masters = tuple(select_master(m, profiles_by_id, constraints) for m in clusters)
    partition = ClusterPartition(clusters=clusters, masters=masters)
    validate_partition(partition, profiles_by_id, constraints)
    return EpisodeResult(partition=partition, steps=steps, fell_back=False)


def random_feasible_partition(profiles: list[SatelliteProfile],
                              constraints: ClusterConstraints,
                              rng: np.random.Generator) -> ClusterPartition:
    return _episode(profiles, None, constraints, "random", rng).partition


# --- norm-range estimation -----------------------------------------------------


def estimate_norm_ranges(instances: list[list[SatelliteProfile]],
                         constraints: ClusterConstraints, seed: int,
                         n_samples: int = 200,
                         link_params: LinkParams | None = None,
                         model_bits: float = DEFAULT_MODEL_BITS) -> NormRanges:
    """Min-max ranges of the raw reward terms over random feasible partitions,
    sampled round-robin across the instance family."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    lo = {name: np.inf for name in _TERM_NAMES}
    hi = {name: -np.inf for name in _TERM_NAMES}
    for i in range(n_samples):
        profiles = instances[i % len(instances)]
        partition = random_feasible_partition(profiles, constraints, rng)
        raw = raw_reward_terms(partition, {p.sat_id: p for p in profiles},
                               link_params, model_bits)
        for name in _TERM_NAMES:
            lo[name] = min(lo[name], raw[name])
            hi[name] = max(hi[name], raw[name])
    ranges = {}
    for name in _TERM_NAMES:
        span = hi[name] - lo[name]
        if not np.isfinite(span) or span <= 0:
            ranges[name] = (float(lo[name]) if np.isfinite(lo[name]) else 0.0,
                            (float(lo[name]) if np.isfinite(lo[name]) else 0.0) + 1.0)
        else:
            ranges[name] = (float(lo[name]), float(hi[name]))
    return NormRanges(**ranges)


# --- brute force ----------------------------------------------------------------


def _set_partitions(items: list[int]) -> list[list[list[int]]]:
    """All set partitions of `items` as lists of lists (canonical order)."""
    def recurse(rest: list[int]) -> list[list[list[int]]]:
        if not rest:
            return [[]]
        first, tail = rest[0], rest[1:]
        out = []
        for sub in recurse(tail):
            for i in range(len(sub)):
                out.append(sub[:i] + [[first] + sub[i]] + sub[i + 1:])
            out.append([[first]] + sub)
        return out
    return recurse(items)


def brute_force_partition(profiles: list[SatelliteProfile],
                          constraints: ClusterConstraints, weights: RewardWeights,
                          link_params: LinkParams | None = None,
                          model_bits: float = DEFAULT_MODEL_BITS,
                          ) -> tuple[ClusterPartition, RewardBreakdown]:
    """Exhaustive reward-optimal partition for N <= 8. Ties break to fewer
    clusters, then lexicographic membership."""
    if len(profiles) > 8:
        raise ValueError("brute force is limited to 8 satellites")
    profiles_by_id = {p.sat_id: p for p in profiles}
    ids = sorted(profiles_by_id)
    best: tuple[float, int, tuple, ClusterPartition, RewardBreakdown] | None = None
    for blocks in _set_partitions(ids):
        if len(blocks) > constraints.k_max:
            continue
        clusters = tuple(tuple(sorted(b)) for b in sorted(blocks, key=lambda b: sorted(b)))
        try:
            masters = tuple(select_master(m, profiles_by_id, constraints) for m in clusters)
            partition = ClusterPartition(clusters=clusters, masters=masters)
            validate_partition(partition, profiles_by_id, constraints)
        except ValueError:
            continue
        breakdown = terminal_reward(partition, profiles_by_id, weights, link_params, model_bits)
        key = (-breakdown.total, partition.k, clusters)
        if best is None or key < (best[0], best[1], best[2]):
            best = (-breakdown.total, partition.k, clusters, partition, breakdown)
    if best is None:
        raise InfeasiblePartition(compute_k_min(profiles, constraints))
    return best[3], best[4]


# --- training ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingHyper:
    episodes: int = 400
    learning_rate: float = 0.01
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    seed: int = 0
    moving_avg_window: int = 20
    d_model: int = 8
    hidden: int = 16

    def __post_init__(self) -> None:
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class TracePoint:
    episode: int
    reward: float
    moving_avg: float


def train_policy(instances: list[list[SatelliteProfile]], constraints: ClusterConstraints,
                 weights: RewardWeights, hyper: TrainingHyper,
                 link_params: LinkParams | None = None,
                 model_bits: float = DEFAULT_MODEL_BITS,
                 ) -> tuple[MaskedPolicy, list[TracePoint]]:
    """Episodic masked actor-critic over the instance family.

    The terminal reward is shared by every step of an episode; the advantage
    is reward minus the critic's per-state value. Norm ranges default to a
    min-max estimate over random feasible partitions when the caller left
    them at identity. Non-finite parameters abort with TrainingDiverged.
    """
    if not instances:
        raise ValueError("need at least one instance")
    if weights.norm_ranges is None:
        weights = replace(weights, norm_ranges=estimate_norm_ranges(
            instances, constraints, seed=hyper.seed, link_params=link_params,
            model_bits=model_bits))

    policy = MaskedPolicy(k_max=constraints.k_max, d_sat=D_SAT, d_sum=D_SUM,
                          d_model=hyper.d_model, hidden=hyper.hidden, seed=hyper.seed)
    rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, 1]))
    adam = AdamState(policy.params, lr=hyper.learning_rate)
    trace: list[TracePoint] = []
    window: list[float] = []

    for ep in range(hyper.episodes):
        profiles = instances[ep % len(instances)]
        result = _episode(profiles, policy, constraints, "sample", rng)
        reward = terminal_reward(result.partition, {p.sat_id: p for p in profiles},
                                 weights, link_params, model_bits).total
        if result.steps:
            grads = {k: np.zeros_like(v) for k, v in policy.params.items()}
            for step in result.steps:
                adv = reward - step.cache.value
                g = policy.backward(step.cache, step.action, adv, reward,
                                    entropy_coef=hyper.entropy_coef,
                                    value_coef=hyper.value_coef)
                for k in grads:
                    grads[k] += g[k]
            scale = 1.0 / len(result.steps)
            for k in grads:
                grads[k] *= scale
            adam.step(policy.params, grads)
        if any(not np.all(np.isfinite(v)) for v in policy.params.values()):
            raise TrainingDiverged(f"non-finite parameters at episode {ep}")
        window.append(reward)
        if len(window) > hyper.moving_avg_window:
            window.pop(0)
        trace.append(TracePoint(episode=ep, reward=reward,
                                moving_avg=float(np.mean(window))))
    return policy, trace
