"""Scenario documents: one nested key/value file describing a whole session.

The defaults reproduce the reference configuration (36x20 shell at 570 km /
70 deg, Canberra ground station, 16 Mbps / 40 W links, 40 clients, 9-cluster
target, G=1, R=40, L=10, batch 10). Loading is strict: unknown keys are
rejected, numeric leaves are coerced, and load(dump(load(x))) is identity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import yaml

from .aggregation import DEFAULT_BITS_PER_PARAM
from .compute import ProfileDistributions
from .links import LinkParams, RfProvenance
from .orbits import ConstellationConfig, GroundStationSpec
from .skipone import SkipWeights
from .starmask import ClusterConstraints, NormRanges, RewardWeights

REACHABILITY_MODES = ("full", "direct", "multihop")


class ScenarioError(Exception):
    """Invalid or unreadable scenario document."""


@dataclass(frozen=True)
class SessionConfig:
    main_rounds: int = 1
    edge_rounds: int = 40
    local_epochs: int = 10
    k_nbr: int = 4
    client_count: int = 40
    range_km: float = 1700.0
    reachability: str = "full"
    time_step_s: float = 10.0
    bits_per_param: int = DEFAULT_BITS_PER_PARAM

    def __post_init__(self) -> None:
        if min(self.main_rounds, self.edge_rounds, self.local_epochs) < 1:
            raise ScenarioError("main_rounds, edge_rounds, local_epochs must be >= 1")
        if self.k_nbr < 0:
            raise ScenarioError("k_nbr must be >= 0")
        if self.client_count < 1:
            raise ScenarioError("client_count must be >= 1")
        if self.range_km <= 0:
            raise ScenarioError("range_km must be positive")
        if self.reachability not in REACHABILITY_MODES:
            raise ScenarioError(f"reachability must be one of {REACHABILITY_MODES}")
        if self.time_step_s <= 0:
            raise ScenarioError("time_step_s must be positive")
        if self.bits_per_param < 1:
            raise ScenarioError("bits_per_param must be >= 1")


@dataclass(frozen=True)
class SkipSettings:
    enabled: bool = True
    weights: SkipWeights = field(default_factory=SkipWeights)
    tau_max: int = 3
    cooldown_rounds: int = 2
    all_participation_period: int = 10
    history_decay: float = 0.5


@dataclass(frozen=True)
class TrainerSettings:
    kind: str = "logistic"
    n_features: int = 16
    learning_rate: float = 0.05
    batch_size: int = 10
    label_skew: float = 0.0
    test_samples: int = 2000

    def __post_init__(self) -> None:
        if self.kind not in ("logistic", "quadratic"):
            raise ScenarioError(f"unknown trainer kind {self.kind!r}")
        if self.n_features < 1:
            raise ScenarioError("n_features must be >= 1")


@dataclass(frozen=True)
class Scenario:
    constellation: ConstellationConfig = field(default_factory=lambda: ConstellationConfig(
        planes=36, sats_per_plane=20, altitude_km=570.0, inclination_deg=70.0))
    ground_station: GroundStationSpec = field(default_factory=lambda: GroundStationSpec(
        latitude_deg=-35.40139, longitude_deg=148.98167, min_elevation_deg=10.0))
    link: LinkParams = field(default_factory=LinkParams)
    profile_dists: ProfileDistributions = field(default_factory=ProfileDistributions)
    cpu_fraction: float = 0.5
    session: SessionConfig = field(default_factory=SessionConfig)
    constraints: ClusterConstraints = field(default_factory=lambda: ClusterConstraints(
        k_max=9, m_min=2, homogeneous=True, l_cpu=4, l_gpu=10, k_target=9))
    reward: RewardWeights = field(default_factory=RewardWeights)
    skip: SkipSettings = field(default_factory=SkipSettings)
    trainer: TrainerSettings = field(default_factory=TrainerSettings)
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0.0 <= self.cpu_fraction <= 1.0:
            raise ScenarioError("cpu_fraction must lie in [0, 1]")
        if self.session.client_count > self.constellation.n_sats:
            raise ScenarioError("client_count exceeds constellation size")

    def with_seed(self, seed: int | None) -> "Scenario":
        return self if seed is None else replace(self, seed=seed)


def default_scenario() -> Scenario:
    return Scenario()


# --- dict <-> dataclass -----------------------------------------------------

def _num(value, kind, path: str):
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            raise ValueError("not a bool")
        if kind is int:
            out = int(value)
            if isinstance(value, float) and value != out:
                raise ValueError("not an integer")
            return out
        if kind is float:
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ValueError("not a string")
            return value
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: expected {kind.__name__}, got {value!r}") from exc
    raise ScenarioError(f"{path}: unsupported kind {kind!r}")


def _pair(value, kind, path: str):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{path}: expected a [lo, hi] pair")
    return (_num(value[0], kind, path), _num(value[1], kind, path))


def _section(data: dict, name: str, fields: dict, path: str = "") -> dict:
    """Pull a nested section, coercing leaves and rejecting unknown keys.

    fields maps key -> type | (type, 'pair') | 'optional_int'.
    """
    here = data.get(name, {})
    if here is None:
        here = {}
    if not isinstance(here, dict):
        raise ScenarioError(f"{name}: expected a mapping")
    unknown = set(here) - set(fields)
    if unknown:
        raise ScenarioError(f"{name}: unknown keys {sorted(unknown)}")
    out = {}
    for key, kind in fields.items():
        if key not in here:
            continue
        value = here[key]
        where = f"{name}.{key}"
        if kind == "optional_int":
            out[key] = None if value is None else _num(value, int, where)
        elif isinstance(kind, tuple):
            out[key] = _pair(value, kind[0], where)
        else:
            out[key] = _num(value, kind, where)
    return out


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    known = {"constellation", "ground_station", "link", "profiles", "session",
             "clustering", "skip", "trainer", "seed"}
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")

    try:
        constellation = ConstellationConfig(**{
            **dict(planes=36, sats_per_plane=20, altitude_km=570.0, inclination_deg=70.0),
            **_section(data, "constellation", {
                "planes": int, "sats_per_plane": int, "altitude_km": float,
                "inclination_deg": float, "earth_radius_km": float,
                "phasing_offset_deg": float})})

        ground_station = GroundStationSpec(**{
            **dict(latitude_deg=-35.40139, longitude_deg=148.98167),
            **_section(data, "ground_station", {
                "latitude_deg": float, "longitude_deg": float, "min_elevation_deg": float})})

        link_raw = dict(data.get("link") or {})
        rf = RfProvenance(**_section(link_raw, "rf", {
            "isl_bandwidth_hz": float, "gs_bandwidth_hz": float, "system_loss_db": float,
            "noise_power_w": float, "frequency_hz": float, "g_over_t_db_per_k": float}))
        link_raw.pop("rf", None)
        link = LinkParams(rf=rf, **_section({"link": link_raw}, "link", {
            "lisl_rate_bps": float, "gs_rate_bps": float, "lisl_latency_s": float,
            "gs_latency_s": float, "p_lisl_w": float, "p_gs_w": float}))

        prof_raw = _section(data, "profiles", {
            "cpu_fraction": float, "n_samples": (int, "pair"), "fan_out": (int, "pair"),
            "cpu_freq_hz": (float, "pair"), "cpu_gamma": (float, "pair"),
            "gpu_alpha_flops_per_s": (float, "pair"), "gpu_p_avg_w": (float, "pair"),
            "c_flop": float, "flops_per_cycle": float})
        cpu_fraction = prof_raw.pop("cpu_fraction", 0.5)
        profile_dists = ProfileDistributions(**prof_raw)

        session = SessionConfig(**_section(data, "session", {
            "main_rounds": int, "edge_rounds": int, "local_epochs": int, "k_nbr": int,
            "client_count": int, "range_km": float, "reachability": str,
            "time_step_s": float, "bits_per_param": int}))

        clu_raw = dict(data.get("clustering") or {})
        reward_raw = _section(clu_raw, "reward", {
            "theta_wait": float, "beta": float, "gamma": float,
            "nu_count": float, "lambda_mix": float})
        clu_raw.pop("reward", None)
        constraints = ClusterConstraints(**{
            **dict(k_max=9, m_min=2, homogeneous=True, l_cpu=4, l_gpu=10, k_target=9),
            **_section({"clustering": clu_raw}, "clustering", {
                "k_max": int, "m_min": int, "homogeneous": bool,
                "l_cpu": int, "l_gpu": int, "k_target": "optional_int"})})
        reward = RewardWeights(**reward_raw)

        skip_raw = _section(data, "skip", {
            "enabled": bool, "theta_t": float, "theta_e": float, "theta_h": float,
            "theta_f": float, "hw_value_cpu": float, "hw_value_gpu": float,
            "tau_max": int, "cooldown_rounds": int, "all_participation_period": int,
            "history_decay": float})
        weight_keys = ("theta_t", "theta_e", "theta_h", "theta_f",
                       "hw_value_cpu", "hw_value_gpu")
        skip = SkipSettings(
            enabled=skip_raw.get("enabled", True),
            weights=SkipWeights(**{k: skip_raw[k] for k in weight_keys if k in skip_raw}),
            **{k: skip_raw[k] for k in ("tau_max", "cooldown_rounds",
                                        "all_participation_period", "history_decay")
               if k in skip_raw})

        trainer = TrainerSettings(**_section(data, "trainer", {
            "kind": str, "n_features": int, "learning_rate": float,
            "batch_size": int, "label_skew": float, "test_samples": int}))

        seed = _num(data.get("seed", 42), int, "seed")
    except (ValueError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc

    return Scenario(constellation=constellation, ground_station=ground_station,
                    link=link, profile_dists=profile_dists, cpu_fraction=cpu_fraction,
                    session=session, constraints=constraints, reward=reward,
                    skip=skip, trainer=trainer, seed=seed)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "constellation": asdict(sc.constellation),
        "ground_station": asdict(sc.ground_station),
        "link": {
            "lisl_rate_bps": sc.link.lisl_rate_bps,
            "gs_rate_bps": sc.link.gs_rate_bps,
            "lisl_latency_s": sc.link.lisl_latency_s,
            "gs_latency_s": sc.link.gs_latency_s,
            "p_lisl_w": sc.link.p_lisl_w,
            "p_gs_w": sc.link.p_gs_w,
            "rf": asdict(sc.link.rf),
        },
        "profiles": {
            "cpu_fraction": sc.cpu_fraction,
            "n_samples": list(sc.profile_dists.n_samples),
            "fan_out": list(sc.profile_dists.fan_out),
            "cpu_freq_hz": list(sc.profile_dists.cpu_freq_hz),
            "cpu_gamma": list(sc.profile_dists.cpu_gamma),
            "gpu_alpha_flops_per_s": list(sc.profile_dists.gpu_alpha_flops_per_s),
            "gpu_p_avg_w": list(sc.profile_dists.gpu_p_avg_w),
            "c_flop": sc.profile_dists.c_flop,
            "flops_per_cycle": sc.profile_dists.flops_per_cycle,
        },
        "session": asdict(sc.session),
        "clustering": {
            "k_max": sc.constraints.k_max,
            "m_min": sc.constraints.m_min,
            "homogeneous": sc.constraints.homogeneous,
            "l_cpu": sc.constraints.l_cpu,
            "l_gpu": sc.constraints.l_gpu,
            "k_target": sc.constraints.k_target,
            "reward": {
                "theta_wait": sc.reward.theta_wait,
                "beta": sc.reward.beta,
                "gamma": sc.reward.gamma,
                "nu_count": sc.reward.nu_count,
                "lambda_mix": sc.reward.lambda_mix,
            },
        },
        "skip": {
            "enabled": sc.skip.enabled,
            "theta_t": sc.skip.weights.theta_t,
            "theta_e": sc.skip.weights.theta_e,
            "theta_h": sc.skip.weights.theta_h,
            "theta_f": sc.skip.weights.theta_f,
            "hw_value_cpu": sc.skip.weights.hw_value_cpu,
            "hw_value_gpu": sc.skip.weights.hw_value_gpu,
            "tau_max": sc.skip.tau_max,
            "cooldown_rounds": sc.skip.cooldown_rounds,
            "all_participation_period": sc.skip.all_participation_period,
            "history_decay": sc.skip.history_decay,
        },
        "trainer": asdict(sc.trainer),
        "seed": sc.seed,
    }


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    if data is None:
        data = {}
    return scenario_from_dict(data)


def dump_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False)
