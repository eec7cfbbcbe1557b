"""On-board compute model: per-satellite hardware profiles and training cost.

One local epoch over n samples costs n * c_flop floating-point operations and
runs at the satellite's effective speed alpha. CPU satellites pay the classic
frequency-squared switched-capacitance energy; GPU satellites pay average
board power times training time. Aggregation compute is free and idle power is
zero, so energy differences between schedules come from training alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

DEFAULT_C_FLOP = 1e7
DEFAULT_FLOPS_PER_CYCLE = 8.0


class Hardware(Enum):
    CPU = "cpu"
    GPU = "gpu"


@dataclass(frozen=True)
class SatelliteProfile:
    """Static per-satellite description used by clustering and scheduling.

    alpha_flops_per_s is the effective training speed. For CPU hardware it is
    derived as freq_hz * flops_per_cycle and cycles_per_sample as
    c_flop / flops_per_cycle, so the time and energy models agree on how much
    work one sample is.
    """

    sat_id: int
    n_samples: int
    hardware: Hardware
    alpha_flops_per_s: float
    fan_out: int
    c_flop: float = DEFAULT_C_FLOP
    gamma: float = 0.0            # CPU switched capacitance coefficient
    cycles_per_sample: float = 0.0
    freq_hz: float = 0.0
    p_avg_w: float = 0.0          # GPU average board power

    def __post_init__(self) -> None:
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.alpha_flops_per_s <= 0:
            raise ValueError("alpha_flops_per_s must be positive")
        if self.fan_out < 1:
            raise ValueError("fan_out must be >= 1")
        if self.c_flop <= 0:
            raise ValueError("c_flop must be positive")
        if self.hardware is Hardware.CPU:
            if self.gamma <= 0 or self.cycles_per_sample <= 0 or self.freq_hz <= 0:
                raise ValueError("CPU profile needs gamma, cycles_per_sample, freq_hz > 0")
        else:
            if self.p_avg_w <= 0:
                raise ValueError("GPU profile needs p_avg_w > 0")


@dataclass(frozen=True)
class TrainingCost:
    t_epoch_s: float
    t_train_s: float
    total_samples: int
    e_train_j: float


def training_cost(profile: SatelliteProfile, local_epochs: int) -> TrainingCost:
    """Time and energy for local_epochs epochs over the satellite's samples."""
    if local_epochs < 0:
        raise ValueError("local_epochs must be >= 0")
    flops_per_epoch = profile.n_samples * profile.c_flop
    t_epoch = flops_per_epoch / profile.alpha_flops_per_s
    t_train = local_epochs * t_epoch
    total = local_epochs * profile.n_samples
    if profile.hardware is Hardware.CPU:
        e_train = profile.gamma * profile.cycles_per_sample * total * profile.freq_hz**2
    else:
        e_train = profile.p_avg_w * t_train
    return TrainingCost(t_epoch_s=t_epoch, t_train_s=t_train, total_samples=total,
                        e_train_j=e_train)


@dataclass(frozen=True)
class ProfileDistributions:
    """Uniform sampling ranges for random profiles. Integer fields sample
    inclusive ranges; float fields sample half-open ones."""

    n_samples: tuple[int, int] = (200, 600)
    fan_out: tuple[int, int] = (5, 8)
    cpu_freq_hz: tuple[float, float] = (0.8e9, 1.5e9)
    cpu_gamma: tuple[float, float] = (0.5e-27, 2.0e-27)
    gpu_alpha_flops_per_s: tuple[float, float] = (1.0e12, 3.0e12)
    gpu_p_avg_w: tuple[float, float] = (15.0, 40.0)
    c_flop: float = DEFAULT_C_FLOP
    flops_per_cycle: float = DEFAULT_FLOPS_PER_CYCLE

    def __post_init__(self) -> None:
        for name in ("n_samples", "fan_out", "cpu_freq_hz", "cpu_gamma",
                     "gpu_alpha_flops_per_s", "gpu_p_avg_w"):
            lo, hi = getattr(self, name)
            if lo > hi or lo <= 0:
                raise ValueError(f"{name} range must be positive and ordered")


def sample_profiles(count: int, cpu_fraction: float, seed: int,
                    dists: ProfileDistributions | None = None) -> list[SatelliteProfile]:
    """Deterministically sample `count` profiles with round(count * cpu_fraction)
    CPU satellites.

    Each satellite draws all its fields (both hardware variants) from its own
    substream and a separate stream permutes the hardware assignment, so
    changing cpu_fraction flips hardware labels without disturbing any other
    draw. sat_id is the index 0..count-1; callers remap to constellation ids.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 <= cpu_fraction <= 1.0:
        raise ValueError("cpu_fraction must lie in [0, 1]")
    dists = dists or ProfileDistributions()
    n_cpu = round(count * cpu_fraction)

    children = np.random.SeedSequence(seed).spawn(count + 1)
    assign_rng = np.random.default_rng(children[0])
    perm = assign_rng.permutation(count)
    is_cpu = np.zeros(count, dtype=bool)
    is_cpu[perm[:n_cpu]] = True

    profiles: list[SatelliteProfile] = []
    for i, child in enumerate(children[1:]):
        rng = np.random.default_rng(child)
        n = int(rng.integers(dists.n_samples[0], dists.n_samples[1] + 1))
        fan = int(rng.integers(dists.fan_out[0], dists.fan_out[1] + 1))
        freq = float(rng.uniform(*dists.cpu_freq_hz))
        gamma = float(rng.uniform(*dists.cpu_gamma))
        gpu_alpha = float(rng.uniform(*dists.gpu_alpha_flops_per_s))
        gpu_p = float(rng.uniform(*dists.gpu_p_avg_w))
        if is_cpu[i]:
            profiles.append(SatelliteProfile(
                sat_id=i, n_samples=n, hardware=Hardware.CPU,
                alpha_flops_per_s=freq * dists.flops_per_cycle, fan_out=fan,
                c_flop=dists.c_flop, gamma=gamma,
                cycles_per_sample=dists.c_flop / dists.flops_per_cycle, freq_hz=freq))
        else:
            profiles.append(SatelliteProfile(
                sat_id=i, n_samples=n, hardware=Hardware.GPU,
                alpha_flops_per_s=gpu_alpha, fan_out=fan,
                c_flop=dists.c_flop, p_avg_w=gpu_p))
    return profiles


def profile_to_dict(profile: SatelliteProfile) -> dict:
    return {
        "sat_id": profile.sat_id,
        "n_samples": profile.n_samples,
        "hardware": profile.hardware.value,
        "alpha_flops_per_s": profile.alpha_flops_per_s,
        "fan_out": profile.fan_out,
        "c_flop": profile.c_flop,
        "gamma": profile.gamma,
        "cycles_per_sample": profile.cycles_per_sample,
        "freq_hz": profile.freq_hz,
        "p_avg_w": profile.p_avg_w,
    }


def profile_from_dict(data: dict) -> SatelliteProfile:
    return SatelliteProfile(
        sat_id=int(data["sat_id"]),
        n_samples=int(data["n_samples"]),
        hardware=Hardware(data["hardware"]),
        alpha_flops_per_s=float(data["alpha_flops_per_s"]),
        fan_out=int(data["fan_out"]),
        c_flop=float(data.get("c_flop", DEFAULT_C_FLOP)),
        gamma=float(data.get("gamma", 0.0)),
        cycles_per_sample=float(data.get("cycles_per_sample", 0.0)),
        freq_hz=float(data.get("freq_hz", 0.0)),
        p_avg_w=float(data.get("p_avg_w", 0.0)),
    )


def remap_sat_ids(profiles: list[SatelliteProfile], sat_ids: list[int]) -> list[SatelliteProfile]:
    """Rebind profiles to constellation satellite ids, preserving order."""
    if len(profiles) != len(sat_ids):
        raise ValueError("profiles and sat_ids must have equal length")
    return [replace(p, sat_id=s) for p, s in zip(profiles, sat_ids)]
