"""Link delay and energy model.

One transfer of d bits over a connected link costs d/rate + latency seconds
and power x delay joules. A disconnected link yields UNREACHABLE (math.inf),
which is a value, not an error: callers decide whether to wait for a contact
or drop the transfer. Only the energy calculation rejects it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .orbits import SPEED_OF_LIGHT_KM_S

UNREACHABLE = math.inf


class LinkKind(Enum):
    INTRA_LISL = "intra_lisl"
    INTER_LISL = "inter_lisl"
    GS = "gs"


@dataclass(frozen=True)
class RfProvenance:
    """Radio-front-end constants recorded from the link budget; unused by the
    delay/energy model, kept so scenarios round-trip them."""

    isl_bandwidth_hz: float = 2.5e9
    gs_bandwidth_hz: float = 1.25e9
    system_loss_db: float = 3.0
    noise_power_w: float = 2.2e-16
    frequency_hz: float = 27.0e9
    g_over_t_db_per_k: float = 5.0


@dataclass(frozen=True)
class LinkParams:
    lisl_rate_bps: float = 16e6
    gs_rate_bps: float = 16e6
    lisl_latency_s: float = 0.005
    gs_latency_s: float = 0.025
    p_lisl_w: float = 40.0
    p_gs_w: float = 40.0
    rf: RfProvenance = field(default_factory=RfProvenance)

    def __post_init__(self) -> None:
        for name in ("lisl_rate_bps", "gs_rate_bps", "p_lisl_w", "p_gs_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lisl_latency_s", "gs_latency_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def rate_bps(self, kind: LinkKind) -> float:
        return self.gs_rate_bps if kind is LinkKind.GS else self.lisl_rate_bps

    def latency_s(self, kind: LinkKind) -> float:
        return self.gs_latency_s if kind is LinkKind.GS else self.lisl_latency_s

    def power_w(self, kind: LinkKind) -> float:
        return self.p_gs_w if kind is LinkKind.GS else self.p_lisl_w


def propagation_latency_s(distance_km: float) -> float:
    """Line-of-sight latency for a known pair distance."""
    if distance_km < 0:
        raise ValueError("distance_km must be non-negative")
    return distance_km / SPEED_OF_LIGHT_KM_S


def link_delay(d_bits: float, kind: LinkKind, params: LinkParams,
               connected: bool = True, latency_s: float | None = None) -> float:
    """Transfer delay in seconds, or UNREACHABLE when not connected.

    latency_s overrides the per-kind default (used when a contact-graph
    distance gives a physical propagation delay).
    """
    if d_bits < 0:
        raise ValueError("d_bits must be non-negative")
    if not connected:
        return UNREACHABLE
    lat = params.latency_s(kind) if latency_s is None else latency_s
    return d_bits / params.rate_bps(kind) + lat


def link_energy(delay_s: float, kind: LinkKind, params: LinkParams) -> float:
    """Transmission energy in joules for a completed transfer."""
    if not math.isfinite(delay_s):
        raise ValueError("cannot charge energy for an unreachable link")
    if delay_s < 0:
        raise ValueError("delay_s must be non-negative")
    return params.power_w(kind) * delay_s
