"""Walker-Delta constellation geometry.

Circular two-body propagation of a planes x sats-per-plane shell, laser
inter-satellite link (LISL) feasibility from range and Earth occlusion, and
ground-station visibility from an elevation mask. No J2, drag, or attitude
model: positions are closed-form in time, which is what makes the simulator
deterministic and cheap enough to scan days of visibility windows.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

MU_EARTH_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5
SPEED_OF_LIGHT_KM_S = 299792.458
DEG2RAD = math.pi / 180.0


@dataclass(frozen=True)
class ConstellationConfig:
    """Walker-Delta shell: evenly spaced planes, evenly phased satellites."""

    planes: int
    sats_per_plane: int
    altitude_km: float
    inclination_deg: float
    earth_radius_km: float = 6371.0
    phasing_offset_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.planes < 1 or self.sats_per_plane < 1:
            raise ValueError("planes and sats_per_plane must be >= 1")
        if self.altitude_km <= 0:
            raise ValueError("altitude_km must be positive")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ValueError("inclination_deg must lie in [0, 180]")
        if self.earth_radius_km <= 0:
            raise ValueError("earth_radius_km must be positive")

    @property
    def n_sats(self) -> int:
        return self.planes * self.sats_per_plane

    @property
    def orbit_radius_km(self) -> float:
        return self.earth_radius_km + self.altitude_km

    @property
    def orbital_period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_EARTH_KM3_S2 / self.orbit_radius_km**3)


@dataclass(frozen=True)
class GroundStationSpec:
    """Ground station fixed to the rotating Earth."""

    latitude_deg: float
    longitude_deg: float
    min_elevation_deg: float = 10.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError("latitude_deg must lie in [-90, 90]")
        if not 0.0 <= self.min_elevation_deg < 90.0:
            raise ValueError("min_elevation_deg must lie in [0, 90)")


def _plane_basis(config: ConstellationConfig) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane basis vectors (e1, e2) for every plane, shape (P, 3).

    A satellite at argument u in plane p sits at r * (cos(u) e1[p] + sin(u) e2[p]).
    """
    raan = np.arange(config.planes) * (2.0 * math.pi / config.planes)
    inc = config.inclination_deg * DEG2RAD
    e1 = np.stack([np.cos(raan), np.sin(raan), np.zeros_like(raan)], axis=1)
    e2 = np.stack(
        [-np.sin(raan) * math.cos(inc), np.cos(raan) * math.cos(inc),
         np.full_like(raan, math.sin(inc))],
        axis=1,
    )
    return e1, e2


def _initial_arguments(config: ConstellationConfig) -> np.ndarray:
    """Initial argument of latitude per satellite, shape (N,), radians.

    Satellite id p * sats_per_plane + q starts at q * (360 / sats_per_plane)
    plus the per-plane phasing offset p * phasing_offset_deg.
    """
    p = np.repeat(np.arange(config.planes), config.sats_per_plane)
    q = np.tile(np.arange(config.sats_per_plane), config.planes)
    u0 = q * (2.0 * math.pi / config.sats_per_plane) + p * (config.phasing_offset_deg * DEG2RAD)
    return u0


def propagate(config: ConstellationConfig, t_s: float) -> np.ndarray:
    """ECI positions of all satellites at time t_s, shape (N, 3), km.

    Rows are ordered by satellite id = plane * sats_per_plane + slot.
    """
    e1, e2 = _plane_basis(config)
    u = _initial_arguments(config) + config.mean_motion_rad_s * t_s
    plane = np.repeat(np.arange(config.planes), config.sats_per_plane)
    r = config.orbit_radius_km
    return r * (np.cos(u)[:, None] * e1[plane] + np.sin(u)[:, None] * e2[plane])


def propagate_sat(config: ConstellationConfig, sat_id: int, times_s: np.ndarray) -> np.ndarray:
    """ECI positions of one satellite over many times, shape (T, 3), km."""
    if not 0 <= sat_id < config.n_sats:
        raise ValueError(f"sat_id {sat_id} outside [0, {config.n_sats})")
    e1, e2 = _plane_basis(config)
    plane, slot = divmod(sat_id, config.sats_per_plane)
    u0 = slot * (2.0 * math.pi / config.sats_per_plane) + plane * (config.phasing_offset_deg * DEG2RAD)
    u = u0 + config.mean_motion_rad_s * np.asarray(times_s, dtype=float)
    r = config.orbit_radius_km
    return r * (np.cos(u)[:, None] * e1[plane] + np.sin(u)[:, None] * e2[plane])


def ground_station_eci(gs: GroundStationSpec, t_s: float | np.ndarray,
                       earth_radius_km: float = 6371.0) -> np.ndarray:
    """ECI position of the ground station at time(s) t_s.

    The station rotates with the Earth; longitude 0 is aligned with the ECI
    x-axis at t = 0.
    """
    lat = gs.latitude_deg * DEG2RAD
    lon = np.asarray(gs.longitude_deg * DEG2RAD + EARTH_ROTATION_RAD_S * np.asarray(t_s))
    x = earth_radius_km * math.cos(lat) * np.cos(lon)
    y = earth_radius_km * math.cos(lat) * np.sin(lon)
    z = np.full_like(np.asarray(lon), earth_radius_km * math.sin(lat))
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def elevation_deg(sat_pos: np.ndarray, gs_pos: np.ndarray) -> np.ndarray:
    """Elevation of satellite(s) above the station's local horizon, degrees."""
    rel = sat_pos - gs_pos
    up = gs_pos / np.linalg.norm(gs_pos, axis=-1, keepdims=True)
    sin_el = np.sum(rel * up, axis=-1) / np.linalg.norm(rel, axis=-1)
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def _segment_clears_earth(p1: np.ndarray, p2: np.ndarray, earth_radius_km: float) -> bool:
    """True when the chord p1-p2 stays strictly outside the Earth sphere."""
    d = p2 - p1
    dd = float(np.dot(d, d))
    if dd == 0.0:
        return float(np.linalg.norm(p1)) > earth_radius_km
    t = -float(np.dot(p1, d)) / dd
    t = min(max(t, 0.0), 1.0)
    closest = p1 + t * d
    return float(np.linalg.norm(closest)) > earth_radius_km


@dataclass(frozen=True)
class ContactGraph:
    """Snapshot of LISL feasibility and GS visibility at one instant.

    lisl_edges holds unordered satellite-id pairs stored as (i, j) with i < j.
    """

    time_s: float
    lisl_edges: frozenset[tuple[int, int]]
    gs_visible: frozenset[int]
    distances_km: dict[tuple[int, int], float] = field(default_factory=dict, repr=False)

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return (min(i, j), max(i, j)) in self.lisl_edges

    def distance_km(self, i: int, j: int) -> float | None:
        return self.distances_km.get((min(i, j), max(i, j)))


def contacts(positions: np.ndarray, gs: GroundStationSpec, range_km: float, t_s: float,
             earth_radius_km: float = 6371.0,
             sat_ids: list[int] | None = None) -> ContactGraph:
    """Contact graph at time t_s for the given ECI positions.

    A LISL edge exists iff the pair distance is within range_km and the
    connecting segment's closest approach to the Earth center exceeds the
    Earth radius. GS visibility requires elevation >= the station's mask.
    When sat_ids is given, only those rows of `positions` are considered and
    edge/visibility ids refer to the original row indices.
    """
    positions = np.asarray(positions, dtype=float)
    ids = list(range(len(positions))) if sat_ids is None else list(sat_ids)
    pos = positions[ids]

    edges: set[tuple[int, int]] = set()
    distances: dict[tuple[int, int], float] = {}
    if len(ids) > 1 and range_km > 0:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        ii, jj = np.nonzero(np.triu(dist <= range_km, k=1))
        for a, b in zip(ii.tolist(), jj.tolist()):
            if _segment_clears_earth(pos[a], pos[b], earth_radius_km):
                key = (min(ids[a], ids[b]), max(ids[a], ids[b]))
                edges.add(key)
                distances[key] = float(dist[a, b])

    gs_pos = ground_station_eci(gs, t_s, earth_radius_km)
    elev = elevation_deg(pos, gs_pos)
    visible = frozenset(ids[k] for k in np.nonzero(elev >= gs.min_elevation_deg)[0].tolist())

    return ContactGraph(time_s=t_s, lisl_edges=frozenset(edges), gs_visible=visible,
                        distances_km=distances)


def visibility_windows(config: ConstellationConfig, gs: GroundStationSpec, sat_id: int,
                       t0_s: float, t1_s: float, step_s: float = 10.0) -> list[tuple[float, float]]:
    """GS visibility intervals [rise, set] for one satellite on a time grid.

    Interval bounds are grid-aligned; a window shorter than the step can be
    missed, so the step should stay well below the pass duration.
    """
    if t1_s <= t0_s:
        return []
    times = np.arange(t0_s, t1_s, step_s)
    sat = propagate_sat(config, sat_id, times)
    gs_pos = ground_station_eci(gs, times, config.earth_radius_km)
    elev = elevation_deg(sat, gs_pos)
    above = elev >= gs.min_elevation_deg
    if not above.any():
        return []
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    starts = [0] if above[0] else []
    starts += (edges[np.diff(above.astype(np.int8))[edges] > 0] + 1).tolist()
    ends = (edges[np.diff(above.astype(np.int8))[edges] < 0]).tolist()
    if above[-1]:
        ends.append(len(times) - 1)
    return [(float(times[a]), float(times[b])) for a, b in zip(starts, ends)]


class VisibilityTimeline:
    """Cached per-satellite GS windows with lazy horizon growth.

    next_contact(sat, t) answers "earliest time >= t when the satellite sees
    the GS", extending the precomputed horizon (doubling) as needed.
    """

    def __init__(self, config: ConstellationConfig, gs: GroundStationSpec,
                 step_s: float = 10.0, initial_horizon_s: float = 3 * 86400.0,
                 max_horizon_s: float = 512 * 86400.0) -> None:
        self._config = config
        self._gs = gs
        self._step = step_s
        self._horizon = initial_horizon_s
        self._max_horizon = max_horizon_s
        self._windows: dict[int, list[tuple[float, float]]] = {}
        self._covered: dict[int, float] = {}

    def windows(self, sat_id: int, until_s: float) -> list[tuple[float, float]]:
        covered = self._covered.get(sat_id, 0.0)
        if until_s > covered:
            horizon = max(self._horizon, covered)
            while horizon < until_s:
                horizon *= 2.0
            if horizon > self._max_horizon:
                raise RuntimeError(f"visibility horizon {horizon} s exceeds cap")
            self._windows[sat_id] = visibility_windows(
                self._config, self._gs, sat_id, 0.0, horizon, self._step)
            self._covered[sat_id] = horizon
            self._horizon = max(self._horizon, horizon)
        return self._windows[sat_id]

    def next_contact(self, sat_id: int, t_s: float) -> float:
        """Earliest time >= t_s at which sat_id is visible from the GS."""
        probe = max(t_s, 0.0)
        while True:
            wins = self.windows(sat_id, probe + self._horizon)
            idx = bisect_right([w[0] for w in wins], probe) - 1
            if idx >= 0 and wins[idx][1] >= probe:
                return probe
            for rise, _ in wins[max(idx, 0):]:
                if rise >= probe:
                    return rise
            probe = self._covered[sat_id]
