"""Simulated worker fleet: device profiles, telemetry dynamics, churn.

Telemetry follows simple seeded stochastic models (mean-reverting CPU
walk, linear battery drain, thermal relaxation) whose constants live in
``TelemetryDynamics`` so scenarios can override them. None of the
dynamics are calibrated against real devices; they exist to give the
schedulers plausible, reproducible signals.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace

from .errors import InvalidInput

__all__ = [
    "DeviceProfile",
    "TelemetrySnapshot",
    "TelemetryDynamics",
    "ChurnEvent",
    "ChurnKind",
    "default_fleet",
    "initial_telemetry",
    "step_telemetry",
    "effective_throughput",
    "sample_churn",
    "with_overrides",
]


@dataclass(frozen=True)
class DeviceProfile:
    """Static hardware description plus churn parameters for one worker."""

    id: str
    cores: int
    freq_ghz: float
    ram_gb: float
    background_load: float = 0.1
    churn_rate_per_min: float = 0.0
    reconnect_delay_s: tuple[float, float] = (2.0, 10.0)

    def __post_init__(self) -> None:
        if self.cores <= 0 or self.freq_ghz <= 0 or self.ram_gb <= 0:
            raise InvalidInput(f"profile {self.id}: cores/freq/ram must be positive")
        if not 0.0 <= self.background_load < 1.0:
            raise InvalidInput(f"profile {self.id}: background_load must be in [0, 1)")
        if self.churn_rate_per_min < 0.0:
            raise InvalidInput(f"profile {self.id}: churn rate must be non-negative")
        lo, hi = self.reconnect_delay_s
        if lo < 0.0 or lo > hi:
            raise InvalidInput(f"profile {self.id}: reconnect delay range invalid")


@dataclass(frozen=True)
class TelemetrySnapshot:
    """One worker's live state at a simulated timestamp."""

    worker_id: str
    cpu_util: float
    free_mem_gb: float
    battery: float
    latency_ms: float
    thermal: float
    timestamp_s: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.cpu_util <= 1.0:
            raise InvalidInput("cpu_util out of [0, 1]")
        if self.free_mem_gb < 0.0:
            raise InvalidInput("free_mem_gb negative")
        if not 0.0 <= self.battery <= 1.0:
            raise InvalidInput("battery out of [0, 1]")
        if self.latency_ms <= 0.0:
            raise InvalidInput("latency_ms must be positive")
        if not 0.0 <= self.thermal <= 1.0:
            raise InvalidInput("thermal out of [0, 1]")


@dataclass(frozen=True)
class TelemetryDynamics:
    """Constants of the synthetic telemetry model."""

    cpu_reversion_per_s: float = 0.5
    cpu_noise_sigma: float = 0.05
    battery_drain_per_min: float = 0.01
    battery_busy_extra_per_min: float = 0.05
    busy_cpu_threshold: float = 0.5
    thermal_rate_per_s: float = 0.1
    latency_base_ms: float = 20.0
    latency_jitter_mean_ms: float = 5.0
    mem_load_fraction: float = 0.3
    mem_noise_gb: float = 0.1


class ChurnKind(enum.Enum):
    DISCONNECT = "disconnect"
    RECONNECT = "reconnect"


@dataclass(frozen=True)
class ChurnEvent:
    worker_id: str
    kind: ChurnKind
    at_s: float


_TABLE2 = [
    ("A34", 8, 2.00, 7.3),
    ("A32", 8, 1.80, 5.5),
    ("A51", 8, 1.74, 7.4),
    ("E40", 8, 1.82, 3.4),
    ("S6 Lite", 8, 2.00, 3.6),
    ("A9+", 8, 1.80, 3.3),
]


def default_fleet() -> list[DeviceProfile]:
    """The six stock Android worker profiles, churn disabled."""
    return [
        DeviceProfile(id=wid, cores=cores, freq_ghz=freq, ram_gb=ram)
        for wid, cores, freq, ram in _TABLE2
    ]


def initial_telemetry(profile: DeviceProfile, t0_s: float = 0.0) -> TelemetrySnapshot:
    """Deterministic starting snapshot: idle at background load, full battery."""
    cpu = profile.background_load
    dyn = TelemetryDynamics()
    return TelemetrySnapshot(
        worker_id=profile.id,
        cpu_util=cpu,
        free_mem_gb=profile.ram_gb * (1.0 - dyn.mem_load_fraction * cpu),
        battery=1.0,
        latency_ms=dyn.latency_base_ms,
        thermal=cpu,
        timestamp_s=t0_s,
    )


def step_telemetry(
    profile: DeviceProfile,
    prev: TelemetrySnapshot,
    dt_s: float,
    rng: random.Random,
    dynamics: TelemetryDynamics = TelemetryDynamics(),
) -> TelemetrySnapshot:
    """Advance one worker's telemetry by ``dt_s`` simulated seconds.

    CPU does a mean-reverting walk toward the profile's background load,
    battery drains linearly (faster while busy), thermal relaxes toward
    CPU, latency is base plus exponential jitter, and free memory tracks
    CPU with uniform noise. All fields stay inside their declared bounds.
    """
    if dt_s <= 0.0:
        raise InvalidInput("dt_s must be positive")
    d = dynamics

    noise = rng.gauss(0.0, d.cpu_noise_sigma * math.sqrt(dt_s)) if d.cpu_noise_sigma > 0 else 0.0
    cpu = prev.cpu_util + d.cpu_reversion_per_s * dt_s * (profile.background_load - prev.cpu_util)
    cpu = min(1.0, max(0.0, cpu + noise))

    drain = d.battery_drain_per_min / 60.0 * dt_s
    if cpu > d.busy_cpu_threshold:
        drain += d.battery_busy_extra_per_min / 60.0 * dt_s
    battery = max(0.0, prev.battery - drain)

    thermal = prev.thermal + d.thermal_rate_per_s * dt_s * (cpu - prev.thermal)
    thermal = min(1.0, max(0.0, thermal))

    latency = d.latency_base_ms + (
        rng.expovariate(1.0 / d.latency_jitter_mean_ms) if d.latency_jitter_mean_ms > 0 else 0.0
    )

    mem_noise = rng.uniform(-d.mem_noise_gb, d.mem_noise_gb) if d.mem_noise_gb > 0 else 0.0
    free_mem = max(0.0, profile.ram_gb * (1.0 - d.mem_load_fraction * cpu) + mem_noise)

    return TelemetrySnapshot(
        worker_id=prev.worker_id,
        cpu_util=cpu,
        free_mem_gb=free_mem,
        battery=battery,
        latency_ms=latency,
        thermal=thermal,
        timestamp_s=prev.timestamp_s + dt_s,
    )


def effective_throughput(
    profile: DeviceProfile, snap: TelemetrySnapshot, unit_scale: float = 1.0
) -> float:
    """Work units per second the device can currently deliver."""
    return max(0.0, profile.cores * profile.freq_ghz * (1.0 - snap.cpu_util) * unit_scale)


def sample_churn(
    profiles: list[DeviceProfile], horizon_s: float, rng: random.Random
) -> list[ChurnEvent]:
    """Sample disconnect/reconnect schedules for every worker.

    Disconnects arrive per worker as a Poisson process at the profile's
    per-minute rate (paused while disconnected); each is paired with a
    reconnect after a uniform delay, so per-worker events strictly
    alternate. A reconnect may land past the horizon; callers that care
    should filter. The merged list is time-sorted.
    """
    if horizon_s <= 0.0:
        raise InvalidInput("horizon_s must be positive")
    events: list[ChurnEvent] = []
    for profile in profiles:
        if profile.churn_rate_per_min <= 0.0:
            continue
        rate_per_s = profile.churn_rate_per_min / 60.0
        lo, hi = profile.reconnect_delay_s
        t = 0.0
        while True:
            t += rng.expovariate(rate_per_s)
            if t >= horizon_s:
                break
            events.append(ChurnEvent(at_s=t, worker_id=profile.id, kind=ChurnKind.DISCONNECT))
            t += rng.uniform(lo, hi)
            events.append(ChurnEvent(at_s=t, worker_id=profile.id, kind=ChurnKind.RECONNECT))
    events.sort(key=lambda e: (e.at_s, e.worker_id))
    return events


def with_overrides(
    profile: DeviceProfile,
    *,
    background_load: float | None = None,
    churn_rate_per_min: float | None = None,
    reconnect_delay_s: tuple[float, float] | None = None,
) -> DeviceProfile:
    """Copy a profile with selected fields replaced (scenario overrides)."""
    updates = {}
    if background_load is not None:
        updates["background_load"] = background_load
    if churn_rate_per_min is not None:
        updates["churn_rate_per_min"] = churn_rate_per_min
    if reconnect_delay_s is not None:
        updates["reconnect_delay_s"] = tuple(reconnect_delay_s)
    return replace(profile, **updates) if updates else profile
