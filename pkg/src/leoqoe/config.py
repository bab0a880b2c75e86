"""Scenario configuration: one YAML file with a section per subsystem."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import allocator, constellation, qos, traffic

PolicyLabel = Literal["dsroq", "dsroq_fifo", "baseline"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstellationConfig(_Section):
    plane_count: int = Field(72, ge=1)
    sats_per_plane: int = Field(22, ge=2)
    altitude_km: float = Field(550.0, gt=0)
    inclination_deg: float = Field(53.0, ge=0, le=180)
    phasing_offset: int = 1
    earth_radius_km: float = Field(6371.0, gt=0)
    subgrid_rows: int = Field(4, ge=1)
    subgrid_cols: int = Field(4, ge=1)
    anchor: tuple[int, int] = (0, 0)
    duration_s: float = Field(60.0, gt=0)
    snapshot_interval_s: float = Field(15.0, gt=0)
    handover_phase: float = Field(0.0, gt=-0.5, le=0.5)

    @model_validator(mode="after")
    def _fits(self):
        if self.duration_s < self.snapshot_interval_s:
            raise ValueError("duration_s must be at least one snapshot interval")
        if self.subgrid_rows * self.subgrid_cols < 2:
            raise ValueError("subgrid needs at least two regions")
        p, s = self.anchor
        if p < 0 or p + self.subgrid_rows > self.plane_count:
            raise ValueError("subgrid rows exceed the plane count from this anchor")
        if s < 0 or self.subgrid_cols > self.sats_per_plane:
            raise ValueError("subgrid cols exceed satellites per plane")
        return self

    def shell(self) -> constellation.ShellParams:
        return constellation.ShellParams(
            plane_count=self.plane_count,
            sats_per_plane=self.sats_per_plane,
            altitude=self.altitude_km,
            inclination=self.inclination_deg,
            phasing_offset=self.phasing_offset,
            earth_radius=self.earth_radius_km,
        )

    def snapshots(self, link_capacity: float = 1.0):
        return constellation.snapshot_sequence(
            self.shell(),
            self.duration_s,
            self.snapshot_interval_s,
            rows=self.subgrid_rows,
            cols=self.subgrid_cols,
            anchor=self.anchor,
            link_capacity=link_capacity,
            handover_phase=self.handover_phase,
        )


class ProfileConfig(_Section):
    traffic_class: Literal["EF", "AF", "BE"]
    zeta: tuple[float, float, float]
    latency_s: tuple[float, float]
    throughput_pkts_per_slot: tuple[float, float]
    drop_rate: tuple[float, float]

    def build(self, name: str) -> traffic.AppProfile:
        return traffic.AppProfile(
            name,
            self.traffic_class,
            self.zeta,
            self.latency_s,
            self.throughput_pkts_per_slot,
            self.drop_rate,
        )


def _default_profiles() -> dict[str, ProfileConfig]:
    return {
        name: ProfileConfig(
            traffic_class=p.traffic_class,
            zeta=p.zeta,
            latency_s=p.latency_bounds,
            throughput_pkts_per_slot=p.throughput_bounds,
            drop_rate=p.drop_bounds,
        )
        for name, p in traffic.DEFAULT_PROFILES.items()
    }


class TrafficConfig(_Section):
    flow_count: int = Field(60, ge=1)
    mix: dict[str, float] = Field(default_factory=lambda: {"VC": 0.2, "LS": 0.2, "VoD": 0.2, "FT": 0.4})
    class_weights: dict[str, float] = Field(default_factory=lambda: dict(traffic.DEFAULT_CLASS_WEIGHTS))
    profiles: dict[str, ProfileConfig] = Field(default_factory=_default_profiles)
    packet_size_bytes: float = Field(1500.0, gt=0)
    link_rate_mbps: float = Field(12.0, gt=0)
    resample_flows: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        if not math.isclose(sum(self.mix.values()), 1.0, abs_tol=1e-9):
            raise ValueError("traffic.mix fractions must sum to 1")
        missing = set(self.mix) - set(self.profiles)
        if missing:
            raise ValueError(f"traffic.mix names apps without profiles: {sorted(missing)}")
        for cls, w in self.class_weights.items():
            if cls not in traffic.TRAFFIC_CLASSES:
                raise ValueError(f"unknown traffic class {cls!r} in class_weights")
            if not w > 0:
                raise ValueError("class weights must be positive")
        for name, p in self.profiles.items():
            p.build(name)  # raises on broken invariants
        return self

    @property
    def slot_s(self) -> float:
        return traffic.slot_seconds(self.packet_size_bytes, self.link_rate_mbps)

    def app_profiles(self) -> dict[str, traffic.AppProfile]:
        return {name: p.build(name) for name, p in self.profiles.items()}


class AllocatorConfig(_Section):
    k_routes: int = Field(4, ge=1)
    bandwidth_levels: int = Field(5, ge=2)
    epsilon_0: float = Field(0.5, gt=0, le=1)
    a_0: float = Field(10.0, gt=0)
    b_0: float = 10.0
    epsilon_min: float = Field(0.0, ge=0, lt=1)
    lam: float = Field(10.0, ge=0, alias="lambda")
    episodes: int = Field(3000, ge=1)
    warm_start: bool = False

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    def params(self, episodes: int | None = None) -> allocator.MctsParams:
        return allocator.MctsParams(
            epsilon_0=self.epsilon_0,
            a_0=self.a_0,
            b_0=self.b_0,
            epsilon_min=self.epsilon_min,
            lam=self.lam,
            episodes=episodes or self.episodes,
        )


class SchedulerConfig(_Section):
    policy: Literal["lyapunov", "fifo", "strict_priority"] = "lyapunov"
    baseline_policy: Literal["lyapunov", "fifo", "strict_priority"] = "strict_priority"
    buffer_packets: int = Field(1024, ge=1)
    omega_max: float = 5.0
    omega_min: float = 1.0

    @field_validator("omega_min")
    @classmethod
    def _order(cls, v, info):
        if v >= info.data.get("omega_max", 5.0):
            raise ValueError("omega_min must be below omega_max")
        return v

    def score_bounds(self) -> qos.ScoreBounds:
        return qos.ScoreBounds(self.omega_max, self.omega_min)


class SimulatorConfig(_Section):
    window_slots: int = Field(10_000, gt=1)
    windows_per_snapshot: int = Field(1, ge=1)
    iterations: int = Field(10, ge=1)
    policies: tuple[PolicyLabel, ...] = ("dsroq", "dsroq_fifo", "baseline")
    ef_weights: tuple[float, ...] = (5.0, 10.0, 20.0)


class ScenarioConfig(_Section):
    seed: int = 0
    output_dir: str = "results"
    constellation: ConstellationConfig = ConstellationConfig()
    traffic: TrafficConfig = TrafficConfig()
    allocator: AllocatorConfig = AllocatorConfig()
    scheduler: SchedulerConfig = SchedulerConfig()
    simulator: SimulatorConfig = SimulatorConfig()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, **sections) -> ScenarioConfig:
        """Copy with shallow per-section overrides, re-validated."""
        data = self.model_dump(mode="json", by_alias=True)
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return ScenarioConfig.model_validate(data)


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.model_validate(data)


def dump_config(cfg: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.model_dump(mode="json", by_alias=True), fh, sort_keys=False)
