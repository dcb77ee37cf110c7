"""Domain types shared across the toolkit.

All types are frozen dataclasses; units are fixed per field and never
converted in stored data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np


class Sensor(str, Enum):
    STATIC_PRESSURE = "static_pressure"
    HYDROPHONE = "hydrophone"
    ACCELEROMETER = "accelerometer"
    FLOWMETER = "flowmeter"


class Channel(str, Enum):
    """Channel kinds of a SignalRecord; the value is the on-disk name."""

    STATIC_PRESSURE_BAR = "static_pressure_bar"
    DYNAMIC_PRESSURE_KPA = "dynamic_pressure_kpa"
    ACCELERATION_M_S2 = "acceleration_m_s2"
    FLOW_M3_H = "flow_m3_h"

    @property
    def code(self) -> int:
        return CHANNEL_CODES[self]


CHANNEL_CODES = {
    Channel.STATIC_PRESSURE_BAR: 1,
    Channel.DYNAMIC_PRESSURE_KPA: 2,
    Channel.ACCELERATION_M_S2: 3,
    Channel.FLOW_M3_H: 4,
}
CHANNEL_BY_CODE = {v: k for k, v in CHANNEL_CODES.items()}

SENSOR_CHANNEL = {
    Sensor.STATIC_PRESSURE: Channel.STATIC_PRESSURE_BAR,
    Sensor.HYDROPHONE: Channel.DYNAMIC_PRESSURE_KPA,
    Sensor.ACCELEROMETER: Channel.ACCELERATION_M_S2,
    Sensor.FLOWMETER: Channel.FLOW_M3_H,
}

MIN_SAMPLE_RATE_HZ = 8000.0
DEFAULT_DISCHARGE_COEFFICIENT = 0.62
DEFAULT_DENSITY_KG_M3 = 800.0
DEFAULT_SOUND_SPEED_M_S = 1200.0


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Station:
    id: str
    position_m: float
    sensors: frozenset = frozenset(Sensor)

    def __post_init__(self):
        object.__setattr__(self, "sensors", frozenset(Sensor(s) for s in self.sensors))
        if not self.id or any(c in self.id for c in ",= \t\n#"):
            raise LayoutError(f"invalid station id {self.id!r}")

    @property
    def channels(self) -> list[Channel]:
        return [SENSOR_CHANNEL[s] for s in Sensor if s in self.sensors]


@dataclass(frozen=True)
class StationLayout:
    stations: tuple
    pipe_inner_diameter_m: float

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))

    @property
    def length_m(self) -> float:
        return self.stations[-1].position_m

    def station(self, station_id: str) -> Station:
        for st in self.stations:
            if st.id == station_id:
                return st
        raise KeyError(station_id)

    def position(self, station_id: str) -> float:
        return self.station(station_id).position_m


def validate_layout(layout: StationLayout) -> StationLayout:
    """Return `layout` unchanged if it is usable, else raise LayoutError
    naming the first violated invariant."""
    stations = layout.stations
    if len(stations) < 2:
        raise LayoutError(f"layout needs at least 2 stations, got {len(stations)}")
    if stations[0].position_m != 0:
        raise LayoutError(
            f"first station {stations[0].id} must sit at 0 m, got {stations[0].position_m}"
        )
    for prev, cur in zip(stations, stations[1:]):
        if not cur.position_m > prev.position_m:
            raise LayoutError(
                f"station positions must be strictly increasing: "
                f"{prev.id}={prev.position_m} m, {cur.id}={cur.position_m} m"
            )
    ids = [st.id for st in stations]
    if len(set(ids)) != len(ids):
        raise LayoutError("duplicate station ids")
    d = layout.pipe_inner_diameter_m
    if not (d > 0 and math.isfinite(d)):
        raise LayoutError(f"pipe_inner_diameter_m must be > 0, got {d}")
    return layout


# Reference station positions; 16" ID pipe.
TABLE1_POSITIONS_M = {"A": 0.0, "B": 10.0, "C": 63.0, "D": 294.0, "E": 337.0, "F": 341.0}
_P, _H, _A, _F = Sensor


def table1_layout() -> StationLayout:
    sensors = {
        "A": {_P, _H},
        "B": {_P, _H, _F},
        "C": {_P, _H, _A},
        "D": {_P, _H, _A},
        "E": {_P, _H, _F},
        "F": {_P, _H, _A},
    }
    return StationLayout(
        stations=tuple(Station(k, v, frozenset(sensors[k])) for k, v in TABLE1_POSITIONS_M.items()),
        pipe_inner_diameter_m=16 * 0.0254,
    )


class NozzleShape(str, Enum):
    CIRCULAR = "circular"
    SLOT = "slot"


@dataclass(frozen=True)
class NozzleSpec:
    area_mm2: float
    shape: NozzleShape = NozzleShape.CIRCULAR
    orifice_diameter_m: Optional[float] = None
    discharge_coefficient: float = DEFAULT_DISCHARGE_COEFFICIENT

    def __post_init__(self):
        object.__setattr__(self, "shape", NozzleShape(self.shape))
        if not self.area_mm2 > 0:
            raise ValueError(f"nozzle area must be > 0, got {self.area_mm2}")
        if not 0 < self.discharge_coefficient <= 1:
            raise ValueError(f"discharge coefficient must lie in (0, 1], got {self.discharge_coefficient}")
        if self.shape is NozzleShape.CIRCULAR:
            if self.orifice_diameter_m is None:
                d = 2.0 * math.sqrt(self.area_mm2 / math.pi) * 1e-3
                object.__setattr__(self, "orifice_diameter_m", d)
            else:
                circle = math.pi * (self.orifice_diameter_m * 1e3 / 2) ** 2
                if abs(circle - self.area_mm2) > 0.005 * self.area_mm2:
                    raise ValueError(
                        f"circular nozzle area {self.area_mm2} mm2 inconsistent with "
                        f"diameter {self.orifice_diameter_m} m ({circle:.4f} mm2)"
                    )

    @property
    def area_m2(self) -> float:
        return self.area_mm2 * 1e-6


@dataclass(frozen=True)
class FluidSpec:
    density_kg_m3: float = DEFAULT_DENSITY_KG_M3
    sound_speed_m_s: float = DEFAULT_SOUND_SPEED_M_S

    def __post_init__(self):
        if not self.density_kg_m3 > 0:
            raise ValueError(f"density must be > 0, got {self.density_kg_m3}")
        if not self.sound_speed_m_s > 0:
            raise ValueError(f"sound speed must be > 0, got {self.sound_speed_m_s}")


NOMINAL_AREAS_MM2 = {"small": 5.06, "medium": 12.56, "large": 31.65, "none": 0.0}


@dataclass(frozen=True)
class LeakClass:
    """One of the three nozzle area classes, or ``none``.

    Nominal areas are frozen; constructing a class with any other area fails.
    """

    label: str
    nominal_area_mm2: float

    def __post_init__(self):
        if self.label not in NOMINAL_AREAS_MM2:
            raise ValueError(f"unknown leak class {self.label!r}")
        if self.nominal_area_mm2 != NOMINAL_AREAS_MM2[self.label]:
            raise ValueError(
                f"leak class {self.label} has nominal area {NOMINAL_AREAS_MM2[self.label]} mm2, "
                f"not {self.nominal_area_mm2}"
            )

    @classmethod
    def of(cls, label: str) -> "LeakClass":
        return cls(label, NOMINAL_AREAS_MM2[label])

    @property
    def is_leak(self) -> bool:
        return self.label != "none"

    def __str__(self):
        return self.label


SMALL = LeakClass.of("small")
MEDIUM = LeakClass.of("medium")
LARGE = LeakClass.of("large")
NO_LEAK = LeakClass.of("none")
LEAK_CLASSES = (SMALL, MEDIUM, LARGE)


@dataclass(frozen=True, eq=False)
class SignalRecord:
    """Uniformly sampled channels of one station.

    Samples are stored as float32, the on-disk precision.
    """

    station_id: str
    sample_rate_hz: float
    start_time_s: float
    channels: Mapping

    def __post_init__(self):
        if not self.sample_rate_hz >= MIN_SAMPLE_RATE_HZ:
            raise ValueError(
                f"sample rate {self.sample_rate_hz} Hz cannot represent content up to 4 kHz "
                f"(need >= {MIN_SAMPLE_RATE_HZ:g} Hz)"
            )
        chans = {}
        for kind, arr in self.channels.items():
            a = np.ascontiguousarray(arr, dtype=np.float32)
            if a.ndim != 1:
                raise ValueError(f"channel {kind} must be 1-D")
            a.setflags(write=False)
            chans[Channel(kind)] = a
        lengths = {len(a) for a in chans.values()}
        if len(lengths) > 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        ordered = {k: chans[k] for k in Channel if k in chans}
        object.__setattr__(self, "channels", ordered)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def __getitem__(self, kind) -> np.ndarray:
        return self.channels[Channel(kind)]

    def __contains__(self, kind) -> bool:
        return Channel(kind) in self.channels

    def __eq__(self, other):
        if not isinstance(other, SignalRecord):
            return NotImplemented
        return (
            self.station_id == other.station_id
            and self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_s == other.start_time_s
            and list(self.channels) == list(other.channels)
            and all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels)
        )


@dataclass(frozen=True)
class FeatureBatch:
    station_id: str
    window_start_s: float
    window_len_s: float
    static_pressure_mean_bar: float = math.nan
    static_pressure_std_bar: float = math.nan
    dyn_pressure_std_kpa: float = math.nan
    dyn_pressure_max_kpa: float = math.nan
    leak_band_energy_kpa2: float = math.nan
    leak_band_level_db: float = math.nan
    accel_std_m_s2: float = math.nan
    flow_mean_m3_h: float = math.nan
    label: Optional[LeakClass] = None  # None: ground truth unknown

    def __post_init__(self):
        if not self.window_len_s > 0:
            raise ValueError("window_len_s must be > 0")
        for name in ("static_pressure_std_bar", "dyn_pressure_std_kpa",
                     "leak_band_energy_kpa2", "accel_std_m_s2"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    def feature(self, name: str) -> float:
        if name not in FEATURE_NAMES:
            raise KeyError(f"unknown feature {name!r}")
        v = getattr(self, name)
        if math.isnan(v):
            raise KeyError(f"feature {name!r} not available for station {self.station_id}")
        return v


FEATURE_NAMES = (
    "static_pressure_mean_bar",
    "static_pressure_std_bar",
    "dyn_pressure_std_kpa",
    "dyn_pressure_max_kpa",
    "leak_band_energy_kpa2",
    "leak_band_level_db",
    "accel_std_m_s2",
    "flow_mean_m3_h",
)


@dataclass(frozen=True)
class SplModel:
    """Fitted power law SPL[kPa] = dp[bar] * A[mm2]**n * k."""

    n: float
    k: float
    fit_residual_rms: float = 0.0
    sample_count: int = 0

    N_MIN = 1.0
    N_MAX = 3.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"SPL scale k must be > 0, got {self.k}")
        if not self.N_MIN <= self.n <= self.N_MAX:
            raise ValueError(f"SPL exponent n={self.n} outside [{self.N_MIN}, {self.N_MAX}]")


DEFAULT_SPL_MODEL = SplModel(n=1.5, k=1e-3)


class Gating(str, Enum):
    OK = "ok"
    LOW_PRESSURE = "low_pressure"
    UNSTABLE_PRESSURE = "unstable_pressure"
    STANDSTILL_MASKED = "standstill_masked"


@dataclass(frozen=True)
class BatchVerdict:
    window_start_s: float
    station_id: str
    leak_detected: bool
    gating: Gating
    leak_class: LeakClass = NO_LEAK
    estimated_area_mm2: Optional[float] = None

    def __post_init__(self):
        if self.estimated_area_mm2 is not None and not self.leak_detected:
            raise ValueError("an area estimate requires a detected leak")


@dataclass(frozen=True)
class Localization:
    position_m: float
    delay_s: float
    station_pair: tuple
    peak_correlation: float
    clamped: bool = False


@dataclass(frozen=True)
class DetectionReport:
    entries: tuple
    localization: Optional[Localization] = None
    line_length_m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        loc = self.localization
        if loc is not None and self.line_length_m is not None:
            if not 0 <= loc.position_m <= self.line_length_m:
                raise ValueError(f"position {loc.position_m} m outside the line")
