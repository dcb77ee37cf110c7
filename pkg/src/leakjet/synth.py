"""Seeded multi-station signal generator.

Every station's channels are a sum of independently generated components
(background, leak); each component draws from its own random substream keyed
by (seed, station id, component), so turning the leak off leaves every other
component bit-identical.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dsp import DEFAULT_BAND_HZ
from .hydraulics import BAR_PA, leak_flow, spl_forward
from .model import (
    DEFAULT_SPL_MODEL, MIN_SAMPLE_RATE_HZ, Channel, FluidSpec, LeakClass, NozzleSpec,
    NOMINAL_AREAS_MM2, SignalRecord, SplModel, StationLayout, validate_layout,
)

GENERATORS = {"pcg64": np.random.PCG64, "philox": np.random.Philox, "sfc64": np.random.SFC64}

# Leak-band background calibrated so a 31.65 mm2 hole at 4 bar drops to 0 dB
# SNR exactly 60 m from the source with the default attenuation.
DEFAULT_ATTENUATION_NP_PER_M = 0.05
DEFAULT_NOISE_FLOOR_KPA = 0.0384
DEFAULT_PUMP_CORNER_HZ = 150.0
STANDSTILL_PRESSURE_BAR = 0.6

_LEAK_KEY = 0x1EA4
_COMPONENTS = {
    "floor": 1, "pump": 2, "drift": 3, "static_noise": 4, "flow_noise": 5,
    "accel_floor": 6, "disturbance": 7,
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Leak:
    position_m: float
    nozzle: NozzleSpec
    delta_p_bar: float
    start_s: float
    stop_s: float

    def __post_init__(self):
        if not self.delta_p_bar > 0:
            raise ScenarioError(f"leak delta_p_bar must be > 0, got {self.delta_p_bar}")


@dataclass(frozen=True)
class Disturbance:
    """Truck-filling draw-off: a flow step with its pressure sag and noise."""

    station_id: str
    start_s: float
    stop_s: float
    flow_step_m3_h: float


@dataclass(frozen=True)
class PressureDip:
    start_s: float
    stop_s: float
    level_bar: float = 0.8


@dataclass(frozen=True)
class Scenario:
    layout: StationLayout
    fluid: FluidSpec
    duration_s: float
    seed: int
    rng: str
    sample_rate_hz: float = 8192.0
    condition: str = "transferring"
    line_pressure_bar: float = 4.0
    pump_stations: tuple = ()  # (station id, rms kPa at the pump)
    leak: Optional[Leak] = None
    disturbances: tuple = ()
    dips: tuple = ()
    attenuation_np_per_m: float = DEFAULT_ATTENUATION_NP_PER_M
    spl_model: SplModel = DEFAULT_SPL_MODEL
    noise_floor_kpa: float = DEFAULT_NOISE_FLOOR_KPA
    pump_corner_hz: float = DEFAULT_PUMP_CORNER_HZ
    pump_attenuation_np_per_m: float = 0.005
    transfer_flow_m3_h: float = 150.0
    flow_noise_m3_h: float = 1.0
    static_drift_bar: float = 0.02
    static_noise_bar: float = 0.002
    leak_drop_bar_per_m3_h: float = 0.05
    disturbance_drop_bar_per_m3_h: float = 0.002
    disturbance_noise_kpa_per_m3_h: float = 0.0005
    accel_gain: float = 1.0  # m/s2 per kPa
    accel_leak_boost: float = 2.0
    accel_floor_m_s2: float = 0.02

    def __post_init__(self):
        for name in ("pump_stations", "disturbances", "dips"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        validate_scenario(self)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def without_leak(self) -> "Scenario":
        return replace(self, leak=None)


def validate_scenario(sc: Scenario) -> None:
    validate_layout(sc.layout)
    if sc.rng not in GENERATORS:
        raise ScenarioError(f"unknown generator {sc.rng!r}; choose from {sorted(GENERATORS)}")
    if not sc.duration_s > 0:
        raise ScenarioError(f"duration_s must be > 0, got {sc.duration_s}")
    if sc.sample_rate_hz < MIN_SAMPLE_RATE_HZ:
        raise ScenarioError(
            f"sample_rate_hz {sc.sample_rate_hz} cannot represent 4 kHz content "
            f"(need >= {MIN_SAMPLE_RATE_HZ:g})"
        )
    if sc.condition not in ("standstill", "transferring"):
        raise ScenarioError(f"condition must be standstill or transferring, got {sc.condition!r}")
    if sc.attenuation_np_per_m < 0 or sc.pump_attenuation_np_per_m < 0:
        raise ScenarioError("attenuation must be >= 0")
    if sc.noise_floor_kpa < 0:
        raise ScenarioError("noise_floor_kpa must be >= 0")
    ids = {st.id for st in sc.layout.stations}
    for sid, amp in sc.pump_stations:
        if sid not in ids:
            raise ScenarioError(f"pump at unknown station {sid!r}")
        if amp < 0:
            raise ScenarioError("pump amplitude must be >= 0")
    intervals = [("disturbance", d.start_s, d.stop_s) for d in sc.disturbances]
    intervals += [("dip", d.start_s, d.stop_s) for d in sc.dips]
    if sc.leak is not None:
        intervals.append(("leak", sc.leak.start_s, sc.leak.stop_s))
        if not 0 <= sc.leak.position_m <= sc.layout.length_m:
            raise ScenarioError(f"leak position {sc.leak.position_m} m outside the line")
    for what, start, stop in intervals:
        if not 0 <= start < stop <= sc.duration_s:
            raise ScenarioError(f"{what} interval [{start}, {stop}] s not within [0, {sc.duration_s}] s")
    for d in sc.disturbances:
        if d.station_id not in ids:
            raise ScenarioError(f"disturbance at unknown station {d.station_id!r}")


def _rng(sc: Scenario, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(sc.seed, spawn_key=key)
    return np.random.Generator(GENERATORS[sc.rng](ss))


def _station_key(station_id: str) -> int:
    return zlib.crc32(station_id.encode("utf-8"))


def _shaped_noise(gen: np.random.Generator, n: int, fs: float, gain2) -> np.ndarray:
    """Gaussian noise with power spectrum proportional to gain2(f), unit expected variance."""
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    g2 = gain2(freqs)
    white = gen.standard_normal(n)
    spec = np.fft.rfft(white) * np.sqrt(g2)
    # Expected variance of the shaped noise is the mean of g2 over the two-sided grid.
    weights = np.full(len(freqs), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    var = float(np.dot(weights, g2)) / n
    return np.fft.irfft(spec, n=n) / math.sqrt(var) if var > 0 else np.zeros(n)


def _pump_gain2(corner_hz: float):
    return lambda f: 1.0 / (1.0 + (f / corner_hz) ** 8)


def pump_band_fraction(sc: Scenario, band=DEFAULT_BAND_HZ) -> float:
    """Fraction of pump-noise power falling in `band` (expected value)."""
    n = sc.n_samples
    freqs = np.fft.rfftfreq(n, 1.0 / sc.sample_rate_hz)
    g2 = _pump_gain2(sc.pump_corner_hz)(freqs)
    w = np.full(len(freqs), 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    sel = (freqs >= band[0]) & (freqs < band[1])
    return float(np.dot(w[sel], g2[sel]) / np.dot(w, g2))


def _interval_mask(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    return (t >= start) & (t < stop)


def leak_source_spectrum(sc: Scenario) -> np.ndarray:
    """rfft coefficients of the periodic leak source (period = record length).

    Flat in [500, 4000) Hz, zero elsewhere, scaled so the source RMS over
    one period equals the SPL law's level.
    """
    leak = sc.leak
    n = sc.n_samples
    fs = sc.sample_rate_hz
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    band = (freqs >= DEFAULT_BAND_HZ[0]) & (freqs < DEFAULT_BAND_HZ[1])
    gen = _rng(sc, _LEAK_KEY)
    spec = np.zeros(len(freqs), dtype=complex)
    k = int(band.sum())
    spec[band] = gen.standard_normal(k) + 1j * gen.standard_normal(k)
    # irfft mean square = sum(2|X|^2)/n^2 for interior bins
    ms = 2.0 * float(np.sum(np.abs(spec[band]) ** 2)) / n ** 2
    level = spl_forward(leak.delta_p_bar, leak.nozzle.area_mm2, sc.spl_model)
    return spec * (level / math.sqrt(ms))


def leak_at(sc: Scenario, position_m: float, spectrum: Optional[np.ndarray] = None) -> np.ndarray:
    """Leak jet noise (kPa) seen at `position_m`: delayed, attenuated, gated."""
    leak = sc.leak
    n = sc.n_samples
    fs = sc.sample_rate_hz
    if spectrum is None:
        spectrum = leak_source_spectrum(sc)
    r = abs(position_m - leak.position_m)
    delay = r / sc.fluid.sound_speed_m_s
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    shifted = spectrum * np.exp(-2j * np.pi * freqs * delay)
    x = np.fft.irfft(shifted, n=n) * math.exp(-sc.attenuation_np_per_m * r)
    t = np.arange(n) / fs
    return np.where(_interval_mask(t, leak.start_s + delay, leak.stop_s + delay), x, 0.0)


def leak_flow_m3_h(sc: Scenario) -> float:
    leak = sc.leak
    q = leak_flow(leak.nozzle.discharge_coefficient, leak.nozzle.area_m2,
                  leak.delta_p_bar * BAR_PA, sc.fluid.density_kg_m3)
    return q * 3600.0


def synthesize_components(sc: Scenario) -> dict:
    """Per station: {"background": {channel: float64 array}, "leak": {...}}.

    The two parts sum to the synthesized record before float32 storage.
    """
    validate_scenario(sc)
    n = sc.n_samples
    fs = sc.sample_rate_hz
    t = np.arange(n) / fs
    transferring = sc.condition == "transferring"
    base_bar = sc.line_pressure_bar if transferring else STANDSTILL_PRESSURE_BAR
    spectrum = leak_source_spectrum(sc) if sc.leak is not None else None

    out = {}
    for st in sc.layout.stations:
        skey = _station_key(st.id)
        bg, lk = {}, {}
        chans = st.channels

        dyn_needed = Channel.DYNAMIC_PRESSURE_KPA in chans or Channel.ACCELERATION_M_S2 in chans
        if dyn_needed:
            floor = sc.noise_floor_kpa * _rng(sc, skey, _COMPONENTS["floor"]).standard_normal(n)
            pump = np.zeros(n)
            if transferring:
                for i, (pid, amp) in enumerate(sc.pump_stations):
                    if amp == 0:
                        continue
                    dist = abs(st.position_m - sc.layout.position(pid))
                    gen = _rng(sc, skey, _COMPONENTS["pump"], i)
                    pump += amp * math.exp(-sc.pump_attenuation_np_per_m * dist) * _shaped_noise(
                        gen, n, fs, _pump_gain2(sc.pump_corner_hz))
            dist_noise = np.zeros(n)
            for i, d in enumerate(sc.disturbances):
                if d.station_id != st.id:
                    continue
                gen = _rng(sc, skey, _COMPONENTS["disturbance"], i)
                amp = sc.disturbance_noise_kpa_per_m3_h * abs(d.flow_step_m3_h)
                dist_noise += np.where(_interval_mask(t, d.start_s, d.stop_s),
                                       amp * gen.standard_normal(n), 0.0)
            dyn_bg = floor + pump + dist_noise
            leak_dyn = leak_at(sc, st.position_m, spectrum) if sc.leak is not None else None

            if Channel.DYNAMIC_PRESSURE_KPA in chans:
                bg[Channel.DYNAMIC_PRESSURE_KPA] = dyn_bg
                if leak_dyn is not None:
                    lk[Channel.DYNAMIC_PRESSURE_KPA] = leak_dyn
            if Channel.ACCELERATION_M_S2 in chans:
                afloor = sc.accel_floor_m_s2 * _rng(sc, skey, _COMPONENTS["accel_floor"]).standard_normal(n)
                bg[Channel.ACCELERATION_M_S2] = sc.accel_gain * (pump + dist_noise) + afloor
                if leak_dyn is not None:
                    lk[Channel.ACCELERATION_M_S2] = sc.accel_gain * sc.accel_leak_boost * leak_dyn

        if Channel.STATIC_PRESSURE_BAR in chans:
            drift = sc.static_drift_bar * _shaped_noise(
                _rng(sc, skey, _COMPONENTS["drift"]), n, fs, lambda f: ((f > 0) & (f <= 0.2)).astype(float))
            noise = sc.static_noise_bar * _rng(sc, skey, _COMPONENTS["static_noise"]).standard_normal(n)
            static = base_bar + drift + noise
            for d in sc.disturbances:
                static = static - np.where(_interval_mask(t, d.start_s, d.stop_s),
                                           sc.disturbance_drop_bar_per_m3_h * d.flow_step_m3_h, 0.0)
            for dip in sc.dips:
                static = np.where(_interval_mask(t, dip.start_s, dip.stop_s), dip.level_bar + noise, static)
            bg[Channel.STATIC_PRESSURE_BAR] = static
            if sc.leak is not None:
                delay = abs(st.position_m - sc.leak.position_m) / sc.fluid.sound_speed_m_s
                drop = sc.leak_drop_bar_per_m3_h * leak_flow_m3_h(sc)
                lk[Channel.STATIC_PRESSURE_BAR] = np.where(
                    _interval_mask(t, sc.leak.start_s + delay, sc.leak.stop_s + delay), -drop, 0.0)

        if Channel.FLOW_M3_H in chans:
            if transferring:
                flow = sc.transfer_flow_m3_h + sc.flow_noise_m3_h * _rng(
                    sc, skey, _COMPONENTS["flow_noise"]).standard_normal(n)
            else:
                flow = np.zeros(n)
            for d in sc.disturbances:
                if d.station_id == st.id:
                    flow = flow + np.where(_interval_mask(t, d.start_s, d.stop_s), d.flow_step_m3_h, 0.0)
            bg[Channel.FLOW_M3_H] = flow

        out[st.id] = {"background": bg, "leak": lk}
    return out


def synthesize(sc: Scenario) -> list[SignalRecord]:
    """One SignalRecord per station; identical scenarios give bit-identical records."""
    parts = synthesize_components(sc)
    records = []
    for st in sc.layout.stations:
        bg, lk = parts[st.id]["background"], parts[st.id]["leak"]
        chans = {k: (v + lk[k] if k in lk else v) for k, v in bg.items()}
        records.append(SignalRecord(st.id, sc.sample_rate_hz, 0.0, chans))
    return records


def background_band_rms(sc: Scenario, station_id: str, band=DEFAULT_BAND_HZ) -> float:
    """Expected leak-band RMS (kPa) of the background at a station."""
    fs = sc.sample_rate_hz
    floor_frac = (band[1] - band[0]) / (fs / 2)
    e = sc.noise_floor_kpa ** 2 * floor_frac
    if sc.condition == "transferring":
        pos = sc.layout.position(station_id)
        frac = pump_band_fraction(sc, band)
        for pid, amp in sc.pump_stations:
            dist = abs(pos - sc.layout.position(pid))
            e += (amp * math.exp(-sc.pump_attenuation_np_per_m * dist)) ** 2 * frac
    return math.sqrt(e)


def predicted_snr_db(sc: Scenario, station_id: str) -> float:
    """Expected leak-band SNR at a station while the leak is active."""
    leak = sc.leak
    src = spl_forward(leak.delta_p_bar, leak.nozzle.area_mm2, sc.spl_model)
    r = abs(sc.layout.position(station_id) - leak.position_m)
    sig = src * math.exp(-sc.attenuation_np_per_m * r)
    return 20.0 * math.log10(sig / background_band_rms(sc, station_id))


def detection_radius_m(sc: Scenario, station_id: Optional[str] = None) -> float:
    """Distance at which the leak-band SNR falls to 0 dB (background of `station_id`,
    or the bare sensor floor)."""
    leak = sc.leak
    src = spl_forward(leak.delta_p_bar, leak.nozzle.area_mm2, sc.spl_model)
    if station_id is None:
        bg = sc.noise_floor_kpa * math.sqrt((DEFAULT_BAND_HZ[1] - DEFAULT_BAND_HZ[0]) / (sc.sample_rate_hz / 2))
    else:
        bg = background_band_rms(sc, station_id)
    if sc.attenuation_np_per_m == 0:
        return math.inf if src > bg else 0.0
    return max(0.0, math.log(src / bg) / sc.attenuation_np_per_m)


def nominal_class(area_mm2: float) -> Optional[LeakClass]:
    for label, a in NOMINAL_AREAS_MM2.items():
        if label != "none" and a == area_mm2:
            return LeakClass.of(label)
    return None
