"""On-disk formats.

* key-value text (``key = value``, ``#`` comments) for layouts, scenarios,
  models, domains and manifests;
* binary signal files: 64-byte little-endian header + channel-major float32;
* delimited tables for features and reports.

Reals are written with ``repr`` so text round trips are exact.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .detect import DetectionDomain, Score
from .model import (
    CHANNEL_BY_CODE, FEATURE_NAMES, NO_LEAK, BatchVerdict, FeatureBatch, FluidSpec, LeakClass,
    NozzleSpec, Sensor, SignalRecord, SplModel, Station, StationLayout, validate_layout,
)
from .synth import (
    Disturbance, Leak, PressureDip, Scenario, ScenarioError, nominal_class, predicted_snr_db,
)

SIGNAL_MAGIC = b"EVPM"
SIGNAL_VERSION = 1
SIGNAL_SUFFIX = ".evpm"
HEADER_SIZE = 64
# magic, version, channel count, sample rate, sample count, start time,
# 4 channel codes, 16-byte station id, 12 reserved
_HEADER = struct.Struct("<4sHHdQd4B16s12x")
assert _HEADER.size == HEADER_SIZE

DEFAULT_OBSERVE_SNR_DB = -1.0


class FormatError(ValueError):
    """Parse failure; carries the file and line when known."""

    def __init__(self, msg, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + msg)
        self.path, self.line = path, line


def fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- key-value

@dataclass
class KVFile:
    """Parsed key-value file; repeated keys keep every value in order."""

    entries: list  # (key, value, line number)
    path: Optional[str] = None

    def values(self, key) -> list:
        return [(v, ln) for k, v, ln in self.entries if k == key]

    def get(self, key, conv=str, default=..., required=False):
        vals = self.values(key)
        if not vals:
            if default is ... or required:
                raise FormatError(f"missing required key {key!r}", self.path)
            return default
        if len(vals) > 1:
            raise FormatError(f"key {key!r} given more than once", self.path, vals[-1][1])
        v, ln = vals[0]
        try:
            return conv(v)
        except (ValueError, TypeError) as e:
            raise FormatError(f"bad value for {key!r}: {v!r} ({e})", self.path, ln) from None

    def keys(self) -> set:
        return {k for k, _, _ in self.entries}


def parse_kv(text: str, path=None) -> KVFile:
    entries = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {raw.strip()!r}", path, ln)
        k, v = line.split("=", 1)
        k, v = k.strip(), v.strip()
        if not k:
            raise FormatError("empty key", path, ln)
        entries.append((k, v, ln))
    return KVFile(entries, path)


def read_kv(path) -> KVFile:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read: {e.strerror}", str(path)) from None
    return parse_kv(text, str(path))


def dump_kv(pairs: Iterable[tuple], header: str = "") -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"{k} = {fmt(v)}" for k, v in pairs]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------- layout / fluid

_SENSOR_ALIASES = {s.value: s for s in Sensor}


def parse_station(value: str, path=None, line=None) -> Station:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) not in (2, 3):
        raise FormatError(f"station needs '<id>,<position_m>[,<sensor|sensor...>]', got {value!r}", path, line)
    try:
        pos = float(parts[1])
    except ValueError:
        raise FormatError(f"bad station position {parts[1]!r}", path, line) from None
    sensors = frozenset(Sensor)
    if len(parts) == 3 and parts[2]:
        try:
            sensors = frozenset(_SENSOR_ALIASES[s.strip()] for s in parts[2].split("|"))
        except KeyError as e:
            raise FormatError(f"unknown sensor {e.args[0]!r}", path, line) from None
    try:
        return Station(parts[0], pos, sensors)
    except ValueError as e:
        raise FormatError(str(e), path, line) from None


def layout_from_kv(kv: KVFile) -> StationLayout:
    stations = [parse_station(v, kv.path, ln) for v, ln in kv.values("station")]
    layout = StationLayout(tuple(stations), kv.get("pipe_inner_diameter_m", float))
    try:
        return validate_layout(layout)
    except ValueError as e:
        raise FormatError(str(e), kv.path) from None


def fluid_from_kv(kv: KVFile) -> FluidSpec:
    try:
        return FluidSpec(kv.get("density_kg_m3", float), kv.get("sound_speed_m_s", float))
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(str(e), kv.path) from None


def layout_to_kv(layout: StationLayout, fluid: Optional[FluidSpec] = None) -> list:
    pairs = [("pipe_inner_diameter_m", layout.pipe_inner_diameter_m)]
    if fluid is not None:
        pairs += [("density_kg_m3", fluid.density_kg_m3), ("sound_speed_m_s", fluid.sound_speed_m_s)]
    for st in layout.stations:
        flags = "|".join(s.value for s in Sensor if s in st.sensors)
        pairs.append(("station", f"{st.id},{fmt(float(st.position_m))},{flags}"))
    return pairs


def read_config(path) -> tuple[StationLayout, FluidSpec]:
    kv = read_kv(path)
    return layout_from_kv(kv), fluid_from_kv(kv)


def write_config(path, layout: StationLayout, fluid: FluidSpec) -> None:
    Path(path).write_text(dump_kv(layout_to_kv(layout, fluid)))


# ---------------------------------------------------------------- scenario

_SCENARIO_FLOATS = (
    "sample_rate_hz", "line_pressure_bar", "attenuation_np_per_m", "noise_floor_kpa",
    "pump_corner_hz", "pump_attenuation_np_per_m", "transfer_flow_m3_h", "flow_noise_m3_h",
    "static_drift_bar", "static_noise_bar", "leak_drop_bar_per_m3_h",
    "disturbance_drop_bar_per_m3_h", "disturbance_noise_kpa_per_m3_h", "accel_gain",
    "accel_leak_boost", "accel_floor_m_s2",
)
_LEAK_KEYS = ("leak_position_m", "leak_area_mm2", "leak_shape", "leak_discharge_coefficient",
              "leak_delta_p_bar", "leak_start_s", "leak_stop_s", "leak_orifice_diameter_m")
_OTHER_KEYS = {"duration_s", "seed", "rng", "condition", "pump", "disturbance", "dip",
               "spl_n", "spl_k", "external_pressure_bar", "station",
               "pipe_inner_diameter_m", "density_kg_m3", "sound_speed_m_s", "config"}


def _csv_floats(value, n, what, path, line):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n:
        raise FormatError(f"{what} needs {n} comma-separated fields, got {value!r}", path, line)
    return parts


def scenario_from_kv(kv: KVFile, base: Optional[KVFile] = None, seed: Optional[int] = None) -> Scenario:
    """Build a Scenario. Layout and fluid keys may come from `base` (a config
    file); keys in the scenario file take precedence."""
    known = set(_SCENARIO_FLOATS) | set(_LEAK_KEYS) | _OTHER_KEYS
    for k, v, ln in kv.entries:
        if k not in known:
            raise FormatError(f"unknown key {k!r}", kv.path, ln)
    layout_src = kv if kv.values("station") or base is None else base
    layout = layout_from_kv(layout_src)
    merged = KVFile(kv.entries + ([] if base is None else
                                  [e for e in base.entries if e[0] not in kv.keys()]), kv.path)
    fluid = fluid_from_kv(merged)

    def station_ok(sid, ln):
        if sid not in {s.id for s in layout.stations}:
            raise FormatError(f"unknown station {sid!r}", kv.path, ln)
        return sid

    pumps = []
    for v, ln in kv.values("pump"):
        sid, amp = _csv_floats(v, 2, "pump", kv.path, ln)
        station_ok(sid, ln)
        try:
            pumps.append((sid, float(amp)))
        except ValueError:
            raise FormatError(f"bad pump amplitude {amp!r}", kv.path, ln) from None
    dists = []
    for v, ln in kv.values("disturbance"):
        sid, *nums = _csv_floats(v, 4, "disturbance", kv.path, ln)
        station_ok(sid, ln)
        try:
            dists.append(Disturbance(sid, *map(float, nums)))
        except ValueError:
            raise FormatError(f"bad disturbance {v!r}", kv.path, ln) from None
    dips = []
    for v, ln in kv.values("dip"):
        try:
            dips.append(PressureDip(*map(float, _csv_floats(v, 3, "dip", kv.path, ln))))
        except ValueError:
            raise FormatError(f"bad dip {v!r}", kv.path, ln) from None

    condition = kv.get("condition", str, "transferring")
    line_pressure = kv.get("line_pressure_bar", float, 4.0)
    ext = kv.get("external_pressure_bar", float, 1.0)
    leak = None
    if kv.values("leak_position_m"):
        nozzle = NozzleSpec(
            area_mm2=kv.get("leak_area_mm2", float),
            shape=kv.get("leak_shape", str, "circular"),
            orifice_diameter_m=kv.get("leak_orifice_diameter_m", float, None),
            discharge_coefficient=kv.get("leak_discharge_coefficient", float, 0.62),
        )
        default_dp = (line_pressure if condition == "transferring" else 0.6) - ext
        leak = Leak(
            position_m=kv.get("leak_position_m", float),
            nozzle=nozzle,
            delta_p_bar=kv.get("leak_delta_p_bar", float, default_dp),
            start_s=kv.get("leak_start_s", float, 0.0),
            stop_s=kv.get("leak_stop_s", float, kv.get("duration_s", float)),
        )
    elif any(kv.values(k) for k in _LEAK_KEYS):
        raise FormatError("leak keys given without leak_position_m", kv.path)

    spl = SplModel(kv.get("spl_n", float, 1.5), kv.get("spl_k", float, 1e-3))
    extra = {k: kv.get(k, float) for k in _SCENARIO_FLOATS if kv.values(k)}
    if seed is None:
        seed = kv.get("seed", int, None)
    if seed is None:
        raise FormatError("a seed is required (scenario key 'seed' or --seed)", kv.path)
    return Scenario(
        layout=layout, fluid=fluid, duration_s=kv.get("duration_s", float), seed=seed,
        rng=kv.get("rng", str), condition=condition, line_pressure_bar=line_pressure,
        pump_stations=tuple(pumps), leak=leak, disturbances=tuple(dists), dips=tuple(dips),
        spl_model=spl, **{k: v for k, v in extra.items() if k != "line_pressure_bar"},
    )


def read_scenario(path, config=None, seed=None) -> Scenario:
    kv = read_kv(path)
    base = None
    cfg = config or kv.get("config", str, None)
    if cfg is not None:
        cfg_path = Path(cfg)
        if not cfg_path.is_absolute() and config is None:
            cfg_path = Path(path).parent / cfg_path
        base = read_kv(cfg_path)
    try:
        return scenario_from_kv(kv, base, seed)
    except (FormatError, ScenarioError):
        raise
    except ValueError as e:
        raise FormatError(str(e), str(path)) from None


# ------------------------------------------------------------ signal files

def signal_header_bytes(rec) -> bytes:
    kinds = list(rec.channels)
    if len(kinds) > 4:
        raise ValueError("at most 4 channels")
    codes = [k.code for k in kinds] + [0] * (4 - len(kinds))
    sid = rec.station_id.encode("ascii")
    if len(sid) > 16:
        raise ValueError(f"station id {rec.station_id!r} longer than 16 bytes")
    return _HEADER.pack(SIGNAL_MAGIC, SIGNAL_VERSION, len(kinds), float(rec.sample_rate_hz),
                        rec.n_samples, float(rec.start_time_s), *codes, sid)


def signal_bytes(rec) -> bytes:
    body = b"".join(np.asarray(rec.channels[k], dtype="<f4").tobytes() for k in rec.channels)
    return signal_header_bytes(rec) + body


def sidecar_text(rec) -> str:
    return dump_kv([
        ("magic", SIGNAL_MAGIC.decode()),
        ("format_version", SIGNAL_VERSION),
        ("station_id", rec.station_id),
        ("sample_rate_hz", float(rec.sample_rate_hz)),
        ("start_time_s", float(rec.start_time_s)),
        ("sample_count", rec.n_samples),
        ("channel_count", len(rec.channels)),
        ("channels", ",".join(f"{k.code}:{k.value}" for k in rec.channels)),
        ("sample_format", "float32 little-endian, channel-major"),
    ])


def write_signal(path, rec) -> None:
    path = Path(path)
    path.write_bytes(signal_bytes(rec))
    path.with_name(path.name + ".txt").write_text(sidecar_text(rec))


def parse_signal(data: bytes, path=None):
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", path)
    magic, version, nch, fs, count, t0, *rest = _HEADER.unpack_from(data)
    codes, sid = rest[:4], rest[4]
    if magic != SIGNAL_MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if version != SIGNAL_VERSION:
        raise FormatError(f"unsupported format version {version}", path)
    if nch > 4:
        raise FormatError(f"bad channel count {nch}", path)
    try:
        kinds = [CHANNEL_BY_CODE[c] for c in codes[:nch]]
    except KeyError as e:
        raise FormatError(f"unknown channel code {e.args[0]}", path) from None
    expected = HEADER_SIZE + 4 * nch * count
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes, found {len(data)}", path)
    body = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE).reshape(nch, count)
    chans = {k: body[i].astype(np.float32) for i, k in enumerate(kinds)}
    try:
        return SignalRecord(sid.rstrip(b"\0").decode("ascii"), fs, t0, chans)
    except ValueError as e:
        raise FormatError(str(e), path) from None


def read_signal(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read: {e.strerror}", str(path)) from None
    return parse_signal(data, str(path))


def signal_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*" + SIGNAL_SUFFIX))


# ------------------------------------------------------------ feature table

FEATURE_COLUMNS = ["station_id", "window_start_s", "window_len_s", *FEATURE_NAMES, "label"]
DELIM = ","


def _label_str(label: Optional[LeakClass]) -> str:
    return "unknown" if label is None else label.label


def _parse_label(s: str) -> Optional[LeakClass]:
    return None if s == "unknown" else LeakClass.of(s)


def feature_table_text(batches: Sequence[FeatureBatch]) -> str:
    out = [DELIM.join(FEATURE_COLUMNS)]
    for b in batches:
        row = [b.station_id] + [fmt(float(getattr(b, c))) for c in FEATURE_COLUMNS[1:-1]]
        out.append(DELIM.join(row + [_label_str(b.label)]))
    return "\n".join(out) + "\n"


def parse_feature_table(text: str, path=None) -> list[FeatureBatch]:
    lines = text.splitlines()
    if not lines or lines[0].split(DELIM) != FEATURE_COLUMNS:
        raise FormatError("feature table header does not match the expected columns", path, 1)
    out = []
    for ln, line in enumerate(lines[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split(DELIM)
        if len(cells) != len(FEATURE_COLUMNS):
            raise FormatError(f"expected {len(FEATURE_COLUMNS)} columns, got {len(cells)}", path, ln)
        try:
            vals = {c: float(v) for c, v in zip(FEATURE_COLUMNS[1:-1], cells[1:-1])}
            out.append(FeatureBatch(station_id=cells[0], label=_parse_label(cells[-1]), **vals))
        except (ValueError, KeyError) as e:
            raise FormatError(f"bad row: {e}", path, ln) from None
    return out


def read_feature_table(path) -> list[FeatureBatch]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read: {e.strerror}", str(path)) from None
    return parse_feature_table(text, str(path))


def feature_columns_present(batches: Sequence[FeatureBatch]) -> set:
    return {n for n in FEATURE_NAMES if any(not math.isnan(getattr(b, n)) for b in batches)}


# ------------------------------------------------------------ model / domain

def model_text(model: SplModel) -> str:
    return dump_kv([("n", model.n), ("k", model.k), ("fit_residual_rms", model.fit_residual_rms),
                    ("sample_count", model.sample_count)],
                   header="SPL[kPa] = dp[bar] * A[mm2]**n * k")


def parse_model(kv: KVFile) -> SplModel:
    try:
        return SplModel(kv.get("n", float), kv.get("k", float),
                        kv.get("fit_residual_rms", float, 0.0), kv.get("sample_count", int, 0))
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(str(e), kv.path) from None


def domain_text(domain: DetectionDomain) -> str:
    pairs = [("feature_x", domain.feature_x), ("feature_y", domain.feature_y)]
    pairs += [("vertex", f"{fmt(x)},{fmt(y)}") for x, y in domain.polygon]
    pairs += [("hull_vertex", f"{fmt(x)},{fmt(y)}") for x, y in domain.hull]
    return dump_kv(pairs)


def parse_domain(kv: KVFile) -> DetectionDomain:
    def pts(key):
        out = []
        for v, ln in kv.values(key):
            try:
                x, y = (float(p) for p in _csv_floats(v, 2, key, kv.path, ln))
            except ValueError:
                raise FormatError(f"bad vertex {v!r}", kv.path, ln) from None
            out.append((x, y))
        return tuple(out)

    try:
        return DetectionDomain(kv.get("feature_x"), kv.get("feature_y"), pts("vertex"), pts("hull_vertex"))
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(str(e), kv.path) from None


# ------------------------------------------------------------ manifest

@dataclass(frozen=True)
class Manifest:
    """Ground truth written next to simulated signals."""

    duration_s: float
    sample_rate_hz: float
    seed: int
    condition: str
    sound_speed_m_s: float
    station_positions: dict
    leak_position_m: Optional[float] = None
    leak_area_mm2: Optional[float] = None
    leak_class: Optional[LeakClass] = None
    delta_p_bar: Optional[float] = None
    leak_start_s: Optional[float] = None
    leak_stop_s: Optional[float] = None
    observing_stations: tuple = ()
    nearest_station: Optional[str] = None

    @property
    def has_leak(self) -> bool:
        return self.leak_position_m is not None

    def arrival_interval(self, station_id: str) -> tuple[float, float]:
        delay = abs(self.station_positions[station_id] - self.leak_position_m) / self.sound_speed_m_s
        return self.leak_start_s + delay, self.leak_stop_s + delay

    def label(self, station_id: str, start_s: float, length_s: float) -> Optional[LeakClass]:
        """Truth for one window: the leak class when the window lies wholly in the
        leak's arrival interval at an observing station, ``none`` when it lies
        wholly outside, unknown otherwise."""
        if not self.has_leak:
            return NO_LEAK
        t0, t1 = self.arrival_interval(station_id)
        end = start_s + length_s
        if end <= t0 or start_s >= t1:
            return NO_LEAK
        if station_id in self.observing_stations and start_s >= t0 and end <= t1:
            return self.leak_class
        return None


def manifest_from_scenario(sc: Scenario, observe_snr_db: float = DEFAULT_OBSERVE_SNR_DB) -> Manifest:
    positions = {st.id: st.position_m for st in sc.layout.stations}
    common = dict(duration_s=sc.duration_s, sample_rate_hz=sc.sample_rate_hz, seed=sc.seed,
                  condition=sc.condition, sound_speed_m_s=sc.fluid.sound_speed_m_s,
                  station_positions=positions)
    if sc.leak is None:
        return Manifest(**common)
    leak = sc.leak
    hydro = [st.id for st in sc.layout.stations if Sensor.HYDROPHONE in st.sensors]
    observing = tuple(s for s in hydro if predicted_snr_db(sc, s) >= observe_snr_db)
    nearest = min(sc.layout.stations, key=lambda st: abs(st.position_m - leak.position_m)).id
    cls = nominal_class(leak.nozzle.area_mm2)
    return Manifest(**common, leak_position_m=leak.position_m, leak_area_mm2=leak.nozzle.area_mm2,
                    leak_class=cls, delta_p_bar=leak.delta_p_bar, leak_start_s=leak.start_s,
                    leak_stop_s=leak.stop_s, observing_stations=observing, nearest_station=nearest)


def manifest_text(m: Manifest) -> str:
    pairs = [("duration_s", m.duration_s), ("sample_rate_hz", m.sample_rate_hz), ("seed", m.seed),
             ("condition", m.condition), ("sound_speed_m_s", m.sound_speed_m_s)]
    pairs += [("station", f"{k},{fmt(float(v))}") for k, v in m.station_positions.items()]
    if m.has_leak:
        pairs += [
            ("leak_position_m", m.leak_position_m), ("leak_area_mm2", m.leak_area_mm2),
            ("leak_class", _label_str(m.leak_class)), ("delta_p_bar", m.delta_p_bar),
            ("leak_start_s", m.leak_start_s), ("leak_stop_s", m.leak_stop_s),
            ("observing_stations", ",".join(m.observing_stations)),
            ("nearest_station", m.nearest_station),
        ]
        for sid in m.station_positions:
            t0, t1 = m.arrival_interval(sid)
            pairs.append(("arrival", f"{sid},{fmt(t0)},{fmt(t1)}"))
    return dump_kv(pairs, header="ground truth")


def parse_manifest(kv: KVFile) -> Manifest:
    positions = {}
    for v, ln in kv.values("station"):
        sid, pos = _csv_floats(v, 2, "station", kv.path, ln)
        positions[sid] = float(pos)
    common = dict(duration_s=kv.get("duration_s", float), sample_rate_hz=kv.get("sample_rate_hz", float),
                  seed=kv.get("seed", int), condition=kv.get("condition"),
                  sound_speed_m_s=kv.get("sound_speed_m_s", float), station_positions=positions)
    if not kv.values("leak_position_m"):
        return Manifest(**common)
    obs = kv.get("observing_stations", str, "")
    label = kv.get("leak_class", str, "unknown")
    return Manifest(
        **common, leak_position_m=kv.get("leak_position_m", float),
        leak_area_mm2=kv.get("leak_area_mm2", float), leak_class=_parse_label(label),
        delta_p_bar=kv.get("delta_p_bar", float), leak_start_s=kv.get("leak_start_s", float),
        leak_stop_s=kv.get("leak_stop_s", float),
        observing_stations=tuple(s for s in obs.split(",") if s),
        nearest_station=kv.get("nearest_station", str, None),
    )


# ------------------------------------------------------------ report

REPORT_COLUMNS = ["window_start_s", "station_id", "gating", "leak_detected",
                  "estimated_area_mm2", "class", "truth"]


def report_text(verdicts: Sequence[BatchVerdict], truths: Optional[Sequence] = None,
                summary: Optional[Score] = None) -> str:
    out = [DELIM.join(REPORT_COLUMNS)]
    for i, v in enumerate(verdicts):
        truth = "" if truths is None else _label_str(truths[i])
        area = "" if v.estimated_area_mm2 is None else fmt(float(v.estimated_area_mm2))
        cls = v.leak_class.label if v.leak_detected else "none"
        out.append(DELIM.join([fmt(float(v.window_start_s)), v.station_id, v.gating.value,
                               str(int(v.leak_detected)), area, cls, truth]))
    if summary is not None:
        for f in fields(summary):
            out.append(f"# {f.name} = {getattr(summary, f.name)}")
        out.append(f"# detection_rate = {fmt(summary.detection_rate)}")
    return "\n".join(out) + "\n"


def parse_report(text: str) -> tuple[list[dict], dict]:
    lines = text.splitlines()
    rows, summary = [], {}
    for line in lines[1:]:
        if line.startswith("#"):
            k, v = line[1:].split("=", 1)
            summary[k.strip()] = v.strip()
        elif line:
            rows.append(dict(zip(REPORT_COLUMNS, line.split(DELIM))))
    return rows, summary
