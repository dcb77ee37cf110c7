"""Operating-condition gating, polygon-domain detection, hole sizing and
two-station localization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .dsp import DEFAULT_BAND_HZ, bandpass, estimate_delay
from .hydraulics import spl_invert_area
from .model import (
    FEATURE_NAMES, LEAK_CLASSES, NO_LEAK, BatchVerdict, FeatureBatch, FluidSpec, Gating,
    LeakClass, Localization, SignalRecord, SplModel, StationLayout,
)

DEFAULT_FEATURES = ("static_pressure_mean_bar", "leak_band_level_db")
DEFAULT_MIN_PRESSURE_BAR = 3.0
DEFAULT_MAX_PRESSURE_STD_BAR = 0.2
DEFAULT_DILATION = 0.05
DEFAULT_MIN_CORRELATION = 0.1


class OperatingCondition(str, Enum):
    STANDSTILL = "standstill"
    TRANSFERRING = "transferring"
    INDETERMINATE = "indeterminate"


class DomainError(ValueError):
    pass


class NoCoherentSource(RuntimeError):
    pass


def _required(batch: FeatureBatch, name: str) -> float:
    v = getattr(batch, name)
    if v is None or math.isnan(v):
        raise ValueError(f"batch from station {batch.station_id} lacks {name}")
    return v


def classify_condition(batch: FeatureBatch) -> OperatingCondition:
    """Standstill: no flow and <= 0.7 bar; transferring: > 100 m3/h."""
    flow = _required(batch, "flow_mean_m3_h")
    pressure = _required(batch, "static_pressure_mean_bar")
    if flow < 1.0 and pressure <= 0.7:
        return OperatingCondition.STANDSTILL
    if flow > 100.0:
        return OperatingCondition.TRANSFERRING
    return OperatingCondition.INDETERMINATE


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list[tuple[float, float]]:
    """Monotone-chain hull, counter-clockwise, collinear boundary points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class DetectionDomain:
    """Leak region in a two-feature cross plot.

    ``hull`` is the convex hull of the training leak points; ``polygon`` is
    the hull grown by the dilation box and is what detection tests against.
    """

    feature_x: str
    feature_y: str
    polygon: tuple
    hull: tuple = ()

    def __post_init__(self):
        for name in (self.feature_x, self.feature_y):
            if name not in FEATURE_NAMES:
                raise DomainError(f"unknown feature {name!r}")
        poly = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "hull", tuple((float(x), float(y)) for x, y in self.hull))
        if len(poly) < 3:
            raise DomainError("domain polygon needs at least 3 vertices")
        if _self_intersecting(poly):
            raise DomainError("domain polygon is self-intersecting")

    def contains(self, x, y) -> np.ndarray:
        vx, vy = zip(*self.polygon)
        return kernels.points_in_polygon(x, y, vx, vy)


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _cross(q1, q2, p1), _cross(q1, q2, p2)
    d3, d4 = _cross(p1, p2, q1), _cross(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4)


def _self_intersecting(poly) -> bool:
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def train_domain(batches: Iterable[FeatureBatch], feature_x: str = DEFAULT_FEATURES[0],
                 feature_y: str = DEFAULT_FEATURES[1], dilation: float = DEFAULT_DILATION) -> DetectionDomain:
    """Hull of the leak-labelled batches, grown by `dilation` of each feature's range."""
    pts = [(b.feature(feature_x), b.feature(feature_y))
           for b in batches if b.label is not None and b.label.is_leak]
    pts = [p for p in pts if all(math.isfinite(v) for v in p)]
    if len(pts) < 3:
        raise DomainError(f"need at least 3 leak-labelled batches, got {len(pts)}")
    hull = convex_hull(pts)
    if len(hull) < 3:
        raise DomainError("leak points are collinear; no hull")
    xs, ys = np.array(pts).T
    dx = dilation * (xs.max() - xs.min())
    dy = dilation * (ys.max() - ys.min())
    # Minkowski sum with the box [-dx, dx] x [-dy, dy].
    grown = [(x + sx * dx, y + sy * dy) for x, y in hull for sx in (-1, 1) for sy in (-1, 1)]
    return DetectionDomain(feature_x, feature_y, tuple(convex_hull(grown)), tuple(hull))


@dataclass(frozen=True)
class LeakVerdict:
    leak: bool
    gating: Gating


def gate(batch: FeatureBatch, min_pressure_bar: float = DEFAULT_MIN_PRESSURE_BAR,
         max_pressure_std_bar: float = DEFAULT_MAX_PRESSURE_STD_BAR,
         condition: Optional[OperatingCondition] = None) -> Gating:
    if _required(batch, "static_pressure_mean_bar") < min_pressure_bar:
        return Gating.LOW_PRESSURE
    if _required(batch, "static_pressure_std_bar") > max_pressure_std_bar:
        return Gating.UNSTABLE_PRESSURE
    if condition is OperatingCondition.STANDSTILL:
        return Gating.STANDSTILL_MASKED
    return Gating.OK


def detect_leak(batch: FeatureBatch, domain: DetectionDomain,
                min_pressure_bar: float = DEFAULT_MIN_PRESSURE_BAR,
                max_pressure_std_bar: float = DEFAULT_MAX_PRESSURE_STD_BAR,
                condition: Optional[OperatingCondition] = None) -> LeakVerdict:
    """Leak iff the batch passes the pressure gates and falls in the domain
    polygon (boundary inclusive)."""
    x = batch.feature(domain.feature_x)
    y = batch.feature(domain.feature_y)
    g = gate(batch, min_pressure_bar, max_pressure_std_bar, condition)
    if g is not Gating.OK:
        return LeakVerdict(False, g)
    return LeakVerdict(bool(domain.contains(x, y)[0]), g)


def nearest_class(area_mm2: float) -> LeakClass:
    """Nearest nominal class in log-area; ties go to the smaller class."""
    if not area_mm2 > 0:
        raise ValueError(f"area must be > 0, got {area_mm2}")
    la = math.log(area_mm2)
    best, best_d = None, math.inf
    for cls in LEAK_CLASSES:  # ascending area
        d = abs(la - math.log(cls.nominal_area_mm2))
        if d < best_d - 1e-12:
            best, best_d = cls, d
    return best


@dataclass(frozen=True)
class HoleEstimate:
    estimated_area_mm2: float
    leak_class: LeakClass


def classify_hole(batch: FeatureBatch, delta_p_bar: float, model: SplModel) -> HoleEstimate:
    """Invert the SPL law on the leak-band RMS, then snap to a nominal class."""
    if not isinstance(model, SplModel):
        raise TypeError("model must be an SplModel")
    spl = math.sqrt(_required(batch, "leak_band_energy_kpa2"))
    area = spl_invert_area(spl, delta_p_bar, model)
    return HoleEstimate(area, nearest_class(area))


def evaluate(batches: Sequence[FeatureBatch], domain: DetectionDomain,
             model: Optional[SplModel] = None, delta_p_bar=None,
             external_pressure_bar: float = 1.0,
             min_pressure_bar: float = DEFAULT_MIN_PRESSURE_BAR,
             max_pressure_std_bar: float = DEFAULT_MAX_PRESSURE_STD_BAR) -> list[BatchVerdict]:
    """Verdict per batch. Without an explicit `delta_p_bar`, the differential
    pressure is the batch's static mean minus `external_pressure_bar`."""
    out = []
    for b in batches:
        cond = None
        if not math.isnan(b.flow_mean_m3_h):
            cond = classify_condition(b)
        v = detect_leak(b, domain, min_pressure_bar, max_pressure_std_bar, cond)
        area, cls = None, NO_LEAK
        if v.leak and model is not None:
            dp = delta_p_bar if delta_p_bar is not None else b.static_pressure_mean_bar - external_pressure_bar
            if dp > 0:
                est = classify_hole(b, dp, model)
                area, cls = est.estimated_area_mm2, est.leak_class
        out.append(BatchVerdict(b.window_start_s, b.station_id, v.leak, v.gating, cls, area))
    return out


@dataclass
class Score:
    leak_batches: int = 0
    detected: int = 0
    missed: int = 0
    no_leak_batches: int = 0
    false_alarms: int = 0
    gated: int = 0
    unscored: int = 0
    class_correct: int = 0

    @property
    def detection_rate(self) -> float:
        return self.detected / self.leak_batches if self.leak_batches else math.nan


def score(batches: Sequence[FeatureBatch], verdicts: Sequence[BatchVerdict]) -> Score:
    """Compare verdicts with ground-truth labels; gated and unlabelled batches
    are counted but not scored."""
    s = Score()
    for b, v in zip(batches, verdicts):
        if b.label is None:
            s.unscored += 1
        elif v.gating is not Gating.OK:
            s.gated += 1
        elif b.label.is_leak:
            s.leak_batches += 1
            if v.leak_detected:
                s.detected += 1
                s.class_correct += v.leak_class == b.label
            else:
                s.missed += 1
        else:
            s.no_leak_batches += 1
            s.false_alarms += v.leak_detected
    return s


def localize(rec_a: SignalRecord, rec_b: SignalRecord, layout: StationLayout, fluid: FluidSpec,
             band: tuple = DEFAULT_BAND_HZ, min_correlation: float = DEFAULT_MIN_CORRELATION,
             channel: str = "dynamic_pressure_kpa") -> Localization:
    """Position of a leak between two stations from the leak-band arrival-time difference."""
    if rec_a.station_id == rec_b.station_id:
        raise ValueError("localization needs two distinct stations")
    if rec_a.sample_rate_hz != rec_b.sample_rate_hz:
        raise ValueError("records differ in sample rate")
    if rec_a.n_samples != rec_b.n_samples or rec_a.start_time_s != rec_b.start_time_s:
        raise ValueError("records do not cover the same interval")
    d1 = layout.position(rec_a.station_id)
    d2 = layout.position(rec_b.station_id)
    if d1 > d2:
        rec_a, rec_b, d1, d2 = rec_b, rec_a, d2, d1
    fs = rec_a.sample_rate_hz
    c = fluid.sound_speed_m_s
    a = bandpass(rec_a[channel], fs, *band)
    b = bandpass(rec_b[channel], fs, *band)
    # Two samples of margin beyond the largest physical delay so the parabola fits at the edge.
    max_lag_s = (d2 - d1) / c + 2.0 / fs
    est = estimate_delay(a, b, fs, max_lag_s)
    if est.peak_correlation < min_correlation:
        raise NoCoherentSource(
            f"peak correlation {est.peak_correlation:.3f} below {min_correlation} "
            f"between {rec_a.station_id} and {rec_b.station_id}"
        )
    tau = -float(est.delay_s)  # arrival at a minus arrival at b
    pos = float(0.5 * (d1 + d2) + 0.5 * c * tau)
    clamped = not d1 <= pos <= d2
    pos = min(max(pos, d1), d2)
    return Localization(pos, tau, (rec_a.station_id, rec_b.station_id), est.peak_correlation, clamped)
