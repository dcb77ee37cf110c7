"""Command-line front end: simulate -> extract -> fit -> train -> detect, and localize."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import formats
from .detect import (
    DEFAULT_FEATURES, DEFAULT_MAX_PRESSURE_STD_BAR, DEFAULT_MIN_CORRELATION,
    DEFAULT_MIN_PRESSURE_BAR, DomainError, NoCoherentSource, evaluate, localize, score, train_domain,
)
from .dsp import DEFAULT_BAND_HZ, BatchingPolicy, batch
from .formats import FormatError
from .hydraulics import FitError, SplSample, fit_spl_model
from .model import FEATURE_NAMES
from .synth import ScenarioError, synthesize

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_NO_SOURCE = 4
EXIT_IO = 5

MANIFEST_NAME = "manifest.txt"


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must be 'lo:hi' in Hz, got {text!r}") from None
    return lo, hi


def _features(text: str) -> tuple[str, str]:
    parts = tuple(p.strip() for p in text.split(","))
    if len(parts) != 2 or any(p not in FEATURE_NAMES for p in parts):
        raise argparse.ArgumentTypeError(
            f"features must be two of {', '.join(FEATURE_NAMES)} separated by a comma")
    return parts


def _write(path: Path, data) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}", EXIT_IO) from None


def _emit(text: str, out) -> None:
    if out:
        _write(Path(out), text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    try:
        sc = formats.read_scenario(args.scenario, config=args.config, seed=args.seed)
    except ScenarioError as e:
        raise CliError(str(e), EXIT_PRECONDITION) from None
    out = Path(args.out)
    manifest = formats.manifest_from_scenario(sc, args.observe_snr_db)
    records = synthesize(sc)
    # Serialize everything before touching the output directory.
    payload = {}
    for rec in records:
        name = f"{rec.station_id}{formats.SIGNAL_SUFFIX}"
        payload[name] = formats.signal_bytes(rec)
        payload[name + ".txt"] = formats.sidecar_text(rec)
    payload[MANIFEST_NAME] = formats.manifest_text(manifest)
    payload["layout.cfg"] = formats.dump_kv(formats.layout_to_kv(sc.layout, sc.fluid))
    for name, data in payload.items():
        _write(out / name, data)
    print(f"wrote {len(records)} signal files and {MANIFEST_NAME} to {out}")
    return EXIT_OK


def extract_dir(signal_dir, policy: BatchingPolicy, band) -> list:
    files = formats.signal_files(signal_dir)
    if not files:
        raise CliError(f"no signal files in {signal_dir}", EXIT_PRECONDITION)
    manifest_path = Path(signal_dir) / MANIFEST_NAME
    manifest = formats.parse_manifest(formats.read_kv(manifest_path)) if manifest_path.exists() else None
    rows = []
    for f in files:
        rec = formats.read_signal(f)
        try:
            batches = batch(rec, policy, band)
        except ValueError as e:
            raise CliError(f"{f}: {e}", EXIT_PRECONDITION) from None
        if manifest is not None:
            batches = [replace(b, label=manifest.label(b.station_id, b.window_start_s, b.window_len_s))
                       for b in batches]
        rows.extend(batches)
    return rows


def cmd_extract(args) -> int:
    policy = BatchingPolicy(args.window, args.overlap)
    rows = extract_dir(args.signal_dir, policy, args.band)
    _emit(formats.feature_table_text(rows), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    if len(args.table) != len(args.manifest):
        raise CliError("give one --manifest per --table", EXIT_PRECONDITION)
    samples = []
    for tpath, mpath in zip(args.table, args.manifest):
        rows = formats.read_feature_table(tpath)
        m = formats.parse_manifest(formats.read_kv(mpath))
        if not m.has_leak:
            continue
        for b in rows:
            if b.station_id == m.nearest_station and b.label is not None and b.label.is_leak:
                samples.append(SplSample(m.delta_p_bar, m.leak_area_mm2, b.leak_band_energy_kpa2 ** 0.5))
    try:
        model = fit_spl_model(samples)
    except FitError as e:
        raise CliError(f"fit failed: {e}", EXIT_PRECONDITION) from None
    text = formats.model_text(model)
    _emit(text, args.out)
    if args.out:
        print(f"n = {model.n!r}  k = {model.k!r}  residual = {model.fit_residual_rms!r}  samples = {model.sample_count}")
    return EXIT_OK


def cmd_train(args) -> int:
    rows = []
    for t in args.table:
        rows.extend(formats.read_feature_table(t))
    fx, fy = args.features
    missing = {fx, fy} - formats.feature_columns_present(rows)
    if missing:
        raise CliError(f"features absent from table: {', '.join(sorted(missing))}", EXIT_PRECONDITION)
    try:
        domain = train_domain([r for r in rows if _has(r, fx, fy)], fx, fy, args.dilation)
    except DomainError as e:
        raise CliError(str(e), EXIT_PRECONDITION) from None
    text = formats.domain_text(domain)
    _emit(text, args.out)
    return EXIT_OK


def _has(b, *names) -> bool:
    return all(getattr(b, n) == getattr(b, n) for n in names)  # not NaN


def cmd_detect(args) -> int:
    rows = formats.read_feature_table(args.table)
    domain = formats.parse_domain(formats.read_kv(args.domain))
    model = formats.parse_model(formats.read_kv(args.model)) if args.model else None
    present = formats.feature_columns_present(rows)
    missing = {domain.feature_x, domain.feature_y} - present
    if missing:
        raise CliError(f"domain features absent from table: {', '.join(sorted(missing))}", EXIT_PRECONDITION)
    rows = [r for r in rows if _has(r, domain.feature_x, domain.feature_y, "static_pressure_mean_bar")]
    if args.manifest:
        m = formats.parse_manifest(formats.read_kv(args.manifest))
        rows = [replace(r, label=m.label(r.station_id, r.window_start_s, r.window_len_s)) for r in rows]
    verdicts = evaluate(rows, domain, model, delta_p_bar=args.delta_p,
                        external_pressure_bar=args.external_pressure,
                        min_pressure_bar=args.min_pressure, max_pressure_std_bar=args.max_pressure_std)
    summary = score(rows, verdicts) if args.manifest else None
    truths = [r.label for r in rows] if args.manifest else None
    text = formats.report_text(verdicts, truths, summary)
    _emit(text, args.out)
    if summary is not None and args.out:
        print(f"detected {summary.detected}/{summary.leak_batches} leak batches, "
              f"{summary.false_alarms} false alarms in {summary.no_leak_batches} no-leak batches")
    return EXIT_OK


def cmd_localize(args) -> int:
    layout, fluid = formats.read_config(args.config)
    a = formats.read_signal(args.signal_a)
    b = formats.read_signal(args.signal_b)
    try:
        loc = localize(a, b, layout, fluid, args.band, args.min_correlation)
    except NoCoherentSource as e:
        raise CliError(f"no coherent source: {e}", EXIT_NO_SOURCE) from None
    except (KeyError, ValueError) as e:
        raise CliError(str(e), EXIT_PRECONDITION) from None
    text = formats.dump_kv([
        ("position_m", loc.position_m), ("delay_s", loc.delay_s),
        ("peak_correlation", loc.peak_correlation),
        ("station_pair", ",".join(loc.station_pair)), ("clamped", int(loc.clamped)),
    ])
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leakjet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize station signal files and a ground-truth manifest")
    s.add_argument("scenario")
    s.add_argument("--config", help="layout/fluid file; overrides a 'config' key in the scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--observe-snr-db", type=float, default=formats.DEFAULT_OBSERVE_SNR_DB,
                   help="predicted leak-band SNR above which a station is scored as observing the leak")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("extract", help="per-window feature table from a signal directory")
    e.add_argument("signal_dir")
    e.add_argument("--window", type=float, default=1.0)
    e.add_argument("--overlap", type=float, default=0.25)
    e.add_argument("--band", type=_band, default=DEFAULT_BAND_HZ)
    e.add_argument("--out")
    e.set_defaults(func=cmd_extract)

    f = sub.add_parser("fit", help="fit the SPL power law from labelled feature tables")
    f.add_argument("--table", action="append", required=True)
    f.add_argument("--manifest", action="append", required=True)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("train", help="detection domain from labelled feature tables")
    t.add_argument("--table", action="append", required=True)
    t.add_argument("--features", type=_features, default=DEFAULT_FEATURES)
    t.add_argument("--dilation", type=float, default=0.05)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("detect", help="per-batch leak verdicts and hole classes")
    d.add_argument("table")
    d.add_argument("--domain", required=True)
    d.add_argument("--model")
    d.add_argument("--manifest", help="ground truth; adds summary scoring")
    d.add_argument("--delta-p", type=float, help="differential pressure in bar (default: static mean - external)")
    d.add_argument("--external-pressure", type=float, default=1.0)
    d.add_argument("--min-pressure", type=float, default=DEFAULT_MIN_PRESSURE_BAR)
    d.add_argument("--max-pressure-std", type=float, default=DEFAULT_MAX_PRESSURE_STD_BAR)
    d.add_argument("--out")
    d.set_defaults(func=cmd_detect)

    lz = sub.add_parser("localize", help="leak position from two stations' signal files")
    lz.add_argument("signal_a")
    lz.add_argument("signal_b")
    lz.add_argument("--config", required=True, help="layout/fluid file")
    lz.add_argument("--band", type=_band, default=DEFAULT_BAND_HZ)
    lz.add_argument("--min-correlation", type=float, default=DEFAULT_MIN_CORRELATION)
    lz.add_argument("--out")
    lz.set_defaults(func=cmd_localize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        code, msg = EXIT_PARSE, f"parse error: {e}"
    except CliError as e:
        code, msg = e.code, str(e)
    except (ValueError, KeyError) as e:
        code, msg = EXIT_PRECONDITION, f"error: {e}"
    # Diagnostics go to both streams so wrappers that capture only one still see them.
    print(msg, file=sys.stderr)
    print(msg)
    return code


if __name__ == "__main__":
    sys.exit(main())
