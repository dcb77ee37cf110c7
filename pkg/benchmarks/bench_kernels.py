"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--seconds 60] [--repeat 3]

The cross-correlation case mirrors localization of a C-D station pair
(231 m at 1200 m/s, 8192 Hz); an FFT correlation is timed for reference
only, since the direct sum is the normative definition.
"""
import argparse
import time

import numpy as np

from leakjet import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def fft_xcorr(a, b, max_lag):
    n = len(a)
    m = 1 << (2 * n - 1).bit_length()
    r = np.fft.irfft(np.conj(np.fft.rfft(a, m)) * np.fft.rfft(b, m), m)
    return np.concatenate([r[m - max_lag:], r[:max_lag + 1]])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seconds", type=float, default=60.0, help="record length")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    fs = 8192
    n = int(args.seconds * fs)
    max_lag = int(np.ceil((231 / 1200 + 2 / fs) * fs))
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    starts = np.arange(0, n - fs + 1, int(0.75 * fs), dtype=np.int64)
    ang = np.sort(rng.uniform(0, 2 * np.pi, 40))
    vx, vy = np.cos(ang), np.sin(ang)
    px, py = rng.uniform(-1.2, 1.2, 200_000), rng.uniform(-1.2, 1.2, 200_000)

    cases = {
        f"xcorr_direct  N={n} L=+-{max_lag}": lambda m: m.xcorr_direct(a, b, max_lag),
        f"window_stats  {len(starts)} x {fs}": lambda m: m.window_stats(a, starts, fs),
        f"point_in_poly {len(px)} pts, {len(vx)} verts": lambda m: m.points_in_polygon(px, py, vx, vy, 1e-12),
    }
    names = sorted(kernels.BACKENDS)
    print(f"backends available: {', '.join(names)} (default: {kernels.backend_name()})")
    print(f"{'case':44s}" + "".join(f"{nm:>12s}" for nm in names) + f"{'speedup':>10s}")
    for label, fn in cases.items():
        times, outs = {}, {}
        for nm in names:
            times[nm], outs[nm] = best_of(lambda: fn(kernels.BACKENDS[nm]), args.repeat)
        ref = outs["python"]
        for nm in names:
            got = outs[nm]
            same = all(np.allclose(g, r, rtol=1e-10, atol=1e-9) for g, r in zip(got, ref)) \
                if isinstance(ref, tuple) else np.allclose(got, ref, rtol=1e-10, atol=1e-9)
            assert same, f"{nm} disagrees with python on {label}"
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:44s}" + "".join(f"{times[nm]:11.3f}s" for nm in names) + f"{speed:9.1f}x")
    t, r = best_of(lambda: fft_xcorr(a, b, max_lag), args.repeat)
    err = np.max(np.abs(r - kernels.BACKENDS["python"].xcorr_direct(a, b, max_lag)))
    print(f"{'xcorr via FFT (reference)':44s}{t:11.3f}s   max abs diff from direct {err:.1e}")


if __name__ == "__main__":
    main()
