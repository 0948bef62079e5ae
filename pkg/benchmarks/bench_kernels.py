"""Time the compiled and pure-numpy kernels.

    python3 benchmarks/bench_kernels.py          # both backends, one subprocess each
    python3 benchmarks/bench_kernels.py --single # current backend only

The backend is chosen at import time from SPINFID_DISABLE_NUMBA, so each
backend runs in its own interpreter.
"""
import argparse
import json
import os
import subprocess
import sys
import time


def measure(side: int, t_end: float, repeats: int) -> dict:
    import numpy as np

    from spinfid import _kernels, classical
    from spinfid.geometry import build_cubic

    g = build_cubic(side, side, side)
    Dm = classical.coupling_matrix(g)
    state = classical.init_random(g, 0.5, 0)

    # warm-up triggers compilation when numba is active
    classical.integrate(state, g, 0.01, 1.0)
    _kernels.field(state.spins, Dm)

    t0 = time.perf_counter()
    for _ in range(repeats):
        _kernels.field(state.spins, Dm)
    field_us = (time.perf_counter() - t0) / repeats * 1e6

    t0 = time.perf_counter()
    res = classical.integrate(state, g, 0.01, t_end)
    wall = time.perf_counter() - t0
    steps = res.step_stats.accepted + res.step_stats.rejected
    return {"backend": _kernels.backend(), "spins": g.n_spins, "field_us": round(field_us, 2),
            "integrate_s": round(wall, 3), "steps": int(steps),
            "us_per_step": round(wall / max(steps, 1) * 1e6, 2),
            "final_sx": float(np.mean(res.final.spins[:, 0]))}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--side", type=int, default=5, help="cubic lattice edge (default 5)")
    ap.add_argument("--t-end", type=float, default=200.0)
    ap.add_argument("--repeats", type=int, default=2000)
    ap.add_argument("--single", action="store_true")
    args = ap.parse_args()

    if args.single:
        print(json.dumps(measure(args.side, args.t_end, args.repeats)))
        return

    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, SPINFID_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--single", "--side", str(args.side),
                              "--t-end", str(args.t_end), "--repeats", str(args.repeats)],
                             env=env, check=True, capture_output=True, text=True).stdout
        rows.append(json.loads(out.strip().splitlines()[-1]))
    print(f"{'backend':<8} {'spins':>5} {'field us':>10} {'steps':>7} {'us/step':>9} {'total s':>8}")
    for r in rows:
        print(f"{r['backend']:<8} {r['spins']:>5} {r['field_us']:>10.2f} {r['steps']:>7} "
              f"{r['us_per_step']:>9.2f} {r['integrate_s']:>8.3f}")
    if len(rows) == 2:
        print(f"speedup: {rows[1]['integrate_s'] / rows[0]['integrate_s']:.1f}x, "
              f"final sx difference {abs(rows[0]['final_sx'] - rows[1]['final_sx']):.1e}")


if __name__ == "__main__":
    main()
