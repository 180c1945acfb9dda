"""Wall-clock comparison of the compiled and pure-Python propagation kernels.

Usage: python3 benchmarks/bench_kernels.py [--qubits 4] [--cycles 50] [--repeat 5]
"""
import argparse
import json
import time

import numpy as np

from xtalk import _backend
from xtalk.control import build_dd_schedule, XY4
from xtalk.control import uniform_schedule
from xtalk.model import DeviceModel
from xtalk.sim import build_timeline, choose_dt, evolve


def bench(backend, psi, sched, dev, timeline, traj, repeat):
    evolve(psi, sched, dev, traj, timeline=timeline, backend=backend)  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = evolve(psi, sched, dev, traj, timeline=timeline, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--qubits", type=int, default=4)
    ap.add_argument("--cycles", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    n = args.qubits
    dev = DeviceModel.chain(n, 2 * np.pi * 75e3)
    sched = uniform_schedule(n, build_dd_schedule(XY4, 35e-9, 35e-9, args.cycles))
    dt = choose_dt(sched, None, n)
    timeline = build_timeline(sched, n, dt)
    rng = np.random.default_rng(0)
    traj = {(q, "z"): rng.normal(0, 1e6, timeline.n_slices) for q in range(n)}
    psi = np.ones(2 ** n, dtype=complex) / np.sqrt(2 ** n)

    results = {"qubits": n, "slices": timeline.n_slices}
    t_py, out_py = bench("python", psi, sched, dev, timeline, traj, args.repeat)
    results["python_s"] = t_py
    if _backend.compiled_available():
        t_c, out_c = bench("compiled", psi, sched, dev, timeline, traj, args.repeat)
        results["compiled_s"] = t_c
        results["speedup"] = t_py / t_c
        results["max_abs_diff"] = float(np.abs(out_py - out_c).max())
    else:
        results["compiled_s"] = None
    print(json.dumps(results, indent=2))


if __name__ == "__main__":
    main()
