"""Compare the compiled and pure-Python update kernels.

Run directly: python3 benchmarks/bench_kernels.py
The pure-Python backend is selected per-process via GRIDFUSE_PURE_PYTHON=1,
so this script re-execs itself once for the fallback timing.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time

import numpy as np


def build_workload(seed=0, n_rays=2000, width=400, height=400, res=0.05):
    from gridfuse import kernels

    rng = np.random.default_rng(seed)
    ox = width * res / 2
    oy = height * res / 2
    flats = []
    for _ in range(n_rays):
        ang = rng.uniform(0, 2 * np.pi)
        r = rng.uniform(1.0, 9.0)
        free, end = kernels.traverse(ox, oy, ox + r * np.cos(ang), oy + r * np.sin(ang),
                                     0.0, 0.0, res, width, height)
        flats.append(free)
        if end >= 0:
            flats.append(np.array([end], dtype=np.int64))
    idx = np.concatenate(flats)
    l_vals = rng.choice([2.0, -0.5], size=idx.shape[0])
    return idx, l_vals, width, height


def bench(repeat=5):
    from gridfuse import kernels

    idx, l_vals, width, height = build_workload()
    n = idx.shape[0]

    best_lo = np.inf
    best_bel = np.inf
    for _ in range(repeat):
        L = np.zeros(height * width)
        counts = np.zeros(height * width, dtype=np.int64)
        t0 = time.perf_counter()
        kernels.apply_logodds(L.reshape(height, width), counts.reshape(height, width),
                              idx, l_vals, 10.0)
        best_lo = min(best_lo, time.perf_counter() - t0)

        m_o = np.zeros(height * width)
        m_f = np.zeros(height * width)
        m_of = np.ones(height * width)
        t0 = time.perf_counter()
        kernels.apply_belief(m_o.reshape(height, width), m_f.reshape(height, width),
                             m_of.reshape(height, width), idx, l_vals,
                             kernels.MATCH_CODES["betp"], kernels.RULE_CODES["dempster"],
                             0.0)
        best_bel = min(best_bel, time.perf_counter() - t0)

    print(f"backend={kernels.BACKEND}  observations={n}")
    print(f"  log-odds update: {best_lo * 1e3:8.2f} ms  ({n / best_lo / 1e6:.1f} Mobs/s)")
    print(f"  belief update:   {best_bel * 1e3:8.2f} ms  ({n / best_bel / 1e6:.1f} Mobs/s)")


if __name__ == "__main__":
    bench()
    sys.stdout.flush()
    if os.environ.get("GRIDFUSE_PURE_PYTHON") != "1":
        env = dict(os.environ, GRIDFUSE_PURE_PYTHON="1")
        subprocess.run([sys.executable, __file__], env=env, check=True)
