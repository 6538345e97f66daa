"""Benchmark the compiled trajectory kernel against the pure-numpy fallback.

The kernel backend is chosen at import time from QTSECTOR_DISABLE_NUMBA, so
each timing runs in a fresh subprocess with the flag set accordingly.  The
compiled path is timed twice and the first (compilation) pass reported
separately.

Usage:  python3 benchmarks/bench_kernels.py [--instrument qnd2]
            [--steps 500] [--trajectories 500] [--seed 0]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = """
import json, os, sys, time
import numpy as np
from qtsector import corpus, compute_structure, build_sectors
from qtsector.trajectory import RunConfig, run_ensemble
import qtsector._kernels as kernels

name, steps, traj, seed, repeats = sys.argv[1:6]
instr = corpus.corpus_instrument(name).validated()
dec = build_sectors(instr, compute_structure(instr))
d = instr.dim
cfg = RunConfig(steps=int(steps), trajectories=int(traj), root_seed=int(seed),
                initial_state=np.eye(d, dtype=complex) / d,
                filter_state=np.eye(d, dtype=complex) / d,
                record_stride=int(steps))
times = []
checksum = None
for _ in range(int(repeats)):
    t0 = time.perf_counter()
    rec = run_ensemble(instr, dec, cfg)
    times.append(time.perf_counter() - t0)
    checksum = float(np.nansum(rec.records))
print(json.dumps({"numba": kernels.USE_NUMBA, "times": times,
                  "checksum": checksum}))
"""


def run_child(disable_numba, args, repeats):
    env = dict(os.environ, QTSECTOR_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run(
        [sys.executable, "-c", CHILD, args.instrument, str(args.steps),
         str(args.trajectories), str(args.seed), str(repeats)],
        env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instrument", default="qnd2")
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--trajectories", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    total = args.steps * args.trajectories
    print(f"instrument={args.instrument}  steps={args.steps}  "
          f"trajectories={args.trajectories}  ({total} kernel steps/run)")

    nb = run_child(False, args, repeats=2)
    np_ = run_child(True, args, repeats=1)
    assert nb["numba"] and not np_["numba"]

    t_compile, t_nb = nb["times"]
    t_np = np_["times"][0]
    print(f"numba (first call, includes compile): {t_compile:8.3f} s")
    print(f"numba (warm):                         {t_nb:8.3f} s   "
          f"{total / t_nb:12.0f} steps/s")
    print(f"pure numpy fallback:                  {t_np:8.3f} s   "
          f"{total / t_np:12.0f} steps/s")
    print(f"warm speedup: {t_np / t_nb:.1f}x")
    drift = abs(nb["checksum"] - np_["checksum"])
    scale = max(abs(nb["checksum"]), 1.0)
    print(f"record checksum drift between paths: {drift / scale:.2e} (relative)")


if __name__ == "__main__":
    main()
