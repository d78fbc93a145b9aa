"""Time the numba and numpy kernel backends on the same inputs.

Each backend runs in its own interpreter because the backend is fixed at
import time by STREAMS2S_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from streams2s import _kernels as K

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
x = rng.normal(size=(4000, 20))
book = rng.normal(size=(256, 20))
ids = rng.integers(0, 256, size=4000)
amps = rng.random((200, 20)) * 0.01
incs = rng.random(20) * 0.5
cases = {
    "nearest_code 4000x256x20": lambda: K.nearest_code(x, book),
    "centroid_sums 4000x20 k=256": lambda: K.centroid_sums(x, ids, 256),
    "oscillator_bank 200 tokens x 20 bands": lambda: K.oscillator_bank(amps, np.zeros(20), np.zeros(20), incs, 1280, 64.0),
}
out = {"backend": K.BACKEND}
for name, fn in cases.items():
    fn()  # warm-up (JIT compile / cache load)
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["STREAMS2S_DISABLE_NUMBA"] = "1"
    else:
        env.pop("STREAMS2S_DISABLE_NUMBA", None)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    print(f"{'kernel':<40} {fast['backend']:>10} {slow['backend']:>10} {'speedup':>8}")
    for name in fast:
        if name == "backend":
            continue
        print(f"{name:<40} {fast[name] * 1e3:>8.2f}ms {slow[name] * 1e3:>8.2f}ms {slow[name] / fast[name]:>7.1f}x")


if __name__ == "__main__":
    main()
