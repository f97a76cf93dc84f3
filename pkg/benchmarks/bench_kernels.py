"""Time the numba and pure-numpy kernels on the bundled case.

Each backend runs in a fresh interpreter because ``GSCR_NUMBA`` is read at
import time.  Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from gscr import _kernels
from gscr.config import load_case
from gscr.sim import discretize
from gscr.stability import assemble_full_system

repeat = int(sys.argv[1])
case = load_case()
sys_ = assemble_full_system(case.red, case.devices(), case.operating_condition(1.0, -0.241),
                            case.tau, case.omega0, statcom_gains=case.reference_gains())
a, b, c, d = sys_.a, sys_.b[:, :2], sys_.c[:4], sys_.d[:4, :2]
s = 1j * np.logspace(0, 4, 400)
phi, gam = discretize(a, b, 2e-4)
u = np.zeros((25001, 2))
u[5000:5250, 0] = -0.05
x0 = np.zeros(a.shape[0])

def best(fn):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

out = {
    "backend": "numba" if _kernels.USE_NUMBA else "numpy",
    "states": int(a.shape[0]),
    "transfer_matrix_400pts": best(lambda: _kernels.transfer_matrix(a, b, c, d, s)),
    "propagate_25001_steps": best(lambda: _kernels.propagate(phi, gam, c, d, x0, u)),
}
json.dump(out, sys.stdout)
"""


def run(flag: str, repeat: int) -> dict:
    env = dict(os.environ, GSCR_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = [run("0", args.repeat), run("1", args.repeat)]
    print(f"states: {rows[0]['states']}")
    print(f"{'kernel':<26}{'numpy [s]':>12}{'numba [s]':>12}{'speed-up':>10}")
    for key in ("transfer_matrix_400pts", "propagate_25001_steps"):
        a, b = rows[0][key], rows[1][key]
        print(f"{key:<26}{a:>12.4f}{b:>12.4f}{a / b:>9.1f}x")
    if rows[1]["backend"] != "numba":
        print("note: numba unavailable, both columns use numpy")


if __name__ == "__main__":
    main()
