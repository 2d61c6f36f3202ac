"""Time the VM kernels compiled with numba against the plain-Python fallback.

Each variant runs in its own interpreter because the choice is made when
``dopc.vm.kernels`` is imported. Build time is excluded; every run drives
an already solved structure on a fresh machine.

    python3 benchmarks/bench_vm.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
from dopc.payloads import default_fixture
from dopc.pipeline import build
from dopc.vm import kernels
from dopc.vm.descriptor import load_target
from dopc.vm.driver import drive

repeat = int(sys.argv[1])
out = {"numba": kernels.NUMBA, "runs": {}}
for name, tname in (("lev", "interp"), ("lev", "moveonly"), ("lev", "interactive"),
                    ("jitrop", "interp")):
    t = load_target(tname)
    fx = default_fixture(name)
    b = build(fx.source, t)
    base = 0x40000000 if t.relative else 0
    plant = fx.plant(t, base)
    drive(t, b.structure, b.protocol, leaks=dict(fx.leaks), fixture=plant)  # warm-up / jit
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        _, r = drive(t, b.structure, b.protocol, leaks=dict(fx.leaks), fixture=plant)
        best = min(best, time.perf_counter() - t0)
    out["runs"][f"{name}/{tname}"] = {"seconds": best, "gadgets": r.steps}
print(json.dumps(out))
"""


def measure(disable, repeat):
    env = dict(os.environ)
    env.pop("DOPC_DISABLE_NUMBA", None)
    if disable:
        env["DOPC_DISABLE_NUMBA"] = "1"
    p = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env,
                       capture_output=True, text=True, check=True)
    return json.loads(p.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    fast = measure(False, args.repeat)
    slow = measure(True, args.repeat)
    if not fast["numba"]:
        print("numba is not importable; both columns use the fallback")
    print(f"{'scenario':<20} {'gadgets':>8} {'numba s':>10} {'python s':>10} {'speedup':>8}")
    for key, f in fast["runs"].items():
        s = slow["runs"][key]
        assert f["gadgets"] == s["gadgets"], key
        print(f"{key:<20} {f['gadgets']:>8} {f['seconds']:>10.4f} {s['seconds']:>10.4f} "
              f"{s['seconds'] / max(f['seconds'], 1e-9):>7.1f}x")


if __name__ == "__main__":
    main()
