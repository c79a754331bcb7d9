"""Compare the compiled and pure-Python trace sweeps.

    python benchmarks/bench_sweep.py [--depth 4] [--procs 2 --addrs 2 --vals 2]

Both backends must agree on the trace count, the failure counts and the first
counterexample per category; the script exits nonzero otherwise.
"""

import argparse
import sys

from tsocc.sweep import HAVE_COMPILED, sweep_compiled, sweep_python


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--procs", type=int, default=2)
    ap.add_argument("--addrs", type=int, default=2)
    ap.add_argument("--vals", type=int, default=2)
    args = ap.parse_args(argv)
    if not HAVE_COMPILED:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`")
        return 1
    cfg = (args.procs, args.addrs, args.vals, args.depth)
    py = sweep_python(*cfg)
    cc = sweep_compiled(*cfg)
    for r in (py, cc):
        print(f"{r.backend:9s} {r.traces:>12,d} traces {r.seconds:9.3f}s "
              f"{r.traces / max(r.seconds, 1e-9):>14,.0f} traces/s")
    print(f"speedup {py.seconds / max(cc.seconds, 1e-9):.0f}x")
    same = (py.traces, py.failures, py.first) == (cc.traces, cc.failures, cc.first)
    print("results identical" if same else "RESULTS DIFFER")
    return 0 if same else 2


if __name__ == "__main__":
    sys.exit(main())
