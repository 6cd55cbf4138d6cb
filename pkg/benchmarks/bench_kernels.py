"""Compare the numba and pure-numpy path propagators on the same mesh.

    python benchmarks/bench_kernels.py --paths 64 --max-angle 0.002

Prints wall time per backend, throughput in path-substeps per second and
the largest state difference between the two. The numba kernel is warmed
up once before timing so compilation is excluded.
"""

import argparse
import json
import time

import numpy as np

from noisefield import (
    AmplitudeDampingParams,
    AmplitudeDampingTrajectory,
    InitialPureState,
    OhmicParams,
    OhmicTrajectory,
    RecurrenceParams,
    RecurrenceTrajectory,
)
from noisefield import kernels
from noisefield.ensemble import gauss_hermite_rule
from noisefield.integrator import build_mesh
from noisefield.synthesis import PhaseProcess, analytic_states

PSI = InitialPureState.normalized(0.6, 0.8 * np.exp(0.7j))
CHANNELS = {
    "recurrence": (lambda: RecurrenceTrajectory(RecurrenceParams(omega0=4 * np.pi), PSI), 1.0),
    "ohmic": (lambda: OhmicTrajectory(OhmicParams(0.25, 10.0, 1.0, 2 * np.pi), PSI), 2.0),
    "amplitude-damping": (lambda: AmplitudeDampingTrajectory(AmplitudeDampingParams(1.0), PSI), 3.0),
}


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(channel, paths, max_angle, points, repeat):
    factory, t_f = CHANNELS[channel]
    proc = PhaseProcess(factory())
    grid = np.linspace(0.0, t_f, points)
    z, _ = gauss_hermite_rule(paths)
    mesh = build_mesh(proc, grid, z.min(), z.max(), max_angle)
    ing = proc.ingredients(mesh.t_eval)[1:]
    psi0 = analytic_states(proc, grid[:1], z)[:, 0, :]

    def go(flag):
        return kernels.propagate(ing, mesh.dt, mesh.ends, z, psi0, use_numba=flag)

    row = {"channel": channel, "paths": paths, "substeps": mesh.size}
    work = paths * mesh.size
    t_np, out_np = best_of(lambda: go(False), repeat)
    row["numpy_s"] = t_np
    row["numpy_rate"] = work / t_np
    if kernels.HAVE_NUMBA:
        go(True)  # compile
        t_nb, out_nb = best_of(lambda: go(True), repeat)
        row["numba_s"] = t_nb
        row["numba_rate"] = work / t_nb
        row["speedup"] = t_np / t_nb
        row["max_diff"] = float(np.abs(out_nb[0] - out_np[0]).max())
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--channel", choices=sorted(CHANNELS) + ["all"], default="all")
    ap.add_argument("--paths", type=int, default=64)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--max-angle", type=float, default=0.002)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write rows to this file")
    args = ap.parse_args()

    names = sorted(CHANNELS) if args.channel == "all" else [args.channel]
    rows = [run(n, args.paths, args.max_angle, args.points, args.repeat) for n in names]
    print(f"{'channel':<18} {'substeps':>9} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max diff':>9}")
    for r in rows:
        nb = f"{r['numba_s']:9.3f}" if "numba_s" in r else f"{'-':>9}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'-':>8}"
        diff = f"{r['max_diff']:9.1e}" if "max_diff" in r else f"{'-':>9}"
        print(f"{r['channel']:<18} {r['substeps']:>9} {r['numpy_s']:9.3f} {nb} {sp} {diff}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
