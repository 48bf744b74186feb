"""Compare the compiled and pure-Python trajectory kernels.

Run ``python3 benchmarks/bench_kernels.py [--steps N]``. Both kernels integrate
the same harmonic exchange; the script reports time per step and checks that
the final states agree.
"""
import argparse
import time

import numpy as np

from doublewell import backend, dynamics, protocols
from doublewell.core import CONSTANTS, species


def time_backend(name, well, steps, order):
    cfg = dynamics.IntegratorConfig(order=order)
    dt = cfg.resolve_dt(max(well.f_a, well.f_b))
    sa, sb = well.spec.species_a, well.spec.species_b
    za, va = dynamics.phase_space_point(well.potential, sa, 0.1 * CONSTANTS.kB, well.z_min_a,
                                        well.region_a, 0.0)
    start = [za, va, well.z_min_b, 0.0, 0.0]
    t0 = time.perf_counter()
    res = dynamics.run(well.trajectory, sa, sb, start, steps * dt, cfg,
                       f_max=max(well.f_a, well.f_b), bounds=well.bounds, backend=name)
    elapsed = time.perf_counter() - t0
    return elapsed / res.steps, res


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--python-steps", type=int, default=20_000)
    args = p.parse_args()
    well = protocols.synthetic_well(species("proton"), species("beryllium9_ion"), 400e3, 0.7e-3)
    print(f"backends available: {sorted(backend.BACKENDS)}; active: {backend.NAME}")
    for order in (2, 4, 6):
        rows = {}
        for name, steps in (("cython", args.steps), ("python", args.python_steps)):
            if name not in backend.BACKENDS:
                continue
            rows[name] = time_backend(name, well, steps, order)
        line = f"order {order}: " + ", ".join(f"{n} {t * 1e9:9.1f} ns/step"
                                               for n, (t, _) in rows.items())
        if len(rows) == 2:
            line += f"  speedup x{rows['python'][0] / rows['cython'][0]:.0f}"
            # same number of steps for the agreement check
            _, a = time_backend("cython", well, args.python_steps, order)
            _, b = rows["python"]
            diff = np.max(np.abs(np.array(a.state.vector()[:4]) - np.array(b.state.vector()[:4])))
            line += f"  max state difference {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
