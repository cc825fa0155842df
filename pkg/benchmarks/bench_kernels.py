"""Compare the numba and pure-Python builds of the hot kernels.

    python benchmarks/bench_kernels.py [--segments 60] [--ods 30] [--repeat 3]

Times one simulator replication set and a batch of fundamental-diagram
evaluations with each backend, and checks that both give identical output.
"""
import argparse
import time

import numpy as np

from odcal.harness.scenario import generate_scenario
from odcal.kernels import _fd_speed_slope_loop, fd_speed_slope_loop
from odcal.mesosim import simulate
from odcal.mesosim._kernel import compiled_kernel, run_replication_py


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--segments", type=int, default=60)
    p.add_argument("--ods", type=int, default=30)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--fd-size", type=int, default=200_000)
    args = p.parse_args(argv)

    sc = generate_scenario(args.segments, args.ods, "medium", seed=1, gt_replications=2)
    x = sc.x_true
    fast = compiled_kernel()
    simulate(sc.net, sc.paths, x, sc.sim, kernel=fast)  # compile outside the timing

    t_nb, r_nb = best_of(lambda: simulate(sc.net, sc.paths, x, sc.sim, kernel=fast), args.repeat)
    t_py, r_py = best_of(lambda: simulate(sc.net, sc.paths, x, sc.sim, kernel=run_replication_py), 1)
    same = r_nb.mean_eta_s.tobytes() == r_py.mean_eta_s.tobytes()
    print(f"simulate ({sc.net.n_segments} segments, {sc.dim} ODs, {sc.sim.replications} reps)")
    print(f"  numba  {t_nb:9.3f} s")
    print(f"  python {t_py:9.3f} s   speedup x{t_py / t_nb:.1f}   identical={same}")

    rng = np.random.default_rng(0)
    n = args.fd_size
    r = rng.uniform(0, 1, n)
    vmax = rng.uniform(20, 33, n)
    a1 = rng.uniform(1.5, 3.5, n)
    a2 = rng.uniform(1.5, 3.5, n)
    fd_speed_slope_loop(r[:10], vmax[:10], 1.0, a1[:10], a2[:10])
    t_nb, (v_nb, _) = best_of(lambda: fd_speed_slope_loop(r, vmax, 1.0, a1, a2), args.repeat)
    t_py, (v_py, _) = best_of(
        lambda: fd_speed_slope_loop(r, vmax, 1.0, a1, a2, kernel=_fd_speed_slope_loop.py_func), 1
    )
    print(f"fundamental diagram ({n} points)")
    print(f"  numba  {t_nb:9.4f} s")
    print(f"  python {t_py:9.4f} s   speedup x{t_py / t_nb:.1f}   identical={np.array_equal(v_nb, v_py)}")


if __name__ == "__main__":
    main()
