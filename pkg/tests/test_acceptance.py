"""End-to-end acceptance checks A1-A9.

Each test prints one ``A<n> PASS|FAIL`` line (also repeated in the pytest
terminal summary) before asserting. A1, A2, A3 and A9 run the real simulator
and take minutes; ``pytest -m "not slow"`` skips them.
"""
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from odcal.analytical import AnalyticalModel, FdParams
from odcal.cli import main
from odcal.harness.compare import compare, initial_point
from odcal.harness.evaluation import nrmse
from odcal.harness.scenario import generate_scenario
from odcal.history import FunctionObjective
from odcal.kernels import _fd_speed_slope_loop, fd_speed_slope, fd_speed_slope_loop
from odcal.mesosim import SimConfig
from odcal.metamodel import run_metamodel
from odcal.network import Network, PathSet, Segment, Zone, build_assignment_matrix
from odcal.seeds import rng_for
from odcal.spsa import SpsaConfig, run_spsa, spsa_gradient

BUDGET = 30

# (level, segments, ODs, seed)
A1_SUITE = [
    ("low", 40, 20, 11),
    ("low", 100, 50, 12),
    ("low", 200, 100, 13),
    ("medium", 40, 20, 21),
    ("medium", 80, 40, 22),
    ("medium", 150, 70, 23),
    ("medium", 200, 100, 24),
    ("high", 60, 30, 31),
    ("high", 120, 60, 32),
    ("high", 200, 100, 33),
]


def report(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


@pytest.fixture(scope="module")
def recovery_scenario():
    return generate_scenario(60, 30, "medium", seed=0)


def _recovery_runs(sc, seeds):
    rep = compare(sc, BUDGET, seeds, algorithms=("metamodel",))
    assert not rep.failures, rep.failures
    return rep.nrmse_metamodel[:, 0], rep.final_metamodel


@pytest.mark.slow
def test_a1_metamodel_beats_spsa():
    t = time.time()
    wins, rel = 0, []
    for level, n_seg, n_od, seed in A1_SUITE:
        sc = generate_scenario(n_seg, n_od, level, seed=seed)
        rep = compare(sc, BUDGET, [seed])
        assert not rep.failures, rep.failures
        mm, sp = rep.final_metamodel[0], rep.final_spsa[0]
        wins += int(mm <= sp)
        rel.append(rep.relative_improvements[0])
        print(f"  {level:>6} {n_seg:>3}/{n_od:<3} metamodel {mm:.4f} spsa {sp:.4f} rel {rel[-1]:.3f}")
    mean_rel = float(np.mean(rel))
    ok = wins >= 8 and mean_rel >= 0.20
    report("A1", ok, f"metamodel wins {wins}/10, mean relative improvement {mean_rel:.3f} "
                     f"(need >=8 and >=0.20), {time.time() - t:.0f}s")
    assert ok


@pytest.mark.slow
def test_a2_recovery(recovery_scenario):
    t = time.time()
    init, final = _recovery_runs(recovery_scenario, [0, 1, 2])
    ratios = final / init
    elapsed = time.time() - t
    ok = bool(np.all(ratios < 0.5)) and elapsed < 300
    report("A2", ok, f"final/initial nRMSE {np.round(ratios, 3).tolist()} (need <0.5 for 3/3), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_a3_robust_to_initial_point(recovery_scenario):
    init, final = _recovery_runs(recovery_scenario, [10, 11, 12, 13, 14])
    starts = {initial_point(s, recovery_scenario.x_upper).tobytes() for s in [10, 11, 12, 13, 14]}
    spread = float(final.max() - final.min())
    ok = len(starts) == 5 and bool(np.all(final < 0.5 * init)) and spread < 0.15
    report("A3", ok, f"final nRMSE {np.round(final, 4).tolist()}, spread {spread:.4f} (need <0.15), "
                     f"all halved: {bool(np.all(final < 0.5 * init))}")
    assert ok


def _random_instance(rng):
    """Random tree-free chain-and-branch network with interior demand."""
    n_seg = int(rng.integers(3, 10))
    segs = [
        Segment(i, float(rng.uniform(200, 3000)), int(rng.integers(1, 5)), float(rng.uniform(15, 35)),
                float(rng.uniform(1500, 2400)), (i + 1,) if i + 1 < n_seg else ())
        for i in range(n_seg)
    ]
    net = Network(segs, [Zone(0, 0, 0), Zone(1, n_seg - 1, n_seg - 1)])
    n_od = int(rng.integers(1, 8))
    routes = []
    for _ in range(n_od):
        a = int(rng.integers(0, n_seg))
        routes.append(list(range(a, int(rng.integers(a, n_seg)) + 1)))
    paths = PathSet([(0, 1)] * n_od, routes)
    paths = paths.with_gt(paths.free_flow_times(net) * rng.uniform(0.8, 3.0, n_od))
    fd = FdParams(alpha1=float(rng.uniform(1.1, 4)), alpha2=float(rng.uniform(1.1, 4)),
                  k_jam_vpkm_per_lane=float(rng.uniform(100, 200)), v_min_mps=float(rng.uniform(0.5, 3)))
    A = build_assignment_matrix(net, paths)
    return AnalyticalModel(net, A, fd, paths), net


def test_a4_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    worst, done, tries = 0.0, 0, 0
    while done < 100:
        tries += 1
        model, net = _random_instance(rng)
        n = len(model.paths)
        x = rng.uniform(10, 0.9 * net.capacity_vph.min() / n, n)
        if model.forward(x).clamped.any() or model.forward(x + 2.0).clamped.any():
            continue
        g = model.grad(x)
        # five-point stencil, h = 1 veh/h: rounding noise ~1e-11 relative to the loss,
        # so even components seven orders below the largest are resolved
        h = 1.0
        fdg = np.array([
            (-model.loss(x + 2 * h * e) + 8 * model.loss(x + h * e)
             - 8 * model.loss(x - h * e) + model.loss(x - 2 * h * e)) / (12 * h)
            for e in np.eye(n)
        ])
        denom = np.maximum(np.abs(fdg), 1e-8 * max(1.0, np.abs(fdg).max()))
        worst = max(worst, float(np.max(np.abs(g - fdg) / denom)))
        done += 1
    ok = worst < 1e-4
    report("A4", ok, f"max relative gradient error {worst:.2e} over 100 instances (need <1e-4)")
    assert ok


def test_a5_fundamental_diagram_invariants():
    rng = np.random.default_rng(5)
    n_draw, n_grid = 10_000, 64
    vmin = rng.uniform(0.1, 5, n_draw)
    vmax = vmin + rng.uniform(1, 40, n_draw)
    a1 = rng.uniform(0.2, 6, n_draw)
    a2 = rng.uniform(0.2, 6, n_draw)
    kjam = rng.uniform(50, 250, n_draw)
    k = np.sort(rng.uniform(-20, 300, (n_draw, n_grid)), axis=1)
    bad_range = bad_mono = 0
    for i in range(n_draw):
        ratio = k[i] / kjam[i]
        for fn in (fd_speed_slope, fd_speed_slope_loop):
            v, _ = fn(ratio, np.full(n_grid, vmax[i]), vmin[i], np.full(n_grid, a1[i]), np.full(n_grid, a2[i]))
            tol = 1e-12 * vmax[i]
            bad_range += int(np.any(v < vmin[i] - tol) or np.any(v > vmax[i] + tol))
            bad_mono += int(np.any(np.diff(v) > tol))
    v_py, _ = fd_speed_slope_loop(k[0] / kjam[0], np.full(n_grid, vmax[0]), vmin[0], np.full(n_grid, a1[0]),
                                  np.full(n_grid, a2[0]), kernel=_fd_speed_slope_loop.py_func)
    ok = bad_range == 0 and bad_mono == 0 and np.all(np.diff(v_py) <= 0)
    report("A5", ok, f"{n_draw} draws x {n_grid} densities: {bad_range} range and {bad_mono} "
                     "monotonicity violations")
    assert ok


def _direct_nrmse(gt, sim):
    n = len(gt)
    return n / sum(gt) * (sum((s - g) ** 2 for g, s in zip(gt, sim)) / n) ** 0.5


def test_a6_nrmse_oracle():
    rng = np.random.default_rng(6)
    worst = 0.0
    cases = [([100.0, 100.0], [150.0, 50.0], 0.5), ([50.0, 150.0], [30.0, 170.0], 0.2)]
    hand_ok = all(abs(nrmse(g, s) - v) < 1e-12 for g, s, v in cases)
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        gt = rng.uniform(1, 5000, n)
        sim = gt * rng.lognormal(0, 0.3, n)
        ref = _direct_nrmse(gt.tolist(), sim.tolist())
        worst = max(worst, abs(nrmse(gt, sim) - ref) / max(ref, 1e-300))
    ok = hand_ok and worst < 1e-12
    report("A6", ok, f"hand examples {'ok' if hand_ok else 'wrong'}, max relative deviation {worst:.1e} "
                     "over 1000 cases (need <1e-12)")
    assert ok


def test_a7_spsa_correctness():
    rng = np.random.default_rng(7)
    dim = 20
    x_star = rng.uniform(20, 80, dim)
    x0 = rng.uniform(0, 100, dim)
    obj = FunctionObjective(lambda x: float(np.sum((x - x_star) ** 2)))
    st = run_spsa(None, None, None, None, SpsaConfig(seed=7, a=0.3, c=1.0), x0, 1 + 2 * 200,
                  np.full(dim, 100.0), objective=obj)
    reduction = 1 - np.linalg.norm(st.final_x - x_star) / np.linalg.norm(x0 - x_star)

    # The per-component noise of one estimate is sqrt(sum_{j != z} w_j^2); with 10,000 draws a
    # 2% band is only reachable when that is comparable to |w_z|, i.e. in two dimensions with
    # equal weights (standard error 1%).
    w = np.array([1.5, -1.5])
    x = np.array([0.3, 0.7])
    n = 10_000
    c = 0.5
    est = np.zeros(2)
    rng = rng_for(0, "a7/linear")
    for _ in range(n):
        delta = rng.choice([-1.0, 1.0], 2)
        est += spsa_gradient(w @ (x + c * delta), w @ (x - c * delta), c, delta)
    rel_err = np.abs(est / n - w) / np.abs(w)
    ok = reduction >= 0.9 and bool(np.all(rel_err < 0.02))
    report("A7", ok, f"quadratic distance reduced {reduction:.1%} in 200 iterations (need >=90%); "
                     f"linear estimator error {np.round(rel_err * 100, 2).tolist()}% (need <2%)")
    assert ok


def test_a8_cli_determinism_and_accounting(tmp_path):
    sc = tmp_path / "sc"
    assert main(["generate", "--out", str(sc), "--segments", "40", "--ods", "10", "--seed", "8",
                 "--gt-replications", "4"]) == 0
    identical, counts = True, []
    for algo in ("metamodel", "spsa"):
        logs = []
        for run in ("a", "b"):
            out = tmp_path / f"{algo}_{run}"
            assert main(["calibrate", "--scenario", str(sc), "--algo", algo, "--budget", "12",
                         "--seed", "4", "--out", str(out)]) == 0
            logs.append((out / f"{algo}_log.csv").read_bytes())
            counts.append(json.loads((out / f"{algo}_final.json").read_text())["sim_calls"])
            counts.append(len(logs[-1].decode().strip().splitlines()) - 1)
        identical &= logs[0] == logs[1]
    cmp_csv = []
    for run in ("a", "b"):
        out = tmp_path / f"cmp_{run}"
        assert main(["compare", "--scenario", str(sc), "--budget", "7", "--seeds", "1,2",
                     "--out", str(out), "--no-plot"]) == 0
        cmp_csv.append([(out / f).read_bytes() for f in sorted(p.name for p in out.glob("*.csv"))])
    identical &= cmp_csv[0] == cmp_csv[1]
    ok = identical and all(c == 12 for c in counts)
    report("A8", ok, f"repeated CLI runs bit-identical: {identical}; recorded call counts {sorted(set(counts))} "
                     "(budget 12)")
    assert ok


@pytest.mark.slow
def test_a9_scale_smoke():
    t = time.time()
    sim = SimConfig(replications=2)
    sc = generate_scenario(18650, 1676, "medium", seed=9, sim=sim, gt_replications=2)
    t_gen = time.time() - t
    x0 = initial_point(9, sc.x_upper)
    st = run_metamodel(sc.net, sc.paths, sc.assignment(), sc.fd, sc.sim, x0, 2, sc.x_upper, seed=1)
    elapsed = time.time() - t
    ok = st.sim_calls == 2 and st.epoch >= 1 and elapsed < 600
    report("A9", ok, f"{sc.net.n_segments} segments, {sc.dim} ODs: generation {t_gen:.0f}s, "
                     f"total with one metamodel epoch {elapsed:.0f}s (need <600s)")
    assert ok
