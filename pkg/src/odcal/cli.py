"""Command-line entry point ``odcal``.

Seeds
-----
Every command takes one integer seed; all random streams derive from it
through :func:`odcal.seeds.derive_seed` with a fixed label. For
``generate`` the labels are ``layout``, ``exponents``, ``x_true/<retry>``,
``gt`` and ``sim``. For a calibration run with seed ``s`` they are ``x0``
(initial point), ``sim`` (simulator replications, shared by both
algorithms), ``metamodel`` and ``spsa``. ``calibrate --seed s`` therefore
repeats exactly the run that ``compare --seeds s`` performs for that
algorithm.

Exit codes: 0 success, 2 validation error, 3 gridlock or infeasible
scenario, 4 partial failure (results written, some runs failed).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path


from .config import load_config
from .errors import GridlockError, OdcalError, ParseError, ValidationError
from .network import load_od_csv, save_od_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GRIDLOCK = 3
EXIT_PARTIAL = 4

log = logging.getLogger("odcal")


def _seed_list(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _positive(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odcal", description="OD demand calibration from path ETAs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a synthetic scenario")
    g.add_argument("--out", required=True, type=Path, help="scenario directory")
    g.add_argument("--segments", type=_positive, default=60)
    g.add_argument("--ods", type=_positive, default=30)
    g.add_argument("--level", choices=["low", "medium", "high"], default="medium")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gt-replications", type=_positive, default=20)
    g.add_argument("--config", type=Path, help="INI file with [sim] / [analytical] settings")

    t = sub.add_parser("ground-truth", help="re-simulate GT ETAs of a scenario")
    t.add_argument("--scenario", required=True, type=Path)
    t.add_argument("--replications", type=_positive)
    t.add_argument("--seed", type=int, help="GT replication seed (default: keep the scenario's)")
    t.add_argument("--out", type=Path, help="write here instead of in place")

    c = sub.add_parser("calibrate", help="run one optimiser")
    c.add_argument("--scenario", required=True, type=Path)
    c.add_argument("--algo", choices=["metamodel", "spsa"], required=True)
    c.add_argument("--budget", type=_positive, default=30)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--x0", type=Path, help="initial OD csv (default: random from --seed)")
    c.add_argument("--out", required=True, type=Path)

    m = sub.add_parser("compare", help="metamodel vs SPSA from common starts")
    m.add_argument("--scenario", required=True, type=Path)
    m.add_argument("--budget", type=_positive, default=30)
    m.add_argument("--seeds", type=_seed_list, default=[0])
    m.add_argument("--out", required=True, type=Path)
    m.add_argument("--no-plot", action="store_true")

    r = sub.add_parser("report", help="aggregate compare outputs")
    r.add_argument("inputs", nargs="+", type=Path, help="compare output directories (searched recursively)")
    r.add_argument("--out", required=True, type=Path)
    return p


def cmd_generate(args):
    from .harness.scenario import generate_scenario

    sim = fd = None
    if args.config is not None:
        sim, fd = load_config(args.config)
    sc = generate_scenario(
        args.segments, args.ods, args.level, args.seed,
        sim=sim, fd=fd, gt_replications=args.gt_replications,
    )
    sc.save(args.out)
    print(f"scenario: {sc.net.n_segments} segments, {sc.dim} ODs, level {sc.level} -> {args.out}")
    return EXIT_OK


def cmd_ground_truth(args):
    from .harness.scenario import Scenario, regenerate_ground_truth

    sc = Scenario.load(args.scenario)
    sc = regenerate_ground_truth(sc, replications=args.replications, seed=args.seed)
    out = args.out or args.scenario
    sc.save(out)
    print(f"ground truth: {sc.gt_replications} replications, seed {sc.gt_seed} -> {out}")
    return EXIT_OK


def cmd_calibrate(args):
    from .harness.compare import _run_one, initial_point
    from .harness.scenario import Scenario
    from .seeds import derive_seed

    sc = Scenario.load(args.scenario)
    if args.x0 is not None:
        x0 = load_od_csv(args.x0)
        if x0.shape != (sc.dim,):
            raise ValidationError(f"x0 has {x0.size} entries, expected {sc.dim}")
    else:
        x0 = initial_point(args.seed, sc.x_upper)
    cfg = replace(sc.sim, seed=derive_seed(args.seed, "sim"))
    st = _run_one(args.algo, sc, sc.assignment(), cfg, x0, args.budget, args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    gt = sc.paths.gt_eta_s
    st.write_log(out / f"{args.algo}_log.csv", gt)
    st.write_final(out / f"{args.algo}_final.json")
    best = st.best_record
    save_od_csv(out / f"{args.algo}_od.csv", best.x)
    nr = st.nrmse_trajectory(gt)
    print(f"{args.algo}: {st.sim_calls} sim calls, nRMSE {nr[0]:.4f} -> {nr[-1]:.4f}")
    if not best.ok:
        print("every evaluation gridlocked", file=sys.stderr)
        return EXIT_GRIDLOCK
    return EXIT_OK


def cmd_compare(args):
    from .harness.compare import compare
    from .harness.scenario import Scenario

    sc = Scenario.load(args.scenario)
    rep = compare(sc, args.budget, args.seeds, name=args.scenario.name)
    rep.write(args.out, plot=not args.no_plot, gt_eta=sc.paths.gt_eta_s)
    for s, a, b, r in zip(rep.seeds, rep.final_metamodel, rep.final_spsa, rep.relative_improvements):
        print(f"seed {s}: metamodel {a:.4f}  spsa {b:.4f}  relative improvement {r:.3f}")
    print(f"mean relative improvement {rep.mean_relative_improvement:.3f}")
    if rep.partial:
        for key, msg in rep.failures.items():
            print(f"FAILED {key}: {msg.splitlines()[0]}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args):
    from .harness.report import write_report

    res = write_report(args.inputs, args.out)
    for row in res["levels"]:
        print(
            f"{row['level']:>7}: {row['metamodel_wins']}/{row['cells']} wins, "
            f"mean relative improvement {row['mean_relative_improvement']:.3f}"
        )
    return EXIT_PARTIAL if res["partial"] else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "ground-truth": cmd_ground_truth,
    "calibrate": cmd_calibrate,
    "compare": cmd_compare,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, matching the validation code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GridlockError as exc:
        print(f"gridlock: {exc}", file=sys.stderr)
        return EXIT_GRIDLOCK
    except (ValidationError, ParseError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OdcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
