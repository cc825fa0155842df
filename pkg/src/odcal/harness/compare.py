"""Head-to-head runs of the metamodel and SPSA on one scenario.

Both algorithms of a run share the initial point, the simulation budget and
the replication seed of the simulator (common random numbers). The
comparison axis is the simulation-call count: after call ``j`` each
algorithm is represented by the nRMSE of its incumbent, so the two series
always have ``budget`` entries.
"""
from __future__ import annotations

import csv
import json
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..history import SoState
from ..metamodel import run_metamodel
from ..seeds import derive_seed, rng_for
from ..spsa import SpsaConfig, run_spsa
from .scenario import Scenario

ALGORITHMS = ("metamodel", "spsa")
COMPARE_FILE = "compare.csv"
SUMMARY_FILE = "summary.json"
PLOT_FILE = "delta.svg"


def initial_point(seed: int, x_upper) -> np.ndarray:
    """Common random feasible start, uniform on ``[0, x_upper]``."""
    return rng_for(seed, "x0").uniform(0.0, np.asarray(x_upper, dtype=float))


def delta_series(nrmse_spsa, nrmse_mm):
    """``nrmse_spsa - nrmse_mm``, with two gridlocked incumbents counting as a tie."""
    a = np.asarray(nrmse_spsa, dtype=float)
    b = np.asarray(nrmse_mm, dtype=float)
    with np.errstate(invalid="ignore"):
        d = a - b
    d[np.isinf(a) & np.isinf(b)] = 0.0
    return d


def relative_improvement(nrmse_spsa: float, nrmse_mm: float) -> float:
    """``(spsa - mm) / spsa``; 1 when only SPSA is stuck at +inf, 0 when both are."""
    if np.isnan(nrmse_spsa) or np.isnan(nrmse_mm):
        return float("nan")
    if np.isinf(nrmse_spsa):
        return 0.0 if np.isinf(nrmse_mm) else 1.0
    if np.isinf(nrmse_mm):
        return float("-inf")
    if nrmse_spsa == 0.0:
        return 0.0 if nrmse_mm == 0.0 else float("-inf")
    return (nrmse_spsa - nrmse_mm) / nrmse_spsa


@dataclass
class ComparisonReport:
    """Per-call incumbent nRMSE of both algorithms for every run seed.

    ``nrmse_metamodel`` and ``nrmse_spsa`` have shape ``(n_seeds, budget)``;
    a run that failed outright is a row of NaN and is named in ``failures``.
    """

    name: str
    level: str
    budget: int
    seeds: list
    nrmse_metamodel: np.ndarray
    nrmse_spsa: np.ndarray
    failures: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict, repr=False)

    @property
    def delta(self) -> np.ndarray:
        return delta_series(self.nrmse_spsa, self.nrmse_metamodel)

    @property
    def final_metamodel(self) -> np.ndarray:
        return self.nrmse_metamodel[:, -1]

    @property
    def final_spsa(self) -> np.ndarray:
        return self.nrmse_spsa[:, -1]

    @property
    def relative_improvements(self) -> np.ndarray:
        return np.array([
            relative_improvement(s, m) for s, m in zip(self.final_spsa, self.final_metamodel)
        ])

    @property
    def mean_relative_improvement(self) -> float:
        r = self.relative_improvements
        r = r[~np.isnan(r)]
        return float(r.mean()) if r.size else float("nan")

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def rows(self):
        d = self.delta
        for i, s in enumerate(self.seeds):
            for j in range(self.budget):
                yield (s, j + 1, self.nrmse_metamodel[i, j], self.nrmse_spsa[i, j], d[i, j])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "sim_calls", "nrmse_metamodel", "nrmse_spsa", "delta"])
            for s, j, a, b, d in self.rows():
                w.writerow([s, j, repr(float(a)), repr(float(b)), repr(float(d))])

    def summary(self) -> dict:
        def num(v):
            v = float(v)
            return v if np.isfinite(v) else str(v)

        return {
            "name": self.name,
            "level": self.level,
            "budget": self.budget,
            "seeds": list(self.seeds),
            "final_nrmse_metamodel": [num(v) for v in self.final_metamodel],
            "final_nrmse_spsa": [num(v) for v in self.final_spsa],
            "relative_improvement": [num(v) for v in self.relative_improvements],
            "mean_relative_improvement": num(self.mean_relative_improvement),
            "failures": {str(k): v for k, v in self.failures.items()},
        }

    def write(self, directory, plot=True, logs=True, gt_eta=None):
        """Write ``compare.csv``, ``summary.json``, per-run logs and the Delta plot."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.to_csv(d / COMPARE_FILE)
        with open(d / SUMMARY_FILE, "w") as fh:
            json.dump(self.summary(), fh, indent=1)
        if logs and gt_eta is not None:
            for (seed, algo), st in sorted(self.states.items()):
                st.write_log(d / f"{algo}_seed{seed}.csv", gt_eta)
        if plot:
            plot_delta([self], d / PLOT_FILE)
        return d


def _run_one(algo, sc, A, cfg, x0, budget, seed, objective=None) -> SoState:
    if algo == "metamodel":
        return run_metamodel(
            sc.net, sc.paths, A, sc.fd, cfg, x0, budget, sc.x_upper,
            seed=derive_seed(seed, "metamodel"), objective=objective,
        )
    return run_spsa(
        sc.net, sc.paths, A, cfg, SpsaConfig(seed=derive_seed(seed, "spsa")),
        x0, budget, sc.x_upper, objective=objective,
    )


def compare(scenario: Scenario, budget: int = 30, seeds=(0,), name=None,
            algorithms=ALGORITHMS, objective_factory=None) -> ComparisonReport:
    """Run both algorithms for each seed from a common x0 with equal budgets.

    For run seed ``s`` the start point, the simulator replication seed and
    each algorithm's own randomness are derived from ``s`` (labels ``x0``,
    ``sim``, ``metamodel``, ``spsa``). An algorithm that raises is recorded
    in ``failures`` and its row is left as NaN.

    ``objective_factory(cfg)``, if given, replaces the simulator objective
    (a fresh one per algorithm run); used to plug in stubs.
    """
    if budget < 3:
        raise ValueError("budget must be >= 3")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    A = scenario.assignment()
    gt = scenario.paths.gt_eta_s
    out = {a: np.full((len(seeds), budget), np.nan) for a in ALGORITHMS}
    failures, states = {}, {}
    for i, s in enumerate(seeds):
        x0 = initial_point(s, scenario.x_upper)
        cfg = replace(scenario.sim, seed=derive_seed(s, "sim"))
        for algo in algorithms:
            try:
                obj = objective_factory(cfg) if objective_factory is not None else None
                st = _run_one(algo, scenario, A, cfg, x0, budget, s, objective=obj)
            except Exception as exc:  # reported, not raised: partial results survive
                failures[(s, algo)] = f"{type(exc).__name__}: {exc}"
                failures[(s, algo)] += "\n" + traceback.format_exc(limit=3)
                continue
            states[(s, algo)] = st
            out[algo][i] = st.nrmse_trajectory(gt)[:budget]
    return ComparisonReport(
        name=name or (scenario.directory.name if scenario.directory else scenario.level),
        level=scenario.level,
        budget=budget,
        seeds=seeds,
        nrmse_metamodel=out["metamodel"],
        nrmse_spsa=out["spsa"],
        failures={f"{s}/{a}": msg for (s, a), msg in failures.items()},
        states=states,
    )


def plot_delta(reports, path, title=None):
    """SVG of Delta (SPSA minus metamodel nRMSE) against simulation calls.

    One thin line per run seed, the seed mean in bold. Infinite Delta values
    (SPSA gridlocked) are drawn at the top of the axis.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "odcal"
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    finite = []
    for rep in reports:
        finite.extend(rep.delta[np.isfinite(rep.delta)].ravel().tolist())
    top = max(finite) if finite else 1.0
    top = top if top > 0 else 1.0
    for k, rep in enumerate(reports):
        color = f"C{k % 10}"
        calls = np.arange(1, rep.budget + 1)
        d = np.where(np.isposinf(rep.delta), 1.05 * top, rep.delta)
        d = np.where(np.isneginf(d), -1.05 * top, d)
        for row in d:
            ax.plot(calls, row, color=color, alpha=0.3, lw=0.8)
        with np.errstate(all="ignore"):
            mean = np.nanmean(d, axis=0) if np.isfinite(d).any() else np.zeros(rep.budget)
        ax.plot(calls, mean, color=color, lw=2.0, label=f"{rep.name} ({rep.level})")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("simulation calls")
    ax.set_ylabel("nRMSE(SPSA) - nRMSE(metamodel)")
    if title:
        ax.set_title(title)
    if len(reports) <= 12:
        ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
