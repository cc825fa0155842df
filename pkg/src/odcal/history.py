"""Evaluation history shared by the optimisers, and the simulation objective."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GridlockError
from .harness.evaluation import nrmse
from .mesosim import SimConfig, simulate
from .network import Network, PathSet


@dataclass
class EvalRecord:
    x: np.ndarray
    loss: float  # +inf for a failed (gridlocked) evaluation
    eta: np.ndarray | None
    replications: int
    epoch: int
    failed: bool = False

    @property
    def ok(self) -> bool:
        return not self.failed and np.isfinite(self.loss)


class SimObjective:
    """Simulation-based loss with call accounting.

    All calls share ``cfg.seed`` (common random numbers), so two evaluations
    at the same point return identical results.
    """

    def __init__(self, net: Network, paths: PathSet, cfg: SimConfig, x_upper=None):
        self.net = net
        self.paths = paths
        self.cfg = cfg
        self.x_upper = None if x_upper is None else np.asarray(x_upper, dtype=float)
        self.calls = 0

    def __call__(self, x, epoch=0) -> EvalRecord:
        x = np.asarray(x, dtype=float).copy()
        self.calls += 1
        try:
            res = simulate(self.net, self.paths, x, self.cfg, x_upper=self.x_upper)
        except GridlockError:
            return EvalRecord(x, float("inf"), None, self.cfg.replications, epoch, failed=True)
        return EvalRecord(x, float(res.loss), res.mean_eta_s, self.cfg.replications, epoch)


class FunctionObjective:
    """Wraps a plain ``f(x) -> loss`` (stubbed simulators in tests)."""

    def __init__(self, fn, eta_fn=None):
        self.fn = fn
        self.eta_fn = eta_fn
        self.calls = 0

    def __call__(self, x, epoch=0) -> EvalRecord:
        x = np.asarray(x, dtype=float).copy()
        self.calls += 1
        loss = float(self.fn(x))
        eta = None if self.eta_fn is None else np.asarray(self.eta_fn(x), dtype=float)
        return EvalRecord(x, loss, eta, 1, epoch, failed=not np.isfinite(loss))


@dataclass
class SoState:
    """History of one optimisation run."""

    algorithm: str
    history: list = field(default_factory=list)
    best: int = -1
    epoch: int = 0
    seed: int = 0
    beta: np.ndarray | None = None
    failure: str | None = None

    def add(self, rec: EvalRecord):
        self.history.append(rec)
        if self.best < 0 or rec.loss < self.history[self.best].loss:
            self.best = len(self.history) - 1

    @property
    def sim_calls(self) -> int:
        return len(self.history)

    @property
    def best_record(self) -> EvalRecord:
        return self.history[self.best]

    def best_loss_trajectory(self) -> np.ndarray:
        """Best loss seen after each simulation call."""
        return np.minimum.accumulate(np.array([r.loss for r in self.history]))

    def incumbents(self) -> list[int]:
        """Index of the incumbent after each simulation call."""
        out, best = [], -1
        for j, r in enumerate(self.history):
            if best < 0 or r.loss < self.history[best].loss:
                best = j
            out.append(best)
        return out

    def nrmse_trajectory(self, gt_eta) -> np.ndarray:
        """nRMSE of the incumbent after each simulation call."""
        cache = {}
        out = []
        for j in self.incumbents():
            if j not in cache:
                eta = self.history[j].eta
                cache[j] = float("inf") if eta is None else nrmse(gt_eta, eta)
            out.append(cache[j])
        return np.array(out)

    def log_rows(self, gt_eta):
        """Rows ``epoch,sim_calls,candidate_loss,best_loss,nrmse_best``."""
        best = self.best_loss_trajectory()
        nr = self.nrmse_trajectory(gt_eta)
        return [
            (r.epoch, j + 1, r.loss, best[j], nr[j])
            for j, r in enumerate(self.history)
        ]

    def write_log(self, path, gt_eta):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "sim_calls", "candidate_loss", "best_loss", "nrmse_best"])
            for epoch, calls, cand, best, nr in self.log_rows(gt_eta):
                w.writerow([epoch, calls, repr(float(cand)), repr(float(best)), repr(float(nr))])

    def write_final(self, path):
        rec = self.best_record
        payload = {
            "algorithm": self.algorithm,
            "sim_calls": self.sim_calls,
            "best_index": self.best,
            "best_loss": rec.loss if np.isfinite(rec.loss) else None,
            "x": rec.x.tolist(),
            "beta": None if self.beta is None else self.beta.tolist(),
            "failure": self.failure,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
