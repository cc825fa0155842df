"""Two-sided SPSA over the box ``[0, x_upper]``, used as the benchmark optimiser."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .history import SimObjective, SoState
from .mesosim import SimConfig
from .network import Network, PathSet


@dataclass(frozen=True)
class SpsaConfig:
    """Gain sequence ``a_k = a / (A + k + 1)**alpha``, ``c_k = c / (k + 1)**gamma``.

    ``a=None`` auto-tunes the gain at the first nonzero gradient estimate so
    that the first step moves every component by ``first_step_frac *
    mean(x_upper)``. ``c=None`` uses ``max(1, 0.05 * mean(x_upper))`` and
    ``A_stability=None`` uses 10% of the expected iteration count.
    """

    a: float | None = None
    c: float | None = None
    A_stability: float | None = None
    alpha_exp: float = 0.602
    gamma_exp: float = 0.101
    seed: int = 0
    first_step_frac: float = 0.02

    def validate(self):
        if self.a is not None and not self.a > 0:
            raise ValueError("a must be > 0")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be > 0")
        if self.A_stability is not None and self.A_stability < 0:
            raise ValueError("A_stability must be >= 0")
        if not 0 < self.gamma_exp < self.alpha_exp <= 1:
            raise ValueError("need 0 < gamma_exp < alpha_exp <= 1")


def spsa_gradient(f_plus, f_minus, c_k, delta):
    return (f_plus - f_minus) / (2.0 * c_k * delta)


def run_spsa(
    net: Network | None,
    paths: PathSet | None,
    A,
    cfg: SimConfig | None,
    scfg: SpsaConfig,
    x0,
    budget: int,
    x_upper,
    *,
    objective=None,
    callback=None,
) -> SoState:
    """SPSA with exact simulation-call accounting.

    Call 1 evaluates ``x0``; each iteration then spends two calls on
    ``clip(x_k +/- c_k * delta)``. A single call left over at the end is
    spent on the current iterate. Iterations where either perturbed point
    gridlocks keep the iterate unchanged.
    """
    if budget < 3:
        raise ValueError("budget must be >= 3")
    scfg.validate()
    upper = np.asarray(x_upper, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < 0) or np.any(x > upper):
        raise ValueError("x0 is outside [0, x_upper]")
    objective = objective or SimObjective(net, paths, cfg, upper)
    rng = np.random.default_rng(scfg.seed)
    n_iter = (budget - 1) // 2
    mean_u = float(upper.mean())
    c = scfg.c if scfg.c is not None else max(1.0, 0.05 * mean_u)
    A_stab = scfg.A_stability if scfg.A_stability is not None else 0.1 * n_iter
    a = scfg.a
    state = SoState("spsa", seed=scfg.seed)

    def record(rec):
        state.add(rec)
        if callback is not None:
            callback(state)

    record(objective(x, epoch=0))
    for k in range(n_iter):
        state.epoch = k + 1
        c_k = c / (k + 1) ** scfg.gamma_exp
        delta = rng.choice(np.array([-1.0, 1.0]), size=x.size)
        plus = objective(np.clip(x + c_k * delta, 0.0, upper), epoch=k + 1)
        record(plus)
        minus = objective(np.clip(x - c_k * delta, 0.0, upper), epoch=k + 1)
        record(minus)
        if not (plus.ok and minus.ok):
            continue
        diff = plus.loss - minus.loss
        if diff == 0.0:
            continue
        g = spsa_gradient(plus.loss, minus.loss, c_k, delta)
        if a is None:
            # |g_z| is the same for every z
            a = scfg.first_step_frac * mean_u * (A_stab + 1.0) ** scfg.alpha_exp / abs(g[0])
        a_k = a / (A_stab + k + 1) ** scfg.alpha_exp
        x = np.clip(x - a_k * g, 0.0, upper)
    if state.sim_calls < budget:
        state.epoch = n_iter + 1
        record(objective(x, epoch=n_iter + 1))
    state.final_x = x
    return state
