"""Metamodel simulation-based optimisation.

The surrogate of the simulated loss at epoch k is

    m_k(x) = beta_0 * f_A(x) + beta_1 + sum_z beta_{z+2} * x_z

where ``f_A`` is the analytical-model loss (:mod:`odcal.analytical`). Each
epoch refits beta on the whole evaluation history, minimises ``m_k`` over
the box ``[0, x_upper]`` with projected gradient descent, and simulates the
minimiser.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytical import AnalyticalModel, FdParams
from .history import EvalRecord, SimObjective, SoState
from .mesosim import SimConfig
from .network import Network, PathSet

STALL_EPOCHS = 3
ARMIJO_SIGMA = 1e-4
LINEAR_RIDGE = 1.0
SCALE_FLOOR = 1e-3


@dataclass
class MetamodelParams:
    beta: np.ndarray

    @classmethod
    def prior(cls, dim: int) -> "MetamodelParams":
        beta = np.zeros(dim + 2)
        beta[0] = 1.0
        return cls(beta)

    @property
    def scale(self) -> float:
        return float(self.beta[0])

    @property
    def intercept(self) -> float:
        return float(self.beta[1])

    @property
    def linear(self) -> np.ndarray:
        return self.beta[2:]


def fit_beta(xs, losses, x_current, fa_values, gamma=1e-3,
             linear_ridge=LINEAR_RIDGE, scale_floor=SCALE_FLOOR) -> MetamodelParams:
    """Distance-weighted ridge fit of the surrogate parameters.

    Minimises ``sum_j w_j (loss_j - m(x_j))^2 + sum_c g_c s_c^2 (beta_c - prior_c)^2``
    with ``w_j = 1 / (1 + ||x_j - x_current||)`` and ``s_c^2`` the weighted
    sum of squares of design column ``c``, so the ridge is unit-free.
    ``g_c`` is ``gamma`` for the scale and intercept and ``linear_ridge`` for
    the linear terms: with few records the misfit is absorbed by rescaling
    the analytical loss rather than by a tilt that drags candidates to the
    box corners. A scale below ``scale_floor`` is pinned there and the other
    parameters refitted, since a negative scale would reward disagreement
    with the analytical model. Records with non-finite loss are ignored;
    with no usable record the prior ``(1, 0, ..., 0)`` is returned.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    losses = np.asarray(losses, dtype=float)
    fa_values = np.asarray(fa_values, dtype=float)
    x_current = np.asarray(x_current, dtype=float)
    dim = x_current.size
    prior = MetamodelParams.prior(dim).beta
    keep = np.isfinite(losses) & np.isfinite(fa_values)
    if not keep.any():
        return MetamodelParams(prior)
    xs, losses, fa_values = xs[keep], losses[keep], fa_values[keep]

    w = 1.0 / (1.0 + np.linalg.norm(xs - x_current, axis=1))
    M = np.empty((losses.size, dim + 2))
    M[:, 0] = fa_values
    M[:, 1] = 1.0
    M[:, 2:] = xs
    ridge = np.full(dim + 2, float(linear_ridge))
    ridge[:2] = gamma
    beta = prior + _ridge_solve(M, losses - M @ prior, w, ridge)
    if beta[0] < scale_floor:
        fixed = prior.copy()
        fixed[0] = scale_floor
        rest = _ridge_solve(M[:, 1:], losses - M @ fixed, w, ridge[1:])
        beta = fixed.copy()
        beta[1:] += rest
    return MetamodelParams(beta)


def _ridge_solve(M, resid, w, ridge):
    """argmin_d sum_j w_j (resid_j - M_j d)^2 + sum_c ridge_c s_c^2 d_c^2."""
    n, m = M.shape
    sw = np.sqrt(w)
    scale = np.sqrt((w[:, None] * M * M).sum(axis=0))
    scale[scale == 0] = 1.0
    # u = sqrt(ridge) * scale * d turns this into a plain unit ridge
    colw = scale * np.sqrt(ridge)
    B = (sw[:, None] * M) / colw
    r = sw * resid
    if n >= m:
        aug = np.vstack([B, np.eye(m)])
        u = np.linalg.lstsq(aug, np.concatenate([r, np.zeros(m)]), rcond=None)[0]
    else:
        u = B.T @ np.linalg.solve(B @ B.T + np.eye(n), r)
    return u / colw


def surrogate_value(model: AnalyticalModel, params: MetamodelParams, x):
    b = params.beta
    return b[0] * model.loss(x) + b[1] + float(np.dot(b[2:], x))


def _value_grad(model, beta, x):
    if beta[0] != 0.0:
        fa, g = model.loss_and_grad(x)
        val = beta[0] * fa + beta[1] + float(np.dot(beta[2:], x))
        return val, beta[0] * g + beta[2:]
    return beta[1] + float(np.dot(beta[2:], x)), beta[2:].copy()


def _value(model, beta, x):
    base = beta[1] + float(np.dot(beta[2:], x))
    return base if beta[0] == 0.0 else beta[0] * model.loss(x) + base


def projected_gradient(model, beta, x_start, x_upper, max_iter=500, tol=1e-6):
    """Minimise the surrogate on the box with spectral projected gradient steps.

    Step lengths start from a Barzilai-Borwein estimate and are halved until
    the Armijo condition holds along the projection arc. Returns ``(x, m(x))``.
    """
    upper = np.asarray(x_upper, dtype=float)
    x = np.clip(np.asarray(x_start, dtype=float), 0.0, upper)
    val, g = _value_grad(model, beta, x)
    if not np.isfinite(val):
        return x, val
    span = float(upper.max()) if upper.size else 1.0
    step = None
    for _ in range(max_iter):
        pg = np.clip(x - g, 0.0, upper) - x
        if np.linalg.norm(pg) < tol * (1.0 + abs(val)):
            break
        if step is None:
            gmax = float(np.abs(g).max())
            step = 0.1 * span / gmax if gmax > 0 else 1.0
        accepted = False
        t = step
        for _ in range(60):
            x_new = np.clip(x - t * g, 0.0, upper)
            d = x_new - x
            if not np.any(d):
                break
            v_new = _value(model, beta, x_new)
            if np.isfinite(v_new) and v_new <= val + ARMIJO_SIGMA * float(np.dot(g, d)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        v_new, g_new = _value_grad(model, beta, x_new)
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        step = float(np.dot(s, s)) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-12 * span), 1e12 * span)
        x, val, g = x_new, v_new, g_new
    return x, val


def random_start(rng, x_upper):
    """Random feasible point ``u * U(0, x_upper)`` with a common factor ``u ~ U(0, 1)``.

    The shared factor spreads starts over total demand levels; uniform
    sampling of the box alone almost always lands in heavy overload, where
    the analytical model is saturated and its gradient vanishes.
    """
    upper = np.asarray(x_upper, dtype=float)
    return rng.uniform() * rng.uniform(0.0, upper)


def solve_surrogate(model: AnalyticalModel, params: MetamodelParams, x_start, x_upper,
                    rng=None, n_random_starts=2, max_iter=500):
    """Box-constrained minimiser of the surrogate from ``x_start`` plus random starts.

    The run from ``x_start`` is monotone, so the returned point never has a
    larger surrogate value than ``x_start``. Ties keep the earliest start.
    """
    upper = np.asarray(x_upper, dtype=float)
    beta = np.asarray(params.beta, dtype=float)
    starts = [np.clip(np.asarray(x_start, dtype=float), 0.0, upper)]
    if n_random_starts:
        rng = rng if rng is not None else np.random.default_rng(0)
        starts += [random_start(rng, upper) for _ in range(n_random_starts)]
    best_x, best_v = None, np.inf
    for s in starts:
        x, v = projected_gradient(model, beta, s, upper, max_iter=max_iter)
        if best_x is None or v < best_v:
            best_x, best_v = x, v
    return best_x


def run_metamodel(
    net: Network,
    paths: PathSet,
    A,
    fd: FdParams,
    cfg: SimConfig,
    x0,
    budget: int,
    x_upper,
    *,
    seed: int = 0,
    objective=None,
    gamma: float = 1e-3,
    callback=None,
) -> SoState:
    """Metamodel epoch loop under a simulation budget.

    Epoch 0 simulates ``x0``. Every later epoch fits beta on the full history
    (centred on the incumbent), minimises the surrogate from the incumbent
    and simulates the result. After ``STALL_EPOCHS`` epochs without
    improvement, or while every evaluation so far has gridlocked, the
    surrogate solve starts from a random feasible point instead. A gridlocked
    evaluation is recorded with infinite loss and the next candidate is the
    midpoint between it and the incumbent (zero demand if no evaluation has
    succeeded yet), so repeated gridlock contracts towards a feasible point.
    """
    if budget < 2:
        raise ValueError("budget must be >= 2")
    upper = np.asarray(x_upper, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0) or np.any(x0 > upper):
        raise ValueError("x0 is outside [0, x_upper]")
    model = AnalyticalModel(net, A, fd, paths)
    objective = objective or SimObjective(net, paths, cfg, upper)
    rng = np.random.default_rng(seed)
    state = SoState("metamodel", seed=seed)
    fa_cache = []

    def record(rec: EvalRecord):
        state.add(rec)
        fa_cache.append(model.loss(rec.x))
        if callback is not None:
            callback(state)

    record(objective(x0, epoch=0))
    params = MetamodelParams.prior(x0.size)
    stall = 0
    while state.sim_calls < budget:
        state.epoch += 1
        incumbent = state.best_record
        xs = np.array([r.x for r in state.history])
        losses = np.array([r.loss for r in state.history])
        params = fit_beta(xs, losses, incumbent.x, np.array(fa_cache), gamma=gamma)
        last = state.history[-1]
        if not last.ok:
            # back off halfway towards the incumbent (or towards zero demand)
            anchor = incumbent.x if incumbent.ok else np.zeros_like(upper)
            cand = 0.5 * (last.x + anchor)
        else:
            if stall >= STALL_EPOCHS or not incumbent.ok:
                start = random_start(rng, upper)
                stall = 0
            else:
                start = incumbent.x
            cand = solve_surrogate(model, params, start, upper, rng=rng)
        before = incumbent.loss
        record(objective(cand, epoch=state.epoch))
        stall = 0 if state.history[-1].loss < before else stall + 1
    state.beta = params.beta
    return state
