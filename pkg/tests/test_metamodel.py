import numpy as np
import pytest

from odcal.analytical import AnalyticalModel, FdParams
from odcal.history import FunctionObjective
from odcal.metamodel import (
    MetamodelParams,
    fit_beta,
    projected_gradient,
    random_start,
    run_metamodel,
    solve_surrogate,
    surrogate_value,
)
from odcal.network import build_assignment_matrix


def _toy_model(shared, x_star=(700.0, 900.0)):
    net, paths = shared
    A = build_assignment_matrix(net, paths)
    m0 = AnalyticalModel(net, A, FdParams(), paths)
    gt = m0.forward(np.array(x_star)).path_eta_s
    p = paths.with_gt(gt)
    return AnalyticalModel(net, A, FdParams(), p), net, p, A


def test_prior():
    b = MetamodelParams.prior(4).beta
    assert b.tolist() == [1.0, 0, 0, 0, 0, 0]


def test_fit_single_record_passes_point():
    x = np.array([[3.0, 4.0]])
    # tiny ridge: beta_0 f_A + beta_1 + ... reproduces the single loss
    p = fit_beta(x, [50.0], x[0], [20.0], gamma=1e-10, linear_ridge=1e-10)
    m = p.beta[0] * 20.0 + p.beta[1] + p.linear @ x[0]
    assert m == pytest.approx(50.0, rel=1e-6)
    # default ridge: the scale and intercept absorb the misfit, the tilt stays small
    q = fit_beta(x, [50.0], x[0], [20.0])
    assert q.beta[0] * 20.0 + q.beta[1] == pytest.approx(50.0, rel=1e-2)
    assert np.abs(q.linear @ x[0]) < 1.0


def test_fit_recovers_known_beta(rng):
    dim = 4
    beta_star = np.array([0.7, 12.0, 0.3, -0.2, 0.5, 0.1])
    xs = rng.uniform(0, 100, size=(25, dim))
    fa = rng.uniform(10, 1000, size=25)
    losses = beta_star[0] * fa + beta_star[1] + xs @ beta_star[2:]
    # the shrinkage bias is proportional to the ridge weight; the intercept is nearly
    # collinear with the positive demands, which amplifies it about a hundredfold
    p = fit_beta(xs, losses, xs[0], fa, gamma=1e-10, linear_ridge=1e-10)
    np.testing.assert_allclose(p.beta, beta_star, rtol=1e-6)
    q = fit_beta(xs, losses, xs[0], fa, gamma=1e-8, linear_ridge=1e-8)
    np.testing.assert_allclose(q.beta, beta_star, rtol=1e-4)


def test_fit_constant_losses():
    xs = np.random.default_rng(1).uniform(0, 10, size=(30, 3))
    p = fit_beta(xs, np.full(30, 42.0), xs[0], np.zeros(30))
    # the intercept carries the level; the ridged tilt stays negligible
    assert p.beta[1] == pytest.approx(42.0, rel=1e-2)
    np.testing.assert_allclose(p.beta[1] + xs @ p.linear, 42.0, rtol=2e-3)


def test_fit_ignores_failed_and_is_reproducible(rng):
    xs = rng.uniform(0, 10, size=(6, 2))
    losses = np.array([5.0, np.inf, 3.0, 4.0, np.inf, 2.0])
    fa = rng.uniform(1, 9, size=6)
    a = fit_beta(xs, losses, xs[0], fa)
    b = fit_beta(xs, losses, xs[0], fa)
    assert np.isfinite(a.beta).all()
    assert a.beta.tobytes() == b.beta.tobytes()
    keep = np.isfinite(losses)
    c = fit_beta(xs[keep], losses[keep], xs[0], fa[keep])
    np.testing.assert_allclose(a.beta, c.beta)
    assert fit_beta(xs[:1], [np.inf], xs[0], fa[:1]).beta.tolist() == MetamodelParams.prior(2).beta.tolist()


def test_fit_scale_never_negative(rng):
    # losses falling while f_A rises would ask for a negative physics weight
    xs = rng.uniform(0, 10, size=(8, 2))
    fa = np.arange(8, dtype=float) * 100
    losses = 1000.0 - fa
    p = fit_beta(xs, losses, xs[0], fa)
    assert p.scale > 0


def test_flat_surrogate_returns_start(shared):
    model, *_ = _toy_model(shared)
    start = np.array([100.0, 200.0])
    x = solve_surrogate(model, MetamodelParams(np.zeros(4)), start, [2000.0, 2000.0],
                        rng=np.random.default_rng(0))
    np.testing.assert_array_equal(x, start)


def test_linear_surrogate_vertex(shared):
    model, *_ = _toy_model(shared)
    start = np.array([300.0, 400.0])
    beta = np.array([0.0, 0.0, 2.5, 0.0])
    x, _ = projected_gradient(model, beta, start, np.array([2000.0, 2000.0]))
    assert x[0] == 0.0
    assert x[1] == 400.0


def test_self_calibration_oracle(shared):
    model, *_ = _toy_model(shared)
    start = np.array([100.0, 100.0])
    upper = np.array([3000.0, 3000.0])
    x = solve_surrogate(model, MetamodelParams.prior(2), start, upper, rng=np.random.default_rng(0))
    assert model.loss(x) <= 1e-6 * model.loss(start)
    assert np.all((x >= 0) & (x <= upper))


def test_solve_never_worse_than_start(small_scenario, rng):
    sc = small_scenario
    model = AnalyticalModel(sc.net, sc.assignment(), sc.fd, sc.paths)
    for _ in range(5):
        beta = np.concatenate([[rng.uniform(0, 2), rng.normal()], rng.normal(size=sc.dim)])
        params = MetamodelParams(beta)
        start = rng.uniform(0, sc.x_upper)
        x = solve_surrogate(model, params, start, sc.x_upper, rng=rng)
        assert surrogate_value(model, params, x) <= surrogate_value(model, params, start) + 1e-9
        assert np.all(x >= 0) and np.all(x <= sc.x_upper)


def test_prior_strictly_decreases_fa(small_scenario, rng):
    sc = small_scenario
    model = AnalyticalModel(sc.net, sc.assignment(), sc.fd, sc.paths)
    beta = MetamodelParams.prior(sc.dim).beta
    start = 0.3 * sc.x_true
    x, v = projected_gradient(model, beta, start, sc.x_upper)
    assert v < model.loss(start)


def test_random_start_feasible(rng):
    upper = np.array([10.0, 20.0, 30.0])
    for _ in range(100):
        s = random_start(rng, upper)
        assert np.all((s >= 0) & (s <= upper))


def _stub(model, offset=0.0):
    """Cheap objective: the analytical loss itself, shifted."""
    return FunctionObjective(lambda x: model.loss(x) + offset, lambda x: model.forward(x).path_eta_s)


def test_budget_two(shared):
    model, net, paths, A = _toy_model(shared)
    st = run_metamodel(net, paths, A, FdParams(), None, np.array([50.0, 50.0]), 2,
                       np.array([3000.0, 3000.0]), objective=_stub(model))
    assert st.sim_calls == 2
    assert len(st.history) == 2


def test_loop_accounting_and_monotone_best(shared):
    model, net, paths, A = _toy_model(shared)
    obj = _stub(model, offset=5.0)
    st = run_metamodel(net, paths, A, FdParams(), None, np.array([1500.0, 100.0]), 12,
                       np.array([3000.0, 3000.0]), objective=obj, seed=3)
    assert st.sim_calls == obj.calls == 12
    best = st.best_loss_trajectory()
    assert np.all(np.diff(best) <= 0)
    assert st.best_record.loss == min(r.loss for r in st.history)
    assert st.best_record.loss < st.history[0].loss
    for r in st.history:
        assert np.all(r.x >= 0) and np.all(r.x <= 3000.0)


def test_gridlock_recorded_not_raised(shared):
    model, net, paths, A = _toy_model(shared)
    obj = FunctionObjective(lambda x: np.inf if x.sum() > 1000 else model.loss(x))
    st = run_metamodel(net, paths, A, FdParams(), None, np.array([2000.0, 2000.0]), 8,
                       np.array([3000.0, 3000.0]), objective=obj, seed=0)
    assert st.sim_calls == 8
    assert not st.history[0].ok
    # backing off towards zero demand eventually produces a feasible evaluation
    assert st.best_record.ok


def test_determinism(shared):
    model, net, paths, A = _toy_model(shared)
    runs = [
        run_metamodel(net, paths, A, FdParams(), None, np.array([1500.0, 100.0]), 8,
                      np.array([3000.0, 3000.0]), objective=_stub(model), seed=9)
        for _ in range(2)
    ]
    for a, b in zip(runs[0].history, runs[1].history):
        assert a.x.tobytes() == b.x.tobytes()
        assert a.loss == b.loss


def test_end_to_end_recovery(small_scenario):
    sc = small_scenario
    x0 = np.random.default_rng(4).uniform(0, sc.x_upper)
    st = run_metamodel(sc.net, sc.paths, sc.assignment(), sc.fd, sc.sim, x0, 12, sc.x_upper, seed=1)
    nr = st.nrmse_trajectory(sc.paths.gt_eta_s)
    assert nr[-1] < 0.5 * nr[0]


def test_invalid_inputs(shared):
    model, net, paths, A = _toy_model(shared)
    with pytest.raises(ValueError):
        run_metamodel(net, paths, A, FdParams(), None, np.array([1.0, 1.0]), 1,
                      np.array([10.0, 10.0]), objective=_stub(model))
    with pytest.raises(ValueError):
        run_metamodel(net, paths, A, FdParams(), None, np.array([20.0, 1.0]), 4,
                      np.array([10.0, 10.0]), objective=_stub(model))
