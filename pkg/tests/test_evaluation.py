import numpy as np
import pytest

from odcal.errors import ValidationError
from odcal.harness.evaluation import nrmse, nrmse_from_loss


def direct_nrmse(gt, sim):
    # written straight from the definition: |P| / sum(gt) * sqrt(sum((sim - gt)^2) / |P|)
    n = len(gt)
    total = 0.0
    sq = 0.0
    for g, s in zip(gt, sim):
        total += g
        sq += (s - g) ** 2
    return n / total * (sq / n) ** 0.5


def test_hand_examples():
    assert nrmse([100.0, 200.0], [100.0, 200.0]) == 0.0
    assert nrmse([100.0, 100.0], [150.0, 50.0]) == pytest.approx(0.5)
    assert nrmse([50.0, 150.0], [30.0, 170.0]) == pytest.approx(0.2)


def test_matches_direct_formula(rng):
    for _ in range(200):
        n = int(rng.integers(1, 40))
        gt = rng.uniform(10, 2000, n)
        sim = gt * rng.uniform(0.5, 1.5, n)
        assert nrmse(gt, sim) == pytest.approx(direct_nrmse(gt, sim), rel=1e-12)


def test_is_rmse_over_mean(rng):
    gt = rng.uniform(50, 500, 17)
    sim = rng.uniform(50, 500, 17)
    rmse = np.sqrt(np.mean((sim - gt) ** 2))
    assert nrmse(gt, sim) == pytest.approx(rmse / gt.mean(), rel=1e-12)
    assert nrmse_from_loss(np.mean((sim - gt) ** 2), gt) == pytest.approx(nrmse(gt, sim), rel=1e-12)


def test_permutation_invariant(rng):
    gt = rng.uniform(50, 500, 12)
    sim = rng.uniform(50, 500, 12)
    perm = rng.permutation(12)
    assert nrmse(gt[perm], sim[perm]) == pytest.approx(nrmse(gt, sim), rel=1e-14)


def test_scale_invariant(rng):
    gt = rng.uniform(50, 500, 12)
    sim = rng.uniform(50, 500, 12)
    assert nrmse(60 * gt, 60 * sim) == pytest.approx(nrmse(gt, sim), rel=1e-12)


def test_non_finite_sim_is_inf():
    assert nrmse([1.0, 2.0], [1.0, np.inf]) == np.inf
    assert nrmse_from_loss(np.inf, [1.0, 2.0]) == np.inf


def test_errors():
    with pytest.raises(ValidationError):
        nrmse([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        nrmse([1.0, 2.0], [1.0])
    with pytest.raises(ValidationError):
        nrmse([], [])
