"""Normalised RMSE of path ETAs."""
import numpy as np

from ..errors import ValidationError


def nrmse(gt_eta, sim_eta) -> float:
    """Path-ETA RMSE divided by the mean ground-truth ETA.

    Written as ``|P| / sum(gt) * sqrt(mean((sim - gt)**2))``. Non-finite
    simulated ETAs give ``inf``.
    """
    gt = np.asarray(getattr(gt_eta, "gt_eta_s", gt_eta), dtype=float)
    sim = np.asarray(sim_eta, dtype=float)
    if gt.shape != sim.shape or gt.ndim != 1 or gt.size == 0:
        raise ValidationError("GT and simulated ETAs must be 1-d arrays over the same paths")
    total = gt.sum()
    if total == 0:
        raise ValidationError("sum of GT ETAs is zero; nRMSE undefined")
    if not np.all(np.isfinite(sim)):
        return float("inf")
    n = gt.size
    return float(n / total * np.sqrt(np.mean((sim - gt) ** 2)))


def nrmse_from_loss(loss, gt_eta) -> float:
    """Same quantity from an unweighted mean-squared-error loss value."""
    gt = np.asarray(gt_eta, dtype=float)
    if not np.isfinite(loss):
        return float("inf")
    return float(np.sqrt(loss) / gt.mean())
