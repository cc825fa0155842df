"""Deterministic macroscopic network model.

Maps an OD demand vector to analytical path travel times through

    segment demand   lambda = A x
    density          k_i = kappa1 * k_jam * lambda_i / n_i      (clamped to [0, k_jam])
    speed            v_i = v_min + (v_max_i - v_min) (1 - (k_i/k_jam)^a1)^a2
    path time        y_p = sum_{i in p} l_i / v_i

and scores it against ground-truth ETAs with a mean squared error whose exact
gradient is available in closed form.

Units: lengths in metres, speeds in m/s, demands in vehicles/hour,
``kappa1`` in hours/vehicle so that ``kappa1 * lambda`` is dimensionless.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .kernels import fd_speed_slope
from .network import Network, PathSet


@dataclass(frozen=True)
class FdParams:
    alpha1: float = 2.0
    alpha2: float = 2.0
    k_jam_vpkm_per_lane: float = 150.0
    v_min_mps: float = 1.0
    # None -> 0.9 / mean per-lane capacity, see resolve()
    kappa1: float | None = None

    def resolve(self, net: Network) -> "FdParams":
        """Fill in the default ``kappa1`` for ``net`` and validate."""
        fd = self
        if fd.kappa1 is None:
            fd = replace(fd, kappa1=0.9 / float(np.mean(net.capacity_per_lane_vph)))
        fd.validate(net)
        return fd

    def validate(self, net: Network | None = None):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValidationError("alpha1 and alpha2 must be > 0")
        if not self.k_jam_vpkm_per_lane > 0:
            raise ValidationError("k_jam_vpkm_per_lane must be > 0")
        if not self.v_min_mps > 0:
            raise ValidationError("v_min_mps must be > 0")
        if self.kappa1 is not None and not self.kappa1 > 0:
            raise ValidationError("kappa1 must be > 0")
        if net is not None and not self.v_min_mps < float(net.v_max_mps.min()):
            raise ValidationError("v_min_mps must be below every segment's v_max_mps")


@dataclass
class AnalyticalState:
    lam: np.ndarray  # segment demand, veh/h
    density: np.ndarray  # veh/km/lane, clamped
    speed: np.ndarray  # m/s
    path_eta_s: np.ndarray
    # internals reused by the gradient
    slope: np.ndarray  # dv/d(k/k_jam), zero where clamped
    clamped: np.ndarray


class AnalyticalModel:
    """Analytical path-ETA model bound to one network, route set and FD parameters."""

    def __init__(self, net: Network, A, fd: FdParams, paths: PathSet):
        self.net = net
        self.A = A.tocsr()
        self.At = self.A.T.tocsr()
        self.fd = fd.resolve(net)
        self.paths = paths
        self._n_lanes = net.lanes.astype(float)
        self._length = np.asarray(net.length_m, dtype=float)
        self._vmax = np.asarray(net.v_max_mps, dtype=float)
        self._weights = paths.path_weights()

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def forward(self, x) -> AnalyticalState:
        fd = self.fd
        x = np.asarray(x, dtype=float)
        lam = self.A @ x
        raw = fd.kappa1 * fd.k_jam_vpkm_per_lane * lam / self._n_lanes
        ratio = raw / fd.k_jam_vpkm_per_lane
        clamped = (ratio <= 0.0) | (ratio >= 1.0)
        ratio = np.clip(ratio, 0.0, 1.0)
        speed, slope = fd_speed_slope(ratio, self._vmax, fd.v_min_mps, fd.alpha1, fd.alpha2)
        np.clip(speed, fd.v_min_mps, self._vmax, out=speed)
        eta = self.At @ (self._length / speed)
        return AnalyticalState(
            lam=lam,
            density=ratio * fd.k_jam_vpkm_per_lane,
            speed=speed,
            path_eta_s=eta,
            slope=slope,
            clamped=clamped,
        )

    def _gt(self):
        if self.paths.gt_eta_s is None:
            raise ValidationError("path set carries no ground-truth ETAs")
        return self.paths.gt_eta_s

    def loss(self, x, state: AnalyticalState | None = None) -> float:
        state = state or self.forward(x)
        r = state.path_eta_s - self._gt()
        return float(np.dot(self._weights, r * r) / r.size)

    def grad(self, x, state: AnalyticalState | None = None) -> np.ndarray:
        state = state or self.forward(x)
        fd = self.fd
        r = state.path_eta_s - self._gt()
        # d f / d t_i, with t_i = l_i / v_i the segment traversal time
        df_dt = (2.0 / r.size) * (self.A @ (self._weights * r))
        # d t_i / d lambda_i = -l_i / v_i^2 * dv/dratio * kappa1 / n_i
        dt_dlam = -self._length / state.speed**2 * state.slope * fd.kappa1 / self._n_lanes
        dt_dlam[state.clamped] = 0.0
        return self.At @ (df_dt * dt_dlam)

    def loss_and_grad(self, x):
        state = self.forward(x)
        return self.loss(x, state), self.grad(x, state)


def forward(net: Network, A, fd: FdParams, x, paths: PathSet | None = None) -> AnalyticalState:
    """Analytical state at ``x``. Path ETAs are per column of ``A``."""
    dummy = paths if paths is not None else PathSet([(0, 0)] * A.shape[1], [[0]] * A.shape[1])
    return AnalyticalModel(net, A, fd, dummy).forward(x)


def loss_fa(net: Network, A, fd: FdParams, paths: PathSet, x) -> float:
    """Mean (optionally weighted) squared gap between analytical and GT ETAs, in s^2."""
    return AnalyticalModel(net, A, fd, paths).loss(x)


def grad_fa(net: Network, A, fd: FdParams, paths: PathSet, x) -> np.ndarray:
    """Exact gradient of :func:`loss_fa` (zero contribution from clamped segments)."""
    return AnalyticalModel(net, A, fd, paths).grad(x)
