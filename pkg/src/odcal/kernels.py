"""Fundamental-diagram kernels.

``fd_speed_slope`` evaluates the speed-density curve

    v(r) = v_min + (v_max - v_min) * (1 - r**a1)**a2,   r = k / k_jam in [0, 1]

together with dv/dr. Two implementations exist: a vectorised numpy one and
an explicit loop compiled by numba. :data:`fd_speed_slope` points at the loop
when numba is enabled and at the numpy version otherwise.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, jit


def fd_speed_slope_numpy(ratio, v_max, v_min, a1, a2):
    """Speed and dv/dratio for every segment.

    ``ratio`` is clamped to [0, 1]; the slope is reported as 0 where the
    clamp is active or the ratio is exactly 0 or 1.
    """
    ratio = np.asarray(ratio, dtype=float)
    v_max = np.broadcast_to(np.asarray(v_max, dtype=float), ratio.shape)
    a1 = np.broadcast_to(np.asarray(a1, dtype=float), ratio.shape)
    a2 = np.broadcast_to(np.asarray(a2, dtype=float), ratio.shape)
    r = np.clip(ratio, 0.0, 1.0)
    base = 1.0 - r**a1
    speed = v_min + (v_max - v_min) * base**a2
    interior = (r > 0.0) & (r < 1.0)
    slope = np.zeros_like(r)
    ri = r[interior]
    bi = base[interior]
    slope[interior] = -(v_max[interior] - v_min) * a2[interior] * bi ** (a2[interior] - 1.0) * a1[
        interior
    ] * ri ** (a1[interior] - 1.0)
    return speed, slope


@jit
def _fd_speed_slope_loop(ratio, v_max, v_min, a1, a2, speed, slope):
    n = ratio.shape[0]
    for i in range(n):
        r = ratio[i]
        if r < 0.0:
            r = 0.0
        elif r > 1.0:
            r = 1.0
        base = 1.0 - r ** a1[i]
        speed[i] = v_min + (v_max[i] - v_min) * base ** a2[i]
        if r > 0.0 and r < 1.0:
            slope[i] = -(v_max[i] - v_min) * a2[i] * base ** (a2[i] - 1.0) * a1[i] * r ** (a1[i] - 1.0)
        else:
            slope[i] = 0.0


def fd_speed_slope_loop(ratio, v_max, v_min, a1, a2, kernel=None):
    ratio = np.ascontiguousarray(ratio, dtype=np.float64).ravel()
    n = ratio.shape[0]
    v_max = np.ascontiguousarray(np.broadcast_to(np.asarray(v_max, dtype=np.float64), (n,)))
    a1 = np.ascontiguousarray(np.broadcast_to(np.asarray(a1, dtype=np.float64), (n,)))
    a2 = np.ascontiguousarray(np.broadcast_to(np.asarray(a2, dtype=np.float64), (n,)))
    speed = np.empty(n)
    slope = np.empty(n)
    (kernel or _fd_speed_slope_loop)(ratio, v_max, float(v_min), a1, a2, speed, slope)
    return speed, slope


fd_speed_slope = fd_speed_slope_loop if NUMBA_ENABLED else fd_speed_slope_numpy
