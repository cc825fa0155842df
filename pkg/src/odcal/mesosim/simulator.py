"""Stochastic mesoscopic simulator used as the expensive black box.

Each replication draws Poisson departures per OD pair and a table of
lognormal speed-noise factors (one per segment and time bin), then hands
everything to the compiled event loop in :mod:`odcal.mesosim._kernel`.
Replication seeds are pre-derived from ``SimConfig.seed`` with
``numpy.random.SeedSequence.spawn`` so results do not depend on execution
order.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import GridlockError, ValidationError
from ..network import Network, PathSet
from ._kernel import default_kernel

GRIDLOCK_THRESHOLD = 0.5


@dataclass(frozen=True)
class SimConfig:
    """Run parameters of the simulator.

    ``horizon_s``/``warmup_s`` left as ``None`` are resolved per route set:
    warmup is the longest free-flow path time and the horizon adds
    ``max(2 * warmup, 3600)`` seconds of measured departures.
    """

    horizon_s: float | None = None
    timestep_s: float = 60.0
    warmup_s: float | None = None
    replications: int = 5
    seed: int = 0
    noise_cv: float = 0.1
    # simulator-side speed-density curve; exponents are per segment
    exponent_seed: int = 0
    alpha_low: float = 1.5
    alpha_high: float = 3.5
    # peak flow of each segment's curve, as a multiple of its discharge capacity
    fd_capacity_margin: float = 1.25
    v_min_mps: float = 1.0

    def validate(self):
        if not self.timestep_s > 0:
            raise ValidationError("timestep_s must be > 0")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.noise_cv < 0:
            raise ValidationError("noise_cv must be >= 0")
        if self.warmup_s is not None and self.warmup_s < 0:
            raise ValidationError("warmup_s must be >= 0")
        if self.horizon_s is not None and self.warmup_s is not None and not self.horizon_s > self.warmup_s:
            raise ValidationError("horizon_s must exceed warmup_s")
        if not 0 < self.alpha_low <= self.alpha_high:
            raise ValidationError("need 0 < alpha_low <= alpha_high")
        if not self.fd_capacity_margin > 0:
            raise ValidationError("fd_capacity_margin must be > 0")
        if not self.v_min_mps > 0:
            raise ValidationError("v_min_mps must be > 0")

    def resolve(self, net: Network, paths: PathSet) -> "SimConfig":
        longest = float(paths.free_flow_times(net).max())
        warmup = self.warmup_s if self.warmup_s is not None else longest
        horizon = self.horizon_s if self.horizon_s is not None else warmup + max(2.0 * longest, 3600.0)
        cfg = replace(self, warmup_s=float(warmup), horizon_s=float(horizon))
        cfg.validate()
        return cfg


@dataclass
class SimResult:
    mean_eta_s: np.ndarray
    eta_var_s2: np.ndarray
    completed: np.ndarray  # per OD, summed over replications
    generated: np.ndarray
    rep_eta_s: np.ndarray  # (replications, n_od)
    in_network: np.ndarray  # vehicles still travelling at the horizon, per replication
    free_flow_s: np.ndarray
    loss: float | None = None
    config: SimConfig | None = None
    state: dict | None = field(default=None, repr=False)
    trace: list | None = field(default=None, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["od_index", "mean_eta_s", "eta_var_s2", "completed", "generated"])
            for z in range(self.mean_eta_s.size):
                w.writerow(
                    [z, repr(float(self.mean_eta_s[z])), repr(float(self.eta_var_s2[z])),
                     int(self.completed[z]), int(self.generated[z])]
                )


def segment_exponents(net: Network, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment simulator exponents, fixed by ``cfg.exponent_seed``."""
    rng = np.random.default_rng(cfg.exponent_seed)
    a = rng.uniform(cfg.alpha_low, cfg.alpha_high, size=(2, net.n_segments))
    return a[0], a[1]


def segment_jam_density(net: Network, a1, a2, margin) -> np.ndarray:
    """Per-segment jam density (veh/km/lane) of the simulator's speed curve.

    The peak of ``r * (1 - r**a1)**a2`` sits at ``r* = (1 + a1*a2)**(-1/a1)``.
    Jam density is chosen so that the curve's peak flow, ignoring the
    minimum speed, equals ``margin`` times the per-lane discharge capacity.
    Demand above capacity therefore builds the point queue instead of
    collapsing speeds on the moving part of the segment.
    """
    ab = a1 * a2
    r_star = (1.0 + ab) ** (-1.0 / a1)
    peak = r_star * (ab / (1.0 + ab)) ** a2
    vmax_kmh = np.asarray(net.v_max_mps) * 3.6
    return margin * np.asarray(net.capacity_per_lane_vph) / (vmax_kmh * peak)


def path_loss(gt, eta, weights=None) -> float:
    """Mean (weighted) squared ETA error over paths."""
    r = np.asarray(eta, dtype=float) - np.asarray(gt, dtype=float)
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=float)
    return float(np.dot(w, r * r) / r.size)


def _draw_departures(rng, x, horizon):
    counts = rng.poisson(np.asarray(x, dtype=float) * (horizon / 3600.0))
    od = np.repeat(np.arange(x.size, dtype=np.int64), counts)
    times = rng.uniform(0.0, horizon, size=od.size)
    order = np.lexsort((od, times))
    return times[order], od[order]


def _draw_noise(rng, n_bins, n_seg, cv):
    if cv == 0:
        return np.ones((n_bins, n_seg))
    sigma2 = math.log1p(cv * cv)
    return rng.lognormal(mean=-0.5 * sigma2, sigma=math.sqrt(sigma2), size=(n_bins, n_seg))


def simulate(
    net: Network,
    paths: PathSet,
    x,
    cfg: SimConfig,
    *,
    x_upper=None,
    record_state=False,
    trace=False,
    kernel=None,
) -> SimResult:
    """Estimate expected path ETAs at demand ``x`` by independent replications.

    Mean ETAs average, over replications, the mean travel time of trips that
    departed after the warmup and completed before the horizon. A path with
    no such trip in a replication is scored by summing, along its route, the
    mean post-warmup traversal time of each segment as experienced by other
    traffic. A segment nobody traversed contributes its free-flow time plus
    its residual queue delay (queued vehicles times discharge headway) at
    the horizon, so ``x = 0`` reports free-flow times exactly.

    Raises
    ------
    GridlockError
        If any replication completes fewer than half of its generated trips.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (len(paths),):
        raise ValidationError(f"demand vector has shape {x.shape}, expected ({len(paths)},)")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValidationError("demands must be finite and nonnegative")
    if x_upper is not None and np.any(x > np.asarray(x_upper)):
        raise ValidationError("demand exceeds its upper bound")
    cfg = cfg.resolve(net, paths)
    kernel = kernel or default_kernel()

    n_seg = net.n_segments
    n_od = len(paths)
    seg_len = np.ascontiguousarray(net.length_m, dtype=np.float64)
    seg_lanes = np.ascontiguousarray(net.lanes, dtype=np.float64)
    seg_vmax = np.ascontiguousarray(net.v_max_mps, dtype=np.float64)
    headway = 3600.0 / (net.capacity_per_lane_vph * net.lanes)
    a1, a2 = segment_exponents(net, cfg)
    kjam = segment_jam_density(net, a1, a2, cfg.fd_capacity_margin)
    route_ptr, route_segs = paths.csr()
    free_flow = paths.free_flow_times(net)
    n_bins = max(1, int(math.ceil(cfg.horizon_s / cfg.timestep_s)))

    reps = cfg.replications
    rep_eta = np.empty((reps, n_od))
    sum_all = np.zeros(n_od)
    sumsq_all = np.zeros(n_od)
    cnt_all = np.zeros(n_od, dtype=np.int64)
    generated = np.zeros(n_od, dtype=np.int64)
    completed = np.zeros(n_od, dtype=np.int64)
    in_network = np.zeros(reps, dtype=np.int64)
    states = [] if record_state else None
    traces = [] if trace else None

    for r, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(reps)):
        rng = np.random.default_rng(child)
        dep_time, dep_od = _draw_departures(rng, x, cfg.horizon_s)
        noise = _draw_noise(rng, n_bins, n_seg, cfg.noise_cv)

        od_sum = np.zeros(n_od)
        od_sumsq = np.zeros(n_od)
        od_cnt = np.zeros(n_od, dtype=np.int64)
        od_gen = np.zeros(n_od, dtype=np.int64)
        od_done = np.zeros(n_od, dtype=np.int64)
        n_on = np.zeros(n_seg, dtype=np.int64)
        queue = np.zeros(n_seg, dtype=np.int64)
        if record_state:
            state_on = np.zeros((n_bins + 1, n_seg), dtype=np.int64)
            state_q = np.zeros((n_bins + 1, n_seg), dtype=np.int64)
        else:
            state_on = np.zeros((0, n_seg), dtype=np.int64)
            state_q = np.zeros((0, n_seg), dtype=np.int64)
        if trace:
            lengths = np.diff(route_ptr)[dep_od]
            trace_ptr = np.zeros(dep_od.size + 1, dtype=np.int64)
            np.cumsum(lengths, out=trace_ptr[1:])
            trace_entry = np.full(max(int(trace_ptr[-1]), 1), np.nan)
        else:
            trace_ptr = np.zeros(1, dtype=np.int64)
            trace_entry = np.zeros(0)

        seg_tt_sum = np.zeros(n_seg)
        seg_tt_cnt = np.zeros(n_seg, dtype=np.int64)
        n_done = kernel(
            seg_len, seg_lanes, seg_vmax, headway, a1, a2,
            kjam, float(cfg.v_min_mps),
            route_ptr, route_segs, dep_time, dep_od, noise,
            float(cfg.timestep_s), float(cfg.horizon_s), float(cfg.warmup_s),
            od_sum, od_sumsq, od_cnt, od_gen, od_done,
            n_on, queue, state_on, state_q, trace_ptr, trace_entry,
            seg_tt_sum, seg_tt_cnt,
        )
        n_gen = int(dep_od.size)
        if n_gen and n_done < GRIDLOCK_THRESHOLD * n_gen:
            raise GridlockError(int(n_done), n_gen, GRIDLOCK_THRESHOLD)

        with np.errstate(invalid="ignore", divide="ignore"):
            eta = od_sum / od_cnt
        empty = od_cnt == 0
        if empty.any():
            seg_tt = _segment_fallback_times(seg_tt_sum, seg_tt_cnt, seg_len / seg_vmax, queue * headway)
            for z in np.flatnonzero(empty):
                eta[z] = seg_tt[paths.routes[z]].sum()
        rep_eta[r] = eta
        sum_all += od_sum
        sumsq_all += od_sumsq
        cnt_all += od_cnt
        generated += od_gen
        completed += od_done
        in_network[r] = int(n_on.sum())
        if record_state:
            states.append({"on_segment": state_on, "queue": state_q})
        if trace:
            traces.append(
                {"dep_time": dep_time, "dep_od": dep_od, "ptr": trace_ptr, "entry": trace_entry}
            )

    mean_eta = rep_eta.mean(axis=0)
    var = np.zeros(n_od)
    ok = cnt_all > 1
    var[ok] = (sumsq_all[ok] - sum_all[ok] ** 2 / cnt_all[ok]) / (cnt_all[ok] - 1)
    var = np.maximum(var, 0.0)

    loss = None
    if paths.gt_eta_s is not None:
        loss = path_loss(paths.gt_eta_s, mean_eta, paths.weights)
    return SimResult(
        mean_eta_s=mean_eta,
        eta_var_s2=var,
        completed=completed,
        generated=generated,
        rep_eta_s=rep_eta,
        in_network=in_network,
        free_flow_s=free_flow,
        loss=loss,
        config=cfg,
        state={"timestep_s": cfg.timestep_s, "replications": states} if record_state else None,
        trace=traces,
    )


def _segment_fallback_times(tt_sum, tt_cnt, free_flow, residual):
    with np.errstate(invalid="ignore", divide="ignore"):
        observed = tt_sum / tt_cnt
    return np.where(tt_cnt > 0, observed, free_flow + residual)


def make_ground_truth(net: Network, paths: PathSet, x_true, cfg: SimConfig) -> PathSet:
    """Copy of ``paths`` whose GT ETAs are the simulated means under ``x_true``."""
    res = simulate(net, paths, x_true, cfg)
    return paths.with_gt(res.mean_eta_s)
