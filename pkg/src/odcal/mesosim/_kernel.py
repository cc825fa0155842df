"""Event loop of one simulator replication.

The loop is written once and built twice by :func:`build_kernel`: compiled
with numba and as plain Python. Both variants consume the same pre-drawn
random inputs, so they produce the same numbers.

Event model (vertical queues, no spillback)
-------------------------------------------
* ENTER: a vehicle enters segment ``s`` at time ``t``. Its traversal speed
  comes from the density of the other vehicles moving on the segment, the
  segment's own speed-density exponents and the noise factor of the current
  time bin. It reaches the downstream end at ``t + length / speed``.
* ARRIVE (kind 0): the vehicle joins the segment's point queue. The segment
  discharges FIFO with a fixed headway ``3600 / (lanes * capacity)``, so the
  exit time is ``max(t, last_exit + headway)``.
* EXIT (kind 1): the vehicle leaves; either it finishes its trip or it
  immediately enters the next segment of its route.

Ties are broken by insertion order, departures before queued events.
"""
import numpy as np

from .._accel import NUMBA_ENABLED


def build_kernel(decorate):
    @decorate
    def _less(h_time, h_seq, i, j):
        if h_time[i] < h_time[j]:
            return True
        if h_time[i] == h_time[j] and h_seq[i] < h_seq[j]:
            return True
        return False

    @decorate
    def _swap(h_time, h_seq, h_veh, h_kind, i, j):
        t = h_time[i]
        h_time[i] = h_time[j]
        h_time[j] = t
        q = h_seq[i]
        h_seq[i] = h_seq[j]
        h_seq[j] = q
        v = h_veh[i]
        h_veh[i] = h_veh[j]
        h_veh[j] = v
        k = h_kind[i]
        h_kind[i] = h_kind[j]
        h_kind[j] = k

    @decorate
    def _push(h_time, h_seq, h_veh, h_kind, size, t, seq, veh, kind):
        i = size
        h_time[i] = t
        h_seq[i] = seq
        h_veh[i] = veh
        h_kind[i] = kind
        while i > 0:
            parent = (i - 1) // 2
            if _less(h_time, h_seq, i, parent):
                _swap(h_time, h_seq, h_veh, h_kind, i, parent)
                i = parent
            else:
                break
        return size + 1

    @decorate
    def _pop(h_time, h_seq, h_veh, h_kind, size):
        # caller reads slot 0 before popping
        size -= 1
        if size > 0:
            _swap(h_time, h_seq, h_veh, h_kind, 0, size)
            i = 0
            while True:
                left = 2 * i + 1
                if left >= size:
                    break
                best = left
                right = left + 1
                if right < size and _less(h_time, h_seq, right, left):
                    best = right
                if _less(h_time, h_seq, best, i):
                    _swap(h_time, h_seq, h_veh, h_kind, i, best)
                    i = best
                else:
                    break
        return size

    @decorate
    def _enter(s, t, n_on, queue, seg_len, seg_lanes, seg_vmax, seg_a1, seg_a2,
               seg_kjam, v_min, noise, timestep):
        # density of vehicles already moving on the segment (queued ones excluded), veh/km/lane
        density = (n_on[s] - queue[s]) / (seg_len[s] * 1e-3 * seg_lanes[s])
        r = density / seg_kjam[s]
        if r > 1.0:
            r = 1.0
        speed = v_min + (seg_vmax[s] - v_min) * (1.0 - r ** seg_a1[s]) ** seg_a2[s]
        b = int(t / timestep)
        if b >= noise.shape[0]:
            b = noise.shape[0] - 1
        speed *= noise[b, s]
        if speed > seg_vmax[s]:
            speed = seg_vmax[s]
        elif speed < v_min:
            speed = v_min
        n_on[s] += 1
        return t + seg_len[s] / speed

    @decorate
    def run_replication(
        seg_len, seg_lanes, seg_vmax, seg_headway, seg_a1, seg_a2, seg_kjam, v_min,
        route_ptr, route_segs, dep_time, dep_od, noise, timestep, horizon, warmup,
        od_sum, od_sumsq, od_cnt, od_generated, od_completed,
        n_on, queue, state_on, state_queue, trace_ptr, trace_entry,
        seg_tt_sum, seg_tt_cnt,
    ):
        """Simulate one replication in place; returns the number of completed trips.

        ``state_on``/``state_queue`` (shape ``(n_samples, n_segments)``) and
        ``trace_entry`` are filled only when non-empty. ``seg_tt_sum`` and
        ``seg_tt_cnt`` accumulate entry-to-exit times of vehicles that entered a
        segment after the warmup.
        """
        n_veh = dep_time.shape[0]
        n_seg = seg_len.shape[0]
        h_time = np.empty(n_veh + 1)
        h_seq = np.empty(n_veh + 1, dtype=np.int64)
        h_veh = np.empty(n_veh + 1, dtype=np.int64)
        h_kind = np.empty(n_veh + 1, dtype=np.int64)
        size = 0
        seq = 0
        v_pos = np.zeros(n_veh, dtype=np.int64)
        v_enter = np.zeros(n_veh)
        next_free = np.full(n_seg, -np.inf)
        record_state = state_on.shape[0] > 0
        record_trace = trace_entry.shape[0] > 0
        n_samples = state_on.shape[0]
        sample = 0
        completed = 0
        dep_ptr = 0
        inf = np.inf

        while True:
            t_heap = h_time[0] if size > 0 else inf
            t_dep = dep_time[dep_ptr] if dep_ptr < n_veh else inf
            t = t_dep if t_dep <= t_heap else t_heap
            if t > horizon or t == inf:
                break
            if record_state:
                while sample < n_samples and sample * timestep <= t:
                    for i in range(n_seg):
                        state_on[sample, i] = n_on[i]
                        state_queue[sample, i] = queue[i]
                    sample += 1

            if t_dep <= t_heap:
                veh = dep_ptr
                dep_ptr += 1
                z = dep_od[veh]
                od_generated[z] += 1
                s = route_segs[route_ptr[z]]
                if record_trace:
                    trace_entry[trace_ptr[veh]] = t
                v_enter[veh] = t
                t_end = _enter(s, t, n_on, queue, seg_len, seg_lanes, seg_vmax, seg_a1,
                               seg_a2, seg_kjam, v_min, noise, timestep)
                size = _push(h_time, h_seq, h_veh, h_kind, size, t_end, seq, veh, 0)
                seq += 1
                continue

            veh = h_veh[0]
            kind = h_kind[0]
            size = _pop(h_time, h_seq, h_veh, h_kind, size)
            z = dep_od[veh]
            s = route_segs[route_ptr[z] + v_pos[veh]]
            if kind == 0:
                queue[s] += 1
                t_exit = next_free[s] + seg_headway[s]
                if t_exit < t:
                    t_exit = t
                next_free[s] = t_exit
                size = _push(h_time, h_seq, h_veh, h_kind, size, t_exit, seq, veh, 1)
                seq += 1
            else:
                queue[s] -= 1
                n_on[s] -= 1
                if v_enter[veh] >= warmup:
                    seg_tt_sum[s] += t - v_enter[veh]
                    seg_tt_cnt[s] += 1
                v_pos[veh] += 1
                if route_ptr[z] + v_pos[veh] == route_ptr[z + 1]:
                    completed += 1
                    od_completed[z] += 1
                    if dep_time[veh] >= warmup:
                        tt = t - dep_time[veh]
                        od_sum[z] += tt
                        od_sumsq[z] += tt * tt
                        od_cnt[z] += 1
                else:
                    s = route_segs[route_ptr[z] + v_pos[veh]]
                    if record_trace:
                        trace_entry[trace_ptr[veh] + v_pos[veh]] = t
                    v_enter[veh] = t
                    t_end = _enter(s, t, n_on, queue, seg_len, seg_lanes, seg_vmax, seg_a1,
                                   seg_a2, seg_kjam, v_min, noise, timestep)
                    size = _push(h_time, h_seq, h_veh, h_kind, size, t_end, seq, veh, 0)
                    seq += 1

        if record_state:
            while sample < n_samples:
                for i in range(n_seg):
                    state_on[sample, i] = n_on[i]
                    state_queue[sample, i] = queue[i]
                sample += 1
        return completed

    return run_replication


run_replication_py = build_kernel(lambda f: f)

_compiled = None


def compiled_kernel():
    """The numba build of the replication loop (compiled on first use)."""
    global _compiled
    if _compiled is None:
        import numba

        _compiled = build_kernel(numba.njit(cache=True, nogil=True))
    return _compiled


def default_kernel():
    return compiled_kernel() if NUMBA_ENABLED else run_replication_py
