"""Road network, fixed routes and the OD-to-segment assignment matrix.

Segments are the unit of everything: a route is an ordered list of segment
ids, a zone is a ramp pair ``(entry segment, exit segment)`` and the
assignment matrix has one row per segment and one column per OD pair.
Segment ids must be exactly ``0..n-1`` so that the row index of a segment is
its id.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .errors import NoPathError, ParseError, ValidationError

# Free-flow times are compared as integer microseconds so that equal-cost
# routes are detected exactly and ties can be broken deterministically.
_COST_SCALE = 1e6


@dataclass(frozen=True)
class Segment:
    id: int
    length_m: float
    lanes: int
    v_max_mps: float
    capacity_per_lane_vph: float
    successors: tuple[int, ...] = ()

    def validate(self):
        if not self.length_m > 0:
            raise ValidationError(f"segment {self.id}: length_m must be > 0, got {self.length_m}")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise ValidationError(f"segment {self.id}: lanes must be an integer >= 1, got {self.lanes}")
        if not self.v_max_mps > 0:
            raise ValidationError(f"segment {self.id}: v_max_mps must be > 0, got {self.v_max_mps}")
        if not self.capacity_per_lane_vph > 0:
            raise ValidationError(
                f"segment {self.id}: capacity_per_lane_vph must be > 0, got {self.capacity_per_lane_vph}"
            )

    @property
    def free_flow_time_s(self) -> float:
        return self.length_m / self.v_max_mps


@dataclass(frozen=True)
class Zone:
    """A ramp pair: trips start on ``entry_segment`` and end on ``exit_segment``."""

    id: int
    entry_segment: int
    exit_segment: int


class Network:
    """Directed segment graph with ramp-pair zones.

    Immutable after construction. Per-segment attributes are exposed as
    read-only numpy arrays indexed by segment id.
    """

    def __init__(self, segments: Iterable[Segment], zones: Iterable[Zone] = ()):
        segs = sorted(segments, key=lambda s: s.id)
        self.segments: tuple[Segment, ...] = tuple(segs)
        self.zones: tuple[Zone, ...] = tuple(zones)
        self._validate()
        self._zone_by_id = {z.id: z for z in self.zones}

        def ro(values, dtype):
            arr = np.asarray(values, dtype=dtype)
            arr.setflags(write=False)
            return arr

        self.length_m = ro([s.length_m for s in segs], float)
        self.lanes = ro([s.lanes for s in segs], np.int64)
        self.v_max_mps = ro([s.v_max_mps for s in segs], float)
        self.capacity_per_lane_vph = ro([s.capacity_per_lane_vph for s in segs], float)
        self.free_flow_time_s = ro(self.length_m / self.v_max_mps, float)
        self._csr = None
        self._pred = None

    def _validate(self):
        n = len(self.segments)
        if n == 0:
            raise ValidationError("network has no segments")
        for pos, seg in enumerate(self.segments):
            if seg.id != pos:
                raise ValidationError(
                    f"segment {seg.id}: segment ids must be unique and cover 0..{n - 1}"
                )
            seg.validate()
            for nxt in seg.successors:
                if not 0 <= nxt < n:
                    raise ValidationError(f"segment {seg.id}: successor {nxt} does not exist")
        seen = set()
        for z in self.zones:
            if z.id in seen:
                raise ValidationError(f"zone {z.id}: duplicate zone id")
            seen.add(z.id)
            for sid in (z.entry_segment, z.exit_segment):
                if not 0 <= sid < n:
                    raise ValidationError(f"zone {z.id}: segment {sid} does not exist")

    def __len__(self):
        return len(self.segments)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def zone(self, zone_id) -> Zone:
        try:
            return self._zone_by_id[zone_id]
        except KeyError:
            raise ValidationError(f"zone {zone_id} does not exist") from None

    def successors(self, seg_id) -> tuple[int, ...]:
        return self.segments[seg_id].successors

    @property
    def capacity_vph(self) -> np.ndarray:
        return self.capacity_per_lane_vph * self.lanes

    def integer_costs(self) -> np.ndarray:
        """Free-flow time of every segment in integer microseconds (>= 1)."""
        return np.maximum(1.0, np.rint(self.free_flow_time_s * _COST_SCALE))

    def adjacency_matrix(self) -> sp.csr_matrix:
        """Segment graph with edge ``a -> b`` weighted by the cost of entering ``b``."""
        if self._csr is None:
            cost = self.integer_costs()
            rows, cols = [], []
            for seg in self.segments:
                for nxt in seg.successors:
                    rows.append(seg.id)
                    cols.append(nxt)
            rows = np.asarray(rows, dtype=np.int64)
            cols = np.asarray(cols, dtype=np.int64)
            n = self.n_segments
            self._csr = sp.csr_matrix((cost[cols], (rows, cols)), shape=(n, n))
        return self._csr

    def predecessors(self) -> list[list[int]]:
        if self._pred is None:
            pred = [[] for _ in range(self.n_segments)]
            for seg in self.segments:
                for nxt in seg.successors:
                    pred[nxt].append(seg.id)
            self._pred = pred
        return self._pred

    def path_free_flow_time(self, route: Sequence[int]) -> float:
        return float(self.free_flow_time_s[np.asarray(route, dtype=np.int64)].sum())

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "segments": [
                {
                    "id": s.id,
                    "length_m": s.length_m,
                    "lanes": s.lanes,
                    "v_max_mps": s.v_max_mps,
                    "capacity_per_lane_vph": s.capacity_per_lane_vph,
                    "successors": list(s.successors),
                }
                for s in self.segments
            ],
            "zones": [
                {"id": z.id, "entry_segment": z.entry_segment, "exit_segment": z.exit_segment}
                for z in self.zones
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        if not isinstance(data, dict) or "segments" not in data:
            raise ParseError("network JSON must be an object with a 'segments' array")
        segments = []
        for i, raw in enumerate(data["segments"]):
            try:
                segments.append(
                    Segment(
                        id=int(raw["id"]),
                        length_m=float(raw["length_m"]),
                        lanes=raw["lanes"],
                        v_max_mps=float(raw["v_max_mps"]),
                        capacity_per_lane_vph=float(raw["capacity_per_lane_vph"]),
                        successors=tuple(int(v) for v in raw.get("successors", ())),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                sid = raw.get("id", f"#{i}") if isinstance(raw, dict) else f"#{i}"
                raise ParseError(f"segment {sid}: malformed entry ({exc!r})") from exc
        # lanes are validated as integers, stored as int
        fixed = []
        for s in segments:
            try:
                lanes_ok = float(s.lanes) == int(s.lanes)
            except (TypeError, ValueError):
                raise ParseError(f"segment {s.id}: lanes is not a number") from None
            if not lanes_ok:
                raise ValidationError(f"segment {s.id}: lanes must be an integer, got {s.lanes}")
            fixed.append(
                Segment(s.id, s.length_m, int(s.lanes), s.v_max_mps, s.capacity_per_lane_vph, s.successors)
            )
        zones = []
        for i, raw in enumerate(data.get("zones", [])):
            try:
                zones.append(Zone(int(raw["id"]), int(raw["entry_segment"]), int(raw["exit_segment"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"zone #{i}: malformed entry ({exc!r})") from exc
        return cls(fixed, zones)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.segments == other.segments and self.zones == other.zones

    def __hash__(self):
        return hash((self.segments, self.zones))

    def __repr__(self):
        return f"Network({self.n_segments} segments, {len(self.zones)} zones)"


def load_network(path) -> Network:
    """Read and validate a network JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return Network.from_dict(data)


def save_network(net: Network, path):
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh, indent=1)


@dataclass
class OdVector:
    """Demand per OD pair in vehicles/hour, ordered as ``od_index``."""

    demands: np.ndarray
    od_index: list[tuple[int, int]]

    def __post_init__(self):
        self.demands = np.asarray(self.demands, dtype=float)
        self.od_index = [tuple(od) for od in self.od_index]
        if self.demands.shape != (len(self.od_index),):
            raise ValidationError(
                f"demand vector has shape {self.demands.shape}, od_index has {len(self.od_index)} entries"
            )

    def check_bounds(self, upper):
        upper = np.asarray(upper, dtype=float)
        bad = np.flatnonzero((self.demands < 0) | (self.demands > upper))
        if bad.size:
            z = int(bad[0])
            raise ValidationError(
                f"OD {z}: demand {self.demands[z]} outside [0, {upper[z]}]"
            )


@dataclass
class PathSet:
    """Fixed route per OD pair plus optional ground-truth ETAs and weights.

    ``routes[z]`` is the ordered segment list of OD pair ``od_index[z]``;
    every route carries one ground-truth ETA once ``gt_eta_s`` is set.
    """

    od_index: list[tuple[int, int]]
    routes: list[np.ndarray]
    gt_eta_s: np.ndarray | None = None
    weights: np.ndarray | None = None
    _route_ptr: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.od_index = [tuple(int(v) for v in od) for od in self.od_index]
        self.routes = [np.asarray(r, dtype=np.int64) for r in self.routes]
        if len(self.routes) != len(self.od_index):
            raise ValidationError("routes and od_index differ in length")
        if not self.routes:
            raise ValidationError("path set is empty")
        if self.gt_eta_s is not None:
            self.gt_eta_s = np.asarray(self.gt_eta_s, dtype=float)
            if self.gt_eta_s.shape != (len(self.routes),):
                raise ValidationError("gt_eta_s length does not match the number of paths")
            bad = np.flatnonzero(~(self.gt_eta_s > 0))
            if bad.size:
                raise ValidationError(f"path {int(bad[0])}: gt_eta_s must be > 0")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.routes),) or np.any(self.weights < 0):
                raise ValidationError("weights must be nonnegative, one per path")

    def __len__(self):
        return len(self.routes)

    @property
    def has_gt(self) -> bool:
        return self.gt_eta_s is not None

    def path_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.routes))
        return self.weights

    def with_gt(self, gt_eta_s) -> "PathSet":
        return PathSet(self.od_index, self.routes, np.asarray(gt_eta_s, dtype=float), self.weights)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Routes packed as ``(ptr, segs)`` with route ``z`` = ``segs[ptr[z]:ptr[z+1]]``."""
        if self._route_ptr is None:
            lengths = np.array([len(r) for r in self.routes], dtype=np.int64)
            ptr = np.zeros(len(lengths) + 1, dtype=np.int64)
            np.cumsum(lengths, out=ptr[1:])
            self._route_ptr = ptr
            self._route_segs = (
                np.concatenate(self.routes) if self.routes else np.zeros(0, dtype=np.int64)
            )
        return self._route_ptr, self._route_segs

    def free_flow_times(self, net: Network) -> np.ndarray:
        return np.array([net.path_free_flow_time(r) for r in self.routes])

    def validate(self, net: Network):
        n = net.n_segments
        for z, ((o, d), route) in enumerate(zip(self.od_index, self.routes)):
            if route.size == 0:
                raise ValidationError(f"path {z}: empty route")
            if route.min() < 0 or route.max() >= n:
                raise ValidationError(f"path {z}: references a segment outside the network")
            if route[0] != net.zone(o).entry_segment:
                raise ValidationError(f"path {z}: does not start at zone {o}'s entry segment")
            if route[-1] != net.zone(d).exit_segment:
                raise ValidationError(f"path {z}: does not end at zone {d}'s exit segment")
            for a, b in zip(route[:-1], route[1:]):
                if int(b) not in net.segments[int(a)].successors:
                    raise ValidationError(f"path {z}: segment {b} is not a successor of {a}")


def _lexmin_route(net: Network, dist: np.ndarray, cost: np.ndarray, origin_seg: int, dest_seg: int):
    """Lexicographically smallest shortest route given distances from ``origin_seg``.

    ``dist[s]`` excludes the cost of the origin segment; every value is an
    exact integer held in float64, so equality tests are exact.
    """
    if not np.isfinite(dist[dest_seg]):
        return None
    pred = net.predecessors()
    on_sp = np.zeros(net.n_segments, dtype=bool)
    on_sp[dest_seg] = True
    stack = [dest_seg]
    while stack:
        w = stack.pop()
        for u in pred[w]:
            if not on_sp[u] and dist[u] + cost[w] == dist[w]:
                on_sp[u] = True
                stack.append(u)
    route = [origin_seg]
    u = origin_seg
    while u != dest_seg:
        u = min(w for w in net.segments[u].successors if on_sp[w] and dist[u] + cost[w] == dist[w])
        route.append(u)
    return route


def shortest_free_flow_route(net: Network, origin, destination) -> list[int]:
    """Route minimising the sum of segment free-flow times between two zones.

    Among equal-cost routes (costs compared in integer microseconds) the
    lexicographically smallest segment-id sequence is returned.

    Raises
    ------
    NoPathError
        If the destination's exit segment is unreachable from the origin's
        entry segment.
    """
    o_seg = net.zone(origin).entry_segment
    d_seg = net.zone(destination).exit_segment
    if o_seg == d_seg:
        return [o_seg]
    dist = dijkstra(net.adjacency_matrix(), directed=True, indices=o_seg)
    route = _lexmin_route(net, dist, net.integer_costs(), o_seg, d_seg)
    if route is None:
        raise NoPathError(origin, destination)
    return route


def route_od_pairs(net: Network, od_index: Sequence[tuple[int, int]]) -> PathSet:
    """Fix one free-flow shortest route per OD pair (one Dijkstra per origin)."""
    od_index = [tuple(od) for od in od_index]
    origins = sorted({net.zone(o).entry_segment for o, _ in od_index})
    row_of = {s: i for i, s in enumerate(origins)}
    dist = dijkstra(net.adjacency_matrix(), directed=True, indices=origins)
    dist = np.atleast_2d(dist)
    cost = net.integer_costs()
    routes = []
    for o, d in od_index:
        o_seg = net.zone(o).entry_segment
        d_seg = net.zone(d).exit_segment
        route = _lexmin_route(net, dist[row_of[o_seg]], cost, o_seg, d_seg)
        if route is None:
            raise NoPathError(o, d)
        routes.append(route)
    return PathSet(od_index, routes)


def build_assignment_matrix(net: Network, paths: PathSet) -> sp.csr_matrix:
    """Binary segment-by-OD incidence matrix ``A`` with ``lambda = A @ x``."""
    rows, cols = [], []
    for z, route in enumerate(paths.routes):
        rows.append(route)
        cols.append(np.full(route.size, z, dtype=np.int64))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(rows.size)
    A = sp.csr_matrix((data, (rows, cols)), shape=(net.n_segments, len(paths)))
    # a route never visits a segment twice, but guard against it anyway
    A.data[:] = 1.0
    return A


# -- file formats ------------------------------------------------------------

def save_paths(paths: PathSet, path):
    payload = [
        {"od": [int(o), int(d)], "segments": [int(s) for s in route]}
        for (o, d), route in zip(paths.od_index, paths.routes)
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_paths(path) -> PathSet:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: path file must be a JSON array")
    try:
        od_index = [tuple(int(v) for v in item["od"]) for item in data]
        routes = [[int(s) for s in item["segments"]] for item in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed path entry ({exc!r})") from exc
    return PathSet(od_index, routes)


def _read_indexed_csv(path, column) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "od_index" not in reader.fieldnames or column not in reader.fieldnames:
            raise ParseError(f"{path}: expected header 'od_index,{column}'")
        pairs = []
        for line, row in enumerate(reader, start=2):
            try:
                pairs.append((int(row["od_index"]), float(row[column])))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{line}: {exc}") from exc
    idx = np.array([p[0] for p in pairs], dtype=np.int64)
    if sorted(idx.tolist()) != list(range(len(idx))):
        raise ValidationError(f"{path}: od_index must cover 0..{len(idx) - 1} exactly once")
    out = np.empty(len(idx))
    out[idx] = [p[1] for p in pairs]
    return out


def _write_indexed_csv(path, column, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["od_index", column])
        for z, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([z, repr(float(v))])


def load_gt_csv(path) -> np.ndarray:
    return _read_indexed_csv(path, "gt_eta_s")


def save_gt_csv(path, gt_eta_s):
    _write_indexed_csv(path, "gt_eta_s", gt_eta_s)


def load_od_csv(path) -> np.ndarray:
    return _read_indexed_csv(path, "demand_vph")


def save_od_csv(path, demands):
    _write_indexed_csv(path, "demand_vph", demands)
