"""Synthetic calibration scenarios.

Topology: ``G`` straight highways in each direction crossing a square region
at interchanges, closed by a beltway ring through their end points. Every
highway link between two interchanges is split into one or more segments.
Zones are ramp pairs attached to interchange or ring nodes.

Small requests (fewer than 16 mainline segments) fall back to a plain
bidirectional ring.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..analytical import FdParams
from ..config import load_config, save_config
from ..errors import GridlockError, ValidationError
from ..mesosim import SimConfig, simulate
from ..network import (
    Network,
    PathSet,
    Segment,
    Zone,
    build_assignment_matrix,
    load_gt_csv,
    load_network,
    load_od_csv,
    load_paths,
    route_od_pairs,
    save_gt_csv,
    save_network,
    save_od_csv,
    save_paths,
)
from ..seeds import derive_seed, rng_for

CONGESTION_LEVELS = {"low": 0.3, "medium": 0.7, "high": 1.1}
# demand is scaled so this quantile of loaded-segment v/c hits the level
LOAD_QUANTILE = 0.9
# ...unless that pushes the busiest segment past this v/c (shared trunks on
# large networks would otherwise run at several times capacity)
PEAK_LOAD = {"low": 0.9, "medium": 1.0, "high": 2.0}
GT_REPLICATIONS = 20
MAX_RETRIES = 5

NETWORK_FILE = "network.json"
PATHS_FILE = "paths.json"
GT_FILE = "gt_eta.csv"
XTRUE_FILE = "x_true.csv"
XUPPER_FILE = "x_upper.csv"
CONFIG_FILE = "sim.ini"
META_FILE = "scenario.json"


@dataclass
class Scenario:
    net: Network
    paths: PathSet  # carries GT ETAs
    x_true: np.ndarray  # evaluation only
    x_upper: np.ndarray
    sim: SimConfig  # calibration-time simulator settings
    fd: FdParams
    level: str
    seed: int
    gt_seed: int
    gt_replications: int = GT_REPLICATIONS
    directory: Path | None = None

    @property
    def dim(self) -> int:
        return len(self.paths)

    def assignment(self):
        return build_assignment_matrix(self.net, self.paths)

    def validate(self):
        self.paths.validate(self.net)
        if self.paths.gt_eta_s is None:
            raise ValidationError("scenario paths carry no GT ETAs")
        for name, vec in (("x_true", self.x_true), ("x_upper", self.x_upper)):
            if vec.shape != (self.dim,):
                raise ValidationError(f"{name} has {vec.size} entries, expected {self.dim}")
        if np.any(self.x_true < 0) or np.any(self.x_true > self.x_upper):
            raise ValidationError("x_true violates [0, x_upper]")
        if self.level not in CONGESTION_LEVELS:
            raise ValidationError(f"unknown congestion level {self.level!r}")

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_network(self.net, d / NETWORK_FILE)
        save_paths(self.paths, d / PATHS_FILE)
        save_gt_csv(d / GT_FILE, self.paths.gt_eta_s)
        save_od_csv(d / XTRUE_FILE, self.x_true)
        save_od_csv(d / XUPPER_FILE, self.x_upper)
        save_config(d / CONFIG_FILE, self.sim, self.fd)
        meta = {
            "level": self.level,
            "seed": self.seed,
            "gt_seed": self.gt_seed,
            "gt_replications": self.gt_replications,
            "n_segments": self.net.n_segments,
            "n_ods": self.dim,
            "files": {
                "network": NETWORK_FILE,
                "paths": PATHS_FILE,
                "gt_eta": GT_FILE,
                "x_true": XTRUE_FILE,
                "x_upper": XUPPER_FILE,
                "config": CONFIG_FILE,
            },
        }
        with open(d / META_FILE, "w") as fh:
            json.dump(meta, fh, indent=1)
        self.directory = d
        return d

    @classmethod
    def load(cls, directory) -> "Scenario":
        d = Path(directory)
        meta_path = d / META_FILE
        if not meta_path.exists():
            raise ValidationError(f"{d}: missing {META_FILE}")
        with open(meta_path) as fh:
            meta = json.load(fh)
        files = meta.get("files", {})

        def f(key, default):
            p = d / files.get(key, default)
            if not p.exists():
                raise ValidationError(f"{d}: missing {p.name}")
            return p

        net = load_network(f("network", NETWORK_FILE))
        paths = load_paths(f("paths", PATHS_FILE))
        paths = paths.with_gt(load_gt_csv(f("gt_eta", GT_FILE)))
        sim, fd = load_config(f("config", CONFIG_FILE))
        sc = cls(
            net=net,
            paths=paths,
            x_true=load_od_csv(f("x_true", XTRUE_FILE)),
            x_upper=load_od_csv(f("x_upper", XUPPER_FILE)),
            sim=sim,
            fd=fd,
            level=meta["level"],
            seed=int(meta["seed"]),
            gt_seed=int(meta["gt_seed"]),
            gt_replications=int(meta.get("gt_replications", GT_REPLICATIONS)),
            directory=d,
        )
        sc.validate()
        return sc


# -- topology ------------------------------------------------------------------

def _links_for(G):
    return 2 * G * (G + 1) + 4 * G


def _grid_layout(G, spacing_m):
    """Nodes and undirected links of ``G`` x ``G`` crossing highways plus a ring.

    Returns ``(positions, links)`` with links ``(a, b, length_m, corridor)``.
    """
    side = (G + 1) * spacing_m
    pos = []
    node = {}

    def add(key, xy):
        node[key] = len(pos)
        pos.append(xy)

    for i in range(1, G + 1):
        for j in range(1, G + 1):
            add(("x", i, j), (i * spacing_m, j * spacing_m))
    # ring end points, listed counter-clockwise starting bottom side
    ring = []
    for i in range(1, G + 1):
        add(("s", i), (i * spacing_m, 0.0))
        ring.append(("s", i))
    for j in range(1, G + 1):
        add(("e", j), (side, j * spacing_m))
        ring.append(("e", j))
    for i in range(G, 0, -1):
        add(("n", i), (i * spacing_m, side))
        ring.append(("n", i))
    for j in range(G, 0, -1):
        add(("w", j), (0.0, j * spacing_m))
        ring.append(("w", j))

    links = []
    for j in range(1, G + 1):  # horizontal highway j
        chain = [("w", j)] + [("x", i, j) for i in range(1, G + 1)] + [("e", j)]
        links += [(node[a], node[b], spacing_m, ("h", j)) for a, b in zip(chain[:-1], chain[1:])]
    for i in range(1, G + 1):  # vertical highway i
        chain = [("s", i)] + [("x", i, j) for j in range(1, G + 1)] + [("n", i)]
        links += [(node[a], node[b], spacing_m, ("v", i)) for a, b in zip(chain[:-1], chain[1:])]
    for a, b in zip(ring, ring[1:] + ring[:1]):
        pa, pb = np.array(pos[node[a]]), np.array(pos[node[b]])
        d = float(np.abs(pa - pb).sum())  # along the square perimeter
        links.append((node[a], node[b], d, ("ring", 0)))
    return pos, links


def _ring_layout(R, spacing_m):
    pos = [(math.cos(2 * math.pi * k / R), math.sin(2 * math.pi * k / R)) for k in range(R)]
    links = [(k, (k + 1) % R, spacing_m, ("ring", 0)) for k in range(R)]
    return pos, links


def generate_network(n_segments: int, n_zones: int, rng: np.random.Generator, spacing_m=2000.0):
    """Ring-plus-crossings highway network with exactly ``n_segments`` segments."""
    if n_zones < 2:
        raise ValidationError("need at least 2 zones")
    ramps = 2 * n_zones
    mainline = n_segments - ramps
    extra_ramp = mainline % 2  # odd remainder goes to a two-segment on-ramp
    mainline -= extra_ramp
    if mainline < 6:
        raise ValidationError(f"{n_segments} segments cannot host {n_zones} zones")

    use_ring = mainline < 2 * _links_for(1)
    if not use_ring:
        per_link = 1 if mainline < 400 else 5
        G = 1
        while 2 * _links_for(G + 1) * per_link <= mainline:
            G += 1
        pos, links = _grid_layout(G, spacing_m)
        # a coarse grid may have fewer junctions than zones; a ring has more
        use_ring = len(pos) < n_zones <= mainline // 2
    if use_ring:
        R = mainline // 2
        pos, links = _ring_layout(R, spacing_m)
    major_nodes = list(range(len(pos)))
    if n_zones > len(major_nodes):
        raise ValidationError(f"network with {len(major_nodes)} nodes cannot host {n_zones} zones")

    n_links = len(links)
    # split mainline segments over links: every directed link gets the same count
    base, rem = divmod(mainline // 2, n_links)
    splits = np.full(n_links, base, dtype=np.int64)
    splits[rng.permutation(n_links)[:rem]] += 1

    corridors = sorted({c for *_, c in links})
    attrs = {}
    for c in corridors:
        if c[0] == "ring":
            lanes = 3
        else:
            lanes = int(rng.choice([2, 3, 4]))
        attrs[c] = (lanes, float(rng.uniform(25.0, 33.0)), float(rng.uniform(1800.0, 2200.0)))

    # build directed segment chains
    seg_rows = []  # (length, lanes, vmax, cap)
    out_at = [[] for _ in pos]  # first segment of each chain leaving the node
    into = [[] for _ in pos]  # last segment of each chain entering the node
    reverse_of = {}
    chain_succ = {}
    for li, (a, b, length, corridor) in enumerate(links):
        lanes, vmax, cap = attrs[corridor]
        length = length * float(rng.uniform(0.85, 1.15))
        k = int(splits[li])
        firsts = []
        for u, v in ((a, b), (b, a)):
            ids = list(range(len(seg_rows), len(seg_rows) + k))
            for _ in range(k):
                seg_rows.append((length / k, lanes, vmax, cap))
            for s, t in zip(ids[:-1], ids[1:]):
                chain_succ[s] = [t]
            out_at[u].append(ids[0])
            into[v].append(ids[-1])
            firsts.append((ids[0], ids[-1]))
        (f1, l1), (f2, l2) = firsts
        reverse_of[l1] = f2
        reverse_of[l2] = f1

    succ = {s: list(v) for s, v in chain_succ.items()}
    for node_id in range(len(pos)):
        for s_in in into[node_id]:
            succ[s_in] = sorted(o for o in out_at[node_id] if o != reverse_of.get(s_in))

    zone_nodes = sorted(rng.choice(major_nodes, size=n_zones, replace=False).tolist())
    zones = []
    for zi, node_id in enumerate(zone_nodes):
        first = len(seg_rows)
        n_on = 2 if (zi == 0 and extra_ramp) else 1
        on_ids = list(range(first, first + n_on))
        ramp_len = float(rng.uniform(300.0, 500.0))
        for _ in on_ids:
            seg_rows.append((ramp_len / n_on, 1, 20.0, 2000.0))
        for s, t in zip(on_ids[:-1], on_ids[1:]):
            succ[s] = [t]
        succ[on_ids[-1]] = sorted(out_at[node_id])
        off = len(seg_rows)
        seg_rows.append((float(rng.uniform(300.0, 500.0)), 1, 20.0, 2000.0))
        succ[off] = []
        for s_in in into[node_id]:
            succ[s_in] = sorted(succ[s_in] + [off])
        zones.append(Zone(zi, on_ids[0], off))

    segments = [
        Segment(
            id=i,
            length_m=round(row[0], 3),
            lanes=int(row[1]),
            v_max_mps=round(row[2], 4),
            capacity_per_lane_vph=round(row[3], 2),
            successors=tuple(succ.get(i, [])),
        )
        for i, row in enumerate(seg_rows)
    ]
    net = Network(segments, zones)
    if net.n_segments != n_segments:  # pragma: no cover - construction invariant
        raise AssertionError(f"built {net.n_segments} segments, wanted {n_segments}")
    return net


def zones_for(n_ods: int) -> int:
    """Fewest zones whose ordered pairs outnumber ``n_ods`` by half again."""
    n = 2
    while n * (n - 1) < 1.5 * n_ods:
        n += 1
    return n


def pick_od_pairs(n_zones, n_ods, rng):
    pairs = [(o, d) for o in range(n_zones) for d in range(n_zones) if o != d]
    if n_ods > len(pairs):
        raise ValidationError(f"{n_zones} zones only allow {len(pairs)} OD pairs")
    idx = np.sort(rng.choice(len(pairs), size=n_ods, replace=False))
    return [pairs[i] for i in idx]


def scale_demand(net, A, raw, level_ratio, peak_ratio=np.inf):
    """Scale ``raw`` so the LOAD_QUANTILE of loaded-segment v/c equals ``level_ratio``.

    The factor is reduced if the busiest segment would exceed ``peak_ratio``.
    """
    vc = (A @ raw) / net.capacity_vph
    loaded = vc[vc > 0]
    factor = level_ratio / float(np.quantile(loaded, LOAD_QUANTILE))
    return raw * min(factor, peak_ratio / float(loaded.max()))


def upper_bounds(x_true):
    return 3.0 * np.maximum(x_true, x_true.mean())


def generate_scenario(
    n_segments: int = 60,
    n_ods: int = 30,
    level: str = "medium",
    seed: int = 0,
    *,
    sim: SimConfig | None = None,
    fd: FdParams | None = None,
    gt_replications: int = GT_REPLICATIONS,
) -> Scenario:
    """Build a network, routes, hidden demand and simulated GT ETAs.

    If the GT simulation gridlocks, the hidden demand is redrawn (up to
    ``MAX_RETRIES`` times) before giving up.
    """
    if n_segments < 10:
        raise ValidationError("n_segments must be >= 10")
    if n_ods < 2:
        raise ValidationError("n_ods must be >= 2")
    if level not in CONGESTION_LEVELS:
        raise ValidationError(f"level must be one of {sorted(CONGESTION_LEVELS)}")
    layout = rng_for(seed, "layout")
    n_zones = zones_for(n_ods)
    net = generate_network(n_segments, n_zones, layout)
    od_index = pick_od_pairs(n_zones, n_ods, layout)
    paths = route_od_pairs(net, od_index)
    A = build_assignment_matrix(net, paths)

    sim = sim or SimConfig()
    sim = replace(sim, seed=derive_seed(seed, "sim"), exponent_seed=derive_seed(seed, "exponents"))
    fd = fd or FdParams()
    gt_seed = derive_seed(seed, "gt")
    gt_cfg = replace(sim, seed=gt_seed, replications=gt_replications)

    last = None
    for attempt in range(MAX_RETRIES):
        rng = rng_for(seed, f"x_true/{attempt}")
        raw = rng.lognormal(mean=0.0, sigma=0.5, size=n_ods)
        x_true = scale_demand(net, A, raw, CONGESTION_LEVELS[level], PEAK_LOAD[level])
        try:
            res = simulate(net, paths, x_true, gt_cfg)
        except GridlockError as exc:
            last = exc
            continue
        sc = Scenario(
            net=net,
            paths=paths.with_gt(res.mean_eta_s),
            x_true=x_true,
            x_upper=upper_bounds(x_true),
            sim=sim,
            fd=fd,
            level=level,
            seed=seed,
            gt_seed=gt_seed,
            gt_replications=gt_replications,
        )
        sc.validate()
        return sc
    raise last


def regenerate_ground_truth(sc: Scenario, replications: int | None = None, seed: int | None = None) -> Scenario:
    reps = replications or sc.gt_replications
    gt_seed = sc.gt_seed if seed is None else int(seed)
    res = simulate(sc.net, sc.paths, sc.x_true, replace(sc.sim, seed=gt_seed, replications=reps))
    return replace(sc, paths=sc.paths.with_gt(res.mean_eta_s), gt_seed=gt_seed, gt_replications=reps)
