"""Aggregation of comparison outputs into one summary table."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .compare import COMPARE_FILE, SUMMARY_FILE, ComparisonReport, plot_delta

LEVEL_ORDER = ("low", "medium", "high")


def load_report(directory) -> ComparisonReport:
    """Rebuild a :class:`ComparisonReport` from ``compare.csv`` and ``summary.json``."""
    d = Path(directory)
    with open(d / SUMMARY_FILE) as fh:
        meta = json.load(fh)
    rows = {}
    with open(d / COMPARE_FILE, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["seed"]), []).append(
                (int(row["sim_calls"]), float(row["nrmse_metamodel"]), float(row["nrmse_spsa"]))
            )
    seeds = [int(s) for s in meta["seeds"]]
    budget = int(meta["budget"])
    mm = np.full((len(seeds), budget), np.nan)
    sp = np.full((len(seeds), budget), np.nan)
    for i, s in enumerate(seeds):
        for j, a, b in rows.get(s, []):
            mm[i, j - 1] = a
            sp[i, j - 1] = b
    return ComparisonReport(
        name=meta["name"],
        level=meta["level"],
        budget=budget,
        seeds=seeds,
        nrmse_metamodel=mm,
        nrmse_spsa=sp,
        failures=meta.get("failures", {}),
    )


def find_reports(roots) -> list[Path]:
    found = []
    for root in roots:
        root = Path(root)
        if (root / SUMMARY_FILE).exists():
            found.append(root)
        else:
            found.extend(sorted(p.parent for p in root.rglob(SUMMARY_FILE)))
    return found


def cell_rows(reports):
    """One row per (scenario, seed) cell."""
    out = []
    for rep in reports:
        rel = rep.relative_improvements
        for i, s in enumerate(rep.seeds):
            out.append({
                "scenario": rep.name,
                "level": rep.level,
                "seed": s,
                "nrmse_initial": float(rep.nrmse_metamodel[i, 0]),
                "nrmse_metamodel": float(rep.final_metamodel[i]),
                "nrmse_spsa": float(rep.final_spsa[i]),
                "delta_final": float(rep.delta[i, -1]),
                "relative_improvement": float(rel[i]),
            })
    return out


def level_summary(rows):
    """Mean relative improvement and win count per congestion level and overall."""
    groups = {}
    for r in rows:
        groups.setdefault(r["level"], []).append(r)
    order = [lv for lv in LEVEL_ORDER if lv in groups] + sorted(set(groups) - set(LEVEL_ORDER))
    out = []
    for name, members in [(lv, groups[lv]) for lv in order] + [("all", rows)]:
        rel = np.array([m["relative_improvement"] for m in members])
        rel = rel[~np.isnan(rel)]
        wins = sum(
            1 for m in members
            if not np.isnan(m["nrmse_metamodel"]) and m["nrmse_metamodel"] <= m["nrmse_spsa"]
        )
        out.append({
            "level": name,
            "cells": len(members),
            "metamodel_wins": wins,
            "mean_relative_improvement": float(rel.mean()) if rel.size else float("nan"),
            "max_relative_improvement": float(rel.max()) if rel.size else float("nan"),
        })
    return out


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}" if np.isfinite(v) else str(v)
    return str(v)


def markdown_table(rows, columns) -> str:
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(r[c]) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def write_report(roots, out_dir) -> dict:
    """Aggregate every comparison found under ``roots`` into ``out_dir``.

    Writes ``cells.csv``, ``levels.csv``, ``summary.md`` and one Delta plot
    per congestion level. Returns a dict with the rows and the number of
    reports carrying failures.
    """
    dirs = find_reports(roots)
    if not dirs:
        raise FileNotFoundError("no comparison outputs found")
    reports = [load_report(d) for d in dirs]
    rows = cell_rows(reports)
    levels = level_summary(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for fname, data in (("cells.csv", rows), ("levels.csv", levels)):
        with open(out / fname, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(data[0]))
            w.writeheader()
            for r in data:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    cell_cols = ["scenario", "level", "seed", "nrmse_initial", "nrmse_metamodel",
                 "nrmse_spsa", "relative_improvement"]
    level_cols = ["level", "cells", "metamodel_wins", "mean_relative_improvement",
                  "max_relative_improvement"]
    with open(out / "summary.md", "w") as fh:
        fh.write("# Metamodel vs SPSA\n\n")
        fh.write(markdown_table(levels, level_cols))
        fh.write("\n")
        fh.write(markdown_table(rows, cell_cols))
    for lv in sorted({r.level for r in reports}):
        plot_delta([r for r in reports if r.level == lv], out / f"delta_{lv}.svg", title=lv)
    partial = sum(1 for r in reports if r.failures)
    return {"cells": rows, "levels": levels, "partial": partial}
