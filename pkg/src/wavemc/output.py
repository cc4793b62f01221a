"""Trajectory and report files.

Trajectories are CSV with floats printed at 17 significant digits, which
round-trips float64 exactly, so identical runs produce byte-identical files.
Every CSV gets a ``<name>.meta.json`` sidecar holding the config hash, the
seed, and run-level diagnostics.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from wavemc.engine import CompareReport, ErrorReport, TrajectoryRecord


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_trajectory(rec: TrajectoryRecord, path) -> None:
    """One row per recorded time: t, the observables, the ensemble
    diagnostics when present, then one measurement-record column per channel."""
    if rec.n_records == 0:
        raise ValueError("empty trajectory record")
    path = Path(path)
    obs_names = list(rec.observables)
    n_meas = rec.alphas.shape[1]

    header = ["t", *obs_names]
    if rec.n_eff is not None:
        header += ["n_eff", "p_drop_step", "p_drop_max"]
    header += [f"alpha_{j}" for j in range(n_meas)]

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(rec.n_records):
            row = [_fmt(rec.times[i])]
            row += [_fmt(rec.observables[name][i]) for name in obs_names]
            if rec.n_eff is not None:
                row += [_fmt(rec.n_eff[i]), _fmt(rec.p_drop_step[i]), _fmt(rec.p_drop_max[i])]
            row += [_fmt(rec.alphas[i, j]) for j in range(n_meas)]
            writer.writerow(row)

    meta = {
        "config_hash": rec.config_hash,
        "seed": rec.seed,
        "mode": rec.mode,
        "n_records": rec.n_records,
    }
    if rec.min_n_eff is not None:
        meta["min_n_eff"] = rec.min_n_eff
        meta["max_p_drop"] = rec.max_p_drop
    _write_meta(path, meta)


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Columns of a trajectory CSV, by header name."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row and row[0] != "divergence"]
    data = np.array([[float(cell) for cell in row] for row in rows])
    return {name: data[:, i] for i, name in enumerate(header)}


def write_comparison(report: CompareReport, path) -> None:
    """Paired columns <obs>_mc / <obs>_sme per observable, one divergence
    summary row at the end, and the refined pair when present."""
    path = Path(path)
    obs_names = list(report.mc.observables)

    def pair_columns(suffix: str) -> list[str]:
        cols = []
        for name in obs_names:
            cols += [f"{name}_mc{suffix}", f"{name}_sme{suffix}"]
        return cols

    refined = report.refined_mc is not None
    header = ["t", *pair_columns("")]
    if refined:
        header += pair_columns("_half_dt")

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(report.mc.n_records):
            row = [_fmt(report.mc.times[i])]
            for name in obs_names:
                row += [_fmt(report.mc.observables[name][i]), _fmt(report.sme.observables[name][i])]
            if refined:
                for name in obs_names:
                    row += [
                        _fmt(report.refined_mc.observables[name][i]),
                        _fmt(report.refined_sme.observables[name][i]),
                    ]
            writer.writerow(row)
        summary = ["divergence"]
        for name in obs_names:
            summary += [_fmt(report.divergence[name]), ""]
        if refined:
            for name in obs_names:
                summary += [_fmt(report.refined_divergence[name]), ""]
        writer.writerow(summary)

    meta = {
        "config_hash": report.mc.config_hash,
        "seed": report.mc.seed,
        "mode": "compare",
        "divergence": report.divergence,
        "mc_diagnostics": {"min_n_eff": report.mc.min_n_eff, "max_p_drop": report.mc.max_p_drop},
    }
    if refined:
        meta["refined_divergence"] = report.refined_divergence
    _write_meta(path, meta)


def write_error_report(report: ErrorReport, path) -> None:
    """One column per (observable, replicate) plus a sup-spread summary row."""
    path = Path(path)
    recs = report.records
    obs_names = list(recs[0].observables)
    header = ["t"] + [f"{name}_rep{r}" for name in obs_names for r in range(len(recs))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(recs[0].n_records):
            row = [_fmt(recs[0].times[i])]
            for name in obs_names:
                row += [_fmt(rec.observables[name][i]) for rec in recs]
            writer.writerow(row)
        summary = ["spread"]
        for name in obs_names:
            summary += [_fmt(report.spread[name])] + [""] * (len(recs) - 1)
        writer.writerow(summary)
    _write_meta(
        path,
        {
            "config_hash": recs[0].config_hash,
            "seed": recs[0].seed,
            "mode": "error-estimate",
            "replicates": len(recs),
            "spread": report.spread,
        },
    )


def write_plot_data(rec: TrajectoryRecord, path, max_points: int = 2000) -> None:
    """Downsampled t/observable series for external plotting."""
    path = Path(path)
    stride = max(1, -(-rec.n_records // max_points))
    idx = list(range(0, rec.n_records, stride))
    if idx[-1] != rec.n_records - 1:
        idx.append(rec.n_records - 1)
    obs_names = list(rec.observables)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *obs_names])
        for i in idx:
            writer.writerow([_fmt(rec.times[i])] + [_fmt(rec.observables[name][i]) for name in obs_names])


def _write_meta(path: Path, meta: dict) -> None:
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
