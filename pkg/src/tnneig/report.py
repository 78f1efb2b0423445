"""Report emission: machine-readable results, a delimited table, and figures.

For a finished run this writes into the output directory:

* results.json  - everything (schema version 1); timestamps live only under
                  the "timing" key so the rest is byte-identical across
                  reruns with the same seed,
* results.tsv   - one tab-separated row per eigenpair (no timestamps),
* table.txt     - the human-readable table, also printed to stdout,
* loss_history.png, eigenvalue_errors.png - matplotlib renderings.
"""
from __future__ import annotations

import json
import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .train import TrainReport

RESULTS_VERSION = 1
_TSV_COLUMNS = ("n", "state", "exact_E", "approx_E", "err_E", "err_L2", "err_H1")


def _fmt(value, missing=""):
    if value is None:
        return missing
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_table(value):
    if value is None:
        return "—"
    if isinstance(value, float):
        return f"{value:.9e}" if abs(value) < 1e-3 else f"{value:.15g}"
    return str(value)


def render_table(report: TrainReport) -> str:
    headers = ("n", "state", "exact E_n", "approx E_n", "err_E", "err_L2", "err_H1")
    body = []
    for row in report.rows:
        body.append((str(row["n"]), row["state"] or "—",
                     _fmt_table(row["exact"]), _fmt_table(row["approx"]),
                     _fmt_table(row["err_e"]), _fmt_table(row["err_l2"]),
                     _fmt_table(row["err_h1"])))
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def _write_figures(report: TrainReport, out_dir: str):
    paths = {}
    if report.loss_history:
        steps = [s for s, _ in report.loss_history]
        values = [v for _, v in report.loss_history]
        best = min(values)
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.4))
        axes[0].plot(steps, values, lw=0.9)
        axes[0].set_xlabel("step")
        axes[0].set_ylabel("subspace trace loss")
        gaps = [max(v - best, 0.0) for v in values]
        if any(g > 0 for g in gaps):
            axes[1].semilogy(steps, [g if g > 0 else float("nan") for g in gaps],
                             lw=0.9)
        axes[1].set_xlabel("step")
        axes[1].set_ylabel("loss - best")
        fig.tight_layout()
        path = os.path.join(out_dir, "loss_history.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths["loss_history"] = path
    errs = [(row["n"], row["err_e"]) for row in report.rows
            if row["err_e"] is not None and row["err_e"] > 0]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    if errs:
        ax.bar([n for n, _ in errs], [e for _, e in errs], color="#36618e")
        ax.set_yscale("log")
        ax.set_ylabel("relative eigenvalue error")
    else:
        ax.plot(range(len(report.ritz_values)), report.ritz_values, "o")
        ax.set_ylabel("Ritz value")
    ax.set_xlabel("state index n")
    fig.tight_layout()
    path = os.path.join(out_dir, "eigenvalue_errors.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths["eigenvalue_errors"] = path
    return paths


def report_emit(report: TrainReport, out_dir: str, quiet: bool = False) -> dict:
    """Write all artifacts; returns a dict of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "format_version": RESULTS_VERSION,
        "config": report.config,
        "final_loss": report.final_loss,
        "ritz_values": report.ritz_values,
        "rows": report.rows,
        "loss_history": report.loss_history,
        "jitter_events": report.jitter_events,
        "lbfgs_status": report.lbfgs_status,
        "op_counts": report.op_counts,
        "checkpoint": os.path.basename(report.checkpoint_path or ""),
        "timing": {
            "wall_clock_s": report.wall_clock,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
    }
    paths = {}
    json_path = os.path.join(out_dir, "results.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["json"] = json_path
    tsv_path = os.path.join(out_dir, "results.tsv")
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_TSV_COLUMNS) + "\n")
        for row in report.rows:
            fh.write("\t".join((
                str(row["n"]), row["state"], _fmt(row["exact"]),
                _fmt(row["approx"]), _fmt(row["err_e"]),
                _fmt(row["err_l2"]), _fmt(row["err_h1"]))) + "\n")
    paths["tsv"] = tsv_path
    table = render_table(report)
    table_path = os.path.join(out_dir, "table.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    paths["table"] = table_path
    paths.update(_write_figures(report, out_dir))
    if not quiet:
        print(table)
    return paths
