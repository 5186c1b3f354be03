"""Report rendering: delimited files plus matplotlib figures.

Every report path writes the raw numbers as CSV/JSON-lines next to a PNG of
the same data, so results stay grep-able and plottable.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_loss_report(history, out_dir) -> list[str]:
    """Loss trace of a training run: loss_history.csv + loss_curve.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "loss_history.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "loss", "backbone", "contrastive"])
        for rec in history:
            writer.writerow([rec.step, rec.epoch, rec.loss, rec.backbone, rec.contrastive])

    fig, ax = plt.subplots(figsize=(7, 4.5))
    steps = [rec.step for rec in history]
    values = [rec.backbone for rec in history]
    ax.plot(steps, values, label="backbone", lw=1.2)
    if any(rec.contrastive for rec in history):
        values += [rec.contrastive for rec in history] + [rec.loss for rec in history]
        ax.plot(steps, [rec.contrastive for rec in history], label="contrastive", lw=1.2)
        ax.plot(steps, [rec.loss for rec in history], label="total", lw=1.2, ls="--")
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("summed batch loss")
    if values and min(values) > 0:
        ax.set_yscale("log")  # the predictor-based loss can go negative
    ax.legend()
    fig.tight_layout()
    fig_path = out / "loss_curve.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [str(csv_path), str(fig_path)]


def write_classification_report(report, per_class: dict[str, float], out_dir) -> list[str]:
    """Per-class error table + bar chart next to the JSON-lines report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl_path = out / "report.jsonl"
    with open(jsonl_path, "a") as fh:
        fh.write(report.to_json() + "\n")

    csv_path = out / "per_class_error.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "error_rate"])
        for name, err in per_class.items():
            writer.writerow([name, err])

    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(per_class)), 4))
    names = list(per_class)
    ax.bar(range(len(names)), [per_class[n] for n in names], color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("test error rate")
    ax.axhline(report.value, color="#a84848", ls="--", lw=1,
               label=f"overall {report.value:.3f}")
    ax.legend()
    fig.tight_layout()
    fig_path = out / "per_class_error.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [str(jsonl_path), str(csv_path), str(fig_path)]


def write_clustering_report(report, assignment: np.ndarray, out_dir) -> list[str]:
    """Cluster size table + histogram next to the JSON-lines report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl_path = out / "report.jsonl"
    with open(jsonl_path, "a") as fh:
        fh.write(report.to_json() + "\n")

    ids, sizes = np.unique(assignment, return_counts=True)
    csv_path = out / "cluster_sizes.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "size"])
        for cid, size in zip(ids, sizes):
            writer.writerow([int(cid), int(size)])

    fig, ax = plt.subplots(figsize=(max(5, 0.5 * ids.size), 4))
    ax.bar(ids, sizes, color="#4878a8")
    ax.set_xlabel("cluster")
    ax.set_ylabel("documents")
    ax.set_title(f"NMI = {report.value:.3f}")
    fig.tight_layout()
    fig_path = out / "cluster_sizes.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [str(jsonl_path), str(csv_path), str(fig_path)]
