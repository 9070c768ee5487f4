"""Benchmark harness: per-mask-mode inference, aggregation, report rendering.

The report path writes three artifacts next to each other: the JSON report,
a tab-separated per-image metrics table, and matplotlib summary figures.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch
from PIL import Image

from .data import DatasetManifest, NoBoxesError, build_mask, load_image, rescale_boxes, tokenize
from .generator import composite_output
from .metrics import METRIC_KEYS, MetricsReport, all_metrics, to_unit
from .model import TextGuidedInpainter


def benchmark(
    model: TextGuidedInpainter,
    manifest: DatasetManifest,
    mask_modes: list[str],
    area_fraction: float = 0.5,
) -> MetricsReport:
    """Run deterministic inference per mask mode and aggregate all metrics.

    Object mode skips samples without usable boxes (the skip is visible in
    the per-mode n_images count).
    """
    if not manifest.samples:
        raise ValueError("validation manifest is empty")
    model.eval()
    size = model.config.image_size
    report = MetricsReport(n_images=len(manifest.samples), image_size=size)
    for mode in mask_modes:
        sums = {"raw": {k: 0.0 for k in METRIC_KEYS}, "composited": {k: 0.0 for k in METRIC_KEYS}}
        n = 0
        for s in manifest.samples:
            image = load_image(s.image_path, target=size)
            if mode == "object":
                with Image.open(s.image_path) as im:
                    w0, h0 = im.size
                boxes = rescale_boxes(s.boxes, w0, h0, size)
                try:
                    mask = build_mask("object", size, boxes)
                except NoBoxesError:
                    warnings.warn(f"{s.image_path}: no usable boxes, skipped in object mode",
                                  stacklevel=2)
                    continue
            else:
                mask = build_mask("center", size, area_fraction=area_fraction)
            tc = tokenize(s.captions[0], manifest.vocab)
            i_m = (image * mask).unsqueeze(0)
            i_g = model.infer(
                i_m,
                mask.unsqueeze(0),
                tc.ids[: tc.length].unsqueeze(0),
                torch.tensor([tc.length]),
            )[0]
            hard = composite_output(i_g, image * mask, mask, mode="hard")
            real_u = to_unit(image)
            row = {"image": s.image_path, "mode": mode}
            for variant, out in (("raw", i_g), ("composited", hard)):
                m = all_metrics(real_u, to_unit(out))
                for k in METRIC_KEYS:
                    sums[variant][k] += m[k]
                    row[f"{variant}_{k}"] = m[k]
            report.per_image.append(row)
            n += 1
        if n == 0:
            raise ValueError(f"no samples evaluable under mask mode {mode!r}")
        report.modes[mode] = {
            "raw": {k: sums["raw"][k] / n for k in METRIC_KEYS},
            "composited": {k: sums["composited"][k] / n for k in METRIC_KEYS},
            "n_images": n,
        }
    return report.finish()


def write_report(report: MetricsReport, report_path: str | Path) -> dict:
    """Write report JSON plus the TSV table and figures alongside it."""
    report_path = Path(report_path)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json() + "\n")
    tsv_path = report_path.with_suffix(".tsv")
    write_per_image_tsv(report, tsv_path)
    fig_path = report_path.with_name(report_path.stem + "_metrics.png")
    render_metrics_figure(report, fig_path)
    return {"report": str(report_path), "tsv": str(tsv_path), "figure": str(fig_path)}


def write_per_image_tsv(report: MetricsReport, path: str | Path) -> None:
    cols = ["image", "mode"]
    for variant in ("raw", "composited"):
        cols += [f"{variant}_{k}" for k in METRIC_KEYS]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols, delimiter="\t")
        w.writeheader()
        for row in report.per_image:
            w.writerow({c: row.get(c, "") for c in cols})


def render_metrics_figure(report: MetricsReport, path: str | Path) -> None:
    """Grouped bars of each metric per mask mode, raw vs composited."""
    modes = list(report.modes)
    fig, axes = plt.subplots(1, len(METRIC_KEYS), figsize=(4 * len(METRIC_KEYS), 3.2))
    for ax, key in zip(axes, METRIC_KEYS):
        x = range(len(modes))
        raw = [report.modes[m]["raw"][key] for m in modes]
        comp = [report.modes[m]["composited"][key] for m in modes]
        ax.bar([i - 0.18 for i in x], raw, width=0.36, label="raw")
        ax.bar([i + 0.18 for i in x], comp, width=0.36, label="composited")
        ax.set_xticks(list(x))
        ax.set_xticklabels(modes)
        ax.set_title(key)
        if report.delta:
            ax.set_xlabel(f"raw delta = {report.delta['raw'][key]:.3f}")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_loss_curves(log_path: str | Path, out_path: str | Path) -> None:
    """Plot the logged loss components over training steps."""
    steps, series = [], {}
    with open(log_path) as f:
        for line in f:
            rec = json.loads(line)
            steps.append(rec["step"])
            for k, v in rec.items():
                if k != "step":
                    series.setdefault(k, []).append(v)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 3.6))
    ax1.plot(steps, series["total"])
    ax1.set_title("total loss")
    ax1.set_xlabel("step")
    for key in ("l1", "feat", "adv", "kl_inpaint", "kl_aux"):
        if key in series:
            ax2.plot(steps, series[key], label=key)
    ax2.set_title("components")
    ax2.set_xlabel("step")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
