"""Metric tables (CSV and text), complex heatmaps and summary figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import hsv_to_rgb  # noqa: E402

from . import __version__  # noqa: E402
from .evaluation import MetricsRecord  # noqa: E402
from .models import MODEL_NAMES  # noqa: E402

CSV_FIELDS = ["dataset", "family", "model", "p_mean", "p_std", "ls_ratio_pct", "ls_overflow_flag",
              "err_mean", "err_std", "tau", "config_hash"]
MODEL_LABELS = {"linear": "Linear", "cnn": "CNN", "fcnn": "FCNN", "attention": "Self-attention only",
                "attention_fcnn": "Self-attention FCNN"}
FAMILY_LABELS = {"forward": "forward TMs", "roundtrip": "round-trip TMs", "physical": "physical TMs"}


def complex_to_rgb(a) -> np.ndarray:
    """Hue from phase (-pi..pi around the wheel), value from |a| / max|a|."""
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot render a non-finite matrix")
    mag = np.abs(a)
    peak = mag.max() if mag.size else 0.0
    value = mag / peak if peak > 0 else np.zeros_like(mag)
    hue = (np.angle(a) + np.pi) / (2 * np.pi) % 1.0
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    return hsv_to_rgb(hsv)


def render_heatmap(t, path, title=None, stamp=None) -> Path:
    """Write a complex-colour heatmap; the format follows the suffix (SVG by default)."""
    return render_heatmaps([t], path, titles=[title] if title else None, stamp=stamp)


def render_heatmaps(mats, path, titles=None, stamp=None) -> Path:
    """Side-by-side heatmaps; ``stamp`` goes into the SVG metadata."""
    path = Path(path)
    if not path.suffix:
        path = path.with_suffix(".svg")
    fig, axes = plt.subplots(1, len(mats), figsize=(3.2 * len(mats), 3.2), squeeze=False)
    for i, (ax, m) in enumerate(zip(axes[0], mats)):
        data = m.data if hasattr(m, "data") else m
        ax.imshow(complex_to_rgb(data), interpolation="nearest")
        ax.set_xticks([])
        ax.set_yticks([])
        if titles:
            ax.set_title(titles[i], fontsize=10)
    fig.tight_layout()
    _save(fig, path, stamp)
    return path


def _save(fig, path, stamp=None):
    desc = stamp or f"fibretm {__version__}"
    fig.savefig(path, metadata={"Description": desc} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path


def _fmt_pm(mean, std, digits):
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def record_to_row(r: MetricsRecord) -> dict:
    return {
        "dataset": r.dataset, "family": r.family, "model": r.model,
        "p_mean": repr(float(r.p_mean)), "p_std": repr(float(r.p_std)),
        "ls_ratio_pct": "" if r.ls_ratio_pct is None else repr(float(r.ls_ratio_pct)),
        "ls_overflow_flag": int(bool(r.ls_overflow)),
        "err_mean": repr(float(r.err_mean)), "err_std": repr(float(r.err_std)),
        "tau": repr(float(r.tau)), "config_hash": r.config_hash,
    }


def row_to_record(row: dict) -> MetricsRecord:
    return MetricsRecord(
        dataset=row["dataset"], family=row["family"], model=row["model"],
        p_mean=float(row["p_mean"]), p_std=float(row["p_std"]),
        ls_ratio_pct=float(row["ls_ratio_pct"]) if row["ls_ratio_pct"] else None,
        ls_overflow=bool(int(row["ls_overflow_flag"])),
        err_mean=float(row["err_mean"]), err_std=float(row["err_std"]),
        tau=float(row["tau"]), config_hash=row["config_hash"])


def _header(records) -> str:
    hashes = ",".join(dict.fromkeys(r.config_hash for r in records if r.config_hash))
    return f"# fibretm {__version__}" + (f" config_hash={hashes}" if hashes else "")


def records_to_csv(records) -> str:
    records = list(records)
    buf = io.StringIO()
    buf.write(_header(records) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(record_to_row(r))
    return buf.getvalue()


def read_records_csv(text_or_path) -> list[MetricsRecord]:
    text = text_or_path
    if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and "\n" not in text_or_path):
        text = Path(text_or_path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return [row_to_record(row) for row in csv.DictReader(lines)]


def _ordered(values, preferred):
    known = [v for v in preferred if v in values]
    return known + sorted(v for v in values if v not in preferred)


def report_table(records) -> tuple[str, str]:
    """(CSV text, aligned text table with one row per dataset x metric and one column per model)."""
    records = list(records)
    if not records:
        raise ValueError("report needs at least one record")
    models = _ordered({r.model for r in records}, MODEL_NAMES)
    datasets = list(dict.fromkeys(r.dataset for r in records))
    cell = {(r.dataset, r.model): r for r in records}
    header = ["dataset", "metric"] + [MODEL_LABELS.get(m, m) for m in models]
    rows = []
    for d in datasets:
        fam = next(r.family for r in records if r.dataset == d)
        label = f"{d} ({FAMILY_LABELS.get(fam, fam)})"
        for metric in ("p", "LS ratio", "mean error"):
            row = [label, metric]
            for m in models:
                r = cell.get((d, m))
                if r is None:
                    row.append("")
                elif metric == "p":
                    row.append(_fmt_pm(r.p_mean, r.p_std, 3))
                elif metric == "LS ratio":
                    if r.ls_ratio_pct is None:
                        row.append("NA")
                    else:
                        row.append((">" if r.ls_overflow else "") + f"{r.ls_ratio_pct:.2f}%")
                else:
                    row.append(_fmt_pm(r.err_mean, r.err_std, 2))
            rows.append(row)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = "+".join("-" * (w + 2) for w in widths)
    out = [_header(records), line,
           " | ".join(h.ljust(w) for h, w in zip(header, widths)), line]
    out += [" | ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in rows]
    out.append(line)
    return records_to_csv(records), "\n".join(out) + "\n"


def plot_summary(records, path) -> Path:
    """Grouped bars of mean p (with std) and mean error per dataset and model."""
    records = list(records)
    models = _ordered({r.model for r in records}, MODEL_NAMES)
    datasets = list(dict.fromkeys(r.dataset for r in records))
    cell = {(r.dataset, r.model): r for r in records}
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8))
    width = 0.8 / max(1, len(models))
    x = np.arange(len(datasets))
    for j, m in enumerate(models):
        for ax, key in zip(axes, ("p", "err")):
            vals = [getattr(cell[(d, m)], f"{key}_mean") if (d, m) in cell else np.nan for d in datasets]
            errs = [getattr(cell[(d, m)], f"{key}_std") if (d, m) in cell else 0 for d in datasets]
            ax.bar(x + (j - (len(models) - 1) / 2) * width, vals, width, yerr=errs, capsize=2,
                   label=MODEL_LABELS.get(m, m))
    for ax, lab in zip(axes, ("participation ratio p", "relative reconstruction error")):
        ax.set_xticks(x)
        ax.set_xticklabels(datasets)
        ax.set_ylabel(lab)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, Path(path), _header(records).lstrip("# "))


def write_report(records, out_prefix) -> dict[str, Path]:
    """Write ``<prefix>.csv``, ``<prefix>.txt`` and ``<prefix>.svg``."""
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_text, table = report_table(records)
    paths = {"csv": out_prefix.with_suffix(".csv"), "table": out_prefix.with_suffix(".txt"),
             "figure": out_prefix.with_suffix(".svg")}
    paths["csv"].write_text(csv_text, encoding="utf-8")
    paths["table"].write_text(table, encoding="utf-8")
    plot_summary(records, paths["figure"])
    return paths
