"""Writing batch summaries as CSV tables, JSON documents and SVG regret charts."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

CSV_COLUMNS = ["policy", "t", "mean_regret", "ci_low", "ci_high"]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _header_lines(summary) -> list[str]:
    cfg = json.dumps(summary.config, sort_keys=True, separators=(",", ":"))
    return [f"# master_seed: {summary.config.get('master_seed')}",
            f"# n_runs: {summary.n_runs}",
            f"# config: {cfg}"]


def export(summary, fmt: str, path) -> Path:
    """Write ``summary`` as ``csv``, ``json`` or ``svg`` and return the path."""
    path = Path(path)
    writers = {"csv": _write_csv, "json": _write_json, "svg": _write_svg}
    if fmt not in writers:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        writers[fmt](summary, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _write_csv(summary, path):
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(summary):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name in summary.policies:
            mean, ci = summary.mean[name], summary.ci[name]
            for k in range(summary.T):
                m, c = float(mean[k]), float(ci[k])
                w.writerow([name, k + 1, repr(m), repr(m - c), repr(m + c)])


def read_csv(path) -> tuple[dict, dict]:
    """Read a summary CSV back as ({policy: (T, 4) array of t, mean, low, high}, header dict)."""
    header = {}
    rows: dict[str, list] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            header[key] = json.loads(val) if key == "config" else val
        else:
            body.append(line)
    reader = csv.reader(body)
    if next(reader) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected column header")
    for rec in reader:
        rows.setdefault(rec[0], []).append([float(v) for v in rec[1:]])
    return {k: np.array(v) for k, v in rows.items()}, header


def write_runs_csv(summary, path) -> Path:
    """Per-run final regret and switch time of every policy."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(summary):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "policy", "final_regret", "switch_time"])
        for name in summary.policies:
            final = summary.final(name)
            for r in range(summary.n_runs):
                w.writerow([r, name, repr(float(final[r])), int(summary.switch_times[name][r])])
    return path


def _write_json(summary, path):
    path.write_text(json.dumps(summary.to_dict(), indent=1), encoding="utf-8")


def _write_svg(summary, path, width: int = 640, height: int = 420):
    path.write_text(render_svg(summary, width, height), encoding="utf-8")


def render_svg(summary, width: int = 640, height: int = 420, max_points: int = 400) -> str:
    """Line chart of mean cumulative regret with shaded 95% bands, one polyline per policy."""
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    T = summary.T
    step = max(1, T // max_points)
    ts = np.unique(np.r_[np.arange(1, T + 1, step), T])
    ymax = max(float(np.max(summary.mean[n] + summary.ci[n])) for n in summary.policies)
    ymax = ymax if ymax > 0 else 1.0

    def sx(t):
        return left + pw * (t - 1) / max(T - 1, 1)

    def sy(v):
        return top + ph * (1 - v / ymax)

    title = escape(str(summary.config.get("name", "experiment")))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<title>{title}</title>',
             f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>']
    for i, name in enumerate(summary.policies):
        colour = PALETTE[i % len(PALETTE)]
        mean = summary.mean[name][ts - 1]
        ci = summary.ci[name][ts - 1]
        upper = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, mean + ci))
        lower = " ".join(f"{sx(t):.2f},{sy(max(v, 0.0)):.2f}" for t, v in zip(ts[::-1], (mean - ci)[::-1]))
        parts.append(f'<polygon points="{upper} {lower}" fill="{colour}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, mean))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{colour}" stroke-width="1.5">'
                     f'<title>{escape(name)}</title></polyline>')
        ly = top + 15 + 18 * i
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                     f'stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    for frac in (0, 0.25, 0.5, 0.75, 1.0):
        v = ymax * frac
        y = sy(v)
        parts.append(f'<text x="{left - 6}" y="{y + 4:.2f}" font-size="10" text-anchor="end">{v:.3g}</text>')
        t = 1 + frac * (T - 1)
        parts.append(f'<text x="{sx(t):.2f}" y="{top + ph + 15}" font-size="10" '
                     f'text-anchor="middle">{int(round(t))}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">t</text>')
    parts.append(f'<text x="15" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 15 {top + ph / 2})">cumulative regret</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
