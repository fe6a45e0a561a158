"""Serialisation of evaluation reports to JSON, CSV and SVG radar charts."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Mapping
from xml.sax.saxutils import escape

from .evaluation import EXPLANATION_METRICS, UTILITY_METRICS

FIGURES = {
    "utility": (*UTILITY_METRICS, "PF_gender", "PF_age"),
    "explanation": EXPLANATION_METRICS,
}


def clean(obj):
    """Recursively replace NaN/inf with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, Mapping):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(json.dumps(clean(config), sort_keys=True).encode()).hexdigest()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def aggregate_rows(report: Mapping):
    for method, body in sorted(report["methods"].items()):
        for k, agg in sorted(body["aggregate"].items(), key=lambda kv: int(kv[0])):
            for metric, value in sorted(agg.items()):
                yield method, int(k), metric, value


def fairness_rows(report: Mapping):
    for method, body in sorted(report["methods"].items()):
        for k, dims in sorted(body["consumer_fairness"].items(), key=lambda kv: int(kv[0])):
            for dim, by_metric in sorted(dims.items()):
                for metric, rep in sorted(by_metric.items()):
                    test = rep.get("test") or {}
                    yield (method, int(k), "consumer", dim, metric, rep["delta"],
                           test.get("kind"), test.get("p_value"))
        for k, dims in sorted(body["provider_fairness"].items(), key=lambda kv: int(kv[0])):
            for dim, rep in sorted(dims.items()):
                yield method, int(k), "provider", dim, "EXP", rep["delta"], None, None


def fidelity_rows(report: Mapping):
    for method, body in sorted(report["methods"].items()):
        for k, v in sorted(body["fidelity_sweep"].items(), key=lambda kv: int(kv[0])):
            yield method, int(k), v


def per_user_rows(report: Mapping):
    for method, body in sorted(report["methods"].items()):
        for k, by_metric in sorted(body["per_user"].items(), key=lambda kv: int(kv[0])):
            users = sorted(next(iter(by_metric.values()), {}))
            for user in users:
                yield (method, int(k), user, *(by_metric[m][user] for m in sorted(by_metric)))


def radar_svg(title: str, series: Mapping[str, Mapping[str, float]], axes: Iterable[str],
              size: int = 420) -> str:
    """Radar chart with one polygon per series; axes in sorted order, values in [0, 1]."""
    axes = sorted(axes)
    cx = cy = size / 2
    radius = size / 2 - 60
    palette = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")
    n = len(axes)

    def point(i: int, r: float) -> tuple[float, float]:
        ang = -math.pi / 2 + 2 * math.pi * i / n
        return round(cx + r * math.cos(ang), 2), round(cy + r * math.sin(ang), 2)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20 * len(series)}" '
           f'viewBox="0 0 {size} {size + 20 * len(series)}">',
           f'<text x="{cx}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">'
           f'{escape(title)}</text>']
    for ring in (0.25, 0.5, 0.75, 1.0):
        pts = " ".join(f"{x},{y}" for x, y in (point(i, radius * ring) for i in range(n)))
        out.append(f'<polygon points="{pts}" fill="none" stroke="#cccccc"/>')
    for i, name in enumerate(axes):
        x, y = point(i, radius)
        lx, ly = point(i, radius + 22)
        out.append(f'<line x1="{cx}" y1="{cy}" x2="{x}" y2="{y}" stroke="#cccccc"/>')
        out.append(f'<text x="{lx}" y="{ly}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{escape(name)}</text>')
    for j, (label, values) in enumerate(sorted(series.items())):
        colour = palette[j % len(palette)]
        pts = []
        for i, name in enumerate(axes):
            v = values.get(name)
            r = 0.0 if v is None or not math.isfinite(v) else min(max(v, 0.0), 1.0)
            pts.append(point(i, radius * r))
        out.append(f'<polygon points="{" ".join(f"{x},{y}" for x, y in pts)}" fill="{colour}" '
                   f'fill-opacity="0.15" stroke="{colour}" stroke-width="2">'
                   f'<title>{escape(label)}</title></polygon>')
        for (x, y), name in zip(pts, axes):
            out.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="{colour}">'
                       f'<title>{escape(label)} {escape(name)}={_fmt(values.get(name))}</title></circle>')
        ly = size + 14 + 20 * j
        out.append(f'<rect x="20" y="{ly - 10}" width="12" height="12" fill="{colour}"/>')
        out.append(f'<text x="38" y="{ly}" font-family="sans-serif" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def figures(report: Mapping) -> dict[str, str]:
    """One chart per perspective at the first cutoff."""
    k = str(report["cutoffs"][0])
    methods = report["methods"]
    out = {}
    for name, axes in FIGURES.items():
        series = {m: {a: body["aggregate"][k].get(a) for a in axes} for m, body in methods.items()}
        out[f"radar_{name}.svg"] = radar_svg(f"{name} @{k}", series, axes)
    for dim in ("gender", "age"):
        utility, expl = {}, {}
        for m, body in methods.items():
            gaps = body["consumer_fairness"][k][dim]
            utility[m] = {a: gaps[a]["delta"] for a in UTILITY_METRICS}
            utility[m]["EXP"] = body["provider_fairness"][k][dim]["delta"]
            expl[m] = {a: gaps[a]["delta"] for a in EXPLANATION_METRICS}
        out[f"radar_fairness_utility_{dim}.svg"] = radar_svg(
            f"{dim} gaps (utility, beyond, exposure) @{k}", utility, (*UTILITY_METRICS, "EXP"))
        out[f"radar_fairness_explanation_{dim}.svg"] = radar_svg(
            f"{dim} gaps (explanation quality) @{k}", expl, EXPLANATION_METRICS)
    return out


def write_report(report: Mapping, out_dir: str | os.PathLike, formats: Iterable[str] = ("json", "csv")) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    formats = set(formats)
    if "json" in formats:
        p = out / "report.json"
        p.write_text(dumps(report), encoding="utf-8")
        written.append(p)
    if "csv" in formats:
        tables = {
            "aggregate.csv": (("method", "k", "metric", "value"), aggregate_rows(report)),
            "fairness.csv": (("method", "k", "side", "dimension", "metric", "delta", "test", "p_value"),
                             fairness_rows(report)),
            "fidelity.csv": (("method", "k", "FID"), fidelity_rows(report)),
        }
        first = next(iter(report["methods"].values()), None)
        if first is not None:
            metric_names = sorted(next(iter(first["per_user"].values())))
            tables["per_user.csv"] = (("method", "k", "user", *metric_names), per_user_rows(report))
        for name, (header, rows) in tables.items():
            p = out / name
            p.write_text(_csv_text(header, rows), encoding="utf-8")
            written.append(p)
    if "svg" in formats:
        for name, text in figures(report).items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            written.append(p)
    return written


def compare_table(result: Mapping) -> str:
    """Fixed-width text rendering; p-values below alpha are starred."""
    tests = result["tests"]
    lines = [f"{result['classes'][0]} vs {result['classes'][1]} (Welch t-test, two-sided)"]
    lines.append("  ".join(f"{m:>8}" for m in tests))
    cells = []
    for m, t in tests.items():
        if t is None:
            cells.append(f"{'absent':>8}")
        else:
            star = "*" if t["significant"] else " "
            cells.append(f"{t['p_value']:>7.3f}{star}")
    lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"
