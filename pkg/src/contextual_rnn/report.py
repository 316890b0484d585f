"""Figure bundle: one backing CSV plus one SVG per figure.

Each ``render_*`` function reads only its backing CSV, so re-rendering from
the same CSV reproduces the SVG byte for byte.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from pathlib import Path

from .svg import PALETTE, Plot, histogram_bars


def _rows(path: Path) -> list[dict]:
    from .pipeline import read_csv
    return read_csv(path)


def _group(rows, key):
    out: OrderedDict = OrderedDict()
    for r in rows:
        out.setdefault(r[key], []).append(r)
    return out


def render_state_space(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("State space (top two principal components)", "PC 1", "PC 2")
    traj = [r for r in rows if r["kind"] == "trajectory"]
    for i, (_, rs) in enumerate(_group(traj, "example").items()):
        plot.line([float(r["pc1"]) for r in rs], [float(r["pc2"]) for r in rs], color="#c7c7c7")
    att = [r for r in rows if r["kind"] == "attractor"]
    plot.scatter([float(r["pc1"]) for r in att], [float(r["pc2"]) for r in att], "slow points", PALETTE[1])
    return plot.to_svg()


def render_logit_traces(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Logit traces", "token", "logit")
    for i, (ex, rs) in enumerate(_group(rows, "example").items()):
        c = PALETTE[i % len(PALETTE)]
        steps = [int(r["step"]) for r in rs]
        plot.line(steps, [float(r["logit"]) for r in rs], f"example {ex}", c)
        plot.line(steps, [float(r["target"]) for r in rs], "", "#999999")
    return plot.to_svg()


def render_modifier_histogram(csv_path: Path) -> str:
    rows = _rows(csv_path)
    edges = [float(rows[0]["bin_lo"])] + [float(r["bin_hi"]) for r in rows]
    plot = Plot("Input-Jacobian change per word", "||dJ_inp||_F", "words", xlog=True)
    return histogram_bars(plot, [int(r["count"]) for r in rows], edges).to_svg()


def render_barcode(csv_path: Path, context: str) -> str:
    rows = _rows(csv_path)
    plot = Plot(f"Barcode after '{context}'", "probe word", "w . dJ_inp . x")
    xs = list(range(len(rows)))
    plot.bars(xs, [float(r["value"]) for r in rows])
    plot.xtick_labels = [(x, r["probe"]) for x, r in zip(xs, rows)]
    plot.hline(0.0)
    return plot.to_svg()


def render_impulse(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Impulse response: distance from the attractor", "pad steps after the word", "distance")
    for i, (_, rs) in enumerate(_group(rows, "word").items()):
        plot.line([int(r["step"]) for r in rs], [float(r["distance"]) for r in rs], rs[0]["word"], PALETTE[i])
    return plot.to_svg()


def render_subspace(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Word deflections in the modifier subspace", "m1", "m2")
    for i, r in enumerate(rows):
        plot.scatter([float(r["m1"])], [float(r.get("m2", 0.0) or 0.0)], r["word"], PALETTE[i % len(PALETTE)])
    return plot.to_svg()


def render_timescales(csv_path: Path) -> str:
    rows = _rows(csv_path)
    ts = [float(r["timescale"]) for r in rows]
    finite = [t for t in ts if math.isfinite(t) and t > 0]
    plot = Plot("Eigenmode timescales at the reference point", "timescale (tokens)", "modes", xlog=True)
    if not finite:
        return plot.to_svg()
    lo, hi = math.log10(min(finite)), math.log10(max(finite))
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    nb = 12
    edges = [10 ** (lo + (hi - lo) * k / nb) for k in range(nb + 1)]
    counts = [0] * nb
    for t in finite:
        k = min(int((math.log10(t) - lo) / (hi - lo) * nb), nb - 1)
        counts[k] += 1
    return histogram_bars(plot, counts, edges).to_svg()


def render_architectures(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Test accuracy by model", "", "accuracy")
    xs = list(range(len(rows)))
    plot.bars(xs, [float(r["test_accuracy"]) for r in rows])
    plot.xtick_labels = [(x, r["variant"]) for x, r in zip(xs, rows)]
    return plot.to_svg()


def render_bilinear(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Bilinear model: variance explained", "P", "variance explained")
    plot.line([int(r["P"]) for r in rows], [float(r["variance_explained"]) for r in rows])
    plot.scatter([int(r["P"]) for r in rows], [float(r["variance_explained"]) for r in rows])
    return plot.to_svg()


def render_training(csv_path: Path) -> str:
    rows = _rows(csv_path)
    plot = Plot("Training curve", "epoch", "validation loss")
    plot.line([int(r["epoch"]) for r in rows], [float(r["val_loss"]) for r in rows])
    return plot.to_svg()


FIGURES = OrderedDict([
    ("training", ("train/history.csv", render_training)),
    ("state_space", ("analysis/state_space.csv", render_state_space)),
    ("logit_traces", ("analysis/logit_traces.csv", render_logit_traces)),
    ("modifier_histogram", ("analysis/modifier_histogram.csv", render_modifier_histogram)),
    ("impulse_response", ("analysis/impulse.csv", render_impulse)),
    ("subspace", ("analysis/subspace_projections.csv", render_subspace)),
    ("timescales", ("analysis/eigen_timescales.csv", render_timescales)),
    ("bilinear_variance", ("bilinear/variance.csv", render_bilinear)),
    ("architectures", ("baseline/accuracy.csv", render_architectures)),
])


def build_figures(run) -> list[Path]:
    fig_dir = run.path("figures")
    fig_dir.mkdir(parents=True, exist_ok=True)
    out = []
    jobs = [(name, run.require(src), fn) for name, (src, fn) in FIGURES.items()]
    for src in sorted(run.path("analysis").glob("barcode_*.csv")):
        ctx_name = src.stem[len("barcode_"):]
        jobs.append((src.stem, src, lambda path, c=ctx_name: render_barcode(path, c)))
    for name, src, fn in jobs:
        data = fig_dir / f"{name}.csv"
        data.write_bytes(src.read_bytes())
        svg = fig_dir / f"{name}.svg"
        svg.write_text(fn(data))
        out += [data, svg]
    return out
