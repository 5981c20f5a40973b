"""Summary statistics and static SVG charts for a results table."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure

from .results import fmt_float, read_results, read_trace, trace_name

log = logging.getLogger(__name__)

METRICS = ("test_mse", "mean_r2", "train_seconds")
QUARTILE_NOTE = "# quartiles: linear interpolation between closest ranks (inclusive method)"
SUMMARY_COLUMNS = ("example", "n_train", "n_eval", "strategy", "runs", "failed") + tuple(
    f"{m}_{q}" for m in METRICS for q in ("q1", "median", "q3")
)


def quartiles(values) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return (float("nan"),) * 3
    q = np.percentile(v, [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def summarize(rows: list[dict]) -> list[dict]:
    cells = defaultdict(list)
    for r in rows:
        cells[(r["example"], r["n_train"], r["n_eval"], r["strategy"])].append(r)
    out = []
    for key in sorted(cells):
        group = cells[key]
        ok = [r for r in group if r["status"] == "ok"]
        entry = dict(zip(("example", "n_train", "n_eval", "strategy"), key))
        entry["runs"] = len(ok)
        entry["failed"] = len(group) - len(ok)
        for m in METRICS:
            q1, med, q3 = quartiles([r[m] for r in ok])
            entry[f"{m}_q1"], entry[f"{m}_median"], entry[f"{m}_q3"] = q1, med, q3
        out.append(entry)
    return out


def write_summary(path, summary: list[dict]) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(QUARTILE_NOTE + "\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(SUMMARY_COLUMNS)
        for e in summary:
            w.writerow([fmt_float(e[c]) if isinstance(e[c], float) else e[c] for c in SUMMARY_COLUMNS])


def _save(fig: Figure, path: Path) -> None:
    # fixed salt and no date keep the SVG byte-stable across runs
    with rc_context({"svg.hashsalt": "randeeponet", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def _figure(**kw) -> Figure:
    return Figure(**kw)


def boxplot_chart(rows: list[dict], metric: str, path: Path) -> None:
    ok = [r for r in rows if r["status"] == "ok"]
    n_trains = sorted({r["n_train"] for r in ok})
    series = sorted({(r["strategy"], r["n_eval"]) for r in ok})
    fig = _figure(figsize=(8, 4))
    ax = fig.add_subplot()
    width = 0.8 / max(len(series), 1)
    for k, (strategy, n_eval) in enumerate(series):
        data, pos = [], []
        for i, nt in enumerate(n_trains):
            vals = [r[metric] for r in ok if r["n_train"] == nt and r["n_eval"] == n_eval
                    and r["strategy"] == strategy]
            if vals:
                data.append(vals)
                pos.append(i - 0.4 + width * (k + 0.5))
        if not data:
            continue
        bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True, manage_ticks=False)
        color = f"C{k % 10}"
        for patch in bp["boxes"]:
            patch.set_facecolor(color)
        ax.plot([], [], color=color, linewidth=6, label=f"{strategy}, N_eval={n_eval}")
    ax.set_xticks(range(len(n_trains)))
    ax.set_xticklabels([str(n) for n in n_trains])
    ax.set_xlabel("N_train")
    ax.set_ylabel(metric)
    if metric == "test_mse":
        ax.set_yscale("log")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def loss_chart(traces: dict, x_key: str, path: Path, title: str) -> None:
    fig = _figure(figsize=(9, 4))
    for col, (y_key, label) in enumerate((("train_loss", "train loss"), ("test_loss", "test loss"))):
        ax = fig.add_subplot(1, 2, col + 1)
        for k, (name, tr) in enumerate(sorted(traces.items())):
            x = np.asarray(tr[x_key], dtype=float)
            y = np.asarray(tr[y_key], dtype=float)
            keep = np.isfinite(y)
            if keep.any():
                ax.plot(x[keep], y[keep], color=f"C{k % 10}", label=name, linewidth=1)
        ax.set_yscale("log")
        ax.set_xlabel("epoch" if x_key == "epoch" else "training time [s]")
        ax.set_ylabel(label)
        ax.legend(fontsize="x-small")
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def make_report(results_path, out_dir, trace_dir=None, notes: dict | None = None) -> list[Path]:
    """Write ``summary.csv`` plus SVG charts into ``out_dir``; returns the written paths."""
    results_path = Path(results_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = Path(trace_dir) if trace_dir else results_path.parent / "traces"
    rows = read_results(results_path)
    written = []
    summary_path = out_dir / "summary.csv"
    write_summary(summary_path, summarize(rows))
    written.append(summary_path)
    if notes:
        note_path = out_dir / "report_notes.txt"
        note_path.write_text("".join(f"{k}={v}\n" for k, v in sorted(notes.items())))
        written.append(note_path)
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        return written
    for example in sorted({r["example"] for r in ok}):
        sub = [r for r in ok if r["example"] == example]
        for metric in METRICS:
            p = out_dir / f"{example}_box_{metric}.svg"
            boxplot_chart(sub, metric, p)
            written.append(p)
        for nt in sorted({r["n_train"] for r in sub}):
            cell = [r for r in sub if r["n_train"] == nt]
            seed = min(r["seed"] for r in cell)
            traces = {}
            for r in sorted(cell, key=lambda r: (r["strategy"], r["n_eval"])):
                if r["seed"] != seed:
                    continue
                tp = trace_dir / (trace_name(r) + ".csv")
                if not tp.exists():
                    log.warning("trace %s missing; omitted from loss charts", tp)
                    continue
                traces[f"{r['strategy']} N_eval={r['n_eval']}"] = read_trace(tp)
            if not traces:
                log.warning("no traces for %s N_train=%d; loss charts omitted", example, nt)
                continue
            for x_key, tag in (("epoch", "epoch"), ("cum_seconds", "runtime")):
                p = out_dir / f"{example}_ntrain{nt}_loss_vs_{tag}.svg"
                loss_chart(traces, x_key, p, f"{example}, N_train={nt}, seed {seed}")
                written.append(p)
    return written
