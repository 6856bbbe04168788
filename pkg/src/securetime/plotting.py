"""Offset-versus-time and grid summary figures (rendered headless to files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import BoundsSet  # noqa: E402
from .netsim import Trace  # noqa: E402


def offset_series(trace: Trace) -> dict[str, tuple[list[float], list[float]]]:
    """Per-receiver (seconds since start, true offset in ms)."""
    t0 = trace.records[0].time if trace.records else 0
    out: dict[str, tuple[list[float], list[float]]] = {}
    for rec in trace.records:
        if rec.true_offset is None or rec.node in ("sender", "sim", "adversary"):
            continue
        xs, ys = out.setdefault(rec.node, ([], []))
        xs.append((rec.time - t0) / 1e9)
        ys.append(rec.true_offset / 1e6)
    return out


def plot_offsets(trace: Trace, bounds: BoundsSet, path: str, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    series = offset_series(trace)
    for name, (xs, ys) in sorted(series.items()):
        ax.plot(xs, ys, lw=0.8, label=name)
    t0 = trace.records[0].time if trace.records else 0
    for rec in trace.records:
        if rec.alarm:
            ax.axvline((rec.time - t0) / 1e9, color="red", lw=0.5, alpha=0.4)
    for value, style, label in ((bounds.eps_m, ":", "eps_m"), (bounds.eps_1, "--", "eps_1"), (bounds.eps_2, "-.", "eps_2")):
        ax.axhline(value / 1e6, color="gray", ls=style, lw=0.8, label=label)
        ax.axhline(-value / 1e6, color="gray", ls=style, lw=0.8)
    # Scale to synchronized points; a cold-start offset would flatten everything else.
    synced = [abs(r.true_offset) / 1e6 for r in trace.records
              if r.true_offset is not None and r.info.get("sync") == 1]
    span = max(bounds.eps_2 / 1e6 * 1.3, max(synced, default=0.0) * 1.1, 1e-6)
    ax.set_ylim(-span, span)
    ax.set_xlabel("time since start [s]")
    ax.set_ylabel("true offset [ms]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_grid(rows: list[dict], path: str) -> None:
    """Bar chart of observed offsets normalised by eps_1 (unnoticed) and eps_2 (at alarm)."""
    names = [r["name"] for r in rows]
    un = [int(r["max_unnoticed_offset"]) / max(1, int(r["eps_1"])) for r in rows]
    al = [int(r["offset_at_first_alarm"] or 0) / max(1, int(r["eps_2"])) for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(rows)), 4))
    idx = range(len(rows))
    ax.bar([i - 0.2 for i in idx], un, width=0.4, label="max unnoticed / eps_1")
    ax.bar([i + 0.2 for i in idx], al, width=0.4, label="offset at alarm / eps_2")
    ax.axhline(1.0, color="red", lw=0.8)
    ax.set_xticks(list(idx))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize="small")
    ax.set_ylabel("fraction of bound")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
