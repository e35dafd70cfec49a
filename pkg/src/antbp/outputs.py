"""CSV traces, run manifests, sweep summaries and static plots.

Floats are written with fixed precision so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .topology import save_topology

PACKET_FIELDS = ("id", "flow", "kind", "src", "commodity", "injected_at", "delivered_at", "hops", "latency")
SLOT_FIELDS = ("t", "injected", "delivered", "backlog", "scheduled", "failed", "paused", "routing_cost")
EVENT_FIELDS = ("t", "kind", "target", "detail")
BIN_WIDTH = 50


def code_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])


def arrival_bins(slots, width: int = BIN_WIDTH) -> np.ndarray:
    """Midpoint of the ``width``-slot bin holding each slot, e.g. 524 -> 525."""
    slots = np.asarray(slots)
    return (slots // width) * width + width / 2


def binned_latency(injected_at, latency, width: int = BIN_WIDTH) -> tuple[np.ndarray, np.ndarray]:
    mids = arrival_bins(injected_at, width)
    keys = np.unique(mids)
    return keys, np.array([latency[mids == k].mean() for k in keys])


def emit_run(result, cfg: ScenarioConfig, out_dir) -> Path:
    """Write packets.csv, slots.csv, events.csv, topology.txt and manifest.json."""
    from .simulation import packet_latencies

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pk = result.packets
    flows = result.scenario.flows
    lat = packet_latencies(pk["injected_at"], pk["delivered_at"], cfg.traffic.horizon, cfg.output.latency_mode)
    kinds = [f.kind for f in flows]
    _write(out / "packets.csv", PACKET_FIELDS,
           ((k, pk["flow"][k], kinds[pk["flow"][k]] if pk["flow"][k] >= 0 else "", pk["src"][k],
             pk["commodity"][k], pk["injected_at"][k], pk["delivered_at"][k], pk["hops"][k], lat[k])
            for k in range(len(lat))))
    _write(out / "slots.csv", SLOT_FIELDS,
           ((s.t, s.injected, s.delivered, s.backlog, s.scheduled, len(s.failed), s.paused, s.routing_cost)
            for s in result.slots))
    _write(out / "events.csv", EVENT_FIELDS, result.events)
    save_topology(out / "topology.txt", result.scenario.g, result.scenario.rates)
    m = result.metrics
    manifest = {
        "seed": m.seed,
        "policy": m.policy,
        "version": code_version(),
        "config": cfg.to_dict(),
        "flows": [{"src": f.src, "dst": f.dst, "kind": f.kind, "base_rate": f.base_rate, "load": f.load,
                   "burst_start": f.burst_start, "burst_len": f.burst_len} for f in flows],
        "metrics": {k: fmt(v) for k, v in m.scalars().items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def read_manifest(run_dir) -> dict:
    return json.loads((Path(run_dir) / "manifest.json").read_text())


# -- sweeps ----------------------------------------------------------------------

SWEEP_METRICS = ("delivery", "delivery_streaming", "delivery_bursty", "latency", "latency_streaming",
                 "latency_bursty", "goodput", "final_backlog", "virtual_exchanges", "ants_emitted")


def write_sweep(rows: list[dict], path, axis: str) -> Path:
    """Per-cell rows: axis value, policy, seed, error, metrics."""
    path = Path(path)
    header = ["value", "policy", "seed", "error", *SWEEP_METRICS]
    _write(path, header, ([str(r["value"]), r["policy"], r["seed"], r.get("error", ""),
                           *[r.get(k, math.nan) for k in SWEEP_METRICS]] for r in rows))
    return path


def summarize(rows: list[dict], confidence: float = 0.95) -> list[dict]:
    """Mean and confidence half-width per (value, policy), in first-seen order."""
    from scipy import stats

    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if not r.get("error"):
            groups.setdefault((str(r["value"]), r["policy"]), []).append(r)
    out = []
    for (value, policy), rs in groups.items():
        row = {"value": value, "policy": policy, "n": len(rs)}
        for k in SWEEP_METRICS:
            x = np.array([float(r[k]) for r in rs])
            x = x[~np.isnan(x)]
            row[k] = float(x.mean()) if x.size else math.nan
            if x.size > 1:
                row[k + "_ci"] = float(stats.t.ppf(0.5 + confidence / 2, x.size - 1) * x.std(ddof=1) / np.sqrt(x.size))
            else:
                row[k + "_ci"] = math.nan if not x.size else 0.0
        out.append(row)
    return out


def write_summary(summary: list[dict], path) -> Path:
    header = ["value", "policy", "n"]
    for k in SWEEP_METRICS:
        header += [k, k + "_ci"]
    _write(Path(path), header, ([r[h] for h in header] for r in summary))
    return Path(path)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# -- plots -------------------------------------------------------------------------


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_sweep(summary_csv, out_dir=None, metrics=("latency_bursty", "delivery_bursty", "goodput", "latency")) -> list[Path]:
    """One metric-versus-axis figure per metric, one line per policy."""
    rows = read_csv(summary_csv)
    out = Path(out_dir) if out_dir is not None else Path(summary_csv).parent
    out.mkdir(parents=True, exist_ok=True)
    plt = _plt()
    files = []
    policies = list(dict.fromkeys(r["policy"] for r in rows))
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for p in policies:
            rs = [r for r in rows if r["policy"] == p]
            try:
                xs = [float(r["value"]) for r in rs]
            except ValueError:
                xs = list(range(len(rs)))
            ys = [float(r[metric]) for r in rs]
            ci = [float(r.get(metric + "_ci", "nan") or "nan") for r in rs]
            ax.errorbar(xs, ys, yerr=np.nan_to_num(ci), marker="o", capsize=3, label=p)
        ax.set_ylabel(metric)
        ax.set_xlabel("value")
        ax.legend()
        fig.tight_layout()
        f = out / f"{metric}.png"
        fig.savefig(f, dpi=100)
        plt.close(fig)
        files.append(f)
    return files


def plot_delay_bins(packets_csv, out_file=None, width: int = BIN_WIDTH) -> Path:
    """Mean latency of delivered packets by arrival-time bin."""
    rows = [r for r in read_csv(packets_csv) if int(r["delivered_at"]) >= 0]
    inj = np.array([int(r["injected_at"]) for r in rows])
    lat = np.array([float(r["latency"]) for r in rows])
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if rows:
        mids, means = binned_latency(inj, lat, width)
        ax.plot(mids, means, marker="o")
    ax.set_xlabel("arrival slot")
    ax.set_ylabel("latency")
    fig.tight_layout()
    out_file = Path(out_file) if out_file is not None else Path(packets_csv).with_name("delay_bins.png")
    fig.savefig(out_file, dpi=100)
    plt.close(fig)
    return out_file
