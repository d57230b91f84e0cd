"""Line plots of sweep summaries as standalone SVG files."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids so identical summaries give identical files
plt.rcParams["svg.hashsalt"] = "afdmsense"

_X_AXES = {"snr_db": "SNR [dB]", "velocity_kmh": "velocity [km/h]"}
_GROUP_KEYS = ("snr_db", "velocity_kmh", "shape_m", "num_paths", "est_num_paths")
_LABELS = {"shape_m": "m", "num_paths": "L", "est_num_paths": "L_est",
           "snr_db": "SNR", "velocity_kmh": "v"}


def _label(key_vals) -> str:
    return ", ".join(f"{_LABELS[k]}={v:g}" for k, v in key_vals) or "all"


def _series(summaries, x_key):
    groups = defaultdict(list)
    varying = [k for k in _GROUP_KEYS
               if k != x_key and len({getattr(s, k) for s in summaries}) > 1]
    for s in summaries:
        groups[tuple((k, getattr(s, k)) for k in varying)].append(s)
    return {key: sorted(rows, key=lambda s: getattr(s, x_key)) for key, rows in
            sorted(groups.items())}


def _plot(series, x_key, metrics, ylabel, path, logy=False):
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, rows in series.items():
        x = [getattr(s, x_key) for s in rows]
        for metric, style, tag in metrics:
            y = [getattr(s, metric) for s in rows]
            if all(math.isnan(v) for v in y):
                continue
            ax.plot(x, y, style, label=f"{tag} ({_label(key)})")
    ax.set_xlabel(_X_AXES[x_key])
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_summaries(summaries, out_dir) -> list[Path]:
    """One range plot and one Doppler plot per swept x-axis."""
    summaries = list(summaries)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for x_key in _X_AXES:
        if len({getattr(s, x_key) for s in summaries}) < 2:
            continue
        series = _series(summaries, x_key)
        written.append(_plot(series, x_key,
                             [("rmse_d0", "o-", "EM-EC"), ("rmse_d0_baseline", "s--", "RSS"),
                              ("rcrb_d0", ":", "RCRB")],
                             "RMSE of d0 [m]", out / f"rmse_d0_vs_{x_key}.svg", logy=True))
        written.append(_plot(series, x_key,
                             [("nrmse_nu1", "o-", "EM-EC"), ("nrcrb_nu1", ":", "NRCRB")],
                             "NRMSE of nu1", out / f"nrmse_nu1_vs_{x_key}.svg", logy=True))
    if not written:
        # single point or non-SNR/velocity sweep: bar-free fallback against L_est
        series = {(): sorted(summaries, key=lambda s: s.est_num_paths)}
        fig, ax = plt.subplots(figsize=(6, 4))
        x = [s.est_num_paths for s in series[()]]
        ax.plot(x, [s.rmse_d0 for s in series[()]], "o-", label="EM-EC")
        ax.plot(x, [s.rmse_d0_baseline for s in series[()]], "s--", label="RSS")
        ax.set_xlabel("paths given to the estimator")
        ax.set_ylabel("RMSE of d0 [m]")
        ax.legend(fontsize=7)
        path = out / "rmse_d0_vs_est_num_paths.svg"
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
