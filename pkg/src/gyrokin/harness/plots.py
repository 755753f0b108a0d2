"""Figure rendering for experiment reports.

Each experiment's table gets one PNG next to its CSV: convergence sweeps
as log-log error curves with the fitted slope in the legend, everything
else as a per-row bar or line chart of its lead columns.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_LOGLOG = {"converge-fixed", "converge-general", "osc-scaling",
           "prepared-vs-ill"}


def _footer_value(table, key):
    for k, v in table.footer:
        if k == key:
            return v
    return None


def render_figure(table, path):
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=130)
    cols = table.columns
    data = np.array(table.rows, dtype=float)
    if data.size == 0:
        ax.text(0.5, 0.5, "no rows", ha="center", va="center")
    elif table.name in _LOGLOG and cols[0] == "eps":
        eps = data[:, 0]
        for j in range(1, data.shape[1]):
            vals = data[:, j]
            mask = np.isfinite(vals) & (vals > 0)
            if not np.any(mask):
                continue
            slope_key = {1: "slope_X", 2: "slope_Xi"}.get(j)
            label = cols[j]
            for key, v in table.footer:
                if key.startswith("slope") and isinstance(v, float) \
                        and label.split("_")[-1].lower() in key.lower():
                    label = f"{cols[j]} (slope {v:.2f})"
                    break
            ax.loglog(eps[mask], vals[mask], "o-", label=label)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("error / value")
        ax.invert_xaxis()
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
    else:
        x = data[:, 0]
        for j in range(1, data.shape[1]):
            vals = data[:, j]
            if np.all(np.isfinite(vals)):
                ax.plot(x, vals, "o-", label=cols[j])
        ax.set_xlabel(cols[0])
        if data.shape[0] > 1 and np.all(data[:, 1:][np.isfinite(data[:, 1:])] >= 0) \
                and np.nanmax(np.abs(data[:, 1:])) > 0:
            positive = data[:, 1:][np.isfinite(data[:, 1:])]
            if np.all(positive > 0) and np.max(positive) / max(np.min(positive), 1e-300) > 1e3:
                ax.set_yscale("log")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    status = "pass" if table.passed else "FAIL"
    ax.set_title(f"{table.name} [{status}]", fontsize=10)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
