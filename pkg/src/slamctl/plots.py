"""Static figures rebuilt from a trace CSV (no simulation re-run)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sim import HybridTrace  # noqa: E402

PLOT_FILES = ("trajectory_3d.png", "estimation_error.png", "tracking_error.png", "torques.png")


def _flow_rows(trace):
    """Regular samples only; event rows duplicate instants."""
    ev = trace.column("event")
    return np.array([e == "" for e in ev])


def _xyz(trace, tag, mask):
    return np.stack([trace.column(f"{tag}_{a}")[mask] for a in "xyz"], axis=1)


def plot_trajectory(trace, path):
    m = _flow_rows(trace)
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    for tag, label, style in [("p", "true", "-"), ("pd", "desired", "--"), ("phat", "estimated", ":")]:
        P = _xyz(trace, tag, m)
        ax.plot(P[:, 0], P[:, 1], P[:, 2], style, label=label)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_zlabel("z (m)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _time_plot(trace, path, series, ylabel, ylim=None):
    m = _flow_rows(trace)
    t = trace.column("t")[m]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for col, label in series:
        ax.plot(t, trace.column(col)[m], label=label, lw=1)
    ax.set_xlabel("t (s)")
    ax.set_ylabel(ylabel)
    if ylim is not None:
        ax.set_ylim(*ylim)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8, ncol=min(len(series), 3))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_plots(trace_path, out_dir=None, torque_limit=None):
    """Write the four figures next to the trace (or into ``out_dir``).

    ``torque_limit`` fixes the torque axis to ``[-limit, limit]``.
    Returns the list of written paths.
    """
    trace = HybridTrace.read(trace_path)
    needed = {"p_x", "pd_x", "phat_x", "est_err", "est_pos_err", "track_pos_err", "track_att_err", "tau1"}
    missing = needed - set(trace.columns)
    if missing:
        raise ValueError(f"trace {trace_path} lacks columns {sorted(missing)}")
    if not trace.rows:
        raise ValueError(f"trace {trace_path} has no rows")
    out_dir = os.path.dirname(os.path.abspath(trace_path)) if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, f) for f in PLOT_FILES]
    plot_trajectory(trace, paths[0])
    _time_plot(trace, paths[1], [("est_err", "|X~ - I|_F"), ("est_pos_err", "|p - p_hat| (m)")], "estimation error")
    _time_plot(trace, paths[2], [("track_pos_err", "position (m)"), ("track_att_err", "attitude (rad)")],
               "tracking error")
    lim = None if torque_limit is None else (-torque_limit, torque_limit)
    _time_plot(trace, paths[3], [(f"tau{i}", f"tau{i}") for i in range(1, 7)], "torque (N m)", lim)
    return paths
