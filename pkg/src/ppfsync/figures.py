"""Report figures rendered from a trace, with matching plot-data CSV files.

Each figure kind writes a <name>.csv holding exactly the plotted columns
and a <name>.png rendering of it, per output channel: output tracking,
errors inside their funnel envelopes, transformed errors, and control
signals.
"""
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _write_csv(path, header, columns):
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", fmt="%.15g",
               header=",".join(header), comments="")


def _render(path, t, series, labels, ylabel, title, dashed=()):
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for j, (ys, label) in enumerate(zip(series, labels)):
        style = "--" if j in dashed else "-"
        color = "0.3" if j in dashed else None
        ax.plot(t, ys, style, color=color, label=label, linewidth=1.1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def figure_outputs(trace, out_dir, channel):
    """Leader and agent outputs for one channel."""
    t = trace.t
    cols = [trace.col(f"x0_o1_c{channel}")]
    labels = ["leader"]
    for i in range(1, trace.n + 1):
        cols.append(trace.col(f"x_a{i}_o1_c{channel}"))
        labels.append(f"agent {i}")
    base = os.path.join(out_dir, f"outputs_c{channel}")
    _write_csv(base + ".csv", ["t"] + labels, [t] + cols)
    _render(base + ".png", t, cols, labels, f"y (channel {channel})",
            "Output tracking", dashed=(0,))
    return base


def figure_errors(trace, out_dir, channel):
    """First-order errors against their funnel envelopes for one channel."""
    t = trace.t
    cols, labels = [], []
    for i in range(1, trace.n + 1):
        cols.append(trace.col(f"e_a{i}_o1_c{channel}"))
        labels.append(f"agent {i}")
    rho = np.stack([trace.col(f"rho_a{i}_c{channel}")
                    for i in range(1, trace.n + 1)])
    upper = (trace.up_eff[:, channel - 1][:, None] * rho).max(axis=0)
    lower = -(trace.lo_eff[:, channel - 1][:, None] * rho).max(axis=0)
    cols += [upper, lower]
    labels += ["upper envelope", "lower envelope"]
    base = os.path.join(out_dir, f"errors_c{channel}")
    _write_csv(base + ".csv", ["t"] + labels, [t] + cols)
    _render(base + ".png", t, cols, labels, f"e (channel {channel})",
            "Synchronization error and funnel",
            dashed=(len(cols) - 2, len(cols) - 1))
    return base


def figure_transformed(trace, out_dir, channel):
    """First-order transformed errors for one channel."""
    t = trace.t
    cols = [trace.col(f"eps_a{i}_o1_c{channel}")
            for i in range(1, trace.n + 1)]
    labels = [f"agent {i}" for i in range(1, trace.n + 1)]
    base = os.path.join(out_dir, f"transformed_c{channel}")
    _write_csv(base + ".csv", ["t"] + labels, [t] + cols)
    _render(base + ".png", t, cols, labels, f"eps (channel {channel})",
            "Transformed error")
    return base


def figure_controls(trace, out_dir, channel):
    """Control signals for one channel."""
    t = trace.t
    cols = [trace.col(f"u_a{i}_c{channel}") for i in range(1, trace.n + 1)]
    labels = [f"agent {i}" for i in range(1, trace.n + 1)]
    base = os.path.join(out_dir, f"controls_c{channel}")
    _write_csv(base + ".csv", ["t"] + labels, [t] + cols)
    _render(base + ".png", t, cols, labels, f"u (channel {channel})",
            "Control signal")
    return base


def render_report(trace, out_dir):
    """All figure kinds for every channel; returns the file basenames."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for p in range(1, trace.channels + 1):
        written.append(figure_outputs(trace, out_dir, p))
        written.append(figure_errors(trace, out_dir, p))
        written.append(figure_transformed(trace, out_dir, p))
        written.append(figure_controls(trace, out_dir, p))
    return written
