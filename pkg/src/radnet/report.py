"""Matplotlib figure rendering for the CLI report paths.

Every renderer writes a PNG next to the delimited output it illustrates.
Kept out of the numerical modules so the library itself stays plot-free.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_error_map_figure(ref, emu, emap, title, path):
    """Reference field, emulated field, percent error, and ref-vs-emu scatter."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    for ax, fld, name in ((axes[0, 0], ref, "reference"),
                          (axes[0, 1], emu, "emulator")):
        im = ax.imshow(np.asarray(fld).T, origin="lower", cmap="viridis")
        ax.set_title(name)
        fig.colorbar(im, ax=ax, shrink=0.8)
    im = axes[1, 0].imshow(emap.pct_err.T, origin="lower", cmap="magma")
    axes[1, 0].set_title("error [%]")
    fig.colorbar(im, ax=axes[1, 0], shrink=0.8)

    r = np.asarray(ref).ravel()
    e = np.asarray(emu).ravel()
    axes[1, 1].plot(r, e, ".", ms=2, alpha=0.5)
    lim = [min(r.min(), e.min()), max(r.max(), e.max())]
    axes[1, 1].plot(lim, lim, "k-", lw=1)
    axes[1, 1].set_xlabel("reference")
    axes[1, 1].set_ylabel("emulator")
    axes[1, 1].set_title("scatter")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_temporal_figure(records_by_var, path):
    """Per-timestep RMSE for each variable, one panel per variable."""
    n = len(records_by_var)
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.2 * n), sharex=True, squeeze=False)
    for ax, (name, recs) in zip(axes[:, 0], records_by_var.items()):
        t = [r["t"] for r in recs]
        ax.plot(t, [r["rmse"] for r in recs], label="rmse")
        ax.plot(t, [r["max_abs_err"] for r in recs], label="max abs", alpha=0.6)
        ax.set_ylabel(name)
        ax.legend(fontsize=8)
    axes[-1, 0].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_track_figure(points_a, path, points_b=None, labels=("reference", "emulator")):
    fig, ax = plt.subplots(figsize=(6, 6))
    ia = [p.center[0] for p in points_a]
    ja = [p.center[1] for p in points_a]
    ax.plot(ia, ja, "ko-", ms=4, label=labels[0])
    if points_b is not None:
        ib = [p.center[0] for p in points_b]
        jb = [p.center[1] for p in points_b]
        ax.plot(ib, jb, "ro-", ms=4, mfc="none", label=labels[1])
    ax.set_xlabel("i")
    ax.set_ylabel("j")
    ax.set_title("vortex track")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history_figure(history, path):
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    epochs = range(history.epochs)
    axes[0].semilogy(epochs, history.train_loss, label="train loss")
    axes[0].semilogy(epochs, history.val_loss, label="validation loss")
    axes[0].legend()
    axes[0].set_ylabel("loss")
    ax2 = axes[1]
    ax2.semilogy(epochs, history.val_nrmse, "C2", label="validation NRMSE")
    ax2.set_ylabel("NRMSE")
    ax2b = ax2.twinx()
    ax2b.semilogy(epochs, history.lr, "C3--", label="lr")
    ax2b.set_ylabel("learning rate")
    ax2.set_xlabel("epoch")
    ax2.legend(loc="upper left")
    ax2b.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bench_figure(report, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(["reference", "emulator"],
           [report.columns_per_second_reference,
            report.columns_per_second_emulator],
           color=["gray", "C0"])
    ax.set_ylabel("columns / second")
    ax.set_title(f"speedup {report.speedup:.1f}x "
                 f"(min of {report.repetitions} reps)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_divergence_figure(report, path):
    fig, ax = plt.subplots(figsize=(8, 4))
    hours = (report.times - report.times[0]) / 3600.0
    ax.plot(hours, report.tskin_abs_err, label="|dTskin|")
    ax.plot(hours, report.tlayer_rmse, label="layer T RMSE", alpha=0.7)
    ax.set_xlabel("hours")
    ax.set_ylabel("K")
    ax.legend()
    ax.set_title("coupled-run divergence")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
