"""Matplotlib renderings of the sweep and simulation tables."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}

QCRB_TRANSVERSE = 1.0 / (4.0 * math.pi**2)
QCRB_AXIAL = 3.0 / math.pi**2


def _floats(values):
    return [float(v) for v in values]


def plot_qcrb_curves(curves, axis, component, path, title=None):
    """``curves`` maps a legend label to ``(l_values, qcrb_values)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        for label, (x, y) in curves.items():
            ax.plot(_floats(x), _floats(y), label=label)
        ref = QCRB_AXIAL if component == "z" else QCRB_TRANSVERSE
        ax.axhline(ref, color="0.5", lw=0.8, ls=":", label="localization limit")
        ax.set_xlabel(f"$l_{axis}$")
        ax.set_ylabel(f"QCRB($s_{component}$)")
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)


def plot_qcrb_table(table, path):
    """Plot every QCRB column of a ``qcrb-ss`` table against the swept component."""
    axis = table.meta.get("axis", "x")
    x = table.column(f"l_{axis}")
    curves = {}
    for comp in ("x", "y", "z"):
        curves[f"$s_{comp}$"] = (x, table.column(f"qcrb_s{comp}"))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(6.4, 2.6))
        for comp in ("x", "y"):
            axes[0].plot(_floats(x), _floats(curves[f"$s_{comp}$"][1]), label=f"$s_{comp}$")
        axes[0].axhline(QCRB_TRANSVERSE, color="0.5", lw=0.8, ls=":")
        axes[1].plot(_floats(x), _floats(curves["$s_z$"][1]), color="C2", label="$s_z$")
        axes[1].axhline(QCRB_AXIAL, color="0.5", lw=0.8, ls=":")
        for a in axes:
            a.set_xlabel(f"$l_{axis}$")
            a.legend(frameon=False)
        axes[0].set_ylabel("centroid QCRB")
        fig.savefig(path)
        plt.close(fig)


def plot_simulation_table(table, path):
    """Variance of the separation estimates against the classical and quantum bounds."""
    axis = table.meta.get("axis", "x")
    rows = [i for i, r in enumerate(table.column("row")) if r == "summary"]

    def pick(name):
        col = table.column(name)
        return [float(col[i]) for i in rows]

    x = pick(f"l_{axis}")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        ax.errorbar(x, pick(f"var_{axis}"), yerr=[0 if math.isnan(v) else v for v in pick(f"var_std_{axis}")],
                    fmt="s", ms=3, capsize=2, label="ML variance")
        ax.plot(x, pick(f"crb0_{axis}"), "-", label="CRB, $s=0$")
        ax.plot(x, pick(f"crb_avg_{axis}"), "-.", label="CRB, draw average")
        ax.plot(x, pick(f"qcrb_{axis}"), ":", color="0.3", label="QCRB")
        ax.set_yscale("log")
        ax.set_xlabel(f"$l_{axis}$")
        ax.set_ylabel(f"var($\\hat l_{axis}$)")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)


def plot_crb_curves(x, curves, axis, path):
    """Classical CRB curves (``label -> values``) for a sweep of ``l_axis``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        for label, y in curves.items():
            ax.plot(_floats(x), _floats(y), label=label)
        ax.set_yscale("log")
        ax.set_xlabel(f"$l_{axis}$")
        ax.set_ylabel(f"bound on var($\\hat l_{axis}$)")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
