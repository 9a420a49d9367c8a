"""PNG figures for sweep reports (rendered off-screen next to the CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"naive-otfs": "OTFS AirComp", "zp-sic": "ZP-OTFS AirComp (SIC)"}


def plot_reports(reports, path, x: str = "snr_db") -> Path:
    """MSE against SNR (``x="snr_db"``) or path count (``x="R"``), one curve per scheme.

    Solid lines are analytic averages, markers the Monte Carlo estimates.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    schemes = list(dict.fromkeys(r.scheme for r in reports))
    for i, scheme in enumerate(schemes):
        rs = sorted((r for r in reports if r.scheme == scheme), key=lambda r: getattr(r, x))
        xs = [getattr(r, x) for r in rs]
        color = f"C{i}"
        label = f"{LABELS.get(scheme, scheme)}, {rs[0].policy}"
        ax.plot(xs, [r.analytic_mse for r in rs], "-", color=color, label=label + " (analytic)")
        emp = [r.empirical_mse for r in rs]
        if all(e == e for e in emp):
            ax.errorbar(xs, emp, yerr=[3 * r.std_error for r in rs], fmt="o", color=color,
                        ms=4, capsize=2, label=label + " (simulated)")
    ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)" if x == "snr_db" else "number of paths R")
    ax.set_ylabel("MSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
