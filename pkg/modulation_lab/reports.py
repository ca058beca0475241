"""
Static charts for experiment outputs. Charts are pure functions of the
tables they plot: no timestamps and a fixed id salt, so reruns are
byte-identical.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from loguru import logger  # noqa: E402

from modulation_lab.exceptions import FileOperationError  # noqa: E402

SVG_SALT = "modulation-lab"
PALETTE = {"modulation": "#1f77b4", "plain": "#d62728"}
LINESTYLES = ["-", "--", ":", "-."]


def plot_loss_curves(curves: pd.DataFrame, path: str, title: str = "") -> str:
    """
    Median loss per epoch on a log scale with the inter-quartile band.

    ``curves`` has columns epoch, model, units, median, q25, q75.
    """
    with plt.rc_context({"svg.hashsalt": SVG_SALT}):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        widths = sorted(curves["units"].unique())
        for (model, units), group in curves.groupby(["model", "units"], sort=True):
            color = PALETTE.get(model, "#555555")
            style = LINESTYLES[widths.index(units) % len(LINESTYLES)]
            ax.plot(
                group["epoch"],
                group["median"],
                color=color,
                linestyle=style,
                linewidth=1.5,
                label=f"{model} ({units} units)",
                zorder=3,
            )
            ax.fill_between(
                group["epoch"],
                group["q25"],
                group["q75"],
                color=color,
                alpha=0.15,
                linewidth=0,
                zorder=2,
            )
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("H1 loss (median over seeds)")
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            logger.error(f"Error writing chart {path}: {str(e)}")
            logger.exception(e)
            raise FileOperationError(e)
        finally:
            plt.close(fig)
    logger.info(f"Wrote {path}")
    return path
