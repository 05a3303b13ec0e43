#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed hash salt and no date stamp keep repeated SVG exports byte-identical
matplotlib.rcParams["svg.hashsalt"] = "selfpower"


def line_plot_svg(path: Union[str, Path], x: Sequence[float], series: Dict[str, Sequence[float]], x_label: str,
                  y_label: str, title: str, hlines: Dict[str, float] = None):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    try:
        for label, y in series.items():
            ax.plot(x, y, label=label, linewidth=1.0)
        for label, level in (hlines or {}).items():
            ax.axhline(level, linestyle="--", linewidth=0.8, color="grey", label=label)
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        ax.set_title(title)
        ax.grid(True, linewidth=0.3)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
