"""Counterexample trace figures."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .trace import Trace  # noqa: E402


def plot_trace(t: Trace, path, title: str = "", max_signals: int = 12) -> str:
    """Step plot of every input and persistent variable over the cycles of `t`."""
    cycles = list(range(1, len(t.cycles) + 1))
    signals: list[tuple[str, list]] = []
    for name in t.input_names():
        signals.append((f"in: {name}", [c.input_dict()[name] for c in t.cycles]))
    for name, _ in t.cycles[0].state:
        signals.append((name, [c.state_dict()[name] for c in t.cycles]))
    signals = signals[:max_signals] or [("(no signals)", [0] * len(cycles))]

    fig, axes = plt.subplots(len(signals), 1, sharex=True, squeeze=False,
                             figsize=(6.0, 0.9 + 0.8 * len(signals)))
    for ax, (label, values) in zip(axes[:, 0], signals):
        ys = [int(v) for v in values]
        ax.step(cycles, ys, where="mid", color="tab:blue", linewidth=1.4)
        ax.plot(cycles, ys, "o", color="tab:blue", markersize=3)
        ax.set_ylabel(label, rotation=0, ha="right", va="center", fontsize=8)
        ax.tick_params(labelsize=7)
        if all(isinstance(v, bool) for v in values):
            ax.set_yticks([0, 1], ["F", "T"])
            ax.set_ylim(-0.3, 1.3)
        for side in ("top", "right"):
            ax.spines[side].set_visible(False)
    v = t.violation
    if v is not None:
        for ax in axes[:, 0]:
            ax.axvline(v.cycle, color="tab:red", linestyle="--", linewidth=0.8)
    bottom = axes[-1, 0]
    bottom.set_xlabel("scan cycle")
    bottom.set_xticks(cycles)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return str(path)
