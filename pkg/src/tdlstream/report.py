"""Session reports: the delimited answer stream plus summary figures.

Writes, next to each other in the report directory:

* ``answers.ndjson``  - the emitted answer records, one JSON object per line
* ``summary.json``    - final counters and the per-tick series
* ``history_size.png``- kept history slices per tick
* ``emission_lag.png``- pending answer gap (tau_in - tau_out + 1) per tick

matplotlib is imported lazily so the decision procedures stay figure-free.
"""

from __future__ import annotations

import json
from pathlib import Path

from .stream import EmittedAnswer, SessionSummary
from .textio import render_emission_lines


def _step_plot(path: Path, values: list[int], title: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    if values:
        ax.step(range(len(values)), values, where="post")
        ax.set_xlim(0, max(1, len(values) - 1))
        ax.set_ylim(0, max(values) + 1)
    ax.set_xlabel("tick")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    directory: str | Path,
    output_pred: str,
    emitted: list[EmittedAnswer],
    summary: SessionSummary,
) -> list[Path]:
    """Render the session report; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    answers = directory / "answers.ndjson"
    with answers.open("w", encoding="utf-8") as fh:
        for ans in emitted:
            for line in render_emission_lines(output_pred, ans.tuples, ans.tau_out):
                fh.write(line + "\n")
    written.append(answers)

    summary_path = directory / "summary.json"
    summary_path.write_text(
        json.dumps(
            {
                "mode": summary.mode,
                "ticks": summary.ticks,
                "tau_in": summary.tau_in,
                "tau_out": summary.tau_out,
                "tau_mem": summary.tau_mem,
                "emissions": summary.emissions,
                "peak_slices": summary.peak_slices,
                "forgetting": summary.forgetting,
                "slice_counts": summary.slice_counts,
                "lags": summary.lags,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    written.append(summary_path)

    history_png = directory / "history_size.png"
    _step_plot(history_png, summary.slice_counts, "Kept history", "slices in memory")
    written.append(history_png)

    lag_png = directory / "emission_lag.png"
    _step_plot(lag_png, summary.lags, "Emission lag", "pending time points")
    written.append(lag_png)
    return written
