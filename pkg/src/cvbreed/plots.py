"""Optional figure rendering for the CLI report path.

Each command's CSV rows map to one PNG saved next to the delimited output.
The computation layer never imports this module; plotting stays a thin
presentation step over the emitted rows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, csv_path: str) -> str:
    out = str(Path(csv_path).with_suffix(".png"))
    fig.tight_layout()
    fig.savefig(out, dpi=160)
    plt.close(fig)
    return out


def render(command: str, csv_path: str, columns: list[str], rows: list[dict]) -> str | None:
    if command == "breed":
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for p in sorted({r["p"] for r in rows}):
            pts = sorted((r for r in rows if r["p"] == p), key=lambda r: r["fidelity"])
            ax.semilogy([r["fidelity"] for r in pts], [r["p_succ"] for r in pts],
                        marker="o", label=f"p = {p}")
        ax.set_xlabel("fidelity with nearest squeezed cat")
        ax.set_ylabel("success probability")
        ax.legend(fontsize=8)
        return _save(fig, csv_path)
    if command == "comb":
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for pp in sorted({r["p_prime"] for r in rows}):
            pts = sorted((r for r in rows if r["p_prime"] == pp), key=lambda r: r["fidelity"])
            ax.semilogy([r["fidelity"] for r in pts], [r["p_succ"] for r in pts],
                        marker="s", label=f"p' = {pp}")
        ax.set_xlabel("fidelity with nearest comb")
        ax.set_ylabel("success probability")
        ax.legend(fontsize=8)
        return _save(fig, csv_path)
    if command == "chsh":
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        for label in sorted({r["config"] for r in rows}):
            for frame in sorted({r["frame"] for r in rows if r["config"] == label}):
                pts = sorted((r for r in rows if r["config"] == label and r["frame"] == frame),
                             key=lambda r: r["T"])
                ax.plot([r["T"] for r in pts], [r["S"] for r in pts],
                        marker="o", label=f"({label}) {frame}")
        ax.axhline(2.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("line transmission T")
        ax.set_ylabel("S")
        ax.legend(fontsize=8)
        return _save(fig, csv_path)
    if command == "sweep":
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        locus = [r for r in rows if r["kind"] == "locus"]
        for label in sorted({r["config"] for r in locus}):
            pts = sorted((r for r in locus if r["config"] == label),
                         key=lambda r: r["s_value"])
            ax.semilogy([r["s_value"] for r in pts], [r["p_succ"] for r in pts],
                        marker="o", label=f"({label})")
        ax.axvline(2.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("S")
        ax.set_ylabel("total success probability")
        ax.legend(fontsize=8)
        return _save(fig, csv_path)
    return None
