"""Figures for run reports: the ALARP risk matrix and per-rule finding counts."""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .alarp import REGIONS, AlarpParams, region_for  # noqa: E402

REGION_COLOURS = {
    "broadly_acceptable": "#9ccc65",
    "alarp": "#ffca28",
    "intolerable": "#e53935",
}

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "svg.hashsalt": "auditbot",
}


def risk_matrix_figure(report: dict[str, Any]):
    """Harm (rows) x likelihood (columns), shaded by region and annotated with finding counts."""
    alarp = report["meta"].get("alarp", {})
    params = AlarpParams(
        intolerable_min=alarp.get("intolerable_min", 15),
        acceptable_max=alarp.get("acceptable_max", 4),
        disproportion_factor=alarp.get("disproportion_factor", 3.0),
    )
    harms = {f["id"]: f["harm"] for f in report["findings"]}
    counts = Counter((harms[a["finding_id"]], a["likelihood"]) for a in report["assessments"])
    grid = np.array([[REGIONS.index(region_for(h * l, params)) for l in range(1, 6)] for h in range(1, 6)])
    cmap = ListedColormap([REGION_COLOURS[r] for r in REGIONS])

    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.8))
        ax.imshow(grid, cmap=cmap, vmin=0, vmax=len(REGIONS) - 1, origin="lower")
        for h in range(1, 6):
            for l in range(1, 6):
                n = counts.get((h, l), 0)
                ax.text(l - 1, h - 1, str(n) if n else "", ha="center", va="center", fontweight="bold")
        ax.set_xticks(range(5), [str(i) for i in range(1, 6)])
        ax.set_yticks(range(5), [str(i) for i in range(1, 6)])
        ax.set_xlabel("likelihood (finding frequency)")
        ax.set_ylabel("harm")
        ax.set_title("Findings by ALARP region")
        handles = [plt.Rectangle((0, 0), 1, 1, color=REGION_COLOURS[r]) for r in reversed(REGIONS)]
        ax.legend(handles, [r.replace("_", " ") for r in reversed(REGIONS)],
                  loc="upper left", bbox_to_anchor=(1.02, 1.0), frameon=False)
    return fig


def findings_by_rule_figure(report: dict[str, Any]):
    regions = {a["finding_id"]: a["region"] for a in report["assessments"]}
    rules = sorted({f["rule_id"] for f in report["findings"]})
    per = {r: Counter() for r in rules}
    for f in report["findings"]:
        per[f["rule_id"]][regions[f["id"]]] += 1

    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.0, 0.35 * max(len(rules), 1) + 1.2))
        y = np.arange(len(rules))
        left = np.zeros(len(rules))
        for region in REGIONS:
            widths = np.array([per[r][region] for r in rules], dtype=float)
            ax.barh(y, widths, left=left, color=REGION_COLOURS[region], label=region.replace("_", " "))
            left += widths
        ax.set_yticks(y, rules)
        ax.invert_yaxis()
        ax.set_xlabel("findings")
        ax.set_title("Findings per rule")
        if rules:
            ax.legend(loc="lower right", frameon=False)
        for side in ("top", "right"):
            ax.spines[side].set_visible(False)
    return fig


def render_figures(report: dict[str, Any], out_dir: str | Path) -> list[Path]:
    """Write ``risk_matrix.png`` and ``findings_by_rule.png`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in (("risk_matrix.png", risk_matrix_figure), ("findings_by_rule.png", findings_by_rule_figure)):
        fig = build(report)
        path = out / name
        fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
