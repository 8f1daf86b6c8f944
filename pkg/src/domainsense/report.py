"""Figure rendering for report artifacts.

Charts are written as PNG files next to the JSON/CSV artifacts they
illustrate: per-domain value distributions, domain-sensitivity scores, and
per-domain AUC comparisons. Everything uses the non-interactive backend so
rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import StudyResult
from .sensitivity import SensitivityReport
from .training import EvalReport

_FIG_DPI = 120


def save_distribution_figure(report: SensitivityReport, feature: str, path: str) -> str:
    """Grouped bars: one cluster per value, one bar per domain."""
    entry = report.entry(feature)
    dists = entry.distributions
    num_domains, num_values = dists.shape
    if entry.locations is not None:
        labels = [f"{loc:.3g}" for loc in entry.locations]
    else:
        labels = [str(r) for r in range(num_values)]
    x = np.arange(num_values)
    width = 0.8 / num_domains
    fig, ax = plt.subplots(figsize=(max(6, num_values * 0.6), 3.5))
    for k in range(num_domains):
        ax.bar(x + (k - (num_domains - 1) / 2) * width, dists[k], width, label=f"domain {k}")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45 if entry.locations is not None else 0, fontsize=8)
    ax.set_ylabel("effect-weighted probability")
    ax.set_xlabel("bin center" if entry.locations is not None else "value index")
    ax.set_title(f"{feature}  (DS={entry.ds:.4f}, {entry.group})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
    return path


def save_sensitivity_figure(report: SensitivityReport, path: str) -> str:
    """Horizontal DS-score bars, grouped and ordered by rank; selected
    features drawn solid, the rest hatched."""
    groups: dict[str, list] = {}
    for f in report.features:
        groups.setdefault(f.group, []).append(f)
    for members in groups.values():
        members.sort(key=lambda f: f.rank)
    total = len(report.features)
    fig, axes = plt.subplots(
        len(groups), 1, figsize=(7, 1.0 + 0.45 * total + 0.6 * len(groups)), squeeze=False
    )
    for ax, (group, members) in zip(axes[:, 0], sorted(groups.items())):
        names = [f.name for f in members]
        scores = [f.ds for f in members]
        colors = ["tab:blue" if f.selected else "lightgray" for f in members]
        y = np.arange(len(members))
        ax.barh(y, scores, color=colors)
        ax.set_yticks(y)
        ax.set_yticklabels(names, fontsize=9)
        ax.invert_yaxis()
        ax.set_title(group, fontsize=10)
        ax.set_xlabel("domain sensitivity")
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
    return path


def save_eval_figure(reports: list[EvalReport], path: str) -> str:
    """Per-domain AUC bars, one bar group per domain plus Overall."""
    if not reports:
        raise ValueError("nothing to plot")
    num_domains = len(reports[0].domain_auc)
    segments = [f"domain {k}" for k in range(num_domains)] + ["Overall"]
    x = np.arange(len(segments))
    width = 0.8 / len(reports)
    fig, ax = plt.subplots(figsize=(max(6, len(segments) * 1.2), 3.5))
    for i, rep in enumerate(reports):
        vals = [a if a is not None else np.nan for a in rep.domain_auc] + [rep.overall_auc]
        label = rep.variant or f"model {i}"
        ax.bar(x + (i - (len(reports) - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(segments, fontsize=9)
    ax.set_ylabel("AUC")
    lo = min(
        [v for r in reports for v in r.domain_auc if v is not None]
        + [r.overall_auc for r in reports]
    )
    ax.set_ylim(max(0.0, lo - 0.05), 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
    return path


def save_study_figure(result: StudyResult, path: str) -> str:
    """Mean per-domain AUC of each study variant as grouped bars."""
    names = list(result.variants)
    segments = [f"domain {k}" for k in range(result.num_domains)] + ["Overall"]
    x = np.arange(len(segments))
    width = 0.8 / len(names)
    overall = result.mean_overall()
    fig, ax = plt.subplots(figsize=(max(6, len(segments) * 1.4), 3.8))
    lows = []
    for i, name in enumerate(names):
        dom = result.mean_domain(name)
        vals = [v if v is not None else np.nan for v in dom] + [overall[name]]
        lows += [v for v in vals if np.isfinite(v)]
        ax.bar(x + (i - (len(names) - 1) / 2) * width, vals, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(segments, fontsize=9)
    ax.set_ylabel(f"mean AUC over {len(result.seeds)} seeds")
    ax.set_ylim(max(0.0, min(lows) - 0.05), 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
    return path


def sensitivity_table(report: SensitivityReport) -> str:
    """Plain-text ranking table, one block per feature group."""
    lines: list[str] = []
    groups: dict[str, list] = {}
    for f in report.features:
        groups.setdefault(f.group, []).append(f)
    for group in sorted(groups):
        members = sorted(groups[group], key=lambda f: f.rank)
        lines.append(group)
        lines.append(f"  {'rank':>4} {'feature':<20} {'DS':>10} selected")
        for f in members:
            mark = "*" if f.selected else ""
            lines.append(f"  {f.rank:>4} {f.name:<20} {f.ds:>10.5f} {mark:>8}")
    return "\n".join(lines)
