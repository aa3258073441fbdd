"""Report emission: JSON and CSV writers plus rendered figures.

JSON files carry every number at full round-trip precision (re-reading a
report reproduces the estimates bitwise).  The CSV variant is the flattened
parameter table.  When an output path is known, a small set of diagnostic
figures is rendered next to it (suppressible); the matplotlib import is
deferred so that headless numeric use never touches a plotting backend.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .blocks import PdCheck, UniformBlock, expand, is_positive_definite
from .estimation import ThetaEstimate, theta_names, upper_indices, wald_ci
from .simulation import SimReport

__all__ = [
    "estimate_report",
    "flatten_parameters",
    "write_json",
    "write_theta_csv",
    "write_sim_csv",
    "render_estimate_figures",
    "render_sim_figures",
]

VERSION = "0.1.0"


def _listify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def estimate_report(
    theta: ThetaEstimate,
    level: float = 0.95,
    seed: int | None = None,
    lam: float | None = None,
    extra: dict | None = None,
    pd_check: PdCheck | None = None,
    coords: UniformBlock | None = None,
) -> dict:
    """Assemble the standard report document for one estimate.

    ``coords`` overrides the reported coordinates (used for thresholded or
    precision output); standard errors and intervals appear when the
    estimate carries them.
    """
    use = coords if coords is not None else theta.coords
    part = use.partition
    k = part.count
    pd_res = pd_check if pd_check is not None else is_positive_definite(use)
    doc: dict = {
        "partition": list(part.sizes),
        "theta": {"a": use.a.tolist(), "b": use.b.tolist()},
    }
    if theta.se_a is not None and theta.se_b is not None:
        lo_a, hi_a = wald_ci(use.a, theta.se_a, level)
        lo_b, hi_b = wald_ci(use.b, theta.se_b, level)
        doc["se"] = {"a": theta.se_a.tolist(), "b": theta.se_b.tolist()}
        doc["ci"] = {
            "level": level,
            "lower": {"a": _listify(lo_a), "b": _listify(lo_b)},
            "upper": {"a": _listify(hi_a), "b": _listify(hi_b)},
        }
    doc["pd"] = {"is_pd": bool(pd_res.is_pd), "min_eig": float(pd_res.min_eigenvalue)}
    if lam is not None:
        doc["lambda"] = float(lam)
    if extra:
        doc.update(extra)
    doc["meta"] = {
        "n": theta.n,
        "p": part.total,
        "K": k,
        "q": part.n_params,
        "seed": seed,
        "version": VERSION,
    }
    return doc


def flatten_parameters(doc: dict) -> list[dict]:
    """Per-parameter rows (name, estimate, se, ci bounds) from a report."""
    a = np.asarray(doc["theta"]["a"], dtype=float)
    b = np.asarray(doc["theta"]["b"], dtype=float)
    k = a.shape[0]
    names = theta_names(k)
    iu = upper_indices(k)
    values = list(a) + [b[i][j] for i, j in iu]
    se = doc.get("se")
    ci = doc.get("ci")
    rows = []
    for idx, (name, val) in enumerate(zip(names, values)):
        row = {"name": name, "estimate": float(val), "se": "", "ci_lo": "", "ci_hi": ""}
        if se is not None:
            flat_se = list(se["a"]) + [se["b"][i][j] for i, j in iu]
            row["se"] = float(flat_se[idx])
        if ci is not None:
            lo = list(ci["lower"]["a"]) + [ci["lower"]["b"][i][j] for i, j in iu]
            hi = list(ci["upper"]["a"]) + [ci["upper"]["b"][i][j] for i, j in iu]
            row["ci_lo"] = float(lo[idx])
            row["ci_hi"] = float(hi[idx])
        rows.append(row)
    return rows


def write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_theta_csv(doc: dict, path: str | Path) -> None:
    rows = flatten_parameters(doc)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["name", "estimate", "se", "ci_lo", "ci_hi"])
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(v) if isinstance(v, float) else v for key, v in row.items()})


def write_sim_csv(report: SimReport, path: str | Path) -> None:
    """Parameter table of a simulation report; losses go to a sibling file."""
    path = Path(path)
    cols = ["name", "truth", "estimate_mean", "arb_pct", "abs_bias_x100", "mcsd_x100", "ase_x100", "cp_pct"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for rec in report.parameters:
            writer.writerow({c: ("" if rec[c] is None else repr(rec[c]) if isinstance(rec[c], float) else rec[c]) for c in cols})
    loss_path = path.with_name(path.stem + "_losses.csv")
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "frobenius_mean", "spectral_mean", "frobenius_median", "failures"])
        for method, vals in report.losses.items():
            writer.writerow([
                method,
                "" if vals["frobenius_mean"] is None else repr(vals["frobenius_mean"]),
                "" if vals["spectral_mean"] is None else repr(vals["spectral_mean"]),
                "" if vals["frobenius_median"] is None else repr(vals["frobenius_median"]),
                vals["failures"],
            ])


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_estimate_figures(doc: dict, coords: UniformBlock, out_stem: str | Path) -> list[Path]:
    """Heatmap of the expanded estimate and a per-parameter interval plot."""
    plt = _pyplot()
    out_stem = Path(out_stem)
    written: list[Path] = []

    dense = expand(coords)
    sizes = coords.partition.sizes
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    vmax = np.abs(dense).max() or 1.0
    im = ax.imshow(dense, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    edge = 0
    for s in sizes[:-1]:
        edge += s
        ax.axhline(edge - 0.5, color="k", lw=0.5)
        ax.axvline(edge - 0.5, color="k", lw=0.5)
    ax.set_title("estimated covariance")
    fig.colorbar(im, ax=ax, shrink=0.85)
    path = out_stem.with_name(out_stem.name + "_heatmap.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    rows = flatten_parameters(doc)
    if rows and rows[0]["se"] != "":
        est = np.array([r["estimate"] for r in rows])
        lo = np.array([r["ci_lo"] for r in rows], dtype=float)
        hi = np.array([r["ci_hi"] for r in rows], dtype=float)
        xs = np.arange(len(rows))
        fig, ax = plt.subplots(figsize=(max(5.0, 0.28 * len(rows)), 3.6))
        ax.errorbar(xs, est, yerr=[est - lo, hi - est], fmt="o", ms=3, capsize=2, lw=1)
        ax.axhline(0.0, color="grey", lw=0.6)
        ax.set_xticks(xs)
        ax.set_xticklabels([r["name"] for r in rows], rotation=90, fontsize=6)
        ax.set_ylabel("estimate")
        ax.set_title("coordinate estimates with confidence intervals")
        path = out_stem.with_name(out_stem.name + "_params.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def render_sim_figures(report: SimReport, out_stem: str | Path) -> list[Path]:
    """Loss comparison, coverage-per-parameter and SD-vs-SE scatter."""
    plt = _pyplot()
    out_stem = Path(out_stem)
    written: list[Path] = []

    methods = [m for m in report.losses if report.losses[m]["frobenius_mean"] is not None]
    if methods:
        fro = [report.losses[m]["frobenius_mean"] for m in methods]
        spe = [report.losses[m]["spectral_mean"] for m in methods]
        xs = np.arange(len(methods))
        fig, ax = plt.subplots(figsize=(max(4.5, 1.1 * len(methods)), 3.4))
        ax.bar(xs - 0.18, fro, width=0.36, label="Frobenius")
        ax.bar(xs + 0.18, spe, width=0.36, label="spectral")
        ax.set_yscale("log")
        ax.set_xticks(xs)
        ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
        ax.set_ylabel("mean loss (log scale)")
        ax.set_title(f"{report.kind}: matrix-norm losses, n={report.n}")
        ax.legend(fontsize=8)
        path = out_stem.with_name(out_stem.name + "_losses.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if report.parameters:
        cp = np.array([r["cp_pct"] for r in report.parameters])
        xs = np.arange(cp.shape[0])
        fig, ax = plt.subplots(figsize=(max(5.0, 0.25 * cp.shape[0]), 3.2))
        ax.axhspan(92, 98, color="0.92")
        ax.axhline(100 * report.level, color="grey", lw=0.8, ls="--")
        ax.plot(xs, cp, "o", ms=3)
        ax.set_ylim(min(88, cp.min() - 1), 100)
        ax.set_xticks(xs)
        ax.set_xticklabels([r["name"] for r in report.parameters], rotation=90, fontsize=6)
        ax.set_ylabel("coverage (%)")
        ax.set_title("empirical coverage per coordinate")
        path = out_stem.with_name(out_stem.name + "_coverage.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

        mcsd = np.array([r["mcsd_x100"] for r in report.parameters])
        ase = np.array([r["ase_x100"] for r in report.parameters])
        fig, ax = plt.subplots(figsize=(3.8, 3.8))
        top = max(mcsd.max(), ase.max()) * 1.05 + 1e-12
        ax.plot([0, top], [0, top], color="grey", lw=0.8)
        ax.plot(mcsd, ase, "o", ms=4)
        ax.set_xlabel("Monte Carlo SD (x100)")
        ax.set_ylabel("average plug-in SE (x100)")
        ax.set_title("SD versus SE")
        path = out_stem.with_name(out_stem.name + "_sd_vs_se.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
