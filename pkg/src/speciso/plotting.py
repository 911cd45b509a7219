"""SVG figures for bound reports and the torus family.

Figures are written with a fixed hash salt and no date metadata so that
identical inputs give byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LOG_RATIO = 1e3

_STYLE = {
    "svg.hashsalt": "speciso",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.markersize": 4,
}


def save_svg(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": _STYLE["svg.hashsalt"]}):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def _wants_log(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x) and x > 0])
    return v.size > 1 and v.max() / v.min() > LOG_RATIO


def plot_bounds(report, path):
    """Normalized eigenvalues lambda_k |Sigma|^(2/n) against every bound and the Weyl line."""
    n = report.n
    area_pow = report.measures.area ** (2.0 / n)
    ks = np.array([r.k for r in report.records])
    series = [("achieved", ks, np.array([r.normalized for r in report.records]), dict(marker="o", color="k"))]
    series.append(("weyl", ks, np.array([r.weyl for r in report.records]), dict(ls="--", color="0.5")))
    rc = [(r.k, r.reilly_chavel) for r in report.records if r.reilly_chavel is not None]
    if rc:
        series.append(("reilly_chavel", np.array([k for k, _ in rc]), np.array([v for _, v in rc]),
                       dict(marker="*", ls="none", markersize=10, color="tab:red")))
    if all(r.euclidean_bound is not None for r in report.records):
        series.append(("euclidean_bound", ks, np.array([r.euclidean_bound for r in report.records]),
                       dict(marker="s", color="tab:blue")))
    series.append(("general_bound", ks, np.array([r.general_bound * area_pow for r in report.records]),
                   dict(marker="^", color="tab:purple")))
    keys = sorted(report.records[0].metric_bounds, key=float) if report.records else []
    for key in keys:
        series.append((f"metric_bound_r0={key}", ks,
                       np.array([r.metric_bounds[key] * area_pow for r in report.records]),
                       dict(marker=".", alpha=0.8)))

    use_log = _wants_log(np.concatenate([s[2] for s in series]))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for name, x, y, kw in series:
            if use_log:
                # numerical zeros (the constant mode) have no place on a log axis
                keep = y > 1e-9 * np.max(np.abs(y))
                x, y = x[keep], y[keep]
            (line,) = ax.plot(x, y, label=name.replace("_", " "), **kw)
            line.set_gid(f"series-{name}")
        if use_log:
            ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel(r"$\lambda_k\,|\Sigma|^{2/n}$")
        ax.set_title(f"{report.mesh}  (I = {report.measures.iso_ratio:.4g})")
        ax.legend(loc="best", fontsize=7)
        save_svg(fig, path)


def plot_counterexample(rows, path):
    """Isoperimetric ratio and normalized lambda_2 along the shrinking-sphere family."""
    i = np.array([r["i"] for r in rows])
    iso = np.array([r["iso_ratio_i"] for r in rows])
    lam = np.array([r["normalized_lambda2"] for r in rows])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        (a,) = ax.plot(i, iso, marker="o", color="tab:blue", label="isoperimetric ratio")
        a.set_gid("series-iso_ratio")
        ax.set_xlabel("i")
        ax.set_ylabel("isoperimetric ratio", color="tab:blue")
        if _wants_log(iso):
            ax.set_yscale("log")
        ax2 = ax.twinx()
        (b,) = ax2.plot(i, lam, marker="s", color="tab:red", label=r"$\lambda_2|\Sigma|^{2/n}$")
        b.set_gid("series-normalized_lambda2")
        ax2.set_ylabel(r"$\lambda_2\,|\Sigma_i|^{2/n}$", color="tab:red")
        lo, hi = lam.min(), lam.max()
        pad = 0.05 * max(abs(hi), 1.0)
        ax2.set_ylim(lo - pad, hi + pad)
        ax2.grid(False)
        save_svg(fig, path)
