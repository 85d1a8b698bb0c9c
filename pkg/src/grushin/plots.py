"""Figure rendering for experiment reports.

All figures go straight to files through the Agg backend and are written
without embedded timestamps, so re-running a seeded experiment reproduces
byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from grushin.asymptotics import AsymptoticsReport, MaxProbReport, TaylorFit

_SAVE_OPTS = {"dpi": 120, "metadata": {"Date": None}, "bbox_inches": "tight"}


def plot_report(report: AsymptoticsReport, path: str, title: str, ylabel: str) -> None:
    """Scaled values against T with error bars, the analytic target, and the
    extrapolated limit at T = 0."""
    rows = [r for r in report.rows if np.isfinite(r[1])]
    fig, ax = plt.subplots(figsize=(6, 4))
    if rows:
        ts = [r[0] for r in rows]
        vals = [r[1] for r in rows]
        errs = [r[2] for r in rows]
        ax.errorbar(ts, vals, yerr=errs, fmt="o-", capsize=3, label="estimate")
    ax.axhline(report.theory_value, color="k", ls="--", lw=1, label="theory")
    if np.isfinite(report.fitted_limit):
        ax.plot([0.0], [report.fitted_limit], "r*", ms=10, label="extrapolated")
    ax.set_xlabel("T")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def plot_max_prob(report: MaxProbReport, path: str) -> None:
    """Empirical bridge-max tail probabilities with confidence intervals
    against the analytic upper and lower bounds."""
    rows = report.rows
    a = [r.a for r in rows]
    est = [r.prob_ge for r in rows]
    lo = [r.prob_ge - r.ci_low for r in rows]
    hi = [r.ci_high - r.prob_ge for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(a, est, yerr=[lo, hi], fmt="o", capsize=3, label="estimate")
    if any(np.isfinite(r.upper_ge) for r in rows):
        ax.plot(a, [r.upper_ge for r in rows], "v--", label="upper bound")
        ax.plot(a, [r.lower_ge for r in rows], "^--", label="lower bound")
    if any(np.isfinite(r.series_prob) for r in rows):
        ax.plot(a, [r.series_prob for r in rows], "kx", label="exact series")
    ax.set_xlabel("a")
    ax.set_ylabel("P(max >= a)")
    ax.set_yscale("log")
    ax.set_title("bridge maximum tail")
    ax.legend()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def plot_taylor(fit: TaylorFit, path: str) -> None:
    """Sampled values of the averaged functional against a, with the fitted
    even polynomial and the exact value at a = 0."""
    a = np.asarray(fit.a_values)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(a, fit.f_values, yerr=fit.f_stderrs, fmt="o", capsize=3, label="estimate")
    aa = np.linspace(0.0, float(a.max()), 200)
    curve = np.full_like(aa, fit.f0_exact)
    for order, coeff, _ in fit.even_coeffs:
        curve = curve + coeff * aa**order
    ax.plot(aa, curve, "-", label="even fit")
    ax.plot([0.0], [fit.f0_exact], "k*", ms=10, label="exact at 0")
    ax.set_xlabel("a")
    ax.set_ylabel("f(a)")
    ax.set_title("small-parameter expansion")
    ax.legend()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
