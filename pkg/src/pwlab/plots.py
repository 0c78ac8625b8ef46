"""Figure rendering for the report path.

Each CLI command that writes a delimited table also renders a matching
PNG next to it.  Figures are a convenience view; the CSV/JSON files
remain the data contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def fig_level_norms(level_norms, tail_bound):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ks = np.arange(len(level_norms))
    ax.semilogy(ks, np.maximum(level_norms, 1e-300), "o-", label="||V_k||")
    if tail_bound > 0:
        ax.axhline(tail_bound, color="gray", ls="--", lw=1, label="tail bound")
    ax.set_xlabel("level k")
    ax.set_ylabel("L2 norm")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig_smoothing(rho, bands, n_emp):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for l, table in sorted(rho.items()):
        vals = [table[k] for k in bands]
        ax.plot(bands, np.log2(np.maximum(vals, 1e-300)), "o-",
                label=f"l={l} (N_emp={n_emp[l]:.2f})")
    ax.set_xlabel("band k (|k'| in [2^k, 2^(k+1)))")
    ax.set_ylabel("log2 rho_k")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def fig_trajectory(rows, n):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    rows = list(rows)
    ts = [r[0] for r in rows]
    xs = [r[1] for r in rows]
    segs = [r[-1] for r in rows]
    sc = ax.scatter(ts, xs, c=segs, s=4, cmap="coolwarm")
    ax.set_xlabel("t")
    ax.set_ylabel("x1 (mod 2 pi)")
    fig.colorbar(sc, ax=ax, label="active root")
    fig.tight_layout()
    return fig


def fig_endpoints(points, seeds):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    if points:
        xs = [p[0] for p in points]
        xis = [p[1] for p in points]
        ax.scatter(xs, xis, s=12, label="endpoints")
    if seeds:
        ax.scatter([s[0] for s in seeds], [s[1] for s in seeds],
                   marker="x", color="k", label="seeds")
    ax.set_xlabel("x1")
    ax.set_ylabel("xi1")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig_decay(eps, values, slope=None, label="measure"):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    keep = vals > 0
    ax.loglog(eps[keep], vals[keep], "o-", label=label)
    if slope is not None and keep.any():
        anchor = vals[keep][0] / eps[keep][0] ** slope
        ax.loglog(eps[keep], anchor * eps[keep] ** slope, "--",
                  label=f"slope {slope:.3f}")
    ax.set_xlabel("eps")
    ax.set_ylabel(label)
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig_counting(lam, counts, c_lead, c_second, n):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.plot(lam, counts, lw=1, label="N(lambda)")
    ax.plot(lam, c_lead * lam ** n + c_second * lam ** (n - 1), "--",
            label="two-term fit")
    ax.set_xlabel("lambda")
    ax.set_ylabel("count")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig_ratio_table(bands, ratios_by_p):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for p, ratios in sorted(ratios_by_p.items()):
        ax.plot(bands, ratios, "o-", label=f"p={p}")
    ax.set_xlabel("band k")
    ax.set_ylabel("||u(t)||_p / ||<D>^a u0||_p")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig_bracket_orders(report):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    labels = []
    orders = []
    for pair in report.pairs:
        labels.append(f"({pair.i + 1},{pair.j + 1})")
        if pair.status == "strict":
            orders.append(0)
        elif pair.status == "order":
            orders.append(pair.lambda_star)
        else:
            orders.append(-1)
    ax.bar(labels, orders, color=["tab:red" if o < 0 else "tab:blue"
                                  for o in orders])
    ax.set_ylabel("certified order (0 = never meet, -1 = fail)")
    ax.set_xlabel("root pair")
    fig.tight_layout()
    return fig
