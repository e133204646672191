"""Matplotlib figures written next to the CSV outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tensorio import atomic_open  # noqa: E402


def _save(fig, path):
    with atomic_open(path, "wb") as fh:
        fig.savefig(fh, format="png", dpi=110, bbox_inches="tight")
    plt.close(fig)


def displacement_magnitude(field, frame):
    """|F_i(p) - p| over source pixels; NaN (behind the camera) becomes 0."""
    _, h, w = field.shape
    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    fwd = field.forward[frame - 1]
    mag = np.hypot(fwd[..., 0] - uu, fwd[..., 1] - vv)
    return np.nan_to_num(mag, nan=0.0)


def plot_field(field, frame, path):
    mag = displacement_magnitude(field, frame)
    omega = field.new_mask[frame - 1]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.5, 4), layout="constrained")
    # near the vanishing line a few pixels move very far; keep them from washing out the rest
    vmax = float(np.percentile(mag, 98)) or None
    im = ax0.imshow(mag, cmap="viridis", origin="upper", vmin=0, vmax=vmax)
    fig.colorbar(im, ax=ax0, fraction=0.046, pad=0.04, label="displacement (px)")
    _, h, w = field.shape
    step = max(1, min(h, w) // 12)
    vv, uu = np.mgrid[0:h:step, 0:w:step]
    fwd = field.forward[frame - 1, ::step, ::step]
    ax0.quiver(uu, vv, fwd[..., 0] - uu, fwd[..., 1] - vv, color="w", angles="xy", scale_units="xy", scale=1, width=0.004)
    ax0.set_title(f"frame {frame}: forward map")
    ax1.imshow(omega, cmap="gray", vmin=0, vmax=1, origin="upper")
    ax1.set_title(f"new perspective ({int(omega.sum())} px)")
    for ax in (ax0, ax1):
        ax.set_xlabel("u (col)")
        ax.set_ylabel("v (row)")
    _save(fig, path)


def plot_variance_traces(paired_rows, path):
    """``paired_rows``: (ordinal, stage, step, t_train, var_update, var_baseline, n)."""
    rows = list(paired_rows)
    x = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.plot(x, [r[5] for r in rows], label="no update", lw=1.6)
    ax.plot(x, [r[4] for r in rows], label="with update", lw=1.2, ls="--")
    edges = [i for i in range(1, len(rows)) if rows[i][1] != rows[i - 1][1]]
    for e in edges:
        ax.axvline(e - 0.5, color="0.7", lw=0.8)
    ax.set_xlabel("executed DDIM step")
    ax.set_ylabel("predicted-noise variance")
    ax.ticklabel_format(axis="y", useOffset=False)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_run_variance(variances, path):
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.plot(range(len(variances)), [v[3] for v in variances], marker=".", lw=1)
    ax.set_xlabel("executed DDIM step")
    ax.set_ylabel("predicted-noise variance")
    ax.ticklabel_format(axis="y", useOffset=False)
    _save(fig, path)


def plot_snr_mismatch(rows, path):
    """``rows``: (t_true, t_assumed, snr_true, measured, expected)."""
    rows = sorted(rows, key=lambda r: r[2])
    snr = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.semilogx(snr, [r[4] for r in rows], label="closed form", lw=1.6)
    ax.semilogx(snr, [r[3] for r in rows], "o", ms=3, label="Monte-Carlo")
    ax.set_xlabel("input SNR")
    ax.set_ylabel("predicted-noise variance")
    ax.legend(frameon=False)
    _save(fig, path)
