"""Move latent pixels along a MotionField (inverse-map gather)."""

import numpy as np

from .errors import ShapeError
from .tensorio import as_latent

__all__ = ["apply_permutation", "warp_grid"]


def _bilinear(frame, u, v):
    # frame: (C, h, w); u, v: (h, w) source coords already known in-bounds or masked.
    c, h, w = frame.shape
    u = np.clip(np.nan_to_num(u), 0.0, w - 1)
    v = np.clip(np.nan_to_num(v), 0.0, h - 1)
    u0 = np.minimum(np.floor(u).astype(np.int64), w - 1)
    v0 = np.minimum(np.floor(v).astype(np.int64), h - 1)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    a = u - u0
    b = v - v0
    # lerp form keeps constant fields exact
    top = frame[:, v0, u0] + a * (frame[:, v0, u1] - frame[:, v0, u0])
    bottom = frame[:, v1, u0] + a * (frame[:, v1, u1] - frame[:, v1, u0])
    return top + b * (bottom - top)


def apply_permutation(z, field):
    """Gather every frame of ``z`` through ``field``.

    Returns ``(z_updated, omega)``. New-perspective pixels are left at 0 and
    ``omega`` is ``field.new_mask``.
    """
    z = as_latent(z)
    n, c, h, w = z.shape
    if field.shape != (n, h, w):
        raise ShapeError(field.shape, (n, h, w), "motion field")
    omega = field.new_mask
    out = np.zeros_like(z)
    if field.interpolation == "nearest":
        rows, cols = field.source_index()
        for i in range(n):
            keep = ~omega[i]
            out[i][:, keep] = z[i][:, rows[i][keep], cols[i][keep]]
    else:
        for i in range(n):
            vals = _bilinear(z[i], field.inverse[i, ..., 0], field.inverse[i, ..., 1])
            out[i] = np.where(omega[i], 0.0, vals)
    return out, omega.copy()


def warp_grid(grid, field):
    """Carry a boolean (N, h, w) grid through ``field`` with nearest sampling.

    New-perspective pixels come out False.
    """
    grid = np.asarray(grid, dtype=bool)
    if grid.shape != field.shape:
        raise ShapeError(field.shape, grid.shape, "grid")
    u = np.nan_to_num(field.inverse[..., 0], nan=-1.0)
    v = np.nan_to_num(field.inverse[..., 1], nan=-1.0)
    n, h, w = grid.shape
    col = np.clip(np.floor(u + 0.5).astype(np.int64), 0, w - 1)
    row = np.clip(np.floor(v + 0.5).astype(np.int64), 0, h - 1)
    frames = np.arange(n)[:, None, None]
    return grid[frames, row, col] & ~field.new_mask
