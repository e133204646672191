"""Foreground masks from precomputed cross-attention maps.

Attention maps arrive as arrays of shape ``(N, h*w, L)`` (or as LMT files
of kind 2 whose channel axis holds the L tokens).
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import NumericError, ParameterError, ShapeError
from .tensorio import KIND_ATTENTION, KIND_LATENT, read_lmt

__all__ = [
    "AttentionMap",
    "extract_token_map",
    "binarize_refine",
    "MaskShape",
    "synth_mask",
    "load_attention",
]


@dataclass(frozen=True, eq=False)
class AttentionMap:
    data: np.ndarray  # (N, h*w, L)
    height: int
    width: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[1] != self.height * self.width:
            raise ShapeError(("N", self.height * self.width, "L"), d.shape, "attention map")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise NumericError("attention map values must be finite and non-negative")
        object.__setattr__(self, "data", d)

    @property
    def n_tokens(self):
        return self.data.shape[2]

    @classmethod
    def from_spatial(cls, arr):
        """Build from an ``(N, L, h, w)`` array (the LMT payload layout)."""
        arr = np.asarray(arr, dtype=np.float64)
        n, L, h, w = arr.shape
        return cls(arr.reshape(n, L, h * w).transpose(0, 2, 1), h, w)


def load_attention(path):
    return AttentionMap.from_spatial(read_lmt(path, expect_kind={KIND_ATTENTION, KIND_LATENT}))


def extract_token_map(a, token_index):
    """Token column reshaped row-major to ``(N, h, w)``."""
    if not 0 <= token_index < a.n_tokens:
        raise IndexError(f"token {token_index} out of range [0, {a.n_tokens})")
    n = a.data.shape[0]
    return a.data[:, :, token_index].reshape(n, a.height, a.width)


def binarize_refine(grid, threshold_factor=1.0, refine_window=3):
    """Threshold each frame against ``factor * mean`` and smooth by majority vote.

    A pixel is foreground when strictly above the threshold. The vote counts
    foreground pixels in the ``window x window`` neighbourhood (zero-padded
    at the border); ties keep the thresholded value.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ShapeError(("N", "h", "w"), grid.shape, "grid")
    if not threshold_factor > 0:
        raise ParameterError("threshold_factor", "must be positive")
    if refine_window < 1 or refine_window % 2 == 0:
        raise ParameterError("refine_window", "must be an odd integer >= 1")
    if not np.all(np.isfinite(grid)):
        raise NumericError("attention grid contains non-finite values")
    means = grid.mean(axis=(1, 2), keepdims=True)
    fg = grid > threshold_factor * means
    if refine_window == 1:
        return fg
    return majority_vote(fg, refine_window)


def majority_vote(mask, window):
    k = window * window
    counts = uniform_filter(mask.astype(np.float64), size=(1, window, window), mode="constant") * k
    counts = np.rint(counts)
    out = mask.copy()
    out[counts * 2 > k] = True
    out[counts * 2 < k] = False
    return out


@dataclass(frozen=True)
class MaskShape:
    """Rectangle or ellipse in pixel units.

    ``center`` is ``(row, col)``; ``extents`` are half-sizes ``(rows, cols)``.
    A rectangle covers ``center +- extents`` inclusive; an ellipse covers
    pixels with ``(dr/er)^2 + (dc/ec)^2 <= 1`` (a zero semi-axis admits only
    the centre line).
    """

    kind: str
    center: tuple
    extents: tuple


def synth_mask(shape, n, h, w):
    if shape.kind not in ("rect", "ellipse"):
        raise ParameterError("kind", f"expected 'rect' or 'ellipse', got {shape.kind!r}")
    r0, c0 = (float(v) for v in shape.center)
    er, ec = (float(v) for v in shape.extents)
    if er < 0 or ec < 0:
        raise ParameterError("extents", "must be non-negative")
    if r0 - er < 0 or r0 + er > h - 1 or c0 - ec < 0 or c0 + ec > w - 1:
        raise ParameterError("extents", f"shape exceeds the {h}x{w} frame")
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dr = rr - r0
    dc = cc - c0
    if shape.kind == "rect":
        frame = (np.abs(dr) <= er) & (np.abs(dc) <= ec)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            tr = np.where(er > 0, (dr / er) ** 2, np.where(dr == 0, 0.0, np.inf))
            tc = np.where(ec > 0, (dc / ec) ** 2, np.where(dc == 0, 0.0, np.inf))
        frame = tr + tc <= 1.0
    return np.broadcast_to(frame, (n, h, w)).copy()
