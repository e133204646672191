"""Fill new-perspective pixels from the background and align fills across frames.

Every new-perspective pixel copies the full channel vector of one source
pixel. Sources are drawn uniformly from the eligible (not new, not
foreground) pixels of the same row or column; when a line has none the
sampler falls back to the whole frame background, then to any non-new pixel.
Frames are then aligned: pixels whose canonical (first-frame) coordinate
was already filled in an earlier frame reuse that value.
"""

import enum
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ShapeError, UnfillableFrameError
from .rng import stream
from .tensorio import as_grid, as_latent, write_csv

log = logging.getLogger(__name__)

__all__ = [
    "Kind",
    "AxisPolicy",
    "SampleProvenance",
    "background_sample",
    "cross_frame_align",
    "resample_all",
    "replay_provenance",
    "write_provenance_csv",
]


class Kind(enum.IntEnum):
    ROW = 0
    COLUMN = 1
    FALLBACK_FRAME = 2
    FALLBACK_UNCONSTRAINED = 3
    REUSED = 4

    @property
    def label(self):
        return self.name.lower().replace("_", "-")


class AxisPolicy(str, enum.Enum):
    AUTO = "auto"
    ROW = "row"
    COLUMN = "column"


_FIELDS = ("frame", "row", "col", "kind", "src_frame", "src_row", "src_col")


@dataclass(eq=False)
class SampleProvenance:
    """One record per filled pixel, in (frame, row, col) raster order.

    For sampled kinds ``src_frame == frame``; for ``REUSED`` the source is
    the donor pixel in an earlier frame. ``unconstrained_frames`` lists the
    frames that had to sample from foreground pixels.
    """

    frame: np.ndarray
    row: np.ndarray
    col: np.ndarray
    kind: np.ndarray
    src_frame: np.ndarray
    src_row: np.ndarray
    src_col: np.ndarray
    unconstrained_frames: list = dc_field(default_factory=list)

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(*(z.copy() for _ in _FIELDS))

    @classmethod
    def concat(cls, parts):
        if not parts:
            return cls.empty()
        arrays = [np.concatenate([getattr(p, f) for p in parts]) for f in _FIELDS]
        frames = sorted({f for p in parts for f in p.unconstrained_frames})
        return cls(*arrays, unconstrained_frames=frames)

    def __len__(self):
        return int(self.frame.shape[0])

    def __eq__(self, other):
        if not isinstance(other, SampleProvenance):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS) and (
            self.unconstrained_frames == other.unconstrained_frames
        )

    def as_rows(self):
        for rec in zip(*(getattr(self, f) for f in _FIELDS)):
            f, r, c, k, sf, sr, sc = (int(v) for v in rec)
            yield f, r, c, Kind(k).label, sr, sc, sf

    def pairs(self):
        """``(target_index, source_index)`` tuples of (frame, row, col) arrays."""
        return (self.frame, self.row, self.col), (self.src_frame, self.src_row, self.src_col)


def _axis_preference(omega_f, policy):
    """Boolean (h, w): True where the pixel should sample along its row."""
    h, w = omega_f.shape
    if policy is AxisPolicy.ROW:
        return np.ones((h, w), dtype=bool)
    if policy is AxisPolicy.COLUMN:
        return np.zeros((h, w), dtype=bool)
    full_cols = omega_f.all(axis=0)
    full_rows = omega_f.all(axis=1)
    if np.array_equal(omega_f & full_cols[None, :], omega_f):
        return np.ones((h, w), dtype=bool)  # vertical strip(s)
    if np.array_equal(omega_f & full_rows[:, None], omega_f):
        return np.zeros((h, w), dtype=bool)  # horizontal strip(s)
    # mixed border: use the axis that points towards the frame interior
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dx = np.abs(cc + 0.5 - w / 2.0) / (w / 2.0)
    dy = np.abs(rr + 0.5 - h / 2.0) / (h / 2.0)
    return dx >= dy


def _pick_along(lines, others, along_row, eligible, u, src_r, src_c):
    """Resolve pixels (lines[k], others[k]) from their row (or column).

    Returns a bool array of which pixels found an eligible source.
    """
    found = np.zeros(lines.shape[0], dtype=bool)
    table = eligible if along_row else eligible.T
    for line in np.unique(lines):
        cand = np.flatnonzero(table[line])
        if cand.size == 0:
            continue
        sel = lines == line
        if along_row:
            draw = u[line, others[sel]]
        else:
            draw = u[others[sel], line]
        idx = np.minimum((draw * cand.size).astype(np.int64), cand.size - 1)
        picked = cand[idx]
        if along_row:
            src_r[sel] = line
            src_c[sel] = picked
        else:
            src_r[sel] = picked
            src_c[sel] = line
        found[sel] = True
    return found


def _pick_frame(pool, u_vals, w):
    flat = np.flatnonzero(pool)
    idx = np.minimum((u_vals * flat.size).astype(np.int64), flat.size - 1)
    chosen = flat[idx]
    return chosen // w, chosen % w


def _sample_frame(i, omega_f, mask_f, policy, seed):
    h, w = omega_f.shape
    rows, cols = np.nonzero(omega_f)
    m = rows.shape[0]
    kind = np.full(m, -1, dtype=np.int64)
    src_r = np.full(m, -1, dtype=np.int64)
    src_c = np.full(m, -1, dtype=np.int64)
    if m == 0:
        return rows, cols, kind, src_r, src_c, False
    if omega_f.all():
        raise UnfillableFrameError(i)
    u = stream(seed, "resample", i).random((h, w))
    eligible = ~omega_f & ~mask_f
    prefer_row = _axis_preference(omega_f, policy)[rows, cols]

    attempts = [(prefer_row, True), (~prefer_row, False)]
    if policy is AxisPolicy.AUTO:
        attempts += [(~prefer_row, True), (prefer_row, False)]
    for want, along_row in attempts:
        sel = np.flatnonzero(want & (kind < 0))
        if sel.size == 0:
            continue
        lines, others = (rows[sel], cols[sel]) if along_row else (cols[sel], rows[sel])
        sr = np.empty(sel.size, dtype=np.int64)
        sc = np.empty(sel.size, dtype=np.int64)
        ok = _pick_along(lines, others, along_row, eligible, u, sr, sc)
        hit = sel[ok]
        src_r[hit], src_c[hit] = sr[ok], sc[ok]
        kind[hit] = Kind.ROW if along_row else Kind.COLUMN

    warned = False
    rest = np.flatnonzero(kind < 0)
    if rest.size:
        pool, k = eligible, Kind.FALLBACK_FRAME
        if not pool.any():
            pool, k, warned = ~omega_f, Kind.FALLBACK_UNCONSTRAINED, True
            log.warning("frame %d: no background pixel available, sampling from foreground", i)
        src_r[rest], src_c[rest] = _pick_frame(pool, u[rows[rest], cols[rest]], w)
        kind[rest] = k
    return rows, cols, kind, src_r, src_c, warned


def background_sample(z_updated, omega, mask, axis_policy="auto", seed=0):
    """Fill every new-perspective pixel independently per frame.

    ``mask`` is the foreground mask in the coordinates of ``z_updated``.
    Returns ``(filled, provenance)``; the input is not modified.
    """
    z = as_latent(z_updated)
    n, c, h, w = z.shape
    omega = as_grid(omega, (n, h, w))
    mask = np.zeros((n, h, w), dtype=bool) if mask is None else as_grid(mask, (n, h, w))
    policy = AxisPolicy(axis_policy)
    out = z.copy()
    parts = []
    for i in range(n):
        rows, cols, kind, sr, sc, warned = _sample_frame(i, omega[i], mask[i], policy, seed)
        if rows.size == 0:
            continue
        out[i][:, rows, cols] = z[i][:, sr, sc]
        frames = np.full(rows.shape, i, dtype=np.int64)
        parts.append(
            SampleProvenance(frames, rows, cols, kind, frames.copy(), sr, sc, [i] if warned else [])
        )
    return out, SampleProvenance.concat(parts)


def _canonical_keys(field, frames, rows, cols):
    inv = field.inverse[frames, rows, cols]
    ok = np.all(np.isfinite(inv), axis=-1)
    keys = np.floor(np.nan_to_num(inv) + 0.5).astype(np.int64)
    return keys[:, 1], keys[:, 0], ok  # (key_row, key_col, has_key)


def cross_frame_align(filled, provenance, field):
    """Reuse earlier frames' fills for pixels with an already-filled canonical key.

    Frames are committed in ascending order; the first writer of a key wins.
    Returns ``(aligned, provenance)``.
    """
    out = np.array(filled, copy=True)
    if len(provenance) == 0:
        return out, provenance
    if out.shape[0] != field.shape[0] or out.shape[2:] != field.shape[1:]:
        raise ShapeError(field.shape, (out.shape[0],) + out.shape[2:], "motion field")
    prov = SampleProvenance(
        *(getattr(provenance, f).copy() for f in _FIELDS),
        unconstrained_frames=list(provenance.unconstrained_frames),
    )
    key_r, key_c, has_key = _canonical_keys(field, prov.frame, prov.row, prov.col)
    store = {}
    bounds = np.searchsorted(prov.frame, np.arange(field.shape[0] + 1))
    for i in range(field.shape[0]):
        lo, hi = bounds[i], bounds[i + 1]
        if lo == hi:
            continue
        reuse = []
        for k in range(lo, hi):
            if not has_key[k]:
                continue
            donor = store.get((key_r[k], key_c[k]))
            if donor is not None:
                reuse.append(k)
                prov.kind[k] = Kind.REUSED
                prov.src_frame[k], prov.src_row[k], prov.src_col[k] = donor
        if reuse:
            idx = np.asarray(reuse)
            out[i][:, prov.row[idx], prov.col[idx]] = out[prov.src_frame[idx], :, prov.src_row[idx], prov.src_col[idx]].T
        for k in range(lo, hi):
            if has_key[k]:
                store.setdefault((key_r[k], key_c[k]), (i, prov.row[k], prov.col[k]))
    return out, prov


def resample_all(z_updated, omega, mask, field, seed=0, axis_policy="auto"):
    """Background sampling followed by cross-frame alignment."""
    filled, prov = background_sample(z_updated, omega, mask, axis_policy, seed)
    return cross_frame_align(filled, prov, field)


def replay_provenance(x, provenance):
    """Apply the copies recorded in ``provenance`` to another latent ``x``.

    Reproduces exactly what the resampler did to the latent it filled, so a
    companion array (e.g. a reference clean latent) can follow the update.
    """
    out = np.array(x, copy=True)
    p = provenance
    if len(p) == 0:
        return out
    sampled = p.kind != Kind.REUSED
    out[p.frame[sampled], :, p.row[sampled], p.col[sampled]] = x[
        p.src_frame[sampled], :, p.src_row[sampled], p.src_col[sampled]
    ]
    reused = np.flatnonzero(~sampled)
    if reused.size:
        for f in np.unique(p.frame[reused]):
            sel = reused[p.frame[reused] == f]
            out[f, :, p.row[sel], p.col[sel]] = out[p.src_frame[sel], :, p.src_row[sel], p.src_col[sel]]
    return out


def write_provenance_csv(provenance, path):
    rows = [(f, r, c, k, sr, sc) for f, r, c, k, sr, sc, _ in provenance.as_rows()]
    write_csv(path, ("frame", "row", "col", "kind", "src_row", "src_col"), rows)
