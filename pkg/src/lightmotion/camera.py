"""Per-frame coordinate maps for panning, zooming and rotation.

Coordinates are ``(u, v)`` = (column, row) in latent pixels. Frame indices
``i`` run from 1 to N. A frame map ``F_i`` sends a source pixel of the
original latent to its position in the updated latent; ``G_i`` is its
inverse and is what the gather in :mod:`lightmotion.permute` evaluates.

Rotation uses the homography ``K R K^-1``: under a fixed camera centre the
per-pixel depth cancels, so the map is evaluated in closed form.
:func:`project_with_depth` keeps the explicit back-project / rotate /
project route around as a brute-force check.
"""

import enum
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DegenerateProjectionError, ParameterError

__all__ = [
    "Axis",
    "RotationRamp",
    "CameraParams",
    "MotionField",
    "pan_map",
    "zoom_map",
    "gamma",
    "rotate_map",
    "rotation_matrix",
    "project_with_depth",
    "build_motion_field",
    "PRESETS",
    "preset",
]

DEN_EPS = 1e-9


class Axis(str, enum.Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


class RotationRamp(str, enum.Enum):
    APPENDIX_FORMULA = "appendix_formula"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class CameraParams:
    """User camera controls.

    ``x``/``y`` are total pan ratios of width/height, ``z`` the zoom ratio and
    ``theta`` the rotation half-range in degrees. ``cx``/``cy`` default to the
    frame centre when left as ``None``.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    theta: float = 0.0
    axis: Axis = Axis.Y
    fx: float = 15.0
    fy: float = 15.0
    cx: float = None
    cy: float = None
    rotation_ramp: RotationRamp = RotationRamp.APPENDIX_FORMULA

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not (math.isfinite(value) and abs(value) <= 1.0):
                raise ParameterError(name, f"must lie in [-1, 1], got {value}")
        if not math.isfinite(self.theta):
            raise ParameterError("theta", "must be finite")
        for name in ("fx", "fy"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, "focal length must be positive")
        object.__setattr__(self, "axis", Axis(self.axis))
        object.__setattr__(self, "rotation_ramp", RotationRamp(self.rotation_ramp))

    def center(self, h, w):
        cx = w / 2.0 if self.cx is None else float(self.cx)
        cy = h / 2.0 if self.cy is None else float(self.cy)
        return cx, cy

    @property
    def is_identity(self):
        return self.x == 0 and self.y == 0 and self.z == 0 and self.theta == 0

    def to_dict(self):
        d = asdict(self)
        d["axis"] = self.axis.value
        d["rotation_ramp"] = self.rotation_ramp.value
        return d


def _check_frame(i, n):
    if not 1 <= i <= n:
        raise ParameterError("i", f"frame index {i} outside [1, {n}]")


def pan_map(params, i, n, h, w):
    """Translation ``(du, dv)`` applied to every source coordinate of frame ``i``."""
    _check_frame(i, n)
    return params.x * w * i / n, params.y * h * i / n


def zoom_map(params, i, n):
    """Scale factor ``1 + z * i / N`` about the optical centre."""
    _check_frame(i, n)
    s = 1.0 + params.z * i / n
    if s <= 0:
        raise ParameterError("z", f"zoom collapses frame {i} (scale {s})")
    return s


def gamma(params, i, n):
    """Rotation angle (degrees) of frame ``i``."""
    _check_frame(i, n)
    theta = params.theta
    if params.rotation_ramp is RotationRamp.APPENDIX_FORMULA:
        return (2.0 * theta / n) * (i - n)
    if n == 1:
        return 0.0
    return -theta + 2.0 * theta * (i - 1) / (n - 1)


def rotation_matrix(gamma_deg, axis=Axis.Y):
    """3x3 rotation about ``axis``; an array of angles gives a ``(..., 3, 3)`` stack."""
    g = np.radians(np.asarray(gamma_deg, dtype=np.float64))
    c, s = np.cos(g), np.sin(g)
    one, zero = np.ones_like(g), np.zeros_like(g)
    axis = Axis(axis)
    if axis is Axis.X:
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis is Axis.Y:
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _rotate_raw(u, v, gamma_deg, axis, fx, fy, cx, cy):
    """Closed-form rotated coordinates plus the projective denominator."""
    g = np.radians(gamma_deg)
    c, s = np.cos(g), np.sin(g)
    du = u - cx
    dv = v - cy
    if axis is Axis.Y:
        den = -s * du + c * fx
        u2 = fx * (c * du + s * fx) / den + cx
        v2 = fx * dv / den + cy
    elif axis is Axis.X:
        den = s * dv + c * fy
        u2 = fy * du / den + cx
        v2 = fy * (c * dv - s * fy) / den + cy
    else:
        den = np.ones(np.broadcast(du, g).shape)
        u2 = c * du - s * (fx / fy) * dv + cx
        v2 = s * (fy / fx) * du + c * dv + cy
    return u2, v2, den


def rotate_map(params, gamma_deg, u, v, h, w):
    """Apply the depth-free rotation map for angle ``gamma_deg`` to ``(u, v)``.

    Raises DegenerateProjectionError if any in-bounds input pixel hits a
    vanishing denominator. Pixels that land behind the camera (negative
    denominator) come back as NaN.
    """
    cx, cy = params.center(h, w)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u2, v2, den = _rotate_raw(u, v, gamma_deg, params.axis, params.fx, params.fy, cx, cy)
    inb = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    if np.any(inb & (np.abs(den) < DEN_EPS)):
        raise DegenerateProjectionError(gamma_deg)
    behind = den < 0
    if np.any(behind):
        u2 = np.where(behind, np.nan, u2)
        v2 = np.where(behind, np.nan, v2)
    return u2, v2


def project_with_depth(u, v, depth, gamma_deg, axis, fx, fy, cx, cy):
    """Back-project with explicit depth, rotate the point cloud, re-project.

    Literal three-step route; exists to cross-check :func:`rotate_map`.
    ``gamma_deg`` and ``depth`` broadcast against ``u``/``v``.
    """
    u, v, d, g = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (u, v, depth, gamma_deg))
    )
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    pix = np.stack([u, v, np.ones_like(u)], axis=-1)
    cam = np.linalg.solve(K, pix.reshape(-1, 3).T).T.reshape(pix.shape) * d[..., None]
    rotated = np.einsum("...ij,...j->...i", rotation_matrix(g, axis), cam)
    proj = rotated @ K.T
    return proj[..., 0] / proj[..., 2], proj[..., 1] / proj[..., 2]


@dataclass(frozen=True, eq=False)
class MotionField:
    """Dense per-frame forward/inverse maps and the new-perspective mask.

    ``forward[i - 1, r, c]`` is ``(u', v')`` for source pixel ``(r, c)``;
    ``inverse[i - 1, r, c]`` is the source ``(u, v)`` of target pixel
    ``(r, c)`` (NaN when it has none). ``new_mask`` is True where the target
    has no in-bounds source. ``interpolation`` is ``"nearest"`` or
    ``"bilinear"``.
    """

    params: CameraParams
    forward: np.ndarray
    inverse: np.ndarray
    new_mask: np.ndarray
    interpolation: str

    def __post_init__(self):
        for a in (self.forward, self.inverse, self.new_mask):
            a.setflags(write=False)

    @property
    def shape(self):
        return self.new_mask.shape

    def source_index(self):
        """Integer source (row, col) per target pixel, -1 where out of bounds.

        Only meaningful for nearest-neighbour fields.
        """
        u = self.inverse[..., 0]
        v = self.inverse[..., 1]
        col = np.where(self.new_mask, -1, np.floor(np.nan_to_num(u) + 0.5)).astype(np.int64)
        row = np.where(self.new_mask, -1, np.floor(np.nan_to_num(v) + 0.5)).astype(np.int64)
        return row, col


def _frame_maps(params, i, n, h, w, uu, vv):
    du, dv = pan_map(params, i, n, h, w)
    s = zoom_map(params, i, n)
    cx, cy = params.center(h, w)
    g = gamma(params, i, n) if params.theta != 0 else 0.0

    # forward: rotate -> zoom -> pan
    if g != 0.0:
        fu, fv = rotate_map(params, g, uu, vv, h, w)
    else:
        fu, fv = uu, vv
    fu = cx + s * (fu - cx) + du
    fv = cy + s * (fv - cy) + dv

    # inverse: unpan -> unzoom -> unrotate (rotation by -gamma)
    iu = cx + (uu - du - cx) / s
    iv = cy + (vv - dv - cy) / s
    if g != 0.0:
        iu, iv = rotate_map(params, -g, iu, iv, h, w)
    return fu, fv, iu, iv


def _out_of_bounds(iu, iv, h, w, interpolation):
    bad = ~(np.isfinite(iu) & np.isfinite(iv))
    u = np.nan_to_num(iu, nan=-1.0)
    v = np.nan_to_num(iv, nan=-1.0)
    if interpolation == "nearest":
        col = np.floor(u + 0.5)
        row = np.floor(v + 0.5)
        return bad | (col < 0) | (col >= w) | (row < 0) | (row >= h)
    tol = 1e-9
    return bad | (u < -tol) | (u > w - 1 + tol) | (v < -tol) | (v > h - 1 + tol)


def build_motion_field(params, n, h, w):
    """Compose rotate -> zoom -> pan for every frame and mark Omega.

    Nearest-neighbour sampling is used unless the motion has a zoom
    component, in which case sampling is bilinear. A target pixel is new
    perspective when its (rounded, for nearest) source falls outside the
    frame, or outside ``[0, w-1] x [0, h-1]`` for bilinear sampling.
    """
    if n < 1 or h < 1 or w < 1:
        raise ParameterError("shape", f"N, h, w must be positive, got {(n, h, w)}")
    interpolation = "bilinear" if params.z != 0 else "nearest"
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    forward = np.empty((n, h, w, 2))
    inverse = np.empty((n, h, w, 2))
    new_mask = np.empty((n, h, w), dtype=bool)
    for i in range(1, n + 1):
        fu, fv, iu, iv = _frame_maps(params, i, n, h, w, uu, vv)
        forward[i - 1, ..., 0] = fu
        forward[i - 1, ..., 1] = fv
        inverse[i - 1, ..., 0] = iu
        inverse[i - 1, ..., 1] = iv
        new_mask[i - 1] = _out_of_bounds(iu, iv, h, w, interpolation)
    return MotionField(params, forward, inverse, new_mask, interpolation)


# Named after the 16 evaluation motions (8 pans, 4 zooms, 4 rotations).
PRESETS = {
    "identity": {},
    "pan-left-small": {"x": -0.25, "y": 0.0},
    "pan-left-large": {"x": -0.50, "y": 0.0},
    "pan-right-small": {"x": 0.25, "y": 0.0},
    "pan-right-large": {"x": 0.50, "y": 0.0},
    "pan-up-small": {"x": 0.0, "y": -0.25},
    "pan-up-large": {"x": 0.0, "y": -0.50},
    "pan-down-small": {"x": 0.0, "y": 0.25},
    "pan-down-large": {"x": 0.0, "y": 0.50},
    "zoom-in-small": {"z": 0.24},
    "zoom-in-large": {"z": 0.48},
    "zoom-out-small": {"z": -0.24},
    "zoom-out-large": {"z": -0.48},
    "rot-ccw-small": {"theta": 8.0},
    "rot-ccw-large": {"theta": 16.0},
    "rot-cw-small": {"theta": -8.0},
    "rot-cw-large": {"theta": -16.0},
}


def preset(name, **overrides):
    """CameraParams for a named preset; keyword overrides apply on top."""
    try:
        values = PRESETS[name]
    except KeyError:
        raise ParameterError("preset", f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None
    return replace(CameraParams(**values), **overrides) if overrides else CameraParams(**values)
