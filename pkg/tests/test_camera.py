import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmotion.camera import (
    PRESETS,
    Axis,
    CameraParams,
    RotationRamp,
    build_motion_field,
    gamma,
    pan_map,
    preset,
    project_with_depth,
    rotate_map,
    zoom_map,
)
from lightmotion.errors import DegenerateProjectionError, ParameterError


def test_pan_map_examples():
    assert pan_map(CameraParams(), 5, 16, 64, 64) == (0.0, 0.0)
    assert pan_map(CameraParams(x=0.5), 8, 16, 64, 64) == (16.0, 0.0)
    assert pan_map(preset("pan-left-small"), 16, 16, 64, 64) == (-16.0, 0.0)


def test_zoom_map_examples():
    assert zoom_map(CameraParams(), 3, 16) == 1.0
    assert zoom_map(preset("zoom-in-large"), 16, 16) == pytest.approx(1.48, abs=1e-15)
    assert zoom_map(CameraParams(z=-0.24), 8, 16) == pytest.approx(0.88, abs=1e-15)


def test_zoom_collapse():
    with pytest.raises(ParameterError):
        zoom_map(CameraParams(z=-1.0), 16, 16)


def test_gamma_ramps():
    p = CameraParams(theta=8)
    assert gamma(p, 16, 16) == 0.0
    assert gamma(p, 1, 16) == -15.0
    sym = CameraParams(theta=8, rotation_ramp=RotationRamp.SYMMETRIC)
    assert gamma(sym, 1, 16) == -8.0 and gamma(sym, 16, 16) == 8.0
    assert gamma(CameraParams(theta=8, rotation_ramp="symmetric"), 1, 1) == 0.0
    assert all(gamma(CameraParams(), i, 16) == 0.0 for i in range(1, 17))


def test_frame_index_bounds():
    with pytest.raises(ParameterError):
        pan_map(CameraParams(), 0, 16, 8, 8)
    with pytest.raises(ParameterError):
        gamma(CameraParams(), 17, 16)


def test_param_validation():
    with pytest.raises(ParameterError) as info:
        CameraParams(x=1.5)
    assert info.value.field == "x"
    with pytest.raises(ParameterError):
        CameraParams(fx=0)
    with pytest.raises(ParameterError):
        preset("spin-around")


def test_rotate_identity():
    u, v = np.meshgrid(np.arange(8.0), np.arange(8.0))
    u2, v2 = rotate_map(CameraParams(), 0.0, u, v, 8, 8)
    assert np.array_equal(u2, u) and np.array_equal(v2, v)


def test_rotate_optical_center_value():
    u2, v2 = rotate_map(CameraParams(), 8.0, 32.0, 32.0, 64, 64)
    assert float(u2) == pytest.approx(32 + 15 * math.tan(math.radians(8)), abs=1e-12)
    assert float(u2) == pytest.approx(34.10811252053587, abs=1e-12)
    assert float(v2) == 32.0


def test_rotate_degenerate_raises():
    # den = -sin g * du + cos g * f vanishes at du = f / tan g
    g = 45.0
    with pytest.raises(DegenerateProjectionError) as info:
        rotate_map(CameraParams(), g, 32.0 + 15.0, 0.0, 64, 64)
    assert "45" in str(info.value)


def test_rotate_behind_camera_is_nan():
    u2, _ = rotate_map(CameraParams(), 60.0, 63.0, 5.0, 64, 64)
    assert np.isnan(u2)


@pytest.mark.parametrize("axis", [Axis.X, Axis.Y, Axis.Z])
def test_depth_independence_fixed_depths(axis):
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 64, 50)
    v = rng.uniform(0, 64, 50)
    p = CameraParams(axis=axis)
    ref = rotate_map(p, 12.0, u, v, 64, 64)
    for d in (0.1, 1.0, 7.3, 100.0):
        bu, bv = project_with_depth(u, v, d, 12.0, axis, 15.0, 15.0, 32.0, 32.0)
        np.testing.assert_allclose(bu, ref[0], rtol=1e-9)
        np.testing.assert_allclose(bv, ref[1], rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    u=st.floats(0, 63.99),
    v=st.floats(0, 63.99),
    g=st.floats(-20, 20),
    d=st.floats(0.1, 100),
    axis=st.sampled_from(list(Axis)),
)
def test_depth_independence_property(u, v, g, d, axis):
    ref = rotate_map(CameraParams(axis=axis), g, u, v, 64, 64)
    bu, bv = project_with_depth(u, v, d, g, axis, 15.0, 15.0, 32.0, 32.0)
    assert float(bu) == pytest.approx(float(ref[0]), rel=1e-9, abs=1e-9)
    assert float(bv) == pytest.approx(float(ref[1]), rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(u=st.floats(10, 54), v=st.floats(10, 54), g=st.floats(-16, 16), axis=st.sampled_from(list(Axis)))
def test_rotation_round_trip(u, v, g, axis):
    p = CameraParams(axis=axis)
    u2, v2 = rotate_map(p, g, u, v, 64, 64)
    back = rotate_map(p, -g, u2, v2, 64, 64)
    assert float(back[0]) == pytest.approx(u, abs=1e-9)
    assert float(back[1]) == pytest.approx(v, abs=1e-9)


def test_identity_field():
    f = build_motion_field(CameraParams(), 4, 8, 8)
    assert not f.new_mask.any()
    vv, uu = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
    assert np.array_equal(f.inverse[2, ..., 0], uu) and np.array_equal(f.forward[2, ..., 1], vv)


def test_pan_omega_strips():
    f = build_motion_field(preset("pan-left-small"), 16, 64, 64)
    expected = np.zeros((64, 64), bool)
    expected[:, 48:] = True
    assert np.array_equal(f.new_mask[15], expected)
    expected[:] = False
    expected[:, 56:] = True
    assert np.array_equal(f.new_mask[7], expected)
    assert f.interpolation == "nearest"


def test_zoom_in_has_no_omega():
    f = build_motion_field(preset("zoom-in-small"), 16, 64, 64)
    assert f.interpolation == "bilinear"
    assert not f.new_mask.any()


def test_omega_shrinks_to_identity():
    areas = [build_motion_field(CameraParams(x=x), 16, 32, 32).new_mask.sum() for x in (0.5, 0.25, 0.1, 0.0)]
    assert areas == sorted(areas, reverse=True) and areas[-1] == 0


def test_forward_inverse_consistency_combined():
    p = CameraParams(x=0.1, y=-0.05, z=0.2, theta=6)
    f = build_motion_field(p, 8, 32, 32)
    from lightmotion.camera import _frame_maps

    for i in (1, 4, 8):
        fu, fv = f.forward[i - 1, ..., 0], f.forward[i - 1, ..., 1]
        ok = ~f.new_mask[i - 1]
        # applying G to F(p) returns p for sources that stay in frame
        _, _, iu, iv = _frame_maps(p, i, 8, 32, 32, fu, fv)
        vv, uu = np.meshgrid(np.arange(32.0), np.arange(32.0), indexing="ij")
        fin = np.isfinite(iu)
        np.testing.assert_allclose(iu[fin], uu[fin], atol=1e-9)
        np.testing.assert_allclose(iv[fin], vv[fin], atol=1e-9)
        assert ok.any()


def test_large_rotation_behind_camera_marks_omega():
    f = build_motion_field(preset("rot-ccw-large"), 16, 64, 64)
    assert f.new_mask[0].any()
    assert not f.new_mask[15].any()


def test_source_index_matches_rounding():
    f = build_motion_field(preset("pan-right-small"), 16, 8, 16)
    row, col = f.source_index()
    assert np.all(col[~f.new_mask] >= 0) and np.all(row[f.new_mask] == -1)


def test_presets_table():
    assert len(PRESETS) == 17
    assert preset("pan-down-large").y == 0.5
    assert preset("rot-cw-small").theta == -8.0
    assert preset("pan-left-small", fx=20.0).fx == 20.0
