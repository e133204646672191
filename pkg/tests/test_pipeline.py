import numpy as np
import pytest

from lightmotion.attnmask import MaskShape
from lightmotion.camera import CameraParams, build_motion_field, preset
from lightmotion.denoiser import OracleDenoiser, PerturbedOracle
from lightmotion.errors import ConfigError, StageError
from lightmotion.permute import apply_permutation
from lightmotion.pipeline import (
    SNAPSHOT_NAMES,
    PipelineConfig,
    default_x0,
    plain_ddim,
    renoise,
    run,
)
from lightmotion.resample import Kind
from lightmotion.schedule import NoiseSchedule, default_schedule
from lightmotion.tensorio import read_csv, read_lmt

SMALL = (16, 2, 16, 16)


def test_defaults():
    c = PipelineConfig()
    assert (c.T, c.T0, c.T1, c.T2) == (50, 25, 1, 35)
    assert c.effective_resample_seed == 0


@pytest.mark.parametrize(
    "kw, needle",
    [
        ({"T0": 60}, "T >= T0"),
        ({"T0": 1}, "T0 > T1"),
        ({"T1": 0}, "T1 >= 1"),
        ({"T2": 20}, "T2 >= T0"),
        ({"shape": (1, 2, 3)}, "shape"),
        ({"axis_policy": "diagonal"}, "axis_policy"),
    ],
)
def test_config_invariants(kw, needle):
    with pytest.raises(ConfigError, match=needle):
        PipelineConfig(**kw)


def test_t2_ignored_without_correction():
    assert PipelineConfig(T2=10, correction=False).T2 == 10


def test_renoise_edges():
    s = NoiseSchedule.from_alpha_bars([1.0, 0.5])
    z = np.random.default_rng(0).standard_normal((1, 1, 4, 4))
    assert np.array_equal(renoise(z, 1, s, seed=3), z)
    sched = default_schedule()
    out = renoise(np.zeros(10 ** 6), 700, sched, seed=5)
    assert np.var(out) == pytest.approx(1 - sched.alpha_bar(700), rel=0.02)


def test_identity_no_correction_recovers_x0():
    cfg = PipelineConfig(camera=CameraParams(), correction=False, shape=SMALL)
    tr = run(cfg)
    assert np.max(np.abs(tr.final - default_x0(0, SMALL))) < 1e-5


def test_variance_count_and_stages():
    tr = run(PipelineConfig(camera=preset("pan-left-small"), shape=SMALL))
    stages = [v[0] for v in tr.variances]
    assert stages.count("denoise_T_T0") == 25
    assert stages.count("denoise_T0_T1") == 24
    assert stages.count("denoise_T2_0") == 35
    assert len(tr.variances) == 84
    assert list(tr.snapshots) == list(SNAPSHOT_NAMES)
    ts = [v[2] for v in tr.variances]
    assert ts[0] == 1000 and ts[25] == 500 and ts[49] == 700 and ts[-1] == 20


def test_correction_off_matches_plain_step_count():
    tr = run(PipelineConfig(camera=preset("pan-left-small"), correction=False, shape=SMALL))
    assert len(tr.variances) == 50
    assert "z_T2_renoised" not in tr.snapshots and tr.renoise_eps is None


def test_pan_shift_equivariance():
    cfg = PipelineConfig(camera=preset("pan-left-small"), correction=False, shape=SMALL)
    tr = run(cfg)
    x0 = default_x0(0, SMALL)
    field = build_motion_field(cfg.camera, *SMALL[:1], *SMALL[2:])
    shifted, omega = apply_permutation(x0, field)
    keep = np.broadcast_to(~omega[:, None], SMALL)
    assert np.max(np.abs(tr.final[keep] - shifted[keep])) < 1e-4
    assert np.max(np.abs(tr.final - tr.reference)) < 1e-5


def test_mask_respected_in_run():
    mask = MaskShape("rect", (8, 10), (3, 2))
    cfg = PipelineConfig(camera=preset("pan-left-large"), shape=SMALL, mask=mask)
    tr = run(cfg)
    p = tr.provenance
    sampled = p.kind != Kind.REUSED
    assert not tr.mask[p.src_frame[sampled], p.src_row[sampled], p.src_col[sampled]].any()


def test_determinism():
    cfg = PipelineConfig(camera=preset("rot-ccw-small"), shape=SMALL, seed=11)
    a, b = run(cfg), run(cfg)
    for name in a.snapshots:
        assert np.array_equal(a.snapshots[name], b.snapshots[name])
    assert a.variances == b.variances and a.provenance == b.provenance


def test_identity_equals_plain_ddim():
    cfg = PipelineConfig(camera=CameraParams(), correction=False, shape=SMALL, seed=4)
    assert np.array_equal(run(cfg).final, plain_ddim(cfg))


def test_custom_denoiser_and_init():
    sched = default_schedule()
    x0 = np.ones(SMALL)
    d = PerturbedOracle(OracleDenoiser(x0, sched), bias=0.0)
    z = np.zeros(SMALL)
    tr = run(PipelineConfig(camera=preset("pan-up-small"), shape=SMALL), denoiser=d, z_init=z)
    assert np.array_equal(tr.snapshots["z_T"], z)
    with pytest.raises(ConfigError):
        run(PipelineConfig(shape=SMALL), z_init=np.zeros((1, 1, 2, 2)))


def test_unfillable_propagates_with_stage():
    # a full-width pan empties every pixel of the last frame
    cfg = PipelineConfig(camera=CameraParams(x=1.0), shape=(4, 1, 8, 8))
    with pytest.raises(StageError) as info:
        run(cfg)
    assert info.value.stage == "update"


def test_save(tmp_path):
    tr = run(PipelineConfig(camera=preset("zoom-in-large"), shape=SMALL))
    tr.save(tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.lmt")) == sorted(f"{n}.lmt" for n in SNAPSHOT_NAMES)
    assert read_lmt(tmp_path / "z_final.lmt").shape == SMALL
    header, rows = read_csv(tmp_path / "variance.csv")
    assert header == ["stage", "step", "t_train", "variance"] and len(rows) == 84
    assert read_csv(tmp_path / "provenance.csv")[1] == []
