import numpy as np
import pytest

from lightmotion.camera import build_motion_field, preset
from lightmotion.denoiser import OracleDenoiser, PerturbedOracle
from lightmotion.errors import DomainError, ShapeError
from lightmotion.permute import apply_permutation
from lightmotion.resample import replay_provenance, resample_all
from lightmotion.schedule import NoiseSchedule, default_schedule, forward_noise


@pytest.fixture(scope="module")
def sched():
    return default_schedule()


def test_oracle_inverts_forward_noise(sched):
    rng = np.random.default_rng(0)
    x0, eps = rng.standard_normal((2, 2, 4, 8, 8))
    o = OracleDenoiser(x0, sched)
    for t in (1, 20, 500, 1000):
        assert np.max(np.abs(o.predict_eps(forward_noise(x0, t, eps, sched), t) - eps)) < 1e-7


def test_oracle_zero_noise(sched):
    x0 = np.random.default_rng(1).standard_normal((1, 2, 4, 4))
    o = OracleDenoiser(x0, sched)
    z = np.sqrt(sched.alpha_bar(300)) * x0
    assert np.max(np.abs(o.predict_eps(z, 300))) < 1e-12


def test_oracle_domain_and_shape():
    s = NoiseSchedule.from_alpha_bars([1.0, 0.5])
    o = OracleDenoiser(np.zeros((1, 1, 2, 2)), s)
    with pytest.raises(DomainError):
        o.predict_eps(np.zeros((1, 1, 2, 2)), 1)
    with pytest.raises(ShapeError):
        o.predict_eps(np.zeros((1, 1, 2, 3)), 2)


def test_oracle_is_read_only(sched):
    o = OracleDenoiser(np.zeros((1, 1, 2, 2)), sched)
    with pytest.raises(ValueError):
        o.x0[0, 0, 0, 0] = 1.0


def test_mismatch_variance_monte_carlo(sched):
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(10 ** 6)
    eps = rng.standard_normal(10 ** 6)
    t_true, t = 300, 600
    out = OracleDenoiser(x0, sched).predict_eps(forward_noise(x0, t_true, eps, sched), t)
    a1, a = sched.alpha_bar(t_true), sched.alpha_bar(t)
    p = np.mean(x0 ** 2)
    expected = ((np.sqrt(a1) - np.sqrt(a)) ** 2 * p + (1 - a1)) / (1 - a)
    assert np.var(out) == pytest.approx(expected, rel=0.02)


def test_perturbed_bias_and_jitter(sched):
    rng = np.random.default_rng(3)
    x0, eps = rng.standard_normal((2, 4, 4, 32, 32))
    z = forward_noise(x0, 500, eps, sched)
    base = OracleDenoiser(x0, sched)
    biased = PerturbedOracle(base, bias=0.1)
    assert np.var(biased.predict_eps(z, 500)) == pytest.approx(1.21 * np.var(base.predict_eps(z, 500)), rel=1e-9)
    jit = PerturbedOracle(base, jitter_std=0.5, seed=7)
    a = jit.predict_eps(z, 500)
    assert np.array_equal(a, jit.predict_eps(z, 500))
    assert np.var(a - base.predict_eps(z, 500)) == pytest.approx(0.25, rel=0.05)
    assert not np.array_equal(a, jit.predict_eps(z, 520) - base.predict_eps(z, 520) + base.predict_eps(z, 500))


def test_follow_update_transports_x0(sched):
    x0 = np.random.default_rng(4).standard_normal((16, 2, 16, 16))
    field = build_motion_field(preset("pan-right-large"), 16, 16, 16)
    moved, omega = apply_permutation(x0, field)
    filled, prov = resample_all(moved, omega, None, field, seed=3)
    o = OracleDenoiser(x0, sched).follow_update(field, prov)
    assert np.array_equal(o.x0, filled)
    assert np.array_equal(replay_provenance(moved, prov), filled)
    still = OracleDenoiser(x0, sched, transport=False)
    assert still.follow_update(field, prov) is still
    p = PerturbedOracle(OracleDenoiser(x0, sched), bias=0.2).follow_update(field, prov)
    assert np.array_equal(p.x0, filled) and p.bias == 0.2
