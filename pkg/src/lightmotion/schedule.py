"""Variance schedule, SNR, forward noising and the deterministic DDIM update.

Timesteps passed to the functions here are *training* timesteps in
``1..n_train_steps``; ``0`` is accepted as a target and means the clean
latent (alpha_bar_0 = 1).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError, OrderingError, ParameterError, ShapeError

__all__ = [
    "NoiseSchedule",
    "build_schedule",
    "default_schedule",
    "snr",
    "forward_noise",
    "ddim_step",
    "ddim_sample",
]


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Beta / alpha-bar tables plus the DDIM sub-sequence.

    ``betas[t - 1]`` and ``alpha_bars[t - 1]`` hold the values for training
    timestep ``t``. ``ddim_timesteps[k - 1]`` is the training timestep of DDIM
    position ``k``.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray
    ddim_timesteps: np.ndarray

    def __post_init__(self):
        for name in ("betas", "alpha_bars", "ddim_timesteps"):
            getattr(self, name).setflags(write=False)
        if self.betas.shape != self.alpha_bars.shape:
            raise ShapeError(self.alpha_bars.shape, self.betas.shape, "betas")

    @property
    def n_train_steps(self):
        return int(self.alpha_bars.shape[0])

    @property
    def ddim_steps(self):
        return int(self.ddim_timesteps.shape[0])

    @property
    def stride(self):
        return self.n_train_steps // self.ddim_steps

    def alpha_bar(self, t):
        """alpha_bar at training timestep ``t`` (``t == 0`` gives 1)."""
        t = int(t)
        if t == 0:
            return 1.0
        if not 1 <= t <= self.n_train_steps:
            raise ParameterError("t", f"timestep {t} outside [0, {self.n_train_steps}]")
        return float(self.alpha_bars[t - 1])

    def timestep(self, k):
        """Training timestep of DDIM position ``k`` (position 0 is clean)."""
        k = int(k)
        if k == 0:
            return 0
        if not 1 <= k <= self.ddim_steps:
            raise ParameterError("k", f"DDIM position {k} outside [0, {self.ddim_steps}]")
        return int(self.ddim_timesteps[k - 1])

    def validate(self):
        """Check the structural invariants; raise ParameterError on failure."""
        b, ab = self.betas, self.alpha_bars
        if not np.all((b > 0) & (b < 1)):
            raise ParameterError("betas", "every beta must lie in (0, 1)")
        if not np.all(np.diff(ab) < 0):
            raise ParameterError("alpha_bars", "must be strictly decreasing")
        if not (ab[-1] > 0):
            raise ParameterError("alpha_bars", "must stay positive")
        ts = self.ddim_timesteps
        if ts.min() < 1 or ts.max() > self.n_train_steps or np.any(np.diff(ts) <= 0):
            raise ParameterError("ddim_timesteps", "must be strictly increasing within [1, n_train_steps]")

    @classmethod
    def from_alpha_bars(cls, alpha_bars, ddim_timesteps=None):
        """Build a schedule from explicit alpha_bar values (no invariant checks).

        Meant for synthetic schedules in tests, e.g. ``[1.0, 0.0]``.
        """
        ab = np.asarray(alpha_bars, dtype=np.float64)
        prev = np.concatenate([[1.0], ab[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            betas = np.where(prev > 0, 1.0 - ab / np.where(prev > 0, prev, 1.0), np.nan)
        if ddim_timesteps is None:
            ddim_timesteps = np.arange(1, ab.shape[0] + 1)
        return cls(betas, ab, np.asarray(ddim_timesteps, dtype=np.int64))


def build_schedule(n_train_steps=1000, beta_start=1e-4, beta_end=0.02, ddim_steps=50):
    """Linear beta ramp with a uniformly strided DDIM sub-sequence.

    The DDIM sub-sequence is ``stride, 2*stride, ..., n_train_steps`` with
    ``stride = n_train_steps / ddim_steps``.
    """
    n_train_steps = int(n_train_steps)
    ddim_steps = int(ddim_steps)
    if n_train_steps < 1:
        raise ParameterError("n_train_steps", "must be >= 1")
    if not 1 <= ddim_steps <= n_train_steps:
        raise ParameterError("ddim_steps", f"must lie in [1, n_train_steps={n_train_steps}]")
    if not 0 < beta_start < 1:
        raise ParameterError("beta_start", "must lie in (0, 1)")
    if not beta_start <= beta_end < 1:
        raise ParameterError("beta_end", "must lie in [beta_start, 1)")
    betas = np.linspace(beta_start, beta_end, n_train_steps, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    # Evenly spread positions; the last one always lands on n_train_steps.
    ddim_timesteps = np.round(np.arange(1, ddim_steps + 1) * (n_train_steps / ddim_steps)).astype(np.int64)
    return NoiseSchedule(betas, alpha_bars, ddim_timesteps)


def default_schedule():
    return build_schedule(1000, 1e-4, 0.02, 50)


def snr(schedule, t):
    """Signal-to-noise ratio alpha_bar / (1 - alpha_bar) at training timestep ``t``."""
    ab = schedule.alpha_bar(t)
    if ab >= 1.0:
        raise DomainError(f"snr undefined at t={t}: alpha_bar == 1")
    return ab / (1.0 - ab)


def _check_pair(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(a.shape, b.shape, what)


def forward_noise(x0, t, eps, schedule):
    """Noise a clean latent to training timestep ``t``."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    _check_pair(x0, eps, "eps")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_step(z_t, eps_pred, t, t_prev, schedule):
    """Deterministic (eta = 0) DDIM update from ``t`` to ``t_prev``.

    Uses the clean-estimate form: predict x0, then re-noise it to ``t_prev``
    with the same noise estimate. ``t_prev == t`` returns ``z_t`` unchanged.
    """
    z_t = np.asarray(z_t)
    eps_pred = np.asarray(eps_pred)
    _check_pair(z_t, eps_pred, "eps_pred")
    if t_prev > t:
        raise OrderingError(f"t_prev={t_prev} must not exceed t={t}")
    if t_prev == t:
        return z_t
    # a sum is non-finite iff some element is (barring overflow near 1e308)
    if not (np.isfinite(np.sum(z_t)) and np.isfinite(np.sum(eps_pred))):
        raise NumericError("non-finite values in DDIM step input")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t_prev)
    if ab_t <= 0.0:
        raise DomainError(f"DDIM step undefined at t={t}: alpha_bar == 0")
    # x0_hat = (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t), folded into two coefficients
    scale = math.sqrt(ab_prev / ab_t)
    mix = math.sqrt(1.0 - ab_prev) - scale * math.sqrt(1.0 - ab_t)
    return scale * z_t + mix * eps_pred


def ddim_sample(denoiser, z, schedule, start, stop=0, on_step=None):
    """Run DDIM from position ``start`` down to position ``stop``.

    Positions are DDIM indices (``schedule.timestep`` maps them to training
    timesteps). ``on_step(k, t, eps)`` is called after each noise prediction.
    """
    for k in range(int(start), int(stop), -1):
        t = schedule.timestep(k)
        eps = denoiser.predict_eps(z, t)
        if on_step is not None:
            on_step(k, t, eps)
        z = ddim_step(z, eps, t, schedule.timestep(k - 1), schedule)
    return z
