"""Noise-prediction denoisers.

Anything with ``predict_eps(z_t, t) -> array`` works as a denoiser. A
denoiser may also define ``follow_update(field, provenance)`` returning a
new denoiser; the pipeline calls it after the latent update so that a
reference-based denoiser can track the moved content.
"""

from typing import Protocol

import numpy as np

from .errors import DomainError, ShapeError
from .permute import apply_permutation
from .resample import replay_provenance
from .rng import stream

__all__ = ["Denoiser", "OracleDenoiser", "PerturbedOracle"]


class Denoiser(Protocol):
    def predict_eps(self, z_t, t): ...


class OracleDenoiser:
    """Exact inverse of forward noising for a known clean latent ``x0``.

    With ``transport=True`` (default) :meth:`follow_update` moves ``x0``
    through the same permutation and resampling as the latent, which makes
    the oracle path equivariant to the camera motion.
    """

    def __init__(self, x0, schedule, transport=True):
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.x0.setflags(write=False)
        self.schedule = schedule
        self.transport = transport

    def predict_eps(self, z_t, t):
        z_t = np.asarray(z_t)
        if z_t.shape != self.x0.shape:
            raise ShapeError(self.x0.shape, z_t.shape, "z_t")
        ab = self.schedule.alpha_bar(t)
        if ab >= 1.0:
            raise DomainError(f"oracle undefined at t={t}: alpha_bar == 1")
        return (z_t - np.sqrt(ab) * self.x0) * (1.0 / np.sqrt(1.0 - ab))

    def follow_update(self, field, provenance):
        if not self.transport:
            return self
        moved, _ = apply_permutation(self.x0, field)
        return OracleDenoiser(replay_provenance(moved, provenance), self.schedule, self.transport)


class PerturbedOracle:
    """Oracle output scaled by ``1 + bias`` plus seeded Gaussian jitter.

    The jitter for timestep ``t`` comes from the stream ``(seed, "jitter", t)``,
    so predictions are a pure function of ``(z_t, t)``.
    """

    def __init__(self, inner, bias=0.0, jitter_std=0.0, seed=0):
        self.inner = inner
        self.bias = float(bias)
        self.jitter_std = float(jitter_std)
        self.seed = seed

    @property
    def x0(self):
        return self.inner.x0

    def predict_eps(self, z_t, t):
        eps = self.inner.predict_eps(z_t, t) * (1.0 + self.bias)
        if self.jitter_std:
            eps = eps + self.jitter_std * stream(self.seed, "jitter", t).standard_normal(eps.shape)
        return eps

    def follow_update(self, field, provenance):
        return PerturbedOracle(self.inner.follow_update(field, provenance), self.bias, self.jitter_std, self.seed)
