"""End-to-end camera-motion run over a latent video.

Stages, in DDIM positions (position ``k`` is training timestep
``k * stride``; position 0 is the clean latent):

1. denoise ``T -> T0``
2. update at ``T0``: permutation + background resampling
3. denoise ``T0 -> T1``
4. correction: renoise the nearly clean latent to ``T2``, then denoise
   ``T2 -> 0``; without correction, denoise ``T1 -> 0``.
"""

import logging
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .attnmask import MaskShape, synth_mask
from .camera import CameraParams, build_motion_field
from .denoiser import OracleDenoiser
from .errors import ConfigError, LightMotionError, StageError
from .permute import apply_permutation, warp_grid
from .resample import SampleProvenance, resample_all, write_provenance_csv
from .rng import stream
from .schedule import build_schedule, ddim_sample, forward_noise
from .tensorio import read_lmt, write_csv, write_lmt, KIND_BOOL

log = logging.getLogger(__name__)

__all__ = ["PipelineConfig", "RunTrace", "renoise", "run", "plain_ddim", "SNAPSHOT_NAMES"]

SNAPSHOT_NAMES = ("z_T", "z_T0", "z_T0_updated", "z_T1_updated", "z_T2_renoised", "z_final")


@dataclass(frozen=True)
class PipelineConfig:
    """Run settings. ``T0``/``T2`` default to ``0.5 T`` and ``0.7 T``.

    ``mask`` is ``None`` (all background), a path to a bool-grid LMT file,
    a :class:`MaskShape`, or a ``(N, h, w)`` bool array, given in the
    coordinates of the original latent. ``resample_seed`` defaults to
    ``seed``.
    """

    T: int = 50
    T0: int = None
    T1: int = 1
    T2: int = None
    seed: int = 0
    resample_seed: int = None
    camera: CameraParams = dc_field(default_factory=CameraParams)
    correction: bool = True
    update: bool = True
    shape: tuple = (16, 4, 64, 64)
    mask: object = None
    axis_policy: str = "auto"
    n_train_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.T0 is None:
            object.__setattr__(self, "T0", int(round(0.5 * self.T)))
        if self.T2 is None:
            object.__setattr__(self, "T2", int(round(0.7 * self.T)))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        self.validate()

    def validate(self):
        T, T0, T1, T2 = self.T, self.T0, self.T1, self.T2
        if len(self.shape) != 4 or min(self.shape) < 1:
            raise ConfigError(f"shape must be four positive integers (N, C, h, w), got {self.shape}")
        if not T >= 1:
            raise ConfigError(f"T must be >= 1, got {T}")
        if self.n_train_steps < T:
            raise ConfigError(f"n_train_steps ({self.n_train_steps}) must be >= T ({T})")
        if not (T >= T0 > T1 >= 1):
            raise ConfigError(f"invariant T >= T0 > T1 >= 1 violated (T={T}, T0={T0}, T1={T1})")
        if self.correction and not (T >= T2 >= T0):
            raise ConfigError(f"invariant T >= T2 >= T0 violated (T={T}, T0={T0}, T2={T2})")
        if self.axis_policy not in ("auto", "row", "column"):
            raise ConfigError(f"axis_policy must be auto, row or column, got {self.axis_policy!r}")

    @property
    def effective_resample_seed(self):
        return self.seed if self.resample_seed is None else self.resample_seed

    def schedule(self):
        return build_schedule(self.n_train_steps, self.beta_start, self.beta_end, self.T)


@dataclass(eq=False)
class RunTrace:
    """Everything a run produced.

    ``variances`` holds ``(stage, k, t_train, variance)`` per executed DDIM
    step, in execution order. ``eps_after_update`` is the first noise
    prediction made on the updated latent; ``renoise_eps`` the fresh noise
    injected by the correction.
    """

    config: PipelineConfig
    snapshots: dict
    variances: list
    omega: np.ndarray
    provenance: SampleProvenance
    mask: np.ndarray = None
    eps_after_update: np.ndarray = None
    renoise_eps: np.ndarray = None
    reference: np.ndarray = None

    @property
    def final(self):
        return self.snapshots["z_final"]

    def variance_array(self):
        return np.array([v[3] for v in self.variances])

    def save(self, outdir, snapshots=True, variance_csv=True, provenance_csv=True):
        """Write snapshots as LMT, variances and provenance as CSV; returns paths."""
        outdir = Path(outdir)
        written = []
        if snapshots:
            for name, arr in self.snapshots.items():
                path = outdir / f"{name}.lmt"
                write_lmt(arr, path)
                written.append(path)
        if variance_csv:
            path = outdir / "variance.csv"
            write_csv(path, ("stage", "step", "t_train", "variance"), self.variances)
            written.append(path)
        if provenance_csv:
            path = outdir / "provenance.csv"
            write_provenance_csv(self.provenance, path)
            written.append(path)
        return written


def renoise(z, t2, schedule, seed=0, eps=None):
    """Re-noise a (nearly clean) latent to training timestep ``t2``.

    ``eps`` defaults to a fresh unit normal from the ``(seed, "renoise")``
    stream.
    """
    z = np.asarray(z)
    if eps is None:
        eps = renoise_noise(seed, z.shape)
    return forward_noise(z, t2, eps, schedule)


def renoise_noise(seed, shape):
    return stream(seed, "renoise").standard_normal(shape)


def initial_noise(seed, shape):
    return stream(seed, "init").standard_normal(shape)


def default_x0(seed, shape):
    """Clean reference latent used by the oracle when none is supplied."""
    return stream(seed, "x0").standard_normal(shape)


def _resolve_mask(mask, shape):
    n, _, h, w = shape
    if mask is None:
        return np.zeros((n, h, w), dtype=bool)
    if isinstance(mask, MaskShape):
        return synth_mask(mask, n, h, w)
    if isinstance(mask, (str, Path)):
        grid = read_lmt(mask, expect_kind={KIND_BOOL})
    else:
        grid = np.asarray(mask, dtype=bool)
    if grid.shape != (n, h, w):
        raise ConfigError(f"mask shape {grid.shape} does not match latent frames {(n, h, w)}")
    return grid


def plain_ddim(config, denoiser=None, z_init=None):
    """Reference run without update or correction: DDIM from T to 0."""
    schedule = config.schedule()
    z = initial_noise(config.seed, config.shape) if z_init is None else np.asarray(z_init, dtype=np.float64)
    if denoiser is None:
        denoiser = OracleDenoiser(default_x0(config.seed, config.shape), schedule)
    return ddim_sample(denoiser, z, schedule, config.T, 0)


def run(config, denoiser=None, z_init=None):
    """Execute all stages and return a :class:`RunTrace`."""
    config.validate()
    schedule = config.schedule()
    shape = config.shape
    n, _, h, w = shape
    mask = _resolve_mask(config.mask, shape)
    z = initial_noise(config.seed, shape) if z_init is None else np.array(z_init, dtype=np.float64)
    if z.shape != shape:
        raise ConfigError(f"initial latent shape {z.shape} does not match config shape {shape}")
    if denoiser is None:
        denoiser = OracleDenoiser(default_x0(config.seed, shape), schedule)

    snaps = {"z_T": z}
    variances = []
    stage = "denoise_T_T0"

    def record(k, t, eps):
        variances.append((stage, k, t, float(np.var(eps))))

    z = ddim_sample(denoiser, z, schedule, config.T, config.T0, record)
    snaps["z_T0"] = z

    stage = "update"
    omega = np.zeros((n, h, w), dtype=bool)
    prov = SampleProvenance.empty()
    warped_mask = mask
    if config.update:
        try:
            field = build_motion_field(config.camera, n, h, w)
            warped_mask = warp_grid(mask, field)
            z_perm, omega = apply_permutation(z, field)
            z, prov = resample_all(z_perm, omega, warped_mask, field, config.effective_resample_seed, config.axis_policy)
        except LightMotionError as exc:
            raise StageError(stage, exc) from exc
        covered = np.zeros_like(omega)
        covered[prov.frame, prov.row, prov.col] = True
        if not np.array_equal(covered, omega):
            missing = int((omega & ~covered).sum())
            raise StageError(stage, f"{missing} new-perspective pixels left unfilled")
        if hasattr(denoiser, "follow_update"):
            denoiser = denoiser.follow_update(field, prov)
    snaps["z_T0_updated"] = z

    stage = "denoise_T0_T1"
    after = {}

    def record_first(k, t, eps):
        if not after:
            after["eps"] = eps
        record(k, t, eps)

    z = ddim_sample(denoiser, z, schedule, config.T0, config.T1, record_first)
    snaps["z_T1_updated"] = z

    renoise_eps = None
    if config.correction:
        stage = "correction"
        renoise_eps = renoise_noise(config.seed, shape)
        z = renoise(z, schedule.timestep(config.T2), schedule, eps=renoise_eps)
        snaps["z_T2_renoised"] = z
        stage = "denoise_T2_0"
        z = ddim_sample(denoiser, z, schedule, config.T2, 0, record)
    else:
        stage = "denoise_T1_0"
        z = ddim_sample(denoiser, z, schedule, config.T1, 0, record)
    snaps["z_final"] = z

    reference = getattr(denoiser, "x0", None)
    return RunTrace(
        config=config,
        snapshots=snaps,
        variances=variances,
        omega=omega,
        provenance=prov,
        mask=warped_mask,
        eps_after_update=after.get("eps"),
        renoise_eps=renoise_eps,
        reference=reference,
    )
