"""Noise-statistics probes around the update and correction stages.

* :func:`snr_mismatch_probe` feeds the oracle latents noised at one
  timestep while telling it another, and compares the predicted-noise
  variance with its closed form.
* :func:`update_shift_probe` runs paired pipelines with and without the
  update and measures how strongly the noise of duplicated pixels is
  correlated right after the update and in the correction's fresh noise.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .pipeline import run
from .rng import stream, thread_count
from .resample import Kind
from .schedule import forward_noise
from .denoiser import OracleDenoiser
from .tensorio import write_csv

__all__ = [
    "VarianceTrace",
    "predicted_noise_variance",
    "expected_mismatch_variance",
    "snr_mismatch_probe",
    "PairCorrelation",
    "UpdateShiftResult",
    "update_shift_probe",
    "duplicate_pairs",
    "mean_duplicate_count",
]


@dataclass(frozen=True)
class VarianceTrace:
    step: np.ndarray
    t_train: np.ndarray
    variance: np.ndarray
    n: int

    def rows(self):
        return [(int(k), int(t), float(v), self.n) for k, t, v in zip(self.step, self.t_train, self.variance)]

    def write_csv(self, path):
        write_csv(path, ("step", "t_train", "variance", "n"), self.rows())


def predicted_noise_variance(denoiser, z_t, t):
    """Population variance over all elements of the predicted noise."""
    return float(np.var(denoiser.predict_eps(z_t, t)))


def expected_mismatch_variance(schedule, t_true, t_assumed, x0_power=1.0):
    """Closed-form oracle output variance for input noised at ``t_true``
    but evaluated at ``t_assumed`` (zero-mean x0 with mean square ``x0_power``)."""
    a_true = schedule.alpha_bar(t_true)
    a_assumed = schedule.alpha_bar(t_assumed)
    gap = (math.sqrt(a_true) - math.sqrt(a_assumed)) ** 2
    return (gap * x0_power + (1.0 - a_true)) / (1.0 - a_assumed)


def _unit_power(g, power):
    g = g - g.mean()
    return g * math.sqrt(power / np.mean(g * g))


def snr_mismatch_probe(schedule, t_true, t_assumed, x0_power=1.0, n_samples=16, n_elements=65536, seed=0):
    """Monte-Carlo vs closed-form variance of the oracle under a timestep mismatch.

    Each sample draws a zero-mean ``x0`` rescaled to mean square exactly
    ``x0_power`` and fresh unit noise. Returns ``(measured, expected)``.
    """
    if n_samples < 1:
        raise ParameterError("n_samples", "must be >= 1")
    variances = []
    for s in range(n_samples):
        rng = stream(seed, "snr-probe", s, t_true)
        x0 = _unit_power(rng.standard_normal(n_elements), x0_power)
        eps = rng.standard_normal(n_elements)
        z = forward_noise(x0, t_true, eps, schedule)
        variances.append(predicted_noise_variance(OracleDenoiser(x0, schedule), z, t_assumed))
    measured = math.fsum(variances) / n_samples
    return measured, expected_mismatch_variance(schedule, t_true, t_assumed, x0_power)


class PairCorrelation:
    """Streaming Pearson correlation for many (a, b) series at once.

    Feed one observation per series with :meth:`add`; moments are
    accumulated in the order samples are added.
    """

    def __init__(self):
        self.n = 0
        self._s = None

    def add(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        terms = (a, b, a * a, b * b, a * b)
        if self._s is None:
            self._s = [t.copy() for t in terms]
        else:
            for acc, t in zip(self._s, terms):
                acc += t
        self.n += 1

    def per_series(self):
        """Correlation of each series across samples (NaN when degenerate)."""
        if self.n < 2:
            raise ValueError("need at least two samples for a correlation")
        sa, sb, saa, sbb, sab = self._s
        n = self.n
        cov = sab / n - (sa / n) * (sb / n)
        va = saa / n - (sa / n) ** 2
        vb = sbb / n - (sb / n) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            return cov / np.sqrt(va * vb)

    def pooled(self):
        """One correlation over every (series, sample) observation."""
        sa, sb, saa, sbb, sab = (math.fsum(np.ravel(s)) for s in self._s)
        m = self.n * self._s[0].size
        cov = sab / m - (sa / m) * (sb / m)
        va = saa / m - (sa / m) ** 2
        vb = sbb / m - (sb / m) ** 2
        return cov / math.sqrt(va * vb)

    @property
    def observations(self):
        return 0 if self._s is None else self.n * self._s[0].size


def duplicate_pairs(provenance):
    """Index arrays ``(target, source)`` for every duplicated pixel.

    Each is a tuple ``(frame, row, col)``; a reused pixel is paired with its
    donor in the earlier frame.
    """
    return provenance.pairs()


def mean_duplicate_count(provenance):
    """Average number of new-perspective pixels carrying the same source value.

    Reused pixels are attributed to their donor's original source.
    """
    if len(provenance) == 0:
        return 0.0
    origin = {}
    counts = {}
    for f, r, c, k, sf, sr, sc in zip(
        provenance.frame.tolist(), provenance.row.tolist(), provenance.col.tolist(), provenance.kind.tolist(),
        provenance.src_frame.tolist(), provenance.src_row.tolist(), provenance.src_col.tolist(),
    ):
        src = origin[(sf, sr, sc)] if k == Kind.REUSED else (sf, sr, sc)
        origin[(f, r, c)] = src
        counts[src] = counts.get(src, 0) + 1
    return sum(counts.values()) / len(counts)


@dataclass(eq=False)
class UpdateShiftResult:
    """Paired traces and duplicate-noise statistics from :func:`update_shift_probe`."""

    with_update: VarianceTrace
    baseline: VarianceTrace
    ordinal_stage: list
    pairs: tuple
    corr_update: np.ndarray  # (n_pairs, C) correlation of post-update noise
    corr_fresh: np.ndarray  # (n_pairs, C) correlation of renoise noise, or None
    pooled_update: float
    pooled_fresh: float
    fresh_observations: int
    omega_fraction: float
    duplicate_count: float
    renoise_var_measured: float
    renoise_var_expected: float
    n_samples: int

    @property
    def n_pairs(self):
        return int(self.pairs[0][0].shape[0])

    def mean_corr_update(self):
        return float(np.nanmean(self.corr_update)) if self.n_pairs else float("nan")

    def mean_corr_fresh(self):
        if self.corr_fresh is None or not self.n_pairs:
            return float("nan")
        return float(np.nanmean(self.corr_fresh))

    def paired_rows(self):
        a, b = self.with_update, self.baseline
        return [
            (o, stage, int(k), int(t), float(vu), float(vb), self.n_samples)
            for o, (stage, k, t, vu, vb) in enumerate(zip(self.ordinal_stage, a.step, a.t_train, a.variance, b.variance))
        ]

    def pair_rows(self):
        (tf, tr, tc), (sf, sr, sc) = self.pairs
        fresh = self.corr_fresh if self.corr_fresh is not None else np.full_like(self.corr_update, np.nan)
        cu = np.nanmean(self.corr_update, axis=1) if self.n_pairs else []
        cf = np.nanmean(fresh, axis=1) if self.n_pairs else []
        return [
            (int(a), int(b), int(c), int(d), int(e), int(f), float(g), float(h))
            for a, b, c, d, e, f, g, h in zip(tf, tr, tc, sf, sr, sc, cu, cf)
        ]


def _sample(config, s, base_seed, resample_seed):
    """One paired (update, baseline) run; returns only the small quantities."""
    cfg = replace(config, seed=base_seed + s, resample_seed=resample_seed)
    upd = run(cfg)
    base = run(replace(cfg, update=False))
    return upd, base


def update_shift_probe(config, n_samples=1000, threads=None):
    """Paired runs with and without the update, averaged over ``n_samples`` seeds.

    Sample ``s`` uses noise seed ``config.seed + s``; the resampling seed is
    held fixed so every sample duplicates the same pixel pairs, which makes
    per-pair correlations across samples well defined.
    """
    if n_samples < 1:
        raise ParameterError("n_samples", "must be >= 1")
    resample_seed = config.effective_resample_seed
    threads = thread_count() if threads is None else max(1, int(threads))

    var_u = var_b = None
    stages = steps = ts = None
    corr_u = PairCorrelation()
    corr_f = PairCorrelation()
    pairs = None
    omega_fraction = dup_count = None
    rv_measured = []
    rv_expected = []

    def consume(result):
        nonlocal var_u, var_b, stages, steps, ts, pairs, omega_fraction, dup_count
        upd, base = result
        vu = upd.variance_array()
        vb = base.variance_array()
        if var_u is None:
            var_u, var_b = [vu], [vb]
            stages = [v[0] for v in upd.variances]
            steps = np.array([v[1] for v in upd.variances])
            ts = np.array([v[2] for v in upd.variances])
            pairs = duplicate_pairs(upd.provenance)
            omega_fraction = float(upd.omega.mean())
            dup_count = mean_duplicate_count(upd.provenance)
        else:
            var_u.append(vu)
            var_b.append(vb)
        tgt, src = pairs
        if tgt[0].size and upd.eps_after_update is not None:
            e = upd.eps_after_update
            corr_u.add(e[tgt[0], :, tgt[1], tgt[2]], e[src[0], :, src[1], src[2]])
            if upd.renoise_eps is not None:
                r = upd.renoise_eps
                corr_f.add(r[tgt[0], :, tgt[1], tgt[2]], r[src[0], :, src[1], src[2]])
        if upd.renoise_eps is not None:
            sched = upd.config.schedule()
            ab = sched.alpha_bar(sched.timestep(upd.config.T2))
            rv_measured.append(float(np.var(upd.snapshots["z_T2_renoised"])))
            rv_expected.append(ab * float(np.var(upd.snapshots["z_T1_updated"])) + (1.0 - ab))

    samples = range(n_samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(lambda s: _sample(config, s, config.seed, resample_seed), samples):
                consume(result)
    else:
        for s in samples:
            consume(_sample(config, s, config.seed, resample_seed))

    def trace(vs):
        mean = np.array([math.fsum(col) / len(vs) for col in np.array(vs).T])
        return VarianceTrace(steps, ts, mean, n_samples)

    have_pairs = pairs[0][0].size > 0 and n_samples >= 2
    have_fresh = have_pairs and corr_f.n >= 2
    return UpdateShiftResult(
        with_update=trace(var_u),
        baseline=trace(var_b),
        ordinal_stage=stages,
        pairs=pairs,
        corr_update=corr_u.per_series() if have_pairs else np.zeros((0, config.shape[1])),
        corr_fresh=corr_f.per_series() if have_fresh else None,
        pooled_update=corr_u.pooled() if have_pairs else float("nan"),
        pooled_fresh=corr_f.pooled() if have_fresh else float("nan"),
        fresh_observations=corr_f.observations,
        omega_fraction=omega_fraction,
        duplicate_count=dup_count,
        renoise_var_measured=math.fsum(rv_measured) / len(rv_measured) if rv_measured else float("nan"),
        renoise_var_expected=math.fsum(rv_expected) / len(rv_expected) if rv_expected else float("nan"),
        n_samples=n_samples,
    )
