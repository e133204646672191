"""JSON configuration for the command line (strict: unknown keys are errors)."""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .attnmask import MaskShape
from .camera import PRESETS, CameraParams, preset
from .errors import ConfigError, LightMotionError
from .pipeline import PipelineConfig
from .tensorio import atomic_open

CAMERA_KEYS = {f.name for f in fields(CameraParams)}
EMIT_DEFAULTS = {
    "snapshots": True,
    "variance_csv": True,
    "provenance_csv": True,
    "field_pgm": False,
    "mask_pgm": False,
    "figures": True,
}
SCHEDULE_DEFAULTS = {"n_train_steps": 1000, "beta_start": 1e-4, "beta_end": 0.02}
DENOISER_DEFAULTS = {
    "kind": "oracle",
    "transport": True,
    "bias": 0.0,
    "jitter_std": 0.0,
    "jitter_seed": 0,
    "init": None,
    "x0": None,
}
PROBE_DEFAULTS = {
    "n_samples": 1000,
    "sweep": "fixed",
    "t_assumed": None,
    "x0_power": 1.0,
    "n_elements": 65536,
}
TOP_KEYS = {
    "T", "T0", "T1", "T2", "seed", "resample_seed", "shape", "preset", "camera",
    "correction", "update", "mask", "axis_policy", "schedule", "denoiser",
    "output_dir", "emit", "probe",
}


def _check_keys(section, given, allowed):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        where = f" in '{section}'" if section else ""
        raise ConfigError(f"unknown key(s){where}: {', '.join(unknown)}")


def _merged(section, given, defaults):
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ConfigError(f"'{section}' must be an object")
    _check_keys(section, given, defaults)
    out = dict(defaults)
    out.update(given)
    return out


def _resolve_path(p, base):
    if p is None:
        return None
    p = Path(p)
    return str(p if p.is_absolute() else (base / p).resolve())


@dataclass
class CliConfig:
    pipeline: PipelineConfig
    output_dir: str
    emit: dict = field(default_factory=lambda: dict(EMIT_DEFAULTS))
    schedule: dict = field(default_factory=lambda: dict(SCHEDULE_DEFAULTS))
    denoiser: dict = field(default_factory=lambda: dict(DENOISER_DEFAULTS))
    probe: dict = field(default_factory=lambda: dict(PROBE_DEFAULTS))
    mask_spec: dict = None

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        _check_keys("", doc, TOP_KEYS)
        base = Path(base_dir)
        if "preset" in doc and doc["preset"] is not None and doc.get("camera") is not None:
            raise ConfigError("'preset' and 'camera' are mutually exclusive")
        try:
            if doc.get("preset") is not None:
                if doc["preset"] not in PRESETS:
                    raise ConfigError(f"unknown preset {doc['preset']!r}")
                camera = preset(doc["preset"])
            else:
                cam = doc.get("camera") or {}
                if not isinstance(cam, dict):
                    raise ConfigError("'camera' must be an object")
                _check_keys("camera", cam, CAMERA_KEYS)
                camera = CameraParams(**cam)
        except (LightMotionError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"camera: {exc}") from exc

        schedule = _merged("schedule", doc.get("schedule"), SCHEDULE_DEFAULTS)
        denoiser = _merged("denoiser", doc.get("denoiser"), DENOISER_DEFAULTS)
        if denoiser["kind"] not in ("oracle", "external"):
            raise ConfigError("denoiser.kind must be 'oracle' or 'external'")
        if denoiser["kind"] == "external" and not (denoiser["init"] and denoiser["x0"]):
            raise ConfigError("external denoiser mode needs both 'init' and 'x0' LMT paths")
        denoiser["init"] = _resolve_path(denoiser["init"], base)
        denoiser["x0"] = _resolve_path(denoiser["x0"], base)
        emit = _merged("emit", doc.get("emit"), EMIT_DEFAULTS)
        probe = _merged("probe", doc.get("probe"), PROBE_DEFAULTS)
        if probe["sweep"] not in ("fixed", "diagonal"):
            raise ConfigError("probe.sweep must be 'fixed' or 'diagonal'")

        mask_spec = doc.get("mask")
        mask = None
        if mask_spec is not None:
            if not isinstance(mask_spec, dict) or len(mask_spec) != 1 or not set(mask_spec) <= {"file", "synth"}:
                raise ConfigError("'mask' must be null, {\"file\": path} or {\"synth\": {...}}")
            if "file" in mask_spec:
                mask_spec = {"file": _resolve_path(mask_spec["file"], base)}
                mask = mask_spec["file"]
            else:
                synth = mask_spec["synth"]
                _check_keys("mask.synth", synth, {"kind", "center", "extents"})
                try:
                    mask = MaskShape(synth["kind"], tuple(synth["center"]), tuple(synth["extents"]))
                except (KeyError, TypeError) as exc:
                    raise ConfigError(f"mask.synth: {exc}") from exc

        kwargs = {k: doc[k] for k in ("T", "T0", "T1", "T2", "seed", "resample_seed", "correction", "update", "axis_policy") if k in doc}
        if "shape" in doc:
            kwargs["shape"] = tuple(doc["shape"])
        try:
            pipeline = PipelineConfig(camera=camera, mask=mask, **kwargs, **schedule)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        output_dir = _resolve_path(doc.get("output_dir", "lightmotion_out"), Path.cwd())
        return cls(pipeline, output_dir, emit, schedule, denoiser, probe, mask_spec)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(doc, path.parent)

    def to_dict(self):
        """Effective configuration with the preset expanded and defaults filled in."""
        p = self.pipeline
        return {
            "T": p.T,
            "T0": p.T0,
            "T1": p.T1,
            "T2": p.T2,
            "seed": p.seed,
            "resample_seed": p.resample_seed,
            "shape": list(p.shape),
            "preset": None,
            "camera": p.camera.to_dict(),
            "correction": p.correction,
            "update": p.update,
            "mask": self.mask_spec,
            "axis_policy": p.axis_policy,
            "schedule": dict(self.schedule),
            "denoiser": dict(self.denoiser),
            "output_dir": self.output_dir,
            "emit": dict(self.emit),
            "probe": dict(self.probe),
        }

    def dump(self, path):
        with atomic_open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
