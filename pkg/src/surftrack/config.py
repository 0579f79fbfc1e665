"""Pipeline configuration.

Plain key=value text, one setting per line, # comments. No nesting and
no quoting rules, so a config written by dump_config reparses to the
exact same values.
"""

import dataclasses
from dataclasses import dataclass

__all__ = ["PipelineConfig", "load_config", "parse_config", "dump_config"]


@dataclass
class PipelineConfig:
    dataset_dir: str = "."
    samples_per_frame: int = 100
    neighborhood_offset: int = 20
    linear_tol: float = 0.1
    translation_tol: float = 4.0
    norm: str = "euclidean"
    newton_iters: int = 10
    start_extent: float = 20.0
    start_step: float = 5.0
    wavelengths: tuple = (8.0, 16.0, 32.0)
    n_orientations: int = 6
    half_size: int = 32
    seed: int = 0
    workers: int = 1

    def validate(self):
        for name in ("samples_per_frame", "neighborhood_offset",
                     "newton_iters", "n_orientations", "half_size",
                     "workers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got"
                                 f" {getattr(self, name)}")
        for name in ("linear_tol", "translation_tol", "start_extent",
                     "start_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got"
                                 f" {getattr(self, name)}")
        if self.norm not in ("euclidean", "max"):
            raise ValueError(f"norm must be euclidean or max, got"
                             f" {self.norm!r}")
        if not self.wavelengths or any(w <= 0 for w in self.wavelengths):
            raise ValueError(f"wavelengths must be positive, got"
                             f" {self.wavelengths}")


_DEFAULTS = PipelineConfig()
_FIELD_NAMES = {f.name for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELD_NAMES:
        raise ValueError(f"unknown config key {name!r}")
    if name == "wavelengths":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    kind = type(getattr(_DEFAULTS, name))
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    values = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise ValueError(f"{source}:{ln}: expected key=value,"
                             f" got {line!r}")
        key = key.strip()
        try:
            values[key] = _coerce(key, val.strip())
        except ValueError as exc:
            raise ValueError(f"{source}:{ln}: {exc}") from None
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if f.name == "wavelengths":
            value = " ".join(repr(float(w)) for w in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
