"""Model and hardware profiles, with presets loaded from package data."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml


@dataclass(frozen=True)
class ModelProfile:
    name: str
    total_params: int
    trainable_params: int
    layers: int
    d_model: int
    d_ff: int
    heads: int
    seq_len: int
    precision_bits: int = 32

    def __post_init__(self):
        if not 0 < self.trainable_params <= self.total_params:
            raise ValueError(f"{self.name}: need 0 < trainable_params <= total_params")
        for f in ("layers", "d_model", "d_ff", "heads", "seq_len"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{self.name}: {f} must be positive")
        if self.precision_bits not in (16, 32):
            raise ValueError(f"{self.name}: precision_bits must be 16 or 32")


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    peak_flops: float
    power_w: float
    # model name -> ((batch, seconds), ...) sorted by batch
    step_times: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.peak_flops <= 0 or self.power_w <= 0:
            raise ValueError(f"{self.name}: peak_flops and power_w must be > 0")
        for model, rows in self.step_times.items():
            if not rows or any(t <= 0 or b <= 0 for b, t in rows):
                raise ValueError(f"{self.name}/{model}: step times and batch sizes must be > 0")

    def step_time(self, model: str, batch_size: float) -> float:
        """Seconds per training step, linear in batch size between table rows.

        Outside the table the nearest two rows are extended linearly; a
        single-row table scales proportionally with batch size.
        """
        if model not in self.step_times:
            raise KeyError(f"no step-time table for model {model!r} on {self.name}")
        rows = sorted(self.step_times[model])
        bs = np.array([b for b, _ in rows], dtype=float)
        ts = np.array([t for _, t in rows], dtype=float)
        if bs.size == 1:
            return float(ts[0] * batch_size / bs[0])
        if batch_size <= bs[0]:
            i = 0
        elif batch_size >= bs[-1]:
            i = bs.size - 2
        else:
            return float(np.interp(batch_size, bs, ts))
        slope = (ts[i + 1] - ts[i]) / (bs[i + 1] - bs[i])
        return float(max(ts[i] + slope * (batch_size - bs[i]), np.finfo(float).tiny))


def _load(name: str) -> dict:
    with resources.files("edgefl.data").joinpath(name).open("r") as fh:
        return yaml.safe_load(fh)


@lru_cache(maxsize=None)
def model_presets() -> dict[str, ModelProfile]:
    return {k: ModelProfile(name=k, **v) for k, v in _load("models.yaml").items()}


@lru_cache(maxsize=None)
def hardware_presets() -> dict[str, HardwareProfile]:
    out = {}
    for k, v in _load("hardware.yaml").items():
        steps = {m: tuple(sorted((int(b), float(t)) for b, t in rows.items()))
                 for m, rows in v["step_times"].items()}
        out[k] = HardwareProfile(name=k, peak_flops=float(v["peak_flops"]),
                                 power_w=float(v["power_w"]), step_times=steps)
    return out


def model_profile(name_or_fields) -> ModelProfile:
    if isinstance(name_or_fields, ModelProfile):
        return name_or_fields
    if isinstance(name_or_fields, str):
        presets = model_presets()
        if name_or_fields not in presets:
            raise KeyError(f"unknown model {name_or_fields!r}; presets: {sorted(presets)}")
        return presets[name_or_fields]
    return ModelProfile(**name_or_fields)


def hardware_profile(name_or_fields) -> HardwareProfile:
    if isinstance(name_or_fields, HardwareProfile):
        return name_or_fields
    if isinstance(name_or_fields, str):
        presets = hardware_presets()
        if name_or_fields not in presets:
            raise KeyError(f"unknown hardware {name_or_fields!r}; presets: {sorted(presets)}")
        return presets[name_or_fields]
    fields = dict(name_or_fields)
    steps = fields.pop("step_times", {})
    fields["step_times"] = {m: tuple(sorted((int(b), float(t)) for b, t in rows.items()))
                            for m, rows in steps.items()}
    return HardwareProfile(**fields)
