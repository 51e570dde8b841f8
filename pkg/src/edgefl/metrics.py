"""Energy efficiency, model-FLOP utilisation, granularity and power traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from edgefl.profiles import ModelProfile

MFU_MODES = ("six_n", "attention_aware")


def energy_efficiency(tps: float, power_w: float) -> float:
    """Tokens per second per watt."""
    if not power_w > 0:
        raise ValueError(f"power must be > 0 W, got {power_w}")
    if tps < 0:
        raise ValueError(f"throughput must be >= 0, got {tps}")
    return tps / power_w


def flops_per_token(profile: ModelProfile, mode: str = "attention_aware") -> float:
    # 6N for forward+backward through the weights; attention_aware adds the
    # QK^T and AV products, 12 * layers * d_model * seq_len per token.
    if mode not in MFU_MODES:
        raise ValueError(f"unknown MFU mode {mode!r}; expected one of {MFU_MODES}")
    flops = 6.0 * profile.total_params
    if mode == "attention_aware":
        flops += 12.0 * profile.layers * profile.d_model * profile.seq_len
    return flops


def mfu(profile: ModelProfile, tps: float, peak_flops: float, mode: str = "attention_aware") -> float:
    if not tps > 0:
        raise ValueError(f"throughput must be > 0, got {tps}")
    if not peak_flops > 0:
        raise ValueError(f"peak FLOP/s must be > 0, got {peak_flops}")
    return flops_per_token(profile, mode) * tps / peak_flops


def granularity(t_comp: float, t_comm: float) -> float:
    if not t_comm > 0:
        raise ValueError(f"communication time must be > 0, got {t_comm}")
    if t_comp < 0:
        raise ValueError(f"computation time must be >= 0, got {t_comp}")
    return t_comp / t_comm


@dataclass(frozen=True)
class PowerTrace:
    t: np.ndarray
    watts: np.ndarray
    rate_hz: float = 2.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        w = np.asarray(self.watts, dtype=float)
        if t.shape != w.shape or t.ndim != 1:
            raise ValueError("timestamps and power samples must be 1-D and equally long")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("power samples must be >= 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "watts", w)


def trace_stats(trace: PowerTrace) -> tuple[float, float]:
    """(average power in W, energy in J) by trapezoidal integration."""
    if trace.t.size < 2:
        raise ValueError("a power trace needs at least 2 samples")
    energy = float(np.sum(0.5 * (trace.watts[1:] + trace.watts[:-1]) * np.diff(trace.t)))
    return energy / float(trace.t[-1] - trace.t[0]), energy


def load_power_trace(path, rate_hz: float = 2.0) -> PowerTrace:
    """Read a ``t_s,watts`` CSV."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t_s", "watts"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 't_s,watts'")
        rows = [(float(r["t_s"]), float(r["watts"])) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no samples")
    t, w = zip(*rows)
    return PowerTrace(np.array(t), np.array(w), rate_hz)
