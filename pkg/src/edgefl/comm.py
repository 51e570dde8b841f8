"""Per-bit communication energy and transfer time.

Every transmitted bit is charged the energy of each network element it
crosses: access switches, LTE endpoint and base station (wireless only), the
broadband network gateway, edge and core routers, and data-centre switches.
A round moves the model down to and back up from every participant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from edgefl.profiles import ModelProfile, _load

J_PER_KWH = 3.6e6
PAYLOAD_MODES = ("full_model", "peft", "explicit")


@dataclass(frozen=True)
class CommScenario:
    name: str
    downlink_bps: float
    uplink_bps: float
    n_as: int = 1
    n_ltee: int = 0
    n_lteb: int = 0
    bng: bool = True
    n_e: int = 3
    n_c: int = 4
    n_d: int = 2
    e_as: float = 0.0
    e_ltee: float = 0.0
    e_lteb: float = 0.0
    e_bng: float = 0.0
    e_e: float = 0.0
    e_c: float = 0.0
    e_d: float = 0.0
    # Calibrated aggregate J/bit; when set it replaces the hop-by-hop sum.
    j_per_bit: float | None = None

    def __post_init__(self):
        for f in ("n_as", "n_ltee", "n_lteb", "n_e", "n_c", "n_d"):
            if getattr(self, f) < 0:
                raise ValueError(f"{self.name}: hop count {f} must be >= 0")
        for f in ("e_as", "e_ltee", "e_lteb", "e_bng", "e_e", "e_c", "e_d"):
            if getattr(self, f) < 0:
                raise ValueError(f"{self.name}: per-bit energy {f} must be >= 0")
        if self.j_per_bit is not None and self.j_per_bit < 0:
            raise ValueError(f"{self.name}: j_per_bit must be >= 0")
        if not (self.downlink_bps > 0 and self.uplink_bps > 0):
            raise ValueError(f"{self.name}: bandwidths must be > 0")


@dataclass(frozen=True)
class Payload:
    bits: int
    derivation: str = "explicit"

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("payload must be > 0 bits")
        if self.derivation not in PAYLOAD_MODES:
            raise ValueError(f"unknown payload derivation {self.derivation!r}")


@lru_cache(maxsize=None)
def scenario_presets() -> dict[str, CommScenario]:
    return {k: CommScenario(name=k, **v) for k, v in _load("scenarios.yaml").items()}


def scenario(name_or_fields) -> CommScenario:
    if isinstance(name_or_fields, CommScenario):
        return name_or_fields
    if isinstance(name_or_fields, str):
        presets = scenario_presets()
        if name_or_fields not in presets:
            raise KeyError(f"unknown scenario {name_or_fields!r}; presets: {sorted(presets)}")
        return presets[name_or_fields]
    fields = dict(name_or_fields)
    fields.setdefault("name", "custom")
    return CommScenario(**fields)


def payload_bits(profile: ModelProfile, mode: str = "full_model") -> Payload:
    if mode == "full_model":
        return Payload(profile.total_params * profile.precision_bits, mode)
    if mode == "peft":
        if profile.trainable_params <= 0:
            raise ValueError("PEFT payload needs trainable parameters")
        return Payload(profile.trainable_params * profile.precision_bits, mode)
    raise ValueError(f"payload mode must be 'full_model' or 'peft', got {mode!r}")


def per_bit_energy(sc: CommScenario) -> float:
    if sc.j_per_bit is not None:
        return sc.j_per_bit
    return (sc.n_as * sc.e_as + sc.n_ltee * sc.e_ltee + sc.n_lteb * sc.e_lteb
            + (sc.e_bng if sc.bng else 0.0)
            + sc.n_e * sc.e_e + sc.n_c * sc.e_c + sc.n_d * sc.e_d)


def transfers_per_round(clients_per_round: int) -> int:
    return 2 * clients_per_round


def round_comm_energy(sc: CommScenario, payload: Payload, clients_per_round: int) -> tuple[float, float]:
    """(joules, kWh) for one round: one download and one upload per participant."""
    if clients_per_round < 1:
        raise ValueError("clients_per_round must be >= 1")
    joules = per_bit_energy(sc) * payload.bits * transfers_per_round(clients_per_round)
    return joules, joules / J_PER_KWH


def comm_time(sc: CommScenario, payload: Payload, wait_s: float = 0.0) -> float:
    """Seconds to receive the model, wait, and send the update back."""
    if wait_s < 0:
        raise ValueError("wait time must be >= 0")
    return payload.bits / sc.downlink_bps + wait_s + payload.bits / sc.uplink_bps


def calibrate_j_per_bit(cells: Iterable[tuple[float, float]], clients_per_round: int) -> float:
    """Single J/bit constant fitted to ``(payload_bits, kwh_per_round)`` cells.

    Minimises the summed squared relative error of the predicted cells.
    """
    ratios = [bits * transfers_per_round(clients_per_round) / J_PER_KWH / kwh for bits, kwh in cells]
    if not ratios:
        raise ValueError("need at least one calibration cell")
    return sum(ratios) / sum(r * r for r in ratios)


def backsolve_payload_bits(kwh_per_round: float, j_per_bit: float, clients_per_round: int) -> float:
    """Payload size implied by a per-round energy figure."""
    return kwh_per_round * J_PER_KWH / (j_per_bit * transfers_per_round(clients_per_round))


@lru_cache(maxsize=None)
def published_table() -> dict:
    """Per-round communication kWh and granularity cells used for calibration."""
    return _load("comm_table.yaml")
