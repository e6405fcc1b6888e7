"""Exposure modes (static pressure / amplitude modulated) and safety-gated planning."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

DEFAULT_AM_FREQUENCY = 150.0
DEFAULT_AM_DUTY = 0.5
DEFAULT_DURATION_CAP = 10.0
PAIN_THRESHOLD = 45.0

# fractional phases this close to a period boundary snap onto it
_PHASE_EPS = 1e-9


class ModeKind(str, enum.Enum):
    SP = "SP"
    AM = "AM"


class Waveform(str, enum.Enum):
    RECTANGULAR = "rectangular"
    SINE = "sine"


@dataclass(frozen=True)
class ExposureMode:
    """Irradiation pattern.

    SP is constant amplitude.  AM switches the carrier on and off at
    ``am_frequency``; with the default rectangular waveform the carrier is on
    for the first ``am_duty`` fraction of each period.  The ``sine`` waveform
    is the full-depth raised cosine ``(1 - cos(2 pi f t)) / 2`` and ignores
    the duty.
    """

    kind: ModeKind = ModeKind.SP
    am_frequency: float = DEFAULT_AM_FREQUENCY
    am_duty: float = DEFAULT_AM_DUTY
    am_waveform: Waveform = Waveform.RECTANGULAR

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        object.__setattr__(self, "am_waveform", Waveform(self.am_waveform))
        if self.kind is ModeKind.AM:
            if not self.am_frequency > 0:
                raise ValueError(f"AM frequency must be positive, got {self.am_frequency}")
            if not 0.0 < self.am_duty < 1.0:
                raise ValueError(f"AM duty must be in (0, 1), got {self.am_duty}")

    @classmethod
    def sp(cls) -> "ExposureMode":
        return cls(ModeKind.SP)

    @classmethod
    def am(cls, frequency: float = DEFAULT_AM_FREQUENCY, duty: float = DEFAULT_AM_DUTY,
           waveform: Waveform | str = Waveform.RECTANGULAR) -> "ExposureMode":
        return cls(ModeKind.AM, frequency, duty, Waveform(waveform))

    @property
    def period(self) -> float | None:
        return 1.0 / self.am_frequency if self.kind is ModeKind.AM else None


def envelope(mode: ExposureMode, t):
    """Amplitude envelope in [0, 1] at time(s) ``t`` >= 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("envelope is defined for t >= 0 only")
    if mode.kind is ModeKind.SP:
        out = np.ones_like(t_arr)
    else:
        cycles = t_arr * mode.am_frequency
        frac = cycles - np.floor(cycles)
        frac = np.where(frac > 1.0 - _PHASE_EPS, 0.0, frac)
        if mode.am_waveform is Waveform.RECTANGULAR:
            out = (frac < mode.am_duty).astype(float)
        else:
            out = 0.5 * (1.0 - np.cos(2.0 * math.pi * frac))
    return float(out) if out.ndim == 0 else out


def effective_energy_factor(mode: ExposureMode) -> float:
    """Time average of the squared envelope over one modulation period."""
    if mode.kind is ModeKind.SP:
        return 1.0
    if mode.am_waveform is Waveform.RECTANGULAR:
        return float(mode.am_duty)
    return 3.0 / 8.0


class GateReason(str, enum.Enum):
    REQUESTED = "requested"
    DURATION_CAP = "duration_cap"
    THERMAL_CUTOFF = "thermal_cutoff"


@dataclass(frozen=True)
class ExposurePlan:
    mode: ExposureMode
    duration: float
    base_amplitude: float
    focal_point: tuple[float, float, float]
    gate_reason: GateReason
    duration_cap: float = DEFAULT_DURATION_CAP

    def __post_init__(self):
        if not 0 < self.duration <= self.duration_cap:
            raise ValueError(f"plan duration {self.duration} outside (0, {self.duration_cap}]")

    def to_record(self) -> str:
        return format_plan_record(self)


class ThresholdPredictor(Protocol):
    """Anything that can predict when peak skin temperature first reaches a threshold."""

    def time_to_threshold(self, mode: ExposureMode, base_amplitude: float, focal_point,
                          horizon: float, threshold: float) -> float | None:
        ...


def plan_exposure(
    mode: ExposureMode,
    requested_duration: float,
    base_amplitude: float,
    focal_point,
    predictor: ThresholdPredictor,
    *,
    duration_cap: float = DEFAULT_DURATION_CAP,
    pain_threshold: float = PAIN_THRESHOLD,
) -> ExposurePlan:
    """Clip a requested exposure to the duration cap and the predicted pain onset.

    The reported gate is the bound that is actually active; on ties the
    request wins over the cap, and the cap over the thermal cutoff.
    """
    if not (math.isfinite(requested_duration) and requested_duration > 0):
        raise ValueError(f"requested duration must be positive, got {requested_duration}")
    if not 0.0 <= base_amplitude <= 1.0:
        raise ValueError(f"base_amplitude must be in [0, 1], got {base_amplitude}")
    if not duration_cap > 0:
        raise ValueError("duration cap must be positive")
    focus = tuple(float(c) for c in np.asarray(focal_point, dtype=float).reshape(3))

    horizon = min(requested_duration, duration_cap)
    reason = GateReason.REQUESTED if requested_duration <= duration_cap else GateReason.DURATION_CAP
    cutoff = predictor.time_to_threshold(mode, base_amplitude, focus, horizon, pain_threshold)
    duration = horizon
    if cutoff is not None and cutoff < horizon:
        if cutoff <= 0:
            raise ValueError("pain threshold is already reached at exposure onset")
        duration = cutoff
        reason = GateReason.THERMAL_CUTOFF
    return ExposurePlan(mode, duration, base_amplitude, focus, reason, duration_cap)


def format_plan_record(plan: ExposurePlan) -> str:
    """One-line ``key=value`` record of a plan."""
    m = plan.mode
    freq = m.am_frequency if m.kind is ModeKind.AM else 0.0
    duty = m.am_duty if m.kind is ModeKind.AM else 1.0
    fp = ",".join(repr(c) for c in plan.focal_point)
    fields = [
        f"mode={m.kind.value}",
        f"duty={duty!r}",
        f"frequency_hz={freq!r}",
        f"waveform={m.am_waveform.value}",
        f"duration_s={plan.duration!r}",
        f"amplitude={plan.base_amplitude!r}",
        f"gate_reason={plan.gate_reason.value}",
        f"focal_point_m={fp}",
        f"duration_cap_s={plan.duration_cap!r}",
    ]
    return " ".join(fields)


def parse_plan_record(line: str) -> ExposurePlan:
    try:
        items = dict(tok.split("=", 1) for tok in line.split())
        kind = ModeKind(items["mode"])
        if kind is ModeKind.AM:
            mode = ExposureMode.am(float(items["frequency_hz"]), float(items["duty"]), items["waveform"])
        else:
            mode = ExposureMode.sp()
        focus = tuple(float(c) for c in items["focal_point_m"].split(","))
        return ExposurePlan(
            mode,
            float(items["duration_s"]),
            float(items["amplitude"]),
            focus,
            GateReason(items["gate_reason"]),
            float(items.get("duration_cap_s", DEFAULT_DURATION_CAP)),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed plan record: {line!r}") from exc
