"""JSON run configuration.

Every physical quantity carries its SI unit in the key name.  Several files
may be layered; later files override earlier ones key by key, which is how
the patch written by ``calibrate`` is applied.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .array_model import ArrayBuildConfig, ArrayLayout, build_dual_array
from .experiment_harness import SimulationPredictor, ThermalRunSpec
from .modulation import ExposureMode
from .thermal_model import (
    CALIBRATED_ABSORPTION,
    COTTON,
    DEFAULT_PROBE_RADII,
    INITIAL_TEMPERATURE,
    SKIN,
    MaterialLayer,
    ModeKind,
    ThermalGrid,
    ThermalStack,
)


class ConfigError(ValueError):
    """Configuration file could not be read or failed validation."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ArraySection(_Section):
    rows: int = 15
    cols: int = 17
    pitch_m: float = 10e-3
    n_arrays: int = 2
    corner_cut: int = 2
    gap_m: float = 0.0
    origin_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius_m: float = 5e-3
    ref_amplitude_pa: float = 6.0
    frequency_hz: float = 40e3
    sound_speed_m_s: float = 346.0
    air_density_kg_m3: float = 1.18


class FieldSection(_Section):
    focus_height_m: float = 0.200
    grid_points: int = 41
    grid_spacing_m: float = 1e-3


class ExposureSection(_Section):
    mode: Literal["SP", "AM", "None"] = "SP"
    am_frequency_hz: float = 150.0
    am_duty: float = 0.5
    am_waveform: Literal["rectangular", "sine"] = "rectangular"
    base_amplitude: float = 1.0
    duration_s: float = 10.0
    duration_cap_s: float = 10.0
    pain_threshold_c: float = 45.0


class LayerSection(_Section):
    name: str
    thickness_m: float
    density_kg_m3: float
    specific_heat_j_kg_k: float
    conductivity_w_m_k: float


def _layer_section(layer: MaterialLayer) -> LayerSection:
    return LayerSection(name=layer.name, thickness_m=layer.thickness, density_kg_m3=layer.density,
                        specific_heat_j_kg_k=layer.specific_heat, conductivity_w_m_k=layer.conductivity)


class StackSection(_Section):
    layers: tuple[LayerSection, ...] = (_layer_section(COTTON), _layer_section(SKIN))
    absorption_fraction: float = CALIBRATED_ABSORPTION
    # null: 31.125 C for SP runs, 30.125 C for AM and no-irradiation runs
    initial_temperature_c: Optional[float] = None
    # null: equal to the initial temperature
    ambient_temperature_c: Optional[float] = None
    convection_w_m2_k: float = 10.0
    bottom_boundary: Literal["fixed", "insulated"] = "fixed"


class ThermalSection(_Section):
    radius_m: float = 25e-3
    dr_m: float = 0.25e-3
    dz_m: float = 0.25e-3
    dt_safety: float = 0.8
    probe_radii_m: tuple[float, ...] = DEFAULT_PROBE_RADII
    sample_period_s: float = 10e-3
    frame_interval_s: Optional[float] = 1.0
    normalize_initial: bool = False
    reference_temperature_c: float = INITIAL_TEMPERATURE[ModeKind.SP]
    field_grid_points: int = 51
    field_grid_spacing_m: float = 1e-3


class CalibrationSection(_Section):
    target_time_s: float = 5.88
    threshold_c: float = 45.0
    tolerance_s: float = 0.02
    max_iterations: int = 60


class ProtocolSection(_Section):
    repeats: int = 10
    presentation_s: float = 5.0
    rest_s: float = 10.0


class RunConfig(_Section):
    array: ArraySection = Field(default_factory=ArraySection)
    field: FieldSection = Field(default_factory=FieldSection)
    exposure: ExposureSection = Field(default_factory=ExposureSection)
    stack: StackSection = Field(default_factory=StackSection)
    thermal: ThermalSection = Field(default_factory=ThermalSection)
    calibration: CalibrationSection = Field(default_factory=CalibrationSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    output_dir: str = "out"
    seed: int = 0

    # -- builders --------------------------------------------------------

    def array_config(self) -> ArrayBuildConfig:
        a = self.array
        return ArrayBuildConfig(a.rows, a.cols, a.pitch_m, a.n_arrays, a.corner_cut, a.gap_m,
                                tuple(a.origin_m), a.radius_m, a.ref_amplitude_pa, a.frequency_hz,
                                a.sound_speed_m_s, a.air_density_kg_m3)

    def layout(self) -> ArrayLayout:
        return build_dual_array(self.array_config())

    def mode(self, kind: str | None = None) -> ExposureMode:
        """Exposure mode; the no-irradiation pattern is SP at zero amplitude."""
        e = self.exposure
        kind = kind or e.mode
        if kind == "AM":
            return ExposureMode.am(e.am_frequency_hz, e.am_duty, e.am_waveform)
        return ExposureMode.sp()

    def base_amplitude(self) -> float:
        return 0.0 if self.exposure.mode == "None" else self.exposure.base_amplitude

    def initial_temperature(self) -> float:
        if self.stack.initial_temperature_c is not None:
            return self.stack.initial_temperature_c
        return INITIAL_TEMPERATURE[ModeKind.SP if self.exposure.mode == "SP" else ModeKind.AM]

    def thermal_stack(self) -> ThermalStack:
        s = self.stack
        t0 = self.initial_temperature()
        layers = tuple(MaterialLayer(l.name, l.thickness_m, l.density_kg_m3, l.specific_heat_j_kg_k,
                                     l.conductivity_w_m_k) for l in s.layers)
        ambient = t0 if s.ambient_temperature_c is None else s.ambient_temperature_c
        return ThermalStack(layers, s.absorption_fraction, ambient, t0, s.convection_w_m2_k, s.bottom_boundary)

    def thermal_grid(self) -> ThermalGrid:
        t = self.thermal
        return ThermalGrid(t.radius_m, t.dr_m, t.dz_m, t.dt_safety)

    def run_spec(self) -> ThermalRunSpec:
        t = self.thermal
        return ThermalRunSpec(
            mode=self.mode(), duration=self.exposure.duration_s, focus_height=self.field.focus_height_m,
            probe_radii=tuple(t.probe_radii_m), normalize_initial=t.normalize_initial,
            reference_temperature=t.reference_temperature_c, base_amplitude=self.base_amplitude(),
            sample_period=t.sample_period_s, frame_interval=t.frame_interval_s,
            field_points=t.field_grid_points, field_spacing=t.field_grid_spacing_m, grid=self.thermal_grid(),
        )

    def predictor(self, layout: ArrayLayout | None = None) -> SimulationPredictor:
        t = self.thermal
        return SimulationPredictor(layout or self.layout(), self.thermal_stack(), self.thermal_grid(),
                                   t.field_grid_points, t.field_grid_spacing_m, t.sample_period_s)


def _merge(base: dict, patch: dict) -> dict:
    out = dict(base)
    for key, val in patch.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _describe(err: ValidationError) -> str:
    msgs = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        if e["type"] == "extra_forbidden":
            msgs.append(f"unknown config key '{loc}'")
        else:
            msgs.append(f"invalid value for '{loc}': {e['msg']}")
    return "; ".join(msgs)


def config_from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def load_config(paths=()) -> RunConfig:
    """Merge JSON files in order on top of the defaults."""
    merged: dict = {}
    for p in paths:
        try:
            data = json.loads(Path(p).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {p} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {p} must contain a JSON object")
        merged = _merge(merged, data)
    return config_from_dict(merged)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
