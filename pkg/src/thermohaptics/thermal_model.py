"""Axisymmetric (r, z) conduction through a fabric + skin stack.

The stack is discretised with a vertex-centred finite-volume scheme (nodes
on the axis, on the exposed face and on every layer interface) and advanced
with explicit Euler steps.  Depth index 0 is the exposed fabric
face, which receives the absorbed acoustic flux and loses heat to air by
convection.  The outer radius is insulated; the bottom face is either held
at the initial temperature (deep-tissue sink) or insulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .acoustic_field import FieldGrid
from .errors import CalibrationError, GridAlignmentError, InsufficientPowerError, StabilityError
from .modulation import DEFAULT_DURATION_CAP, PAIN_THRESHOLD, ExposureMode, ModeKind, effective_energy_factor

MAX_SIMULATION_TIME = 60.0
DEFAULT_PROBE_RADII = (0.0, 5e-3, 10e-3, 15e-3)
DEFAULT_SAMPLE_PERIOD = 10e-3
INITIAL_TEMPERATURE = {ModeKind.SP: 31.125, ModeKind.AM: 30.125}

# Absorption fraction that puts the default SP centre probe at 45 C after
# 5.88 s; produced by calibrate_absorption on the default build.
CALIBRATED_ABSORPTION = 0.129430


@dataclass(frozen=True)
class MaterialLayer:
    name: str
    thickness: float
    density: float
    specific_heat: float
    conductivity: float

    def __post_init__(self):
        for attr in ("thickness", "density", "specific_heat", "conductivity"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"layer {self.name!r}: {attr} must be positive")

    @property
    def diffusivity(self) -> float:
        return self.conductivity / (self.density * self.specific_heat)

    @property
    def heat_capacity(self) -> float:
        return self.density * self.specific_heat


COTTON = MaterialLayer("fabric", 1.0e-3, 400.0, 1300.0, 0.06)
SKIN = MaterialLayer("skin", 5.0e-3, 1100.0, 3500.0, 0.35)


@dataclass(frozen=True)
class ThermalStack:
    layers: tuple[MaterialLayer, ...] = (COTTON, SKIN)
    absorption_fraction: float = CALIBRATED_ABSORPTION
    ambient_temperature: float = INITIAL_TEMPERATURE[ModeKind.SP]
    initial_temperature: float = INITIAL_TEMPERATURE[ModeKind.SP]
    convection_coefficient: float = 10.0
    bottom_boundary: str = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("stack needs at least one layer")
        if not 0.0 <= self.absorption_fraction <= 1.0:
            raise ValueError(f"absorption_fraction must be in [0, 1], got {self.absorption_fraction}")
        if self.convection_coefficient < 0:
            raise ValueError("convection coefficient must be non-negative")
        if self.bottom_boundary not in ("fixed", "insulated"):
            raise ValueError(f"bottom_boundary must be 'fixed' or 'insulated', got {self.bottom_boundary!r}")
        if not (math.isfinite(self.ambient_temperature) and math.isfinite(self.initial_temperature)):
            raise ValueError("temperatures must be finite")

    @property
    def thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)

    def with_initial_temperature(self, temperature: float) -> "ThermalStack":
        """Same stack with initial and ambient temperature both set to ``temperature``."""
        return replace(self, initial_temperature=temperature, ambient_temperature=temperature)


def default_stack(kind: ModeKind | str = ModeKind.SP, **overrides) -> ThermalStack:
    """Default cotton + skin stack at the starting temperature used for ``kind``."""
    t0 = INITIAL_TEMPERATURE[ModeKind(kind)]
    params = dict(ambient_temperature=t0, initial_temperature=t0)
    params.update(overrides)
    return ThermalStack(**params)


@dataclass(frozen=True)
class ThermalGrid:
    radius: float = 25e-3
    dr: float = 0.25e-3
    dz: float = 0.25e-3
    dt_safety: float = 0.8

    def __post_init__(self):
        if not (self.radius > 0 and self.dr > 0 and self.dz > 0):
            raise ValueError("grid radius and spacings must be positive")
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must be in (0, 1]")

    @property
    def nr(self) -> int:
        """Number of radial intervals; there are ``nr + 1`` radial nodes."""
        n = int(round(self.radius / self.dr))
        if abs(n * self.dr - self.radius) > 1e-9 * self.radius:
            raise ValueError(f"radius {self.radius} is not a multiple of dr {self.dr}")
        return n

    def refined(self, factor: int = 2) -> "ThermalGrid":
        return replace(self, dr=self.dr / factor, dz=self.dz / factor)


@dataclass(frozen=True, eq=False)
class ThermalState:
    grid: np.ndarray
    dr: float
    dz: float
    time: float = 0.0

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.ndim != 2:
            raise ValueError("thermal grid must be 2-D (nr x nz)")
        if not np.all(np.isfinite(g)):
            raise ValueError("thermal grid contains non-finite temperatures")
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True, eq=False)
class RadialFlux:
    """Absorbed flux (W/m^2) sampled at increasing radii starting at 0."""

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.array(self.radii, dtype=float)
        v = np.array(self.values, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or r.size == 0:
            raise ValueError("radii and values must be matching 1-D arrays")
        if r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must start at 0 and increase")
        if np.any(v < 0):
            raise ValueError("absorbed flux must be non-negative")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    def scaled(self, factor: float) -> "RadialFlux":
        return RadialFlux(self.radii, self.values * factor)

    @classmethod
    def uniform(cls, value: float, radius: float = 1.0) -> "RadialFlux":
        return cls(np.array([0.0, radius]), np.array([value, value]))

    def on_nodes(self, nr: int, dr: float, nodes: int = 8) -> np.ndarray:
        """Area-weighted mean over the ring of each of the ``nr + 1`` radial nodes.

        Flux beyond the last sampled radius is zero.
        """
        x, w = np.polynomial.legendre.leggauss(nodes)
        i = np.arange(nr + 1)
        lo = (np.maximum(i - 0.5, 0.0) * dr)[:, None]
        hi = (np.minimum(i + 0.5, nr) * dr)[:, None]
        r = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
        q = np.interp(r, self.radii, self.values, right=0.0)
        if self.radii.size == 1:
            q = np.full_like(r, self.values[0])
        num = (w[None, :] * q * r).sum(axis=1)
        den = (w[None, :] * r).sum(axis=1)
        return num / den


@dataclass(frozen=True, eq=False)
class ProbeSeries:
    probe_radii: tuple[float, ...]
    sample_period: float
    samples: np.ndarray
    peak: np.ndarray | None = None
    frames: tuple = ()
    final_state: ThermalState | None = None

    def __post_init__(self):
        if not self.sample_period > 0:
            raise ValueError("sample period must be positive")
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != len(self.probe_radii):
            raise ValueError("samples must be (time x probe)")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "probe_radii", tuple(float(r) for r in self.probe_radii))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[0]) * self.sample_period

    def column(self, probe=0) -> np.ndarray:
        if probe == "peak":
            if self.peak is None:
                raise ValueError("series has no peak column")
            return self.peak
        return self.samples[:, probe]

    def shifted(self, offset: float) -> "ProbeSeries":
        peak = None if self.peak is None else self.peak + offset
        frames = tuple((t, g + offset) for t, g in self.frames)
        return ProbeSeries(self.probe_radii, self.sample_period, self.samples + offset, peak, frames,
                           self.final_state)


@dataclass(frozen=True)
class CalibrationResult:
    absorption_fraction: float
    achieved_time: float
    iterations: int


# --------------------------------------------------------------------------
# acoustic -> heat


def radial_intensity_profile(field: FieldGrid) -> tuple[np.ndarray, np.ndarray]:
    """Ring-averaged intensity about the grid centre, using only complete rings."""
    pts = field.spec.points()
    rel = pts - field.center[None, None, :]
    r = np.linalg.norm(rel, axis=2)
    bins = np.rint(r / field.spacing).astype(int)
    n_full = min(field.nu - 1, field.nv - 1) // 2
    inten = field.intensity()
    counts = np.bincount(bins.ravel())
    sums = np.bincount(bins.ravel(), inten.ravel())
    keep = np.arange(n_full + 1)
    return keep * field.spacing, sums[keep] / counts[keep]


def absorbed_flux(field: FieldGrid, stack: ThermalStack, mode: ExposureMode) -> RadialFlux:
    """Heat flux deposited in the fabric surface: absorbed fraction x energy factor x intensity."""
    n = field.normal
    if np.linalg.norm(np.cross(n, (0.0, 0.0, 1.0))) > 1e-9:
        raise GridAlignmentError(f"field grid normal {n.tolist()} is not parallel to the fabric normal (0, 0, 1)")
    radii, inten = radial_intensity_profile(field)
    factor = stack.absorption_fraction * effective_energy_factor(mode)
    return RadialFlux(radii, factor * inten)


# --------------------------------------------------------------------------
# discretisation


@dataclass(frozen=True, eq=False)
class _Operator:
    capacity: np.ndarray       # (nr+1, nz+1) J/K
    g_radial: np.ndarray       # (nr, nz+1) W/K
    g_vertical: np.ndarray     # (nr+1, nz) W/K
    g_top: np.ndarray          # (nr+1,) W/K, convection to ambient
    area: np.ndarray           # (nr+1,) m^2, top face of each node
    free: np.ndarray           # (nz+1,) bool, rows that are not held fixed
    interface_row: int
    dt_limit: float


def _layer_rows(stack: ThermalStack, dz: float) -> list[int]:
    rows = []
    for layer in stack.layers:
        n = int(round(layer.thickness / dz))
        if n < 1 or abs(n * dz - layer.thickness) > 1e-6 * layer.thickness:
            raise ValueError(f"layer {layer.name!r} thickness {layer.thickness} is not a multiple of dz {dz}")
        rows.append(n)
    return rows


def _nodes_shape(stack: ThermalStack, grid: ThermalGrid) -> tuple[int, int]:
    return grid.nr + 1, sum(_layer_rows(stack, grid.dz)) + 1


@lru_cache(maxsize=64)
def _operator(stack: ThermalStack, n_r: int, n_z: int, dr: float, dz: float) -> _Operator:
    rows = _layer_rows(stack, dz)
    if sum(rows) + 1 != n_z:
        raise ValueError(f"state has {n_z} depth nodes but the stack needs {sum(rows) + 1}")
    nr = n_r - 1
    seg_layer = np.repeat(np.arange(len(rows)), rows)          # layer of each depth segment
    k_seg = np.array([stack.layers[i].conductivity for i in seg_layer])
    c_seg = np.array([stack.layers[i].heat_capacity for i in seg_layer])

    # half of each adjacent segment belongs to a node's control volume
    heat_cap = np.zeros(n_z)
    heat_cap[:-1] += 0.5 * dz * c_seg
    heat_cap[1:] += 0.5 * dz * c_seg
    k_height = np.zeros(n_z)
    k_height[:-1] += 0.5 * dz * k_seg
    k_height[1:] += 0.5 * dz * k_seg

    i = np.arange(n_r, dtype=float)
    outer = np.minimum(i + 0.5, nr) * dr
    inner = np.maximum(i - 0.5, 0.0) * dr
    area = math.pi * (outer**2 - inner**2)
    capacity = area[:, None] * heat_cap[None, :]
    faces = (np.arange(nr) + 0.5) * dr
    g_radial = (2 * math.pi * faces / dr)[:, None] * k_height[None, :]
    g_vertical = area[:, None] * (k_seg / dz)[None, :]
    g_top = area * stack.convection_coefficient

    free = np.ones(n_z, dtype=bool)
    if stack.bottom_boundary == "fixed":
        free[-1] = False

    outflow = np.zeros((n_r, n_z))
    outflow[:-1] += g_radial
    outflow[1:] += g_radial
    outflow[:, :-1] += g_vertical
    outflow[:, 1:] += g_vertical
    outflow[:, 0] += g_top
    ratio = np.where(outflow > 0, capacity / np.where(outflow > 0, outflow, 1.0), np.inf)
    positivity = float(np.min(ratio[:, free]))
    alpha = max(layer.diffusivity for layer in stack.layers)
    cfl = 1.0 / (2 * alpha * (1 / dr**2 + 1 / dz**2))

    for arr in (capacity, g_radial, g_vertical, g_top, area, free):
        arr.flags.writeable = False
    iface = rows[0] if len(rows) > 1 else -1
    return _Operator(capacity, g_radial, g_vertical, g_top, area, free, iface, min(cfl, positivity))


def _op_for(state: "ThermalState", stack: ThermalStack) -> _Operator:
    n_r, n_z = state.shape
    return _operator(stack, n_r, n_z, state.dr, state.dz)


def stability_limit(stack: ThermalStack, grid: ThermalGrid) -> float:
    """Largest admissible explicit time step for ``stack`` on ``grid``.

    This is the smaller of the textbook bound ``1 / (2 alpha (1/dr^2 + 1/dz^2))``
    and the bound that keeps every update coefficient non-negative.
    """
    n_r, n_z = _nodes_shape(stack, grid)
    return _operator(stack, n_r, n_z, grid.dr, grid.dz).dt_limit


def initial_state(stack: ThermalStack, grid: ThermalGrid) -> ThermalState:
    return ThermalState(np.full(_nodes_shape(stack, grid), stack.initial_temperature), grid.dr, grid.dz, 0.0)


def _rate(T, op: _Operator, stack: ThermalStack, q_in: np.ndarray) -> np.ndarray:
    """Net heat inflow (W) into every node's control volume."""
    net = np.zeros_like(T)
    fr = op.g_radial * (T[1:] - T[:-1])
    net[:-1] += fr
    net[1:] -= fr
    fz = op.g_vertical * (T[:, 1:] - T[:, :-1])
    net[:, :-1] += fz
    net[:, 1:] -= fz
    net[:, 0] += op.g_top * (stack.ambient_temperature - T[:, 0]) + q_in
    net[:, ~op.free] = 0.0
    return net


def _check_dt(dt: float, op: _Operator):
    if not dt > 0:
        raise StabilityError(f"time step must be positive, got {dt}")
    if dt > op.dt_limit * (1 + 1e-12):
        raise StabilityError(f"time step {dt:.6g} s exceeds the stability bound {op.dt_limit:.6g} s")


def _node_flux(flux, n_r: int, dr: float) -> np.ndarray:
    q = flux.on_nodes(n_r - 1, dr) if isinstance(flux, RadialFlux) else np.asarray(flux, dtype=float)
    if q.shape != (n_r,):
        raise ValueError(f"flux must have one value per radial node ({n_r}), got shape {q.shape}")
    return q


def step(state: ThermalState, stack: ThermalStack, flux, dt: float) -> ThermalState:
    """Advance ``state`` by one explicit step.

    ``flux`` is the absorbed flux at each radial node (length ``nr + 1``),
    or a :class:`RadialFlux` profile that is averaged over each node's ring.
    """
    op = _op_for(state, stack)
    _check_dt(dt, op)
    q = _node_flux(flux, state.shape[0], state.dr)
    T = state.grid
    T_new = T + dt * _rate(T, op, stack, op.area * q) / op.capacity
    return ThermalState(T_new, state.dr, state.dz, state.time + dt)


def thermal_energy(state: ThermalState, stack: ThermalStack) -> float:
    """Total enthalpy relative to 0 C, in J."""
    return float(np.sum(_op_for(state, stack).capacity * state.grid))


def fabric_surface_temperature(state: ThermalState) -> np.ndarray:
    """Exposed-face temperature at each radial node (thermography analogue)."""
    return np.array(state.grid[:, 0])


def interface_profile(state: ThermalState, stack: ThermalStack) -> np.ndarray:
    """Temperature on the fabric/skin interface at each radial node."""
    op = _op_for(state, stack)
    if op.interface_row < 0:
        raise ValueError("stack has no skin layer below the fabric")
    return np.array(state.grid[:, op.interface_row])


def _sample_radii(profile: np.ndarray, dr: float, radii: np.ndarray) -> np.ndarray:
    return np.interp(radii, np.arange(profile.size) * dr, profile)


def simulate(
    stack: ThermalStack,
    flux: RadialFlux,
    duration: float,
    probes=DEFAULT_PROBE_RADII,
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
    grid: ThermalGrid | None = None,
    *,
    frame_interval: float | None = None,
    start: ThermalState | None = None,
) -> ProbeSeries:
    """Run the exposure and sample interface temperatures at the probe radii.

    The step is ``dt_safety`` times the stability bound, shortened so that
    a whole number of steps fits in each sample period.  ``start`` continues
    from an earlier state (no reset between chained runs).
    """
    grid = grid or ThermalGrid()
    if not 0 < duration <= MAX_SIMULATION_TIME:
        raise ValueError(f"duration must be in (0, {MAX_SIMULATION_TIME}] s, got {duration}")
    if not sample_period > 0:
        raise ValueError("sample period must be positive")
    probes = np.asarray(probes, dtype=float).reshape(-1)
    if np.any(probes < 0) or np.any(probes > grid.radius):
        raise ValueError("probe radii must lie within the domain")

    state = start if start is not None else initial_state(stack, grid)
    op = _op_for(state, stack)
    if op.interface_row < 0:
        raise ValueError("stack has no skin layer below the fabric")
    substeps = max(1, math.ceil(sample_period / (grid.dt_safety * op.dt_limit) - 1e-9))
    dt = sample_period / substeps
    _check_dt(dt, op)
    q_in = op.area * _node_flux(flux, state.shape[0], state.dr)

    n_samples = int(math.floor(duration / sample_period + 1e-9)) + 1
    frame_every = None
    if frame_interval is not None:
        frame_every = max(1, int(round(frame_interval / sample_period)))

    T = np.array(state.grid)
    t0 = state.time
    r_nodes = np.arange(T.shape[0]) * state.dr
    samples = np.empty((n_samples, probes.size))
    peak = np.empty(n_samples)
    frames = []
    scale = dt / op.capacity
    for n in range(n_samples):
        if n:
            for _ in range(substeps):
                T += scale * _rate(T, op, stack, q_in)
        prof = T[:, op.interface_row]
        samples[n] = np.interp(probes, r_nodes, prof)
        peak[n] = prof.max()
        if frame_every is not None and n % frame_every == 0:
            frames.append((t0 + n * sample_period, T.copy()))
    final = ThermalState(T, state.dr, state.dz, t0 + (n_samples - 1) * sample_period)
    return ProbeSeries(tuple(probes), sample_period, samples, peak, tuple(frames), final)


def time_to_threshold(series: ProbeSeries, threshold: float, probe=0) -> float | None:
    """First crossing of ``threshold`` by linear interpolation between samples."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    col = series.column(probe)
    above = np.nonzero(col >= threshold)[0]
    if above.size == 0:
        return None
    k = int(above[0])
    if k == 0:
        return 0.0
    lo, hi = col[k - 1], col[k]
    return float((k - 1 + (threshold - lo) / (hi - lo)) * series.sample_period)


def calibrate_absorption(
    stack_template: ThermalStack,
    field: FieldGrid,
    target_time: float,
    threshold: float = PAIN_THRESHOLD,
    *,
    mode: ExposureMode | None = None,
    grid: ThermalGrid | None = None,
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
    horizon: float = DEFAULT_DURATION_CAP,
    tolerance: float = 0.02,
    max_iterations: int = 60,
    probe_radius: float = 0.0,
) -> CalibrationResult:
    """Bisect the absorption fraction so the probe first reaches ``threshold`` at ``target_time``."""
    if not 0 < target_time <= horizon:
        raise CalibrationError(f"target time must be in (0, {horizon}] s, got {target_time}")
    mode = mode or ExposureMode.sp()
    unit = absorbed_flux(field, replace(stack_template, absorption_fraction=1.0), mode)

    def crossing(fraction):
        stack = replace(stack_template, absorption_fraction=fraction)
        series = simulate(stack, unit.scaled(fraction), horizon, (probe_radius,), sample_period, grid)
        return time_to_threshold(series, threshold)

    t_full = crossing(1.0)
    if t_full is None or t_full > target_time + tolerance:
        raise InsufficientPowerError(
            f"insufficient power: full absorption reaches {threshold} C "
            + ("never" if t_full is None else f"at {t_full:.3f} s")
            + f" within {horizon} s, target {target_time} s"
        )
    if abs(t_full - target_time) <= tolerance:
        return CalibrationResult(1.0, t_full, 1)

    lo, hi = 0.0, 1.0
    for it in range(1, max_iterations + 1):
        mid = 0.5 * (lo + hi)
        t = crossing(mid)
        if t is not None and abs(t - target_time) <= tolerance:
            return CalibrationResult(mid, t, it)
        if t is None or t > target_time:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"calibration did not converge in {max_iterations} iterations")


# --------------------------------------------------------------------------
# export


def write_probe_csv(series: ProbeSeries, path) -> Path:
    path = Path(path)
    names = [f"r_{r * 1e3:g}mm" for r in series.probe_radii]
    lines = [
        "# probe_radii_m=" + ",".join(f"{r:.12g}" for r in series.probe_radii),
        f"# sample_period_s={series.sample_period:.12g}",
        "time_s," + ",".join(names),
    ]
    for t, row in zip(series.times, series.samples):
        lines.append(f"{t:.6f}," + ",".join(f"{v:.6f}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_probe_csv(path) -> ProbeSeries:
    meta = {}
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, val = line[1:].strip().split("=", 1)
            meta[key] = val
        elif line and not line.startswith("time_s"):
            rows.append([float(x) for x in line.split(",")])
    radii = tuple(float(r) for r in meta["probe_radii_m"].split(","))
    data = np.array(rows)
    return ProbeSeries(radii, float(meta["sample_period_s"]), data[:, 1:])


def write_frame_csv(frame_grid: np.ndarray, dr: float, dz: float, time: float, path) -> Path:
    """Full (r, depth) temperature snapshot; one row per depth node."""
    path = Path(path)
    nr, nz = frame_grid.shape
    r = np.arange(nr) * dr
    lines = [
        f"# time_s={time:.6f}",
        "depth_m\\radius_m," + ",".join(f"{x:.6g}" for x in r),
    ]
    for j in range(nz):
        lines.append(f"{j * dz:.6g}," + ",".join(f"{v:.6f}" for v in frame_grid[:, j]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
