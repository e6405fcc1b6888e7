"""Dual phased-array geometry and single-focus phase solving.

The default build mirrors a pair of 249-element 40 kHz arrays laid side by
side along x.  Each array is a 17 x 15 grid at 10 mm pitch with a small
staircase of positions cut from its two outer corners, so the pair is
mirror symmetric about both the x = 0 and y = 0 planes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import LayoutError, NearFieldError
from .modulation import ExposureMode

TWO_PI = 2.0 * math.pi

# phases within this of 2*pi are folded onto 0
_WRAP_EPS = 1e-9


@dataclass(frozen=True)
class Transducer:
    """A single circular piston emitter.

    ``ref_amplitude`` is the peak (not rms) on-axis pressure at 1 m, in Pa,
    when driven at full amplitude.
    """

    position: tuple[float, float, float]
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    radius: float = 5e-3
    ref_amplitude: float = 6.0

    def __post_init__(self):
        if len(self.position) != 3 or len(self.normal) != 3:
            raise LayoutError("position and normal must be 3-vectors")
        if abs(math.sqrt(sum(c * c for c in self.normal)) - 1.0) > 1e-9:
            raise LayoutError(f"transducer normal {self.normal} is not a unit vector")
        if not self.radius > 0:
            raise LayoutError(f"transducer radius must be positive, got {self.radius}")
        if not self.ref_amplitude >= 0:
            raise LayoutError(f"ref_amplitude must be non-negative, got {self.ref_amplitude}")


@dataclass(frozen=True)
class ArrayLayout:
    transducers: tuple[Transducer, ...]
    frequency: float = 40e3
    sound_speed: float = 346.0
    air_density: float = 1.18

    def __post_init__(self):
        object.__setattr__(self, "transducers", tuple(self.transducers))
        if not self.transducers:
            raise LayoutError("layout has no transducers")
        if not (self.frequency > 0 and self.sound_speed > 0 and self.air_density > 0):
            raise LayoutError("frequency, sound_speed and air_density must be positive")
        if len(self) > 1:
            pos = self.positions
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            np.fill_diagonal(dist, np.inf)
            i, j = np.unravel_index(np.argmin(dist), dist.shape)
            if dist[i, j] == 0.0:
                raise LayoutError(f"transducers {i} and {j} share a position")
            limits = self.radii[:, None] + self.radii[None, :]
            i, j = np.unravel_index(np.argmin(dist / limits), dist.shape)
            limit = limits[i, j]
            if dist[i, j] < limit * (1 - 1e-12):
                raise LayoutError(
                    f"transducers {i} and {j} overlap: centre distance {dist[i, j]:.6g} m "
                    f"< {limit:.6g} m"
                )

    def __len__(self):
        return len(self.transducers)

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.frequency

    @property
    def wavenumber(self) -> float:
        return TWO_PI * self.frequency / self.sound_speed

    @cached_property
    def positions(self) -> np.ndarray:
        arr = np.array([t.position for t in self.transducers], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def normals(self) -> np.ndarray:
        arr = np.array([t.normal for t in self.transducers], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def radii(self) -> np.ndarray:
        arr = np.array([t.radius for t in self.transducers], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def ref_amplitudes(self) -> np.ndarray:
        arr = np.array([t.ref_amplitude for t in self.transducers], dtype=float)
        arr.flags.writeable = False
        return arr

    def translated(self, offset) -> "ArrayLayout":
        off = np.asarray(offset, dtype=float)
        moved = tuple(
            Transducer(tuple(float(c) for c in np.asarray(t.position) + off), t.normal, t.radius, t.ref_amplitude)
            for t in self.transducers
        )
        return ArrayLayout(moved, self.frequency, self.sound_speed, self.air_density)


@dataclass(frozen=True, eq=False)
class DriveSolution:
    """Per-transducer emission phases plus a global amplitude and exposure mode."""

    phases: np.ndarray
    base_amplitude: float = 1.0
    mode: ExposureMode = field(default_factory=ExposureMode.sp)

    def __post_init__(self):
        phases = np.array(self.phases, dtype=float).reshape(-1)
        if np.any(phases < 0) or np.any(phases >= TWO_PI) or not np.all(np.isfinite(phases)):
            raise ValueError("phases must lie in [0, 2*pi)")
        if not 0.0 <= self.base_amplitude <= 1.0:
            raise ValueError(f"base_amplitude must be in [0, 1], got {self.base_amplitude}")
        phases.flags.writeable = False
        object.__setattr__(self, "phases", phases)

    def with_amplitude(self, base_amplitude: float) -> "DriveSolution":
        return DriveSolution(self.phases, base_amplitude, self.mode)


@dataclass(frozen=True)
class ArrayBuildConfig:
    """Geometry of the dual-array build.

    ``corner_cut`` is the side of the staircase triangle removed from each
    outer corner of every array; a cut of ``s`` removes ``s*(s+1)/2``
    positions per corner.  ``gap`` is extra clearance between the inner
    columns of the two arrays, on top of one pitch.
    """

    rows: int = 15
    cols: int = 17
    pitch: float = 10e-3
    n_arrays: int = 2
    corner_cut: int = 2
    gap: float = 0.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 5e-3
    ref_amplitude: float = 6.0
    frequency: float = 40e3
    sound_speed: float = 346.0
    air_density: float = 1.18


def _wrap_phase(phase: np.ndarray) -> np.ndarray:
    wrapped = np.mod(phase, TWO_PI)
    wrapped[wrapped >= TWO_PI - _WRAP_EPS] = 0.0
    return wrapped


def _single_array_cells(cfg: ArrayBuildConfig) -> list[tuple[int, int]]:
    """Grid cells (col, row) kept in one array; the outer side is the high-col side."""
    cut = cfg.corner_cut
    removed = set()
    for a in range(cut):
        for b in range(cut - a):
            removed.add((cfg.cols - 1 - a, b))
            removed.add((cfg.cols - 1 - a, cfg.rows - 1 - b))
    return [(c, r) for r in range(cfg.rows) for c in range(cfg.cols) if (c, r) not in removed]


def build_dual_array(config: ArrayBuildConfig | None = None) -> ArrayLayout:
    """Build the transducer layout described by ``config``.

    The second array is the mirror image of the first about the plane
    ``x = origin_x``, so the full layout is symmetric for any corner cut.
    """
    cfg = config or ArrayBuildConfig()
    if not cfg.pitch > 0:
        raise LayoutError(f"pitch must be positive, got {cfg.pitch}")
    if cfg.rows < 1 or cfg.cols < 1:
        raise LayoutError("rows and cols must be at least 1")
    if cfg.n_arrays not in (1, 2):
        raise LayoutError(f"n_arrays must be 1 or 2, got {cfg.n_arrays}")
    if cfg.corner_cut < 0 or cfg.gap < 0:
        raise LayoutError("corner_cut and gap must be non-negative")

    cells = _single_array_cells(cfg)
    ox, oy, oz = (float(c) for c in cfg.origin)
    half_w = (cfg.cols - 1) / 2.0
    half_h = (cfg.rows - 1) / 2.0
    if cfg.n_arrays == 1:
        centres = [(0.0, 1.0)]
    else:
        shift = half_w * cfg.pitch + (cfg.pitch + cfg.gap) / 2.0
        centres = [(-shift, -1.0), (shift, 1.0)]

    transducers = []
    for cx, sign in centres:
        for c, r in cells:
            x = ox + cx + sign * (c - half_w) * cfg.pitch
            y = oy + (r - half_h) * cfg.pitch
            transducers.append(Transducer((x, y, oz), (0.0, 0.0, 1.0), cfg.radius, cfg.ref_amplitude))
    if not transducers:
        raise LayoutError("configuration removes every transducer")
    return ArrayLayout(tuple(transducers), cfg.frequency, cfg.sound_speed, cfg.air_density)


def focus_phases(
    layout: ArrayLayout,
    focal_point,
    base_amplitude: float = 1.0,
    mode: ExposureMode | None = None,
) -> DriveSolution:
    """Emission phases that make every transducer arrive cophasal at ``focal_point``.

    With the propagation convention ``exp(+j k d)``, each emission phase is
    ``-k d_i`` wrapped into ``[0, 2*pi)``.
    """
    focus = np.asarray(focal_point, dtype=float).reshape(3)
    dist = np.linalg.norm(focus[None, :] - layout.positions, axis=1)
    nearest = int(np.argmin(dist))
    if dist[nearest] < layout.wavelength * (1 - 1e-12):
        raise NearFieldError(
            f"focal point is {dist[nearest]:.4g} m from transducer {nearest}, "
            f"closer than one wavelength ({layout.wavelength:.4g} m)",
            transducer_index=nearest,
        )
    phases = _wrap_phase(-layout.wavenumber * dist)
    return DriveSolution(phases, base_amplitude, mode or ExposureMode.sp())
