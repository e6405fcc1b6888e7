"""Linear superposition of far-field piston sources.

Pressures are complex peak amplitudes.  A transducer with emission phase
``phi`` contributes ``A (r_ref / d) D(theta) exp(j (k d + phi))`` at
distance ``d``, where ``D`` is the circular-piston directivity
``2 J1(k a sin(theta)) / (k a sin(theta))`` and ``r_ref`` is 1 m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import j1

from .array_model import ArrayLayout, DriveSolution
from .errors import NearFieldError

REFERENCE_DISTANCE = 1.0
_CHUNK = 2048


@dataclass(frozen=True)
class Medium:
    density: float = 1.18
    sound_speed: float = 346.0

    def __post_init__(self):
        if not (self.density > 0 and self.sound_speed > 0):
            raise ValueError("medium density and sound speed must be positive")

    @property
    def impedance(self) -> float:
        return self.density * self.sound_speed

    @classmethod
    def of(cls, layout: ArrayLayout) -> "Medium":
        return cls(layout.air_density, layout.sound_speed)


def piston_directivity(x):
    """``2 J1(x) / x`` with the removable singularity at 0 filled by 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0, 2.0 * j1(safe) / safe)
    return float(out) if out.ndim == 0 else out


def _pressures(layout: ArrayLayout, drive: DriveSolution, points: np.ndarray) -> np.ndarray:
    """Pressure at each row of ``points`` (M x 3); summation order is fixed per point."""
    if drive.phases.shape[0] != len(layout):
        raise ValueError(
            f"drive has {drive.phases.shape[0]} phases for {len(layout)} transducers"
        )
    k = layout.wavenumber
    lam = layout.wavelength
    pos = layout.positions
    nrm = layout.normals
    amp = layout.ref_amplitudes * drive.base_amplitude
    emit = np.exp(1j * drive.phases)
    ka = k * layout.radii
    out = np.empty(points.shape[0], dtype=complex)
    for start in range(0, points.shape[0], _CHUNK):
        pts = points[start:start + _CHUNK]
        rel = pts[:, None, :] - pos[None, :, :]
        d = np.sqrt(np.einsum("mnk,mnk->mn", rel, rel))
        bad = d < lam * (1 - 1e-12)
        if np.any(bad):
            m, n = np.argwhere(bad)[0]
            raise NearFieldError(
                f"point {pts[m].tolist()} is within one wavelength of transducer {n}",
                transducer_index=int(n),
                grid_index=int(start + m),
            )
        cos_t = np.einsum("mnk,nk->mn", rel, nrm) / d
        sin_t = np.sqrt(np.clip(1.0 - cos_t * cos_t, 0.0, None))
        directivity = np.where(cos_t > 0, piston_directivity(ka[None, :] * sin_t), 0.0)
        terms = (amp * REFERENCE_DISTANCE)[None, :] / d * directivity * np.exp(1j * k * d) * emit[None, :]
        out[start:start + _CHUNK] = terms.sum(axis=1)
    return out


def pressure_at(layout: ArrayLayout, drive: DriveSolution, point) -> complex:
    """Complex pressure amplitude (Pa) at a single point."""
    pt = np.asarray(point, dtype=float).reshape(1, 3)
    return complex(_pressures(layout, drive, pt)[0])


def pressures_at(layout: ArrayLayout, drive: DriveSolution, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return _pressures(layout, drive, pts)


@dataclass(frozen=True)
class PlaneSpec:
    """Sampling plane: ``nu x nv`` points at ``origin + i*spacing*u + j*spacing*v``."""

    origin: tuple[float, float, float]
    u_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    v_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    nu: int = 41
    nv: int = 41
    spacing: float = 1e-3

    def __post_init__(self):
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        if abs(np.linalg.norm(u) - 1) > 1e-9 or abs(np.linalg.norm(v) - 1) > 1e-9:
            raise ValueError("plane axes must be unit vectors")
        if abs(float(u @ v)) > 1e-9:
            raise ValueError("plane axes must be orthogonal")
        if self.nu < 1 or self.nv < 1:
            raise ValueError("plane needs at least one sample per axis")
        if not self.spacing > 0:
            raise ValueError("plane spacing must be positive")

    @classmethod
    def centered(cls, center, n: int = 41, spacing: float = 1e-3,
                 u_axis=(1.0, 0.0, 0.0), v_axis=(0.0, 1.0, 0.0)) -> "PlaneSpec":
        c = np.asarray(center, dtype=float)
        u = np.asarray(u_axis, dtype=float)
        v = np.asarray(v_axis, dtype=float)
        half = (n - 1) / 2.0 * spacing
        origin = c - half * u - half * v
        return cls(tuple(float(x) for x in origin), tuple(u_axis), tuple(v_axis), n, n, spacing)

    @property
    def center(self) -> np.ndarray:
        u = np.asarray(self.u_axis)
        v = np.asarray(self.v_axis)
        return (np.asarray(self.origin) + (self.nu - 1) / 2.0 * self.spacing * u
                + (self.nv - 1) / 2.0 * self.spacing * v)

    def points(self) -> np.ndarray:
        """Sample coordinates, shape (nu, nv, 3)."""
        # offsets measured from the centre so mirrored samples are exact negatives
        cu = (np.arange(self.nu) - (self.nu - 1) / 2.0) * self.spacing
        cv = (np.arange(self.nv) - (self.nv - 1) / 2.0) * self.spacing
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        return self.center[None, None, :] + cu[:, None, None] * u + cv[None, :, None] * v


@dataclass(frozen=True, eq=False)
class FieldGrid:
    origin: tuple[float, float, float]
    u_axis: tuple[float, float, float]
    v_axis: tuple[float, float, float]
    nu: int
    nv: int
    spacing: float
    values: np.ndarray
    medium: Medium = field(default_factory=Medium)

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != (self.nu, self.nv):
            raise ValueError(f"values shape {vals.shape} does not match ({self.nu}, {self.nv})")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def spec(self) -> PlaneSpec:
        return PlaneSpec(self.origin, self.u_axis, self.v_axis, self.nu, self.nv, self.spacing)

    @property
    def center(self) -> np.ndarray:
        return self.spec.center

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.u_axis, self.v_axis)
        return n / np.linalg.norm(n)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def intensity(self) -> np.ndarray:
        return intensity(self.values, self.medium)

    def radiation_pressure(self) -> np.ndarray:
        return radiation_pressure(self.values, self.medium)


def field_on_plane(layout: ArrayLayout, drive: DriveSolution, grid_spec: PlaneSpec) -> FieldGrid:
    pts = grid_spec.points()
    try:
        vals = _pressures(layout, drive, pts.reshape(-1, 3))
    except NearFieldError as exc:
        i, j = np.unravel_index(exc.grid_index, (grid_spec.nu, grid_spec.nv))
        raise NearFieldError(
            f"grid sample ({i}, {j}): {exc}", transducer_index=exc.transducer_index,
            grid_index=(int(i), int(j)),
        ) from exc
    return FieldGrid(
        grid_spec.origin, grid_spec.u_axis, grid_spec.v_axis, grid_spec.nu, grid_spec.nv,
        grid_spec.spacing, vals.reshape(grid_spec.nu, grid_spec.nv), Medium.of(layout),
    )


def intensity(p_amplitude, medium: Medium):
    """Plane-progressive-wave intensity ``|p|^2 / (2 rho c)`` in W/m^2."""
    p2 = np.abs(np.asarray(p_amplitude)) ** 2
    out = p2 / (2.0 * medium.density * medium.sound_speed)
    return float(out) if np.ndim(out) == 0 else out


def radiation_pressure(p_amplitude, medium: Medium):
    """Radiation pressure on a perfect absorber, ``|p|^2 / (2 rho c^2)`` in Pa."""
    p2 = np.abs(np.asarray(p_amplitude)) ** 2
    out = p2 / (2.0 * medium.density * medium.sound_speed ** 2)
    return float(out) if np.ndim(out) == 0 else out


def write_field_csv(grid: FieldGrid, path) -> Path:
    """Row-major CSV (index u slowest) with a commented metadata header."""
    path = Path(path)
    pts = grid.spec.points()
    lines = [
        "# origin_m=" + ",".join(f"{c:.12g}" for c in grid.origin),
        "# u_axis=" + ",".join(f"{c:.12g}" for c in grid.u_axis),
        "# v_axis=" + ",".join(f"{c:.12g}" for c in grid.v_axis),
        f"# nu={grid.nu}",
        f"# nv={grid.nv}",
        f"# spacing_m={grid.spacing:.12g}",
        f"# plane_z_m={float(grid.center[2]):.12g}",
        "i,j,x_m,y_m,z_m,re_pa,im_pa,abs_pa",
    ]
    for i in range(grid.nu):
        for j in range(grid.nv):
            p = grid.values[i, j]
            x, y, z = pts[i, j]
            lines.append(
                f"{i},{j},{x:.12g},{y:.12g},{z:.12g},{p.real:.12g},{p.imag:.12g},{abs(p):.12g}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_field_csv(path, medium: Medium | None = None) -> FieldGrid:
    meta = {}
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, val = line[1:].strip().split("=", 1)
            meta[key] = val
        elif line and not line.startswith("i,"):
            rows.append(line.split(","))
    nu, nv = int(meta["nu"]), int(meta["nv"])
    vals = np.zeros((nu, nv), dtype=complex)
    for r in rows:
        vals[int(r[0]), int(r[1])] = complex(float(r[5]), float(r[6]))

    def vec(key):
        return tuple(float(c) for c in meta[key].split(","))

    return FieldGrid(vec("origin_m"), vec("u_axis"), vec("v_axis"), nu, nv,
                     float(meta["spacing_m"]), vals, medium or Medium())


def write_greymap(grid: FieldGrid, path) -> Path:
    """Binary 8-bit PGM of ``|p|`` scaled to the grid maximum (v across, u down)."""
    path = Path(path)
    mag = grid.magnitude
    peak = float(mag.max())
    scaled = np.zeros_like(mag) if peak == 0 else mag / peak
    img = np.round(scaled * 255).astype(np.uint8)
    header = f"P5\n{grid.nv} {grid.nu}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    return path
