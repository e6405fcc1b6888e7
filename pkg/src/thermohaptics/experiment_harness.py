"""Thermal measurement runs and the randomised perceptual protocol.

The thermal side chains focusing, field sampling, absorption and conduction
into one run that mirrors a thermocouple + thermography session.  The
perceptual side only schedules trials and aggregates answers; responses come
from files or from a caller-supplied responder.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .acoustic_field import FieldGrid, PlaneSpec, field_on_plane
from .array_model import ArrayLayout, focus_phases
from .errors import ProtocolError
from .modulation import DEFAULT_DURATION_CAP, ExposureMode
from .thermal_model import (
    DEFAULT_PROBE_RADII,
    DEFAULT_SAMPLE_PERIOD,
    INITIAL_TEMPERATURE,
    ModeKind,
    ProbeSeries,
    RadialFlux,
    ThermalGrid,
    ThermalStack,
    ThermalState,
    absorbed_flux,
    simulate,
    time_to_threshold,
    write_frame_csv,
    write_probe_csv,
)


def focus_above(layout: ArrayLayout, height: float) -> tuple[float, float, float]:
    """Point ``height`` above the centre of the array plane."""
    pos = layout.positions
    cx, cy = 0.5 * (pos[:, 0].min() + pos[:, 0].max()), 0.5 * (pos[:, 1].min() + pos[:, 1].max())
    return (float(cx), float(cy), float(pos[:, 2].max() + height))


@dataclass(frozen=True)
class ThermalRunSpec:
    mode: ExposureMode = field(default_factory=ExposureMode.sp)
    duration: float = 10.0
    focus_height: float = 0.200
    probe_radii: tuple[float, ...] = DEFAULT_PROBE_RADII
    normalize_initial: bool = False
    reference_temperature: float = INITIAL_TEMPERATURE[ModeKind.SP]
    base_amplitude: float = 1.0
    sample_period: float = DEFAULT_SAMPLE_PERIOD
    frame_interval: float | None = 1.0
    field_points: int = 51
    field_spacing: float = 1e-3
    grid: ThermalGrid = field(default_factory=ThermalGrid)

    def __post_init__(self):
        if not 0 < self.duration <= DEFAULT_DURATION_CAP:
            raise ValueError(f"run duration must be in (0, {DEFAULT_DURATION_CAP}] s")
        if any(r < 0 or r > self.grid.radius for r in self.probe_radii):
            raise ValueError("probe radii must lie within the thermal domain")
        if not 0.0 <= self.base_amplitude <= 1.0:
            raise ValueError("base_amplitude must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class ThermalRunResult:
    spec: ThermalRunSpec
    stack: ThermalStack
    field: FieldGrid
    flux: RadialFlux
    series: ProbeSeries

    @property
    def frames(self):
        return self.series.frames

    @property
    def final_state(self) -> ThermalState | None:
        return self.series.final_state

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        frame_dir = out / "frames"
        frame_dir.mkdir(parents=True, exist_ok=True)
        paths = [write_probe_csv(self.series, out / "probes.csv")]
        g = self.spec.grid
        for n, (t, grid) in enumerate(self.frames):
            paths.append(write_frame_csv(grid, g.dr, g.dz, t, frame_dir / f"frame_{n:04d}.csv"))
        return paths


def run_thermal_experiment(
    spec: ThermalRunSpec,
    layout: ArrayLayout,
    stack: ThermalStack,
    start: ThermalState | None = None,
) -> ThermalRunResult:
    """Focus, sample the fabric plane, convert to absorbed flux and conduct.

    Passing the ``final_state`` of an earlier run as ``start`` carries residual
    heat over between trials.
    """
    focus = focus_above(layout, spec.focus_height)
    drive = focus_phases(layout, focus, spec.base_amplitude, spec.mode)
    plane = PlaneSpec.centered(focus, spec.field_points, spec.field_spacing)
    fgrid = field_on_plane(layout, drive, plane)
    flux = absorbed_flux(fgrid, stack, spec.mode)
    series = simulate(stack, flux, spec.duration, spec.probe_radii, spec.sample_period, spec.grid,
                      frame_interval=spec.frame_interval, start=start)
    if spec.normalize_initial:
        series = series.shifted(spec.reference_temperature - float(series.samples[0].mean()))
    return ThermalRunResult(spec, stack, fgrid, flux, series)


class SimulationPredictor:
    """Thermal predictor backed by the full focus -> field -> conduction chain.

    The unit-amplitude field is cached per focal point; flux scales with the
    square of the drive amplitude.
    """

    def __init__(self, layout: ArrayLayout, stack: ThermalStack, grid: ThermalGrid | None = None,
                 field_points: int = 51, field_spacing: float = 1e-3,
                 sample_period: float = DEFAULT_SAMPLE_PERIOD):
        self.layout = layout
        self.stack = stack
        self.grid = grid or ThermalGrid()
        self.field_points = field_points
        self.field_spacing = field_spacing
        self.sample_period = sample_period
        self._fields: dict[tuple, FieldGrid] = {}

    def unit_field(self, focal_point) -> FieldGrid:
        key = tuple(float(c) for c in focal_point)
        if key not in self._fields:
            drive = focus_phases(self.layout, key, 1.0)
            plane = PlaneSpec.centered(key, self.field_points, self.field_spacing)
            self._fields[key] = field_on_plane(self.layout, drive, plane)
        return self._fields[key]

    def time_to_threshold(self, mode, base_amplitude, focal_point, horizon, threshold):
        flux = absorbed_flux(self.unit_field(focal_point), self.stack, mode).scaled(base_amplitude ** 2)
        series = simulate(self.stack, flux, horizon, (0.0,), self.sample_period, self.grid)
        return time_to_threshold(series, threshold, "peak")


# --------------------------------------------------------------------------
# perceptual protocol


class Pattern(str, enum.Enum):
    SP = "SP"
    AM = "AM"
    NONE = "None"


class Response(str, enum.Enum):
    HEAT_ONLY = "HeatOnly"
    VIBRATION_ONLY = "VibrationOnly"
    BOTH = "Both"
    NONE = "None"


PATTERNS = (Pattern.SP, Pattern.AM, Pattern.NONE)
RESPONSES = (Response.HEAT_ONLY, Response.VIBRATION_ONLY, Response.BOTH, Response.NONE)
RESPONSE_LABELS = {
    Response.HEAT_ONLY: "Heat only",
    Response.VIBRATION_ONLY: "Vibration only",
    Response.BOTH: "Heat & Vibration",
    Response.NONE: "None",
}
PATTERN_LABELS = {Pattern.SP: "SP mode", Pattern.AM: "AM mode", Pattern.NONE: "No irradiation"}


@dataclass(frozen=True)
class Trial:
    pattern: Pattern
    presentation: float = 5.0
    rest: float = 10.0


@dataclass(frozen=True)
class TrialPlan:
    seed: int
    trials: tuple[Trial, ...]

    def __post_init__(self):
        counts = {p: 0 for p in PATTERNS}
        for t in self.trials:
            counts[Pattern(t.pattern)] += 1
        if len(set(counts.values())) != 1 or not self.trials:
            raise ProtocolError(f"unbalanced trial plan: {counts}")

    def __len__(self):
        return len(self.trials)

    @property
    def patterns(self) -> list[Pattern]:
        return [t.pattern for t in self.trials]


def make_trial_plan(seed: int, repeats: int = 10, presentation: float = 5.0, rest: float = 10.0) -> TrialPlan:
    """Random order of ``repeats`` presentations of each pattern, fixed by ``seed``."""
    if repeats < 1:
        raise ProtocolError("repeats must be at least 1")
    rng = np.random.default_rng(seed)
    pool = [p for p in PATTERNS for _ in range(repeats)]
    order = rng.permutation(len(pool))
    return TrialPlan(int(seed), tuple(Trial(pool[i], presentation, rest) for i in order))


@dataclass(frozen=True)
class TrialRecord:
    participant: str
    trial_index: int
    pattern: Pattern
    response: Response

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        object.__setattr__(self, "response", Response(self.response))


def run_session(plan: TrialPlan, responder: Callable[[Pattern, int], Response],
                participant: str = "P01") -> list[TrialRecord]:
    return [TrialRecord(participant, i, t.pattern, Response(responder(t.pattern, i)))
            for i, t in enumerate(plan.trials)]


@dataclass(frozen=True, eq=False)
class ConfusionTable:
    """Mean response percentages; rows follow ``PATTERNS``, columns ``RESPONSES``."""

    percentages: np.ndarray
    participants: int

    def row(self, pattern) -> dict[Response, float]:
        i = PATTERNS.index(Pattern(pattern))
        return dict(zip(RESPONSES, (float(v) for v in self.percentages[i])))

    def to_text(self) -> str:
        head = ["Irradiation patterns"] + [RESPONSE_LABELS[r] for r in RESPONSES]
        body = [[PATTERN_LABELS[p]] + [f"{v:g} %" for v in self.percentages[i]]
                for i, p in enumerate(PATTERNS)]
        widths = [max(len(r[c]) for r in [head] + body) for c in range(len(head))]
        fmt = lambda r: " | ".join(cell.ljust(w) if c == 0 else cell.rjust(w)
                                   for c, (cell, w) in enumerate(zip(r, widths)))
        rule = "-+-".join("-" * w for w in widths)
        lines = [f"Average results for {self.participants} participants", fmt(head), rule]
        lines += [fmt(r) for r in body]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern"] + [r.value for r in RESPONSES])
        for i, p in enumerate(PATTERNS):
            w.writerow([p.value] + [f"{v:g}" for v in self.percentages[i]])
        return buf.getvalue()


def aggregate(records: Iterable[TrialRecord]) -> ConfusionTable:
    """Per-participant response percentages for each pattern, averaged over participants."""
    counts: dict[str, dict[Pattern, np.ndarray]] = defaultdict(lambda: {p: np.zeros(len(RESPONSES)) for p in PATTERNS})
    n = 0
    for rec in records:
        counts[rec.participant][rec.pattern][RESPONSES.index(rec.response)] += 1
        n += 1
    if n == 0:
        raise ProtocolError("no records")
    table = np.zeros((len(PATTERNS), len(RESPONSES)))
    for who in sorted(counts):
        for i, p in enumerate(PATTERNS):
            c = counts[who][p]
            total = c.sum()
            if total == 0:
                raise ProtocolError(f"participant {who!r} has zero presentations of pattern {p.value}")
            table[i] += c * 100.0 / total
    return ConfusionTable(table / len(counts), len(counts))


def write_trial_plan_csv(plan: TrialPlan, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_index", "pattern", "presentation_s", "rest_s", "response"])
        for i, t in enumerate(plan.trials):
            w.writerow([i, t.pattern.value, f"{t.presentation:g}", f"{t.rest:g}", ""])
    return path


def read_trial_plan_csv(path, seed: int = 0) -> TrialPlan:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = sorted(csv.DictReader(fh), key=lambda r: int(r["trial_index"]))
    return TrialPlan(seed, tuple(Trial(Pattern(r["pattern"]), float(r["presentation_s"]), float(r["rest_s"]))
                                 for r in rows))


def write_records_csv(records: Iterable[TrialRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant", "trial_index", "pattern", "response"])
        for r in records:
            w.writerow([r.participant, r.trial_index, r.pattern.value, r.response.value])
    return path


def read_records_csv(path, default_participant: str = "P01") -> list[TrialRecord]:
    """Read records; the participant column is optional for single-participant files."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"trial_index", "pattern", "response"} - set(reader.fieldnames or ())
        if missing:
            raise ProtocolError(f"records file lacks columns: {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                out.append(TrialRecord(row.get("participant") or default_participant,
                                       int(row["trial_index"]), row["pattern"], row["response"]))
            except ValueError as exc:
                raise ProtocolError(f"records line {line}: {exc}") from exc
    return out


def records_from_percentages(rows: dict, participants: int = 10, repeats: int = 10) -> list[TrialRecord]:
    """Synthetic records whose pooled counts match ``rows`` (pattern -> four percentages).

    Each pattern gets ``participants * repeats`` presentations, so a
    percentage ``x`` becomes ``x * participants * repeats / 100`` answers,
    dealt round-robin across participants in ``RESPONSES`` order.
    """
    total = participants * repeats
    per_participant: dict[int, list[tuple[Pattern, Response]]] = defaultdict(list)
    for pat, pcts in rows.items():
        pat = Pattern(pat)
        answers = []
        for resp, pct in zip(RESPONSES, pcts):
            n = pct * total / 100.0
            if abs(n - round(n)) > 1e-9:
                raise ProtocolError(f"{pct}% of {total} presentations is not a whole count")
            answers += [resp] * int(round(n))
        if len(answers) != total:
            raise ProtocolError(f"percentages for {pat.value} do not sum to 100")
        for k, resp in enumerate(answers):
            per_participant[k % participants].append((pat, resp))
    records = []
    for who in range(participants):
        for idx, (pat, resp) in enumerate(per_participant[who]):
            records.append(TrialRecord(f"P{who + 1:02d}", idx, pat, resp))
    return records
