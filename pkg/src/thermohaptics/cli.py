"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .acoustic_field import PlaneSpec, field_on_plane, write_field_csv, write_greymap
from .array_model import focus_phases
from .config import ConfigError, RunConfig, load_config
from .errors import ModelError
from .experiment_harness import (
    aggregate,
    focus_above,
    make_trial_plan,
    read_records_csv,
    run_thermal_experiment,
    write_trial_plan_csv,
)
from .modulation import plan_exposure
from .thermal_model import calibrate_absorption, time_to_threshold

EXIT_OK, EXIT_USAGE, EXIT_MODEL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_field(cfg: RunConfig, out: Path, args) -> int:
    layout = cfg.layout()
    focus = focus_above(layout, cfg.field.focus_height_m)
    drive = focus_phases(layout, focus, cfg.base_amplitude(), cfg.mode())
    plane = PlaneSpec.centered(focus, cfg.field.grid_points, cfg.field.grid_spacing_m)
    grid = field_on_plane(layout, drive, plane)
    write_field_csv(grid, out / "field.csv")
    write_greymap(grid, out / "field.pgm")
    mag = grid.magnitude
    i, j = np.unravel_index(int(np.argmax(mag)), mag.shape)
    print(f"field {grid.nu}x{grid.nv} on plane z={float(grid.center[2]):.6g} m; "
          f"peak |p| = {mag[i, j]:.6g} Pa at sample ({i}, {j})")
    return EXIT_OK


def cmd_thermal(cfg: RunConfig, out: Path, args) -> int:
    result = run_thermal_experiment(cfg.run_spec(), cfg.layout(), cfg.thermal_stack())
    result.write(out)
    s = result.series
    t_cross = time_to_threshold(s, cfg.exposure.pain_threshold_c)
    rises = s.samples[-1] - s.samples[0]
    print("probe rise over run: " + ", ".join(f"r={r * 1e3:g} mm: {d:+.3f} C"
                                              for r, d in zip(s.probe_radii, rises)))
    print(f"centre probe reaches {cfg.exposure.pain_threshold_c:g} C at: "
          + ("never" if t_cross is None else f"{t_cross:.3f} s"))
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out: Path, args) -> int:
    c = cfg.calibration
    predictor = cfg.predictor()
    layout = predictor.layout
    fgrid = predictor.unit_field(focus_above(layout, cfg.field.focus_height_m))
    res = calibrate_absorption(
        cfg.thermal_stack(), fgrid, c.target_time_s, c.threshold_c, mode=cfg.mode(),
        grid=cfg.thermal_grid(), sample_period=cfg.thermal.sample_period_s,
        horizon=cfg.exposure.duration_cap_s, tolerance=c.tolerance_s, max_iterations=c.max_iterations,
    )
    patch = {"stack": {"absorption_fraction": res.absorption_fraction}}
    (out / "calibration_patch.json").write_text(json.dumps(patch, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")
    print(f"absorption_fraction={res.absorption_fraction!r}")
    print(f"achieved_time_s={res.achieved_time:.4f} iterations={res.iterations}")
    return EXIT_OK


def cmd_plan(cfg: RunConfig, out: Path, args) -> int:
    layout = cfg.layout()
    focus = focus_above(layout, cfg.field.focus_height_m)
    e = cfg.exposure
    plan = plan_exposure(cfg.mode(), e.duration_s, cfg.base_amplitude(), focus, cfg.predictor(layout),
                         duration_cap=e.duration_cap_s, pain_threshold=e.pain_threshold_c)
    record = plan.to_record()
    (out / "plan.txt").write_text(record + "\n", encoding="utf-8")
    print(record)
    return EXIT_OK


def cmd_protocol(cfg: RunConfig, out: Path, args) -> int:
    p = cfg.protocol
    plan = make_trial_plan(cfg.seed, p.repeats, p.presentation_s, p.rest_s)
    path = write_trial_plan_csv(plan, out / "trial_plan.csv")
    print(f"{len(plan)} trials written to {path}")
    return EXIT_OK


def cmd_aggregate(cfg: RunConfig, out: Path, args) -> int:
    if not args.records:
        raise UsageError("aggregate requires --records PATH")
    try:
        records = read_records_csv(args.records)
    except OSError as exc:
        raise UsageError(f"cannot read records file {args.records}: {exc.strerror}") from None
    table = aggregate(records)
    text = table.to_text()
    (out / "confusion_table.txt").write_text(text, encoding="utf-8")
    (out / "confusion_table.csv").write_text(table.to_csv(), encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "field": (cmd_field, "sample the focal-plane pressure field (CSV + PGM)"),
    "thermal": (cmd_thermal, "simulate a thermal exposure (probe CSV + frame CSVs)"),
    "calibrate": (cmd_calibrate, "fit the absorption fraction to the threshold-time datum"),
    "plan": (cmd_plan, "plan a safety-gated exposure"),
    "protocol": (cmd_protocol, "write a randomised perceptual trial plan"),
    "aggregate": (cmd_aggregate, "aggregate response records into a confusion table"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="PATH",
                        help="JSON config file; repeat to layer patches")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    parser = _Parser(prog="thermohaptics", description="Mid-air ultrasound thermal/vibrotactile simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "aggregate":
            p.add_argument("--records", metavar="PATH", help="records CSV (participant,trial_index,pattern,response)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        out = _out_dir(args, cfg)
        return COMMANDS[args.command][0](cfg, out, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, ValueError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
